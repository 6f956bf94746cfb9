#pragma once

/// \file synthetic.hpp
/// \brief Seeded synthetic clothes-changing benchmarks.
///
/// Generative model:
///   - every identity owns one unit-norm gait prototype (clothes-free);
///   - every (identity, suit) owns an independent unit-norm appearance
///     prototype, so clothing dominates appearance;
///   - a sequence is prototype + isotropic Gaussian noise whose expected
///     norm is sigma (per-coordinate std sigma / sqrt(dim)).
///
/// The first `floor(train_fraction * n_identities)` identities form the
/// train split. For the remaining identities the first sequence of each
/// suit is a query and the rest go to the gallery.

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>

#include "ccrr/data_model.hpp"

namespace ccrr {

struct IntRange {
  int min = 1;
  int max = 1;
};

struct SyntheticConfig {
  int n_identities = 80;
  IntRange suits_per_identity{2, 6};
  IntRange sequences_per_suit{4, 8};
  int d_app = 64;
  int d_gait = 32;
  double sigma_app = 0.35;
  double sigma_gait = 0.9;
  int n_cameras = 8;
  double train_fraction = 0.5;
  std::uint64_t seed = 17;

  void validate() const;  // throws std::invalid_argument

  /// Roughly the size of the large synthetic dataset the method was built
  /// for: 333 identities, ~9.6k sequences, 7 suits per identity on average.
  static SyntheticConfig reference_large();
};

void to_json(nlohmann::json& j, const SyntheticConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, SyntheticConfig& c);

Dataset generate(const SyntheticConfig& config);

struct DatasetStats {
  std::size_t identities = 0;
  std::size_t sequences = 0;
  std::size_t suits_min = 0;
  double suits_mean = 0.0;
  std::size_t suits_max = 0;
  std::size_t total_suits = 0;
  std::map<std::string, std::size_t> split_counts;  // "train"/"query"/"gallery"
};

DatasetStats dataset_stats(const Manifest& manifest);  // throws on empty manifest
nlohmann::ordered_json to_json(const DatasetStats& stats);

}  // namespace ccrr
