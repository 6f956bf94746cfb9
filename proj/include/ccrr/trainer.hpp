#pragma once

/// \file trainer.hpp
/// \brief Leave-one-out training over the train split.
///
/// Each train sequence acts once per epoch as a query against all other
/// train sequences. Episodes are shuffled per epoch, grouped into batches of
/// `Hyperparams::batch`, and gradients are summed in episode order before
/// every Adam step, so a run is fully determined by the seed.

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "ccrr/data_model.hpp"
#include "ccrr/hyperparams.hpp"
#include "ccrr/net.hpp"

namespace ccrr {

/// Independent seed for one random stream: 0 initialization, 1 episode
/// order (a = epoch), 2 dropout masks (a = epoch, b = episode).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b = 0);

struct Episode {
  std::size_t query_row = 0;
  std::vector<std::size_t> gallery_rows;  // train rows except the query
};

/// Episodes of one epoch in their seeded order. With `drop_same_clothes`
/// the query's same-identity same-clothes sequences leave its gallery too;
/// episodes left without a gallery are dropped.
/// Throws std::invalid_argument with fewer than two train sequences.
std::vector<Episode> build_episodes(const Manifest& manifest, std::uint64_t seed, int epoch,
                                    bool drop_same_clothes = false);

struct EpochLog {
  int epoch = 0;
  std::size_t queries = 0;
  double confidence = 0.0;  // mean L_c per query
  double ranking = 0.0;     // mean L_r per query
  double total = 0.0;
};

nlohmann::ordered_json to_json(const EpochLog& log);

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_path;  // final checkpoint
  std::optional<std::filesystem::path> log_path;         // JSON lines, one per epoch
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> epochs;
  std::vector<double> episode_losses;  // total loss per episode, in training order
};

/// Throws std::runtime_error naming the episode if a loss turns non-finite.
TrainResult train(const Dataset& data, const Hyperparams& hp, const TrainOptions& options = {});

}  // namespace ccrr
