#pragma once

/// \file data_model.hpp
/// \brief Sequence manifest (JSON Lines) and the CCVF binary feature format.
///
/// A dataset directory holds `manifest.jsonl`, `appearance.ccvf` and
/// `gait.ccvf`. Row i of each feature file belongs to manifest line i.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace ccrr {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Split { kTrain, kQuery, kGallery };

std::string_view to_string(Split split);
Split split_from_string(std::string_view text);  // throws std::invalid_argument

struct SequenceRecord {
  std::string seq_id;
  int person_id = 0;
  int clothes_id = 0;  // only meaningful within one person_id
  int camera_id = 0;
  Split split = Split::kTrain;
  int n_frames = 1;
};

struct Manifest {
  std::vector<SequenceRecord> records;

  std::size_t size() const { return records.size(); }
  std::vector<std::size_t> indices_of(Split split) const;
};

/// Error raised while ingesting a manifest. `line()` is 1-based.
class ManifestError : public std::runtime_error {
 public:
  ManifestError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

Manifest parse_manifest(std::string_view text);
Manifest load_manifest(const std::filesystem::path& path);
std::string serialize_manifest(const Manifest& manifest);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// CCVF: "CCVF" | u32 version | u32 rows | u32 dim | rows*dim scalars, all LE.
// Version 1 carries float32 features. Version 2 carries float64 and is only
// used for model checkpoint tensors.

enum class FeatureErrorKind {
  kBadMagic,
  kBadVersion,
  kRowMismatch,
  kTruncated,
  kNonFinite,
  kIo,
};

class FeatureError : public std::runtime_error {
 public:
  FeatureError(FeatureErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  FeatureErrorKind kind() const { return kind_; }

 private:
  FeatureErrorKind kind_;
};

inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::uint32_t kTensorVersion = 2;
inline constexpr std::size_t kCcvfHeaderBytes = 16;

std::vector<std::uint8_t> encode_features(const Matrix& m);
Matrix decode_features(std::span<const std::uint8_t> bytes, std::size_t expected_rows);

/// float64 variant. Decoding accepts only version 2.
std::vector<std::uint8_t> encode_tensor(const Matrix& m);
/// Decodes one version-2 blob starting at `bytes`; `consumed` receives its size.
Matrix decode_tensor(std::span<const std::uint8_t> bytes, std::size_t* consumed);

Matrix read_features(const std::filesystem::path& path, std::size_t expected_rows);
void write_features(const Matrix& m, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

struct FeatureStore {
  Matrix appearance;  // N x D_a
  Matrix gait;        // N x D_g

  std::size_t rows() const { return static_cast<std::size_t>(appearance.rows()); }
};

/// Checks the store against a manifest: equal row counts, D >= 1, finite.
void validate(const FeatureStore& store, const Manifest& manifest);

struct Dataset {
  Manifest manifest;
  FeatureStore features;
};

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

}  // namespace ccrr
