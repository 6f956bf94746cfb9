#include "ccrr/data_model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace ccrr {

namespace {

constexpr char kMagic[4] = {'C', 'C', 'V', 'F'};

static_assert(std::endian::native == std::endian::little,
              "CCVF encode/decode assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

template <typename Scalar>
void put_scalar(std::vector<std::uint8_t>& out, Scalar v) {
  std::uint8_t raw[sizeof(Scalar)];
  std::memcpy(raw, &v, sizeof(Scalar));
  out.insert(out.end(), raw, raw + sizeof(Scalar));
}

template <typename Scalar>
Scalar get_scalar(const std::uint8_t* p) {
  Scalar v;
  std::memcpy(&v, p, sizeof(Scalar));
  return v;
}

template <typename Scalar>
std::vector<std::uint8_t> encode_impl(const Matrix& m, std::uint32_t version) {
  if (!m.allFinite()) {
    throw FeatureError(FeatureErrorKind::kNonFinite, "matrix has non-finite entries");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kCcvfHeaderBytes + m.size() * sizeof(Scalar));
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, version);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_scalar<Scalar>(out, static_cast<Scalar>(m(r, c)));
  return out;
}

struct Header {
  std::uint32_t version;
  std::uint32_t rows;
  std::uint32_t dim;
};

Header decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCcvfHeaderBytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
      throw FeatureError(FeatureErrorKind::kBadMagic, "bad magic (expected \"CCVF\")");
    }
    throw FeatureError(FeatureErrorKind::kTruncated, "truncated header");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FeatureError(FeatureErrorKind::kBadMagic, "bad magic (expected \"CCVF\")");
  }
  return {get_u32(bytes.data() + 4), get_u32(bytes.data() + 8), get_u32(bytes.data() + 12)};
}

template <typename Scalar>
Matrix decode_payload(std::span<const std::uint8_t> bytes, const Header& h) {
  const std::size_t need = static_cast<std::size_t>(h.rows) * h.dim * sizeof(Scalar);
  if (bytes.size() - kCcvfHeaderBytes < need) {
    throw FeatureError(FeatureErrorKind::kTruncated,
                       "truncated payload: need " + std::to_string(need) + " bytes, have " +
                           std::to_string(bytes.size() - kCcvfHeaderBytes));
  }
  Matrix m(h.rows, h.dim);
  const std::uint8_t* p = bytes.data() + kCcvfHeaderBytes;
  for (std::uint32_t r = 0; r < h.rows; ++r) {
    for (std::uint32_t c = 0; c < h.dim; ++c, p += sizeof(Scalar)) {
      const Scalar v = get_scalar<Scalar>(p);
      if (!std::isfinite(v)) {
        throw FeatureError(FeatureErrorKind::kNonFinite,
                           "non-finite entry at row " + std::to_string(r) + ", col " + std::to_string(c));
      }
      m(r, c) = static_cast<double>(v);
    }
  }
  return m;
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "train";
}

Split split_from_string(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "query") return Split::kQuery;
  if (text == "gallery") return Split::kGallery;
  throw std::invalid_argument("unknown split value \"" + std::string(text) + "\"");
}

std::vector<std::size_t> Manifest::indices_of(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

ManifestError::ManifestError(std::size_t line, const std::string& what)
    : std::runtime_error("manifest line " + std::to_string(line) + ": " + what), line_(line) {}

Manifest parse_manifest(std::string_view text) {
  Manifest manifest;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ManifestError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ManifestError(line_no, "expected a JSON object");

    auto int_field = [&](const char* name) {
      if (!obj.contains(name)) throw ManifestError(line_no, std::string("missing field \"") + name + "\"");
      const auto& v = obj.at(name);
      if (!v.is_number_integer()) throw ManifestError(line_no, std::string("field \"") + name + "\" must be an integer");
      return v.get<int>();
    };
    auto str_field = [&](const char* name) {
      if (!obj.contains(name)) throw ManifestError(line_no, std::string("missing field \"") + name + "\"");
      const auto& v = obj.at(name);
      if (!v.is_string()) throw ManifestError(line_no, std::string("field \"") + name + "\" must be a string");
      return v.get<std::string>();
    };

    SequenceRecord rec;
    rec.seq_id = str_field("seq_id");
    rec.person_id = int_field("person_id");
    rec.clothes_id = int_field("clothes_id");
    rec.camera_id = int_field("camera_id");
    try {
      rec.split = split_from_string(str_field("split"));
    } catch (const std::invalid_argument& e) {
      throw ManifestError(line_no, e.what());
    }
    rec.n_frames = int_field("n_frames");
    if (rec.n_frames < 1) throw ManifestError(line_no, "n_frames must be >= 1");
    if (!seen.insert(rec.seq_id).second) {
      throw ManifestError(line_no, "duplicate seq_id \"" + rec.seq_id + "\"");
    }
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

std::string serialize_manifest(const Manifest& manifest) {
  std::string out;
  for (const auto& r : manifest.records) {
    // ordered_json keeps the documented field order on disk
    nlohmann::ordered_json obj;
    obj["seq_id"] = r.seq_id;
    obj["person_id"] = r.person_id;
    obj["clothes_id"] = r.clothes_id;
    obj["camera_id"] = r.camera_id;
    obj["split"] = std::string(to_string(r.split));
    obj["n_frames"] = r.n_frames;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  const std::string text = serialize_manifest(manifest);
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> encode_features(const Matrix& m) { return encode_impl<float>(m, kFeatureVersion); }

Matrix decode_features(std::span<const std::uint8_t> bytes, std::size_t expected_rows) {
  const Header h = decode_header(bytes);
  if (h.version != kFeatureVersion) {
    throw FeatureError(FeatureErrorKind::kBadVersion, "unsupported version " + std::to_string(h.version));
  }
  if (h.rows != expected_rows) {
    throw FeatureError(FeatureErrorKind::kRowMismatch, "row mismatch: file has " + std::to_string(h.rows) +
                                                           " rows, expected " + std::to_string(expected_rows));
  }
  return decode_payload<float>(bytes, h);
}

std::vector<std::uint8_t> encode_tensor(const Matrix& m) { return encode_impl<double>(m, kTensorVersion); }

Matrix decode_tensor(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
  const Header h = decode_header(bytes);
  if (h.version != kTensorVersion) {
    throw FeatureError(FeatureErrorKind::kBadVersion, "unsupported tensor version " + std::to_string(h.version));
  }
  Matrix m = decode_payload<double>(bytes, h);
  if (consumed) *consumed = kCcvfHeaderBytes + static_cast<std::size_t>(h.rows) * h.dim * sizeof(double);
  return m;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FeatureError(FeatureErrorKind::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FeatureError(FeatureErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FeatureError(FeatureErrorKind::kIo, "write failed for " + path.string());
}

Matrix read_features(const std::filesystem::path& path, std::size_t expected_rows) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_features(bytes, expected_rows);
  } catch (const FeatureError& e) {
    throw FeatureError(e.kind(), path.string() + ": " + e.what());
  }
}

void write_features(const Matrix& m, const std::filesystem::path& path) {
  write_file_bytes(path, encode_features(m));
}

void validate(const FeatureStore& store, const Manifest& manifest) {
  const auto n = static_cast<Eigen::Index>(manifest.size());
  if (store.appearance.rows() != n || store.gait.rows() != n) {
    throw FeatureError(FeatureErrorKind::kRowMismatch, "feature rows do not match manifest length");
  }
  if (store.appearance.cols() < 1 || store.gait.cols() < 1) {
    throw std::invalid_argument("feature dimensions must be >= 1");
  }
  if (!store.appearance.allFinite() || !store.gait.allFinite()) {
    throw FeatureError(FeatureErrorKind::kNonFinite, "feature store has non-finite entries");
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  data.manifest = load_manifest(dir / "manifest.jsonl");
  data.features.appearance = read_features(dir / "appearance.ccvf", data.manifest.size());
  data.features.gait = read_features(dir / "gait.ccvf", data.manifest.size());
  if (data.manifest.size() > 0) validate(data.features, data.manifest);
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_manifest(data.manifest, dir / "manifest.jsonl");
  write_features(data.features.appearance, dir / "appearance.ccvf");
  write_features(data.features.gait, dir / "gait.ccvf");
}

}  // namespace ccrr
