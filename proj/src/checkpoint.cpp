#include <cstring>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ccrr/net.hpp"

namespace ccrr {

namespace {

constexpr int kCheckpointFormat = 1;

nlohmann::ordered_json shape_to_json(const ModelShape& s) {
  nlohmann::ordered_json j;
  j["d_app_edge"] = s.d_app_edge;
  j["d_gait_edge"] = s.d_gait_edge;
  j["hidden"] = s.hidden;
  j["D"] = s.D;
  j["gcn_out"] = s.gcn_out;
  j["dropout"] = s.dropout;
  j["bn_eps"] = s.bn_eps;
  j["bn_momentum"] = s.bn_momentum;
  j["attention"] = to_string(s.attention);
  return j;
}

ModelShape shape_from_json(const nlohmann::json& j) {
  ModelShape s;
  s.d_app_edge = j.at("d_app_edge").get<int>();
  s.d_gait_edge = j.at("d_gait_edge").get<int>();
  s.hidden = j.at("hidden").get<int>();
  s.D = j.at("D").get<int>();
  s.gcn_out = j.at("gcn_out").get<int>();
  s.dropout = j.at("dropout").get<double>();
  s.bn_eps = j.at("bn_eps").get<double>();
  s.bn_momentum = j.at("bn_momentum").get<double>();
  s.attention = attention_mode_from_string(j.at("attention").get<std::string>());
  return s;
}

void append_blob(std::vector<std::uint8_t>& out, std::span<const double> t) {
  Matrix m = Eigen::Map<const Matrix>(t.data(), static_cast<Eigen::Index>(t.size()), 1);
  const auto blob = encode_tensor(m);
  out.insert(out.end(), blob.begin(), blob.end());
}

void read_blob(std::span<const std::uint8_t> bytes, std::size_t& offset, std::string_view name,
               std::span<double> dest) {
  if (offset > bytes.size()) throw std::runtime_error("checkpoint truncated");
  std::size_t used = 0;
  const Matrix m = decode_tensor(bytes.subspan(offset), &used);
  if (static_cast<std::size_t>(m.size()) != dest.size()) {
    throw std::runtime_error("checkpoint tensor " + std::string(name) + " has " + std::to_string(m.size()) +
                             " entries, expected " + std::to_string(dest.size()));
  }
  std::memcpy(dest.data(), m.data(), dest.size() * sizeof(double));
  offset += used;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ckpt.params.validate();
  nlohmann::ordered_json header;
  header["format"] = kCheckpointFormat;
  header["shape"] = shape_to_json(ckpt.params.shape);
  nlohmann::json hp = ckpt.hyperparams;
  header["hyperparams"] = hp;
  header["seed"] = ckpt.hyperparams.seed;
  header["adam_step"] = ckpt.adam.step;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  ckpt.params.for_each_tensor([&](std::string_view name, std::span<const double> t) {
    tensors.push_back({{"name", name}, {"size", t.size()}});
  });
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  ckpt.params.for_each_tensor([&](std::string_view, std::span<const double> t) { append_blob(out, t); });
  ckpt.adam.m.for_each_learnable([&](std::string_view, std::span<const double> t) { append_blob(out, t); });
  ckpt.adam.v.for_each_learnable([&](std::string_view, std::span<const double> t) { append_blob(out, t); });
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw std::runtime_error("checkpoint truncated");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  if (bytes.size() - 8 < len) throw std::runtime_error("checkpoint header truncated");
  const auto header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(len));
  if (header.at("format").get<int>() != kCheckpointFormat) throw std::runtime_error("unsupported checkpoint format");

  Checkpoint ckpt;
  const ModelShape shape = shape_from_json(header.at("shape"));
  ckpt.hyperparams = header.at("hyperparams").get<Hyperparams>();
  ckpt.params = ModelParams::zeros(shape);
  ckpt.adam = AdamState::zeros(shape);
  ckpt.adam.step = header.at("adam_step").get<std::int64_t>();

  std::size_t offset = 8 + len;
  ckpt.params.for_each_tensor(
      [&](std::string_view name, std::span<double> t) { read_blob(bytes, offset, name, t); });
  ckpt.adam.m.for_each_learnable(
      [&](std::string_view name, std::span<double> t) { read_blob(bytes, offset, name, t); });
  ckpt.adam.v.for_each_learnable(
      [&](std::string_view name, std::span<double> t) { read_blob(bytes, offset, name, t); });
  if (offset != bytes.size()) throw std::runtime_error("checkpoint has trailing bytes");
  ckpt.params.validate();
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace ccrr
