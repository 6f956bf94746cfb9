#include "ccrr/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <stdexcept>

namespace ccrr {

namespace {

Vector unit_gaussian(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  const double norm = v.norm();
  // A zero draw is measure-zero; fall back to e_0.
  if (norm == 0.0) {
    v.setZero();
    v[0] = 1.0;
    return v;
  }
  return v / norm;
}

Vector noisy(std::mt19937_64& rng, const Vector& proto, double sigma) {
  if (sigma == 0.0) return proto;
  std::normal_distribution<double> normal(0.0, sigma / std::sqrt(static_cast<double>(proto.size())));
  Vector v = proto;
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += normal(rng);
  return v;
}

int draw(std::mt19937_64& rng, IntRange range) {
  return std::uniform_int_distribution<int>(range.min, range.max)(rng);
}

}  // namespace

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("synthetic config: " + msg); };
  if (n_identities < 1) fail("n_identities must be >= 1");
  if (suits_per_identity.min < 2) fail("suits_per_identity.min must be >= 2");
  if (suits_per_identity.min > suits_per_identity.max) fail("suits_per_identity range is empty");
  if (sequences_per_suit.min < 1) fail("sequences_per_suit.min must be >= 1");
  if (sequences_per_suit.min > sequences_per_suit.max) fail("sequences_per_suit range is empty");
  if (d_app < 1 || d_gait < 1) fail("dimensions must be >= 1");
  if (!(sigma_app >= 0.0) || !(sigma_gait >= 0.0)) fail("sigma values must be >= 0");
  if (n_cameras < 1) fail("n_cameras must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
}

SyntheticConfig SyntheticConfig::reference_large() {
  SyntheticConfig c;
  c.n_identities = 333;
  c.suits_per_identity = {2, 12};
  c.sequences_per_suit = {2, 6};
  return c;
}

void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = nlohmann::json{
      {"n_identities", c.n_identities},
      {"suits_per_identity", {c.suits_per_identity.min, c.suits_per_identity.max}},
      {"sequences_per_suit", {c.sequences_per_suit.min, c.sequences_per_suit.max}},
      {"d_app", c.d_app},
      {"d_gait", c.d_gait},
      {"sigma_app", c.sigma_app},
      {"sigma_gait", c.sigma_gait},
      {"n_cameras", c.n_cameras},
      {"train_fraction", c.train_fraction},
      {"seed", c.seed},
  };
}

void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  static const std::set<std::string> known = {"n_identities", "suits_per_identity", "sequences_per_suit",
                                              "d_app",        "d_gait",             "sigma_app",
                                              "sigma_gait",   "n_cameras",          "train_fraction",
                                              "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("synthetic config: unknown key \"" + key + "\"");
  auto range = [](const nlohmann::json& v) {
    if (!v.is_array() || v.size() != 2) throw std::invalid_argument("synthetic config: range must be [min, max]");
    return IntRange{v[0].get<int>(), v[1].get<int>()};
  };
  if (j.contains("n_identities")) c.n_identities = j["n_identities"].get<int>();
  if (j.contains("suits_per_identity")) c.suits_per_identity = range(j["suits_per_identity"]);
  if (j.contains("sequences_per_suit")) c.sequences_per_suit = range(j["sequences_per_suit"]);
  if (j.contains("d_app")) c.d_app = j["d_app"].get<int>();
  if (j.contains("d_gait")) c.d_gait = j["d_gait"].get<int>();
  if (j.contains("sigma_app")) c.sigma_app = j["sigma_app"].get<double>();
  if (j.contains("sigma_gait")) c.sigma_gait = j["sigma_gait"].get<double>();
  if (j.contains("n_cameras")) c.n_cameras = j["n_cameras"].get<int>();
  if (j.contains("train_fraction")) c.train_fraction = j["train_fraction"].get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
}

Dataset generate(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const int n_train = static_cast<int>(std::floor(config.train_fraction * config.n_identities));

  std::vector<Vector> app_rows;
  std::vector<Vector> gait_rows;
  Dataset data;
  std::uniform_int_distribution<int> camera(0, config.n_cameras - 1);
  std::uniform_int_distribution<int> frames(8, 165);

  for (int person = 0; person < config.n_identities; ++person) {
    const bool is_train = person < n_train;
    const Vector gait_proto = unit_gaussian(rng, config.d_gait);
    const int n_suits = draw(rng, config.suits_per_identity);
    for (int suit = 0; suit < n_suits; ++suit) {
      const Vector app_proto = unit_gaussian(rng, config.d_app);
      const int n_seq = draw(rng, config.sequences_per_suit);
      for (int s = 0; s < n_seq; ++s) {
        SequenceRecord rec;
        char id[48];
        std::snprintf(id, sizeof(id), "p%04d_c%02d_s%03d", person, suit, s);
        rec.seq_id = id;
        rec.person_id = person;
        rec.clothes_id = suit;
        rec.camera_id = camera(rng);
        rec.n_frames = frames(rng);
        rec.split = is_train ? Split::kTrain : (s == 0 ? Split::kQuery : Split::kGallery);
        app_rows.push_back(noisy(rng, app_proto, config.sigma_app));
        gait_rows.push_back(noisy(rng, gait_proto, config.sigma_gait));
        data.manifest.records.push_back(std::move(rec));
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(app_rows.size());
  data.features.appearance.resize(n, config.d_app);
  data.features.gait.resize(n, config.d_gait);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.features.appearance.row(i) = app_rows[i].transpose();
    data.features.gait.row(i) = gait_rows[i].transpose();
  }
  return data;
}

DatasetStats dataset_stats(const Manifest& manifest) {
  if (manifest.size() == 0) throw std::invalid_argument("dataset_stats: empty manifest");
  std::map<int, std::set<int>> suits;
  DatasetStats stats;
  stats.split_counts = {{"train", 0}, {"query", 0}, {"gallery", 0}};
  for (const auto& r : manifest.records) {
    suits[r.person_id].insert(r.clothes_id);
    ++stats.split_counts[std::string(to_string(r.split))];
  }
  stats.identities = suits.size();
  stats.sequences = manifest.size();
  stats.suits_min = SIZE_MAX;
  for (const auto& [_, s] : suits) {
    stats.suits_min = std::min(stats.suits_min, s.size());
    stats.suits_max = std::max(stats.suits_max, s.size());
    stats.total_suits += s.size();
  }
  stats.suits_mean = static_cast<double>(stats.total_suits) / static_cast<double>(stats.identities);
  return stats;
}

nlohmann::ordered_json to_json(const DatasetStats& stats) {
  nlohmann::ordered_json j;
  j["identities"] = stats.identities;
  j["sequences"] = stats.sequences;
  j["suits_min"] = stats.suits_min;
  j["suits_mean"] = stats.suits_mean;
  j["suits_max"] = stats.suits_max;
  j["splits"] = {{"train", stats.split_counts.at("train")},
                 {"query", stats.split_counts.at("query")},
                 {"gallery", stats.split_counts.at("gallery")}};
  return j;
}

}  // namespace ccrr
