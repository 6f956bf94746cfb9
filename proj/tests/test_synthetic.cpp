#include <doctest.h>

#include <map>
#include <set>

#include "ccrr/synthetic.hpp"

using namespace ccrr;

namespace {

SyntheticConfig small_config() {
  SyntheticConfig c;
  c.n_identities = 10;
  c.suits_per_identity = {3, 3};
  c.sequences_per_suit = {5, 5};
  c.train_fraction = 0.5;
  return c;
}

}  // namespace

TEST_CASE("generate: counts and the first-sequence-per-suit query rule") {
  const Dataset d = generate(small_config());
  CHECK(d.manifest.size() == 150);
  CHECK(d.manifest.indices_of(Split::kTrain).size() == 75);
  CHECK(d.manifest.indices_of(Split::kQuery).size() == 15);
  CHECK(d.manifest.indices_of(Split::kGallery).size() == 60);
  CHECK(d.features.appearance.rows() == 150);
  CHECK(d.features.appearance.cols() == 64);
  CHECK(d.features.gait.cols() == 32);

  std::map<std::pair<int, int>, int> queries_per_suit;
  std::set<int> test_ids;
  for (const auto& r : d.manifest.records) {
    if (r.split == Split::kTrain) continue;
    test_ids.insert(r.person_id);
    queries_per_suit[{r.person_id, r.clothes_id}] += r.split == Split::kQuery;
  }
  CHECK(test_ids.size() == 5);
  CHECK(queries_per_suit.size() == 15);
  for (const auto& [key, n] : queries_per_suit) CHECK(n == 1);
}

TEST_CASE("generate: determinism") {
  const Dataset a = generate(small_config());
  const Dataset b = generate(small_config());
  CHECK(serialize_manifest(a.manifest) == serialize_manifest(b.manifest));
  CHECK(encode_features(a.features.appearance) == encode_features(b.features.appearance));
  CHECK(encode_features(a.features.gait) == encode_features(b.features.gait));

  SyntheticConfig other = small_config();
  other.seed = 18;
  CHECK(encode_features(generate(other).features.gait) != encode_features(a.features.gait));
}

TEST_CASE("generate: zero noise collapses rows onto prototypes") {
  SyntheticConfig c = small_config();
  c.sigma_app = 0.0;
  c.sigma_gait = 0.0;
  const Dataset d = generate(c);
  const auto& recs = d.manifest.records;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (recs[i].person_id == recs[i - 1].person_id) {
      CHECK(d.features.gait.row(r) == d.features.gait.row(r - 1));
      if (recs[i].clothes_id == recs[i - 1].clothes_id) {
        CHECK(d.features.appearance.row(r) == d.features.appearance.row(r - 1));
      } else {
        CHECK(d.features.appearance.row(r) != d.features.appearance.row(r - 1));
      }
    }
  }
  CHECK(d.features.gait.row(0).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("generate: noise norm tracks sigma") {
  SyntheticConfig c = small_config();
  c.sigma_app = 0.5;
  c.d_app = 256;
  const Matrix& app = generate(c).features.appearance;
  // unit prototype + isotropic noise with E|noise|^2 = sigma^2
  const double mean_sq_norm = app.rowwise().squaredNorm().mean();
  CHECK(mean_sq_norm == doctest::Approx(1.25).epsilon(0.03));
}

TEST_CASE("config validation") {
  SyntheticConfig c;
  CHECK_NOTHROW(c.validate());
  c.suits_per_identity = {1, 3};
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
  c = SyntheticConfig{};
  c.train_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = SyntheticConfig{};
  c.sequences_per_suit = {5, 4};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = SyntheticConfig{};
  c.sigma_gait = -0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  nlohmann::json j = SyntheticConfig{};
  CHECK(j.get<SyntheticConfig>().seed == 17);
  j["bogus"] = 1;
  CHECK_THROWS_AS(j.get<SyntheticConfig>(), std::invalid_argument);
}

TEST_CASE("dataset_stats") {
  const DatasetStats s = dataset_stats(generate(small_config()).manifest);
  CHECK(s.identities == 10);
  CHECK(s.sequences == 150);
  CHECK(s.suits_mean == 3.0);
  CHECK(s.suits_min == 3);
  CHECK(s.suits_max == 3);
  CHECK(s.split_counts.at("query") == 15);

  SyntheticConfig one;
  one.n_identities = 1;
  one.suits_per_identity = {2, 2};
  one.sequences_per_suit = {1, 1};
  const DatasetStats t = dataset_stats(generate(one).manifest);
  CHECK(t.sequences == 2);
  CHECK(t.suits_mean == 2.0);

  CHECK_THROWS_AS(dataset_stats(Manifest{}), std::invalid_argument);
}

TEST_CASE("reference large config matches the target dataset scale") {
  const Dataset d = generate(SyntheticConfig::reference_large());
  const DatasetStats s = dataset_stats(d.manifest);
  CHECK(s.identities == 333);
  CHECK(s.suits_min >= 2);
  CHECK(s.suits_max <= 12);
  // Uniform over [2, 12] has mean 7.
  CHECK(s.suits_mean == doctest::Approx(7.0).epsilon(0.05));
  CHECK(static_cast<double>(s.sequences) == doctest::Approx(9620.0).epsilon(0.06));
}
