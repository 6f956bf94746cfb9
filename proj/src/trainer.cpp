#include "ccrr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "ccrr/loss.hpp"
#include "ccrr/rerank_eval.hpp"

namespace ccrr {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void accumulate(Gradients& into, const Gradients& g) {
  std::vector<std::span<const double>> src;
  g.for_each_learnable([&](std::string_view, std::span<const double> t) { src.push_back(t); });
  std::size_t i = 0;
  into.for_each_learnable([&](std::string_view, std::span<double> t) {
    for (std::size_t k = 0; k < t.size(); ++k) t[k] += src[i][k];
    ++i;
  });
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b) {
  return mix(mix(mix(seed ^ mix(stream)) ^ a) ^ b);
}

std::vector<Episode> build_episodes(const Manifest& manifest, std::uint64_t seed, int epoch,
                                    bool drop_same_clothes) {
  const auto train_rows = manifest.indices_of(Split::kTrain);
  if (train_rows.size() < 2) throw std::invalid_argument("training needs at least two train sequences");
  std::vector<std::size_t> order = train_rows;
  std::mt19937_64 rng(derive_seed(seed, 1, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Episode> episodes;
  episodes.reserve(order.size());
  for (std::size_t q : order) {
    Episode e;
    e.query_row = q;
    const auto& query = manifest.records[q];
    for (std::size_t r : train_rows) {
      if (r == q) continue;
      const auto& g = manifest.records[r];
      if (drop_same_clothes && g.person_id == query.person_id && g.clothes_id == query.clothes_id) continue;
      e.gallery_rows.push_back(r);
    }
    if (!e.gallery_rows.empty()) episodes.push_back(std::move(e));
  }
  return episodes;
}

nlohmann::ordered_json to_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["queries"] = log.queries;
  j["L_c"] = log.confidence;
  j["L_r"] = log.ranking;
  j["L"] = log.total;
  return j;
}

TrainResult train(const Dataset& data, const Hyperparams& hp, const TrainOptions& options) {
  hp.validate();
  validate(data.features, data.manifest);
  const NormalizedFeatures features = NormalizedFeatures::from(data.features);
  const ModelShape shape = ModelShape::from(hp, static_cast<int>(data.features.appearance.cols()),
                                            static_cast<int>(data.features.gait.cols()));

  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  ckpt.hyperparams = hp;
  ckpt.params = ModelParams::initialize(shape, derive_seed(hp.seed, 0, 0));
  ckpt.adam = AdamState::zeros(shape);
  const AdamSettings adam{hp.lr, hp.beta1, hp.beta2, hp.adam_eps};

  std::ofstream log_file;
  if (options.log_path) {
    log_file.open(*options.log_path, std::ios::trunc);
    if (!log_file) throw std::runtime_error("cannot write training log " + options.log_path->string());
  }

  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    const auto episodes = build_episodes(data.manifest, hp.seed, epoch, hp.train_protocol == "cc");
    EpochLog log;
    log.epoch = epoch;
    Gradients batch_grad = ModelParams::zeros(shape);
    std::size_t in_batch = 0;

    for (std::size_t e = 0; e < episodes.size(); ++e) {
      const Episode& ep = episodes[e];
      const QueryProblem problem = build_query_problem(data.manifest, features, ep.query_row, ep.gallery_rows, hp);
      const auto fwd = model_forward(problem.cand, problem.graphs, ckpt.params, Mode::kTrain,
                                     derive_seed(hp.seed, 2, static_cast<std::uint64_t>(epoch), e));
      const LossBreakdown loss = total_loss(problem.cand, fwd.s, fwd.c_app, fwd.c_gait, hp.epsilon);
      if (!std::isfinite(loss.total)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", episode " +
                                 std::to_string(e) + " (query " + data.manifest.records[ep.query_row].seq_id + ")");
      }
      update_running_stats(ckpt.params, fwd.trace.encoder);
      accumulate(batch_grad, model_backward(ckpt.params, problem.graphs, fwd.trace,
                                            UpstreamGrads{loss.d_s, loss.d_c_app, loss.d_c_gait}));
      log.confidence += loss.confidence;
      log.ranking += loss.ranking;
      log.total += loss.total;
      ++log.queries;
      result.episode_losses.push_back(loss.total);

      if (++in_batch == static_cast<std::size_t>(hp.batch) || e + 1 == episodes.size()) {
        adam_step(ckpt.params, batch_grad, ckpt.adam, adam);
        batch_grad = ModelParams::zeros(shape);
        in_batch = 0;
      }
    }

    const auto nq = static_cast<double>(log.queries);
    log.confidence /= nq;
    log.ranking /= nq;
    log.total /= nq;
    result.epochs.push_back(log);
    if (log_file) log_file << to_json(log).dump() << '\n' << std::flush;

    if (options.checkpoint_path && hp.checkpoint_every > 0 && epoch % hp.checkpoint_every == 0 &&
        epoch != hp.epochs) {
      auto periodic = *options.checkpoint_path;
      periodic += ".epoch" + std::to_string(epoch);
      save_checkpoint(ckpt, periodic);
    }
  }
  if (options.checkpoint_path) save_checkpoint(ckpt, *options.checkpoint_path);
  return result;
}

}  // namespace ccrr
