// Command-line front end: gen, rank, train, eval, report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ccrr/data_model.hpp"
#include "ccrr/graph.hpp"
#include "ccrr/hyperparams.hpp"
#include "ccrr/net.hpp"
#include "ccrr/rerank_eval.hpp"
#include "ccrr/synthetic.hpp"
#include "ccrr/trainer.hpp"

namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

ccrr::Hyperparams load_hyperparams(const std::string& config, const std::vector<std::string>& overrides) {
  ccrr::Hyperparams hp;
  if (!config.empty()) hp = read_json(config).get<ccrr::Hyperparams>();
  for (const auto& o : overrides) ccrr::apply_override(hp, o);
  hp.validate();
  return hp;
}

int cmd_gen(const std::string& config, const fs::path& out) {
  ccrr::SyntheticConfig cfg;
  if (!config.empty()) cfg = read_json(config).get<ccrr::SyntheticConfig>();
  const ccrr::Dataset data = ccrr::generate(cfg);
  ccrr::save_dataset(data, out);
  write_text(out / "stats.json", ccrr::to_json(ccrr::dataset_stats(data.manifest)).dump(2) + "\n");
  std::cout << "wrote " << data.manifest.size() << " sequences to " << out << "\n";
  return 0;
}

int cmd_rank(const fs::path& data_dir, const fs::path& out, const std::string& config,
             const std::vector<std::string>& overrides, const std::string& protocol, const std::string& dump_graph,
             std::size_t dump_query) {
  const ccrr::Hyperparams hp = load_hyperparams(config, overrides);
  const ccrr::Dataset data = ccrr::load_dataset(data_dir);
  const auto& m = data.manifest;
  const auto features = ccrr::NormalizedFeatures::from(data.features);
  const auto queries = m.indices_of(ccrr::Split::kQuery);
  const auto gallery = m.indices_of(ccrr::Split::kGallery);
  const auto proto = ccrr::protocol_from_string(protocol);

  nlohmann::ordered_json result = nlohmann::ordered_json::array();
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const std::size_t q = queries[qi];
    auto admissible = ccrr::filter_gallery(m.records[q], m, gallery, proto);
    if (admissible.empty()) continue;
    const auto problem = ccrr::build_query_problem(m, features, q, std::move(admissible), hp);
    auto top = [&](const ccrr::RankingList& list) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(hp.K), list.size());
      for (std::size_t i = 0; i < k; ++i) {
        arr.push_back({{"seq_id", m.records[problem.gallery_rows[list.order[i]]].seq_id},
                       {"distance", list.distances[i]}});
      }
      return arr;
    };
    nlohmann::ordered_json entry;
    entry["query"] = m.records[q].seq_id;
    entry["appearance"] = top(problem.by_app);
    entry["gait"] = top(problem.by_gait);
    result.push_back(std::move(entry));

    if (!dump_graph.empty() && qi == dump_query) {
      nlohmann::ordered_json g;
      g["query"] = m.records[q].seq_id;
      nlohmann::json cands = nlohmann::json::array();
      for (std::size_t k : problem.cand.indices) cands.push_back(m.records[problem.gallery_rows[k]].seq_id);
      g["candidates"] = cands;
      g["appearance_graph"] = ccrr::describe(problem.graphs.appearance);
      g["gait_graph"] = ccrr::describe(problem.graphs.gait);
      write_text(dump_graph, g.dump(2) + "\n");
    }
  }
  write_text(out, result.dump(2) + "\n");
  std::cout << "ranked " << result.size() << " queries\n";
  return 0;
}

int cmd_train(const fs::path& data_dir, const std::string& config, const std::vector<std::string>& overrides,
              const fs::path& out, const std::string& log) {
  const ccrr::Hyperparams hp = load_hyperparams(config, overrides);
  const ccrr::Dataset data = ccrr::load_dataset(data_dir);
  ccrr::TrainOptions options;
  options.checkpoint_path = out;
  options.log_path = log.empty() ? fs::path(out.string() + ".log.jsonl") : fs::path(log);
  const auto result = ccrr::train(data, hp, options);
  for (const auto& e : result.epochs) std::cout << ccrr::to_json(e).dump() << "\n";
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_eval(const fs::path& data_dir, const std::string& model_path, const std::string& protocol,
             const std::string& baseline, const std::string& config, const std::vector<std::string>& overrides,
             const fs::path& out) {
  const ccrr::Dataset data = ccrr::load_dataset(data_dir);
  ccrr::Scorer scorer;
  ccrr::Hyperparams hp;
  ccrr::Checkpoint ckpt;
  if (baseline.empty()) {
    if (model_path.empty()) throw CLI::ValidationError("eval", "either --model or --baseline is required");
    ckpt = ccrr::load_checkpoint(model_path);
    hp = ckpt.hyperparams;
    for (const auto& o : overrides) ccrr::apply_override(hp, o);
    scorer = {ccrr::ScorerKind::kModel, &ckpt.params};
  } else {
    hp = load_hyperparams(config, overrides);
    scorer.kind = ccrr::scorer_from_string(baseline);
    if (scorer.kind == ccrr::ScorerKind::kModel) throw CLI::ValidationError("--baseline", "use --model instead");
  }
  const auto report = ccrr::evaluate(data, scorer, ccrr::protocol_from_string(protocol), hp);
  const std::string text = ccrr::to_json(report).dump(2) + "\n";
  write_text(out, text);
  std::cout << text;
  return 0;
}

int cmd_report(const std::vector<std::string>& files) {
  const auto a = ccrr::report_from_json(read_json(files.at(0)));
  const auto b = ccrr::report_from_json(read_json(files.at(1)));
  std::printf("%-8s %10s %10s %10s\n", "metric", "a", "b", "b - a");
  auto row = [](const char* name, double x, double y) {
    std::printf("%-8s %10.2f %10.2f %+10.2f\n", name, 100.0 * x, 100.0 * y, 100.0 * (y - x));
  };
  row("mAP", a.mAP, b.mAP);
  row("R1", a.rank1, b.rank1);
  row("R5", a.rank5, b.rank5);
  row("R10", a.rank10, b.rank10);
  std::printf("%-8s %10zu %10zu\n", "queries", a.num_queries, b.num_queries);
  if (a.protocol != b.protocol) std::printf("note: protocols differ (%s vs %s)\n",
                                            ccrr::to_string(a.protocol).c_str(), ccrr::to_string(b.protocol).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confidence-aware two-branch re-ranking for clothes-changing video re-identification"};
  app.require_subcommand(1);

  std::string config, out, data_dir, model, protocol = "cc", baseline, log, dump_graph;
  std::vector<std::string> overrides, compare;
  std::size_t dump_query = 0;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic benchmark");
  gen->add_option("--config", config, "Synthetic config JSON (defaults if omitted)");
  gen->add_option("--out", out, "Output directory")->required();

  auto* rank = app.add_subcommand("rank", "Dump both initial ranking lists per query");
  rank->add_option("--data", data_dir, "Dataset directory")->required();
  rank->add_option("--out", out, "Output JSON")->required();
  rank->add_option("--config", config, "Hyperparameter JSON");
  rank->add_option("--set", overrides, "Hyperparameter override key=value");
  rank->add_option("--protocol", protocol, "cc or standard")->default_val("standard");
  rank->add_option("--dump-graph", dump_graph, "Write the relation graphs of one query as JSON");
  rank->add_option("--query", dump_query, "Query position used by --dump-graph");

  auto* tr = app.add_subcommand("train", "Train the confidence network on the train split");
  tr->add_option("--data", data_dir, "Dataset directory")->required();
  tr->add_option("--config", config, "Hyperparameter JSON");
  tr->add_option("--set", overrides, "Hyperparameter override key=value");
  tr->add_option("--out", out, "Checkpoint path")->required();
  tr->add_option("--log", log, "Training log (JSON lines); default <out>.log.jsonl");

  auto* ev = app.add_subcommand("eval", "Evaluate a model or a fixed-confidence baseline");
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--model", model, "Checkpoint path");
  ev->add_option("--baseline", baseline, "app | gait | sum | oracle");
  ev->add_option("--protocol", protocol, "cc or standard")->default_val("cc");
  ev->add_option("--config", config, "Hyperparameter JSON (baselines)");
  ev->add_option("--set", overrides, "Hyperparameter override key=value");
  ev->add_option("--out", out, "Report JSON")->required();

  auto* rep = app.add_subcommand("report", "Compare two evaluation reports");
  rep->add_option("--compare", compare, "Two report JSON files")->required()->expected(2);

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return cmd_gen(config, out);
    if (rank->parsed()) return cmd_rank(data_dir, out, config, overrides, protocol, dump_graph, dump_query);
    if (tr->parsed()) return cmd_train(data_dir, config, overrides, out, log);
    if (ev->parsed()) return cmd_eval(data_dir, model, protocol, baseline, config, overrides, out);
    if (rep->parsed()) return cmd_report(compare);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
