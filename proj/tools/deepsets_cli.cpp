// deepsets: generate datasets, train and evaluate set models, rank set
// expansions and run the property battery.

#include "deepsets/bayes_set.hpp"
#include "deepsets/check.hpp"
#include "deepsets/model.hpp"
#include "deepsets/tasks.hpp"
#include "deepsets/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

using namespace deepsets;

struct Options {
  std::string task = "digit-sum";
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  std::optional<int> epochs;
  std::optional<std::size_t> batch;
  std::string model;
  std::string data;
  std::size_t k = 10;

  // gen
  std::string kind = "rotation";
  Index max_size = 10;
  Index test_size = 0;
  Index set_size = 16;
  Index d = 0;
  Index min_size = 300;
  Index pop_max_size = 500;
  double shift = 4.0;
  std::optional<double> param;
  std::optional<std::uint64_t> base_seed;
  double correlation_limit = 1.0;

  // train / expand
  std::string metrics;
  std::string eval_data;
  std::string query;
  bool timing = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

int run_gen(const Options& o) {
  if (o.out.empty()) throw UsageError("gen: --out is required");
  LabeledSetDataset data;
  switch (task_from_string(o.task)) {
    case TaskKind::kPopulation: {
      GaussianTaskSpec spec;
      spec.kind = gaussian_kind_from_string(o.kind);
      spec.d = o.d;
      spec.set_size_min = o.min_size;
      spec.set_size_max = o.pop_max_size;
      spec.num_sets = o.n;
      spec.seed = o.seed;
      spec.fixed_parameter = o.param;
      spec.base_seed = o.base_seed;
      spec.correlation_limit = o.correlation_limit;
      data = gen_population_task(spec);
      break;
    }
    case TaskKind::kDigitSum:
      data = gen_digit_sum(o.n, o.max_size, o.test_size, o.seed);
      break;
    case TaskKind::kOutlier:
      data = gen_outlier_sets(o.n, o.set_size, o.d > 0 ? o.d : 8, o.shift, o.seed);
      break;
  }
  write_jsonl(data, o.out);
  std::cout << "wrote " << data.size() << " sets to " << o.out << "\n";
  return 0;
}

int run_train(const Options& o) {
  if (o.data.empty() || o.out.empty()) throw UsageError("train: --data and --out are required");
  TrainConfig config = o.config.empty() ? TrainConfig::defaults(task_from_string(o.task))
                                        : TrainConfig::from_json(read_json(o.config));
  if (o.epochs) config.epochs = *o.epochs;
  if (o.batch) config.batch_size = *o.batch;
  if (o.seed != 0) config.seed = o.seed;
  if (o.timing) config.record_timing = true;
  config.validate();

  const LabeledSetDataset data = read_jsonl(o.data);
  std::optional<LabeledSetDataset> eval;
  if (!o.eval_data.empty()) eval = read_jsonl(o.eval_data);

  const TrainResult result = train(config, data, eval ? &*eval : nullptr);
  save_model(o.out, result.model, config.task);
  const std::string csv = metrics_csv(result.metrics);
  if (!o.metrics.empty()) {
    write_text_file(o.metrics, csv);
  } else {
    std::cout << csv;
  }
  if (!result.metrics.empty()) {
    const auto& last = result.metrics.back();
    std::cerr << "epoch " << last.epoch << ": train_loss " << last.train_loss << ", eval_metric " << last.eval_metric
              << "\n";
  }
  return 0;
}

int run_eval(const Options& o) {
  if (o.model.empty() || o.data.empty()) throw UsageError("eval: --model and --data are required");
  const LoadedModel loaded = load_model(o.model);
  const LabeledSetDataset data = read_jsonl(o.data);
  const MetricsRecord r = evaluate(loaded.model, data, loaded.task);
  const nlohmann::json doc{{"task", std::string(to_string(loaded.task))}, {"sets", data.size()},
                           {"eval_metric", r.eval_metric}};
  if (!o.out.empty()) write_text_file(o.out, doc.dump(1) + "\n");
  std::cout << doc.dump() << "\n";
  return 0;
}

// Candidate/query lines: {"id": ..., "features": [0, 1, ...]}.
std::vector<std::pair<std::string, bayes::BinaryItem>> read_items(const std::string& path) {
  std::vector<std::pair<std::string, bayes::BinaryItem>> items;
  std::istringstream lines(read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      const auto bits = obj.at("features").get<std::vector<int>>();
      std::string id = obj.contains("id") ? (obj["id"].is_string() ? obj["id"].get<std::string>() : obj["id"].dump())
                                          : std::to_string(items.size());
      items.emplace_back(std::move(id), bayes::BinaryItem::from_bits(bits));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return items;
}

int run_expand(const Options& o) {
  if (o.data.empty() || o.query.empty()) throw UsageError("expand: --data (candidates) and --query are required");
  const auto candidates = read_items(o.data);
  const auto query = read_items(o.query);
  if (candidates.empty()) throw UsageError("expand: no candidates");
  const Index d = candidates.front().second.dim();

  bayes::BetaBinomialModel model = bayes::BetaBinomialModel::uniform(d);
  if (!o.config.empty()) {
    const auto j = read_json(o.config);
    const auto bp = j.at("beta_plus").get<std::vector<double>>();
    const auto bm = j.at("beta_minus").get<std::vector<double>>();
    model = bayes::BetaBinomialModel(Eigen::Map<const Eigen::ArrayXd>(bp.data(), static_cast<Index>(bp.size())),
                                     Eigen::Map<const Eigen::ArrayXd>(bm.data(), static_cast<Index>(bm.size())));
  }

  std::vector<bayes::BinaryItem> q;
  for (const auto& [id, item] : query) q.push_back(item);
  std::vector<bayes::BinaryItem> c;
  for (const auto& [id, item] : candidates) c.push_back(item);
  const auto ranked = bayes::expand(model, q, c, std::min(o.k, c.size()));

  std::ostringstream csv;
  csv << "rank,id,score\n";
  char score[64];
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    std::snprintf(score, sizeof score, "%.17g", ranked[r].score);
    csv << r + 1 << ',' << candidates[ranked[r].index].first << ',' << score << '\n';
  }
  if (!o.out.empty()) {
    write_text_file(o.out, csv.str());
  } else {
    std::cout << csv.str();
  }
  return 0;
}

int run_check(const Options& o) {
  const auto outcomes = run_check_battery(o.seed);
  std::cout << format_check_table(outcomes);
  return all_passed(outcomes) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Permutation-invariant and -equivariant set models"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic JSONL dataset (.gz compresses)");
  gen->add_option("--task", o.task, "population | digit-sum | outlier")->required();
  gen->add_option("--n", o.n, "Number of sets");
  gen->add_option("--seed", o.seed);
  gen->add_option("--out", o.out)->required();
  gen->add_option("--kind", o.kind, "population: rotation | correlation | rank1 | random");
  gen->add_option("--d", o.d, "population / outlier dimension (0 = default)");
  gen->add_option("--min-size", o.min_size, "population: smallest set");
  gen->add_option("--pop-max-size", o.pop_max_size, "population: largest set");
  gen->add_option("--param", o.param, "population: fix the generating parameter");
  gen->add_option("--base-seed", o.base_seed, "population: seed of the shared covariance (default --seed)");
  gen->add_option("--correlation-limit", o.correlation_limit, "population: |alpha| bound for correlation");
  gen->add_option("--max-size", o.max_size, "digit-sum: largest set when sizes are drawn");
  gen->add_option("--test-size", o.test_size, "digit-sum: fixed set size (0 draws 1..max-size)");
  gen->add_option("--set-size", o.set_size, "outlier: members per set");
  gen->add_option("--shift", o.shift, "outlier: mean shift of the odd member");

  auto* tr = app.add_subcommand("train", "Train a model on a dataset");
  tr->add_option("--data", o.data)->required();
  tr->add_option("--out", o.out, "Model JSON")->required();
  tr->add_option("--config", o.config, "Training config JSON");
  tr->add_option("--task", o.task, "Task when no config is given");
  tr->add_option("--epochs", o.epochs);
  tr->add_option("--batch", o.batch);
  tr->add_option("--seed", o.seed, "Overrides the config seed when nonzero");
  tr->add_option("--metrics", o.metrics, "Metrics CSV (stdout otherwise)");
  tr->add_option("--eval-data", o.eval_data, "Dataset for per-epoch eval_metric");
  tr->add_flag("--timing", o.timing, "Record wall_seconds (makes metrics non-reproducible)");

  auto* ev = app.add_subcommand("eval", "Evaluate a saved model");
  ev->add_option("--model", o.model)->required();
  ev->add_option("--data", o.data)->required();
  ev->add_option("--out", o.out, "Metrics JSON");

  auto* ex = app.add_subcommand("expand", "Rank candidates for a query set (Bayesian Sets)");
  ex->add_option("--data", o.data, "Candidates JSONL")->required();
  ex->add_option("--query", o.query, "Query JSONL")->required();
  ex->add_option("--k", o.k);
  ex->add_option("--config", o.config, "Prior JSON {beta_plus, beta_minus}");
  ex->add_option("--out", o.out, "Ranked CSV (stdout otherwise)");

  auto* ck = app.add_subcommand("check", "Run the property battery");
  ck->add_option("--seed", o.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*gen) return run_gen(o);
    if (*tr) return run_train(o);
    if (*ev) return run_eval(o);
    if (*ex) return run_expand(o);
    return run_check(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
