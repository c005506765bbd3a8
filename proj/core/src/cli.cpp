#include "car/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "car/dataset.hpp"
#include "car/error.hpp"
#include "car/metrics.hpp"
#include "car/rewiring.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace car {
namespace {

json config_json(const TrainConfig& c) {
  return json{
      {"mechanism", mechanism_name(c.mechanism)},
      {"layers", c.layers},
      {"heads", c.heads},
      {"hidden", c.hidden},
      {"lambda", c.lambda},
      {"rounds", c.rounds},
      {"temperature", c.temperature},
      {"lr", c.lr},
      {"batch_size", c.batch_size},
      {"max_epochs", c.max_epochs},
      {"patience", c.patience},
      {"seed", c.seed},
      {"mode", mode_name(c.mode)},
  };
}

void apply_config_key(TrainConfig& c, const std::string& key, const json& val) {
  if (key == "mechanism") {
    c.mechanism = mechanism_from_string(val.get<std::string>());
  } else if (key == "layers") {
    c.layers = val.get<std::size_t>();
  } else if (key == "heads") {
    c.heads = val.get<std::size_t>();
  } else if (key == "hidden") {
    c.hidden = val.get<std::size_t>();
  } else if (key == "lambda") {
    c.lambda = val.get<double>();
  } else if (key == "rounds") {
    c.rounds = val.get<std::size_t>();
  } else if (key == "temperature") {
    c.temperature = val.get<double>();
  } else if (key == "lr") {
    c.lr = val.get<double>();
  } else if (key == "batch_size") {
    c.batch_size = val.get<std::size_t>();
  } else if (key == "max_epochs") {
    c.max_epochs = val.get<std::size_t>();
  } else if (key == "patience") {
    c.patience = val.get<std::size_t>();
  } else if (key == "seed") {
    c.seed = val.get<std::uint64_t>();
  } else if (key == "mode") {
    c.mode = mode_from_string(val.get<std::string>());
  } else {
    throw DataError("unknown config key '" + key + "'");
  }
}

void apply_config_file(TrainConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw DataError("config " + path + ": expected a JSON object");
  for (const auto& [key, val] : j.items()) {
    try {
      apply_config_key(c, key, val);
    } catch (const json::exception& e) {
      throw DataError("config " + path + ", key '" + key + "': " + e.what());
    }
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto a = tok.find_first_not_of(" \t");
    if (a == std::string::npos) throw DataError(what + ": empty entry in '" + s + "'");
    const auto b = tok.find_last_not_of(" \t");
    tok = tok.substr(a, b - a + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw DataError(what + ": bad number '" + tok + "'");
    }
    if (used != tok.size()) throw DataError(what + ": bad number '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw DataError(what + ": empty list");
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& s, const std::string& what) {
  std::vector<std::uint64_t> out;
  for (double v : parse_double_list(s, what)) {
    if (v < 0 || v != std::floor(v)) throw DataError(what + ": expected non-negative integers");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

struct RunOutcome {
  MetricsRecord record;
  Model model;
};

RunOutcome run_experiment(const Graph& g, const std::string& dataset, const TrainConfig& cfg) {
  TrainResult tr = train(g, cfg);
  const EvalStats test = evaluate(tr.model, g, g.test_mask);
  RunOutcome out{MetricsRecord{}, tr.model};
  out.record.dataset = dataset;
  out.record.cfg = cfg;
  out.record.test_accuracy = test.accuracy;
  out.record.test_loss = test.loss;
  out.record.mean_kl = mean_label_agreement_kl(tr.model, g, g.test_mask);
  out.record.epochs_run = tr.epochs_run;
  out.record.wall_clock_seconds = tr.wall_seconds;
  return out;
}

std::size_t worker_count(std::size_t jobs) {
  std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CAR_NUM_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v <= 0)
      throw DataError("CAR_NUM_WORKERS must be a positive integer");
    workers = static_cast<std::size_t>(v);
  }
  return std::min(workers, jobs);
}

// Runs every job and returns records in job order, so output files do not
// depend on scheduling. Each job's RNG is seeded from its own config.
std::vector<MetricsRecord> run_jobs(const Graph& g, const std::string& dataset,
                                    const std::vector<TrainConfig>& jobs) {
  std::vector<MetricsRecord> records(jobs.size());
  const std::size_t workers = worker_count(jobs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i)
      records[i] = run_experiment(g, dataset, jobs[i]).record;
    return records;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= jobs.size()) break;
          records[i] = run_experiment(g, dataset, jobs[i]).record;
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return records;
}

struct SweepSpec {
  std::vector<Mechanism> mechanisms{Mechanism::GAT, Mechanism::GATv2,
                                    Mechanism::GraphTransformer};
  std::vector<std::size_t> layers{1, 2};
  std::vector<std::size_t> heads{1, 3, 5};
  std::vector<std::size_t> hidden{10, 25, 100, 200};
  std::vector<double> lambdas{0.1, 0.5, 1.0, 5.0};
  std::vector<std::uint64_t> seeds{0};
  TrainMode mode = TrainMode::Car;
  TrainConfig base;  // scalar knobs: rounds, temperature, lr, ...
};

SweepSpec parse_sweep_file(const std::string& path) {
  SweepSpec spec;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sweep config: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("sweep config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw DataError("sweep config " + path + ": expected a JSON object");
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "mechanisms") {
        spec.mechanisms.clear();
        for (const auto& v : val) spec.mechanisms.push_back(mechanism_from_string(v.get<std::string>()));
      } else if (key == "layers") {
        spec.layers = val.get<std::vector<std::size_t>>();
      } else if (key == "heads") {
        spec.heads = val.get<std::vector<std::size_t>>();
      } else if (key == "hidden") {
        spec.hidden = val.get<std::vector<std::size_t>>();
      } else if (key == "lambdas") {
        spec.lambdas = val.get<std::vector<double>>();
      } else if (key == "seeds") {
        spec.seeds = val.get<std::vector<std::uint64_t>>();
      } else if (key == "mode") {
        spec.mode = mode_from_string(val.get<std::string>());
      } else {
        apply_config_key(spec.base, key, val);
      }
    } catch (const json::exception& e) {
      throw DataError("sweep config " + path + ", key '" + key + "': " + e.what());
    }
  }
  if (spec.mechanisms.empty() || spec.layers.empty() || spec.heads.empty() ||
      spec.hidden.empty() || spec.lambdas.empty() || spec.seeds.empty())
    throw DataError("sweep config " + path + ": empty grid axis");
  if (spec.mode == TrainMode::Baseline)
    throw DataError("sweep config " + path + ": mode must be car or neighbor-vote");
  return spec;
}

json optional_p(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty()) return nullptr;
  try {
    return wilcoxon_signed_rank_one_tailed(a, b);
  } catch (const DataError&) {
    return nullptr;
  }
}

json optional_welch(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2 || y.size() < 2) return nullptr;
  try {
    return welch_t_one_tailed(x, y);
  } catch (const DataError&) {
    return nullptr;
  }
}

int cmd_train(const std::string& data_dir, const std::string& out_dir, const TrainConfig& cfg) {
  const Graph g = load_dataset(data_dir);
  ensure_dir(out_dir);
  const RunOutcome run = run_experiment(g, data_dir, cfg);
  save_checkpoint(run.model, (fs::path(out_dir) / "model.ckpt").string());
  const std::string line = metrics_record_json(run.record);
  auto out = open_out((fs::path(out_dir) / "metrics.jsonl").string());
  out << line << "\n";
  std::cout << line << "\n";
  return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& ckpt) {
  const Graph g = load_dataset(data_dir);
  const Model m = load_checkpoint(ckpt);
  const EvalStats test = evaluate(m, g, g.test_mask);
  const auto kl = mean_label_agreement_kl(m, g, g.test_mask);
  const json j{
      {"test_accuracy", test.accuracy},
      {"test_loss", test.loss},
      {"mean_kl", kl ? json(*kl) : json(nullptr)},
  };
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_sweep(const std::string& data_dir, const std::string& out_dir, const SweepSpec& spec) {
  const Graph g = load_dataset(data_dir);
  ensure_dir(out_dir);

  // Job list: per (mechanism, L, K, F', seed) one baseline run, then one
  // regularized run per lambda. Flat order keeps the output stable.
  std::vector<TrainConfig> jobs;
  std::vector<std::size_t> pair_base;    // for each job, index of its baseline
  std::vector<double> pair_lambda;       // lambda of regularized jobs, 0 for baselines
  for (Mechanism mech : spec.mechanisms)
    for (std::size_t L : spec.layers)
      for (std::size_t K : spec.heads)
        for (std::size_t F : spec.hidden)
          for (std::uint64_t seed : spec.seeds) {
            TrainConfig b = spec.base;
            b.mechanism = mech;
            b.layers = L;
            b.heads = K;
            b.hidden = F;
            b.seed = seed;
            b.mode = TrainMode::Baseline;
            b.lambda = 0.0;
            const std::size_t base_idx = jobs.size();
            jobs.push_back(b);
            pair_base.push_back(base_idx);
            pair_lambda.push_back(0.0);
            for (double lam : spec.lambdas) {
              TrainConfig c = b;
              c.mode = spec.mode;
              c.lambda = lam;
              jobs.push_back(c);
              pair_base.push_back(base_idx);
              pair_lambda.push_back(lam);
            }
          }

  const std::vector<MetricsRecord> records = run_jobs(g, data_dir, jobs);

  auto out = open_out((fs::path(out_dir) / "records.jsonl").string());
  for (const auto& r : records) out << metrics_record_json(r) << "\n";

  std::vector<double> base_loss, reg_loss, improvement;
  std::vector<double> high, low;
  std::size_t n_base = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (jobs[i].mode == TrainMode::Baseline) {
      ++n_base;
      continue;
    }
    const double a = records[pair_base[i]].test_loss;
    const double b = records[i].test_loss;
    base_loss.push_back(a);
    reg_loss.push_back(b);
    improvement.push_back(a - b);
    const double lam = pair_lambda[i];
    if (lam == 1.0 || lam == 5.0) high.push_back(a - b);
    if (lam == 0.1 || lam == 0.5) low.push_back(a - b);
  }
  double mean_impr = 0.0;
  for (double d : improvement) mean_impr += d;
  if (!improvement.empty()) mean_impr /= static_cast<double>(improvement.size());

  const json summary{
      {"baseline_records", n_base},
      {"regularized_records", improvement.size()},
      {"mean_improvement", mean_impr},
      {"wilcoxon_p_improvement", optional_p(base_loss, reg_loss)},
      {"welch_p_high_vs_low_lambda", optional_welch(high, low)},
  };
  auto sum_out = open_out((fs::path(out_dir) / "summary.json").string());
  sum_out << summary.dump(2) << "\n";
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_prune(const std::string& data_dir, const std::string& baseline_ckpt,
              const std::string& car_ckpt, const std::string& out_dir,
              const RewiringConfig& cfg) {
  const Graph g = load_dataset(data_dir);
  const Model baseline = load_checkpoint(baseline_ckpt);
  const Model car_model = load_checkpoint(car_ckpt);
  ensure_dir(out_dir);
  const RewiringResult res = rewired_gcn_experiment(g, baseline, car_model, cfg);

  auto tsv = open_out((fs::path(out_dir) / "prune.tsv").string());
  tsv << "threshold\tsource\tseed\taccuracy\tkept_edges\n";
  tsv << std::setprecision(10);
  for (const auto& p : res.points)
    tsv << p.threshold << "\t" << p.source << "\t" << p.seed << "\t" << p.accuracy << "\t"
        << p.kept_edges << "\n";

  json unpruned = json::object();
  for (const auto& [seed, acc] : res.unpruned) unpruned[std::to_string(seed)] = acc;
  const json summary{
      {"auc_baseline", res.auc_baseline},
      {"auc_car", res.auc_car},
      {"unpruned_accuracy", unpruned},
  };
  auto sum_out = open_out((fs::path(out_dir) / "summary.json").string());
  sum_out << summary.dump(2) << "\n";
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_explain(const std::string& data_dir, const std::string& ckpt_a, const std::string& ckpt_b,
                std::size_t top, const std::string& out_path) {
  const Graph g = load_dataset(data_dir);
  const Model a = load_checkpoint(ckpt_a);
  const Model b = load_checkpoint(ckpt_b);
  const auto report = attention_delta_report(a, b, g, top);
  std::ostringstream tsv;
  tsv << "src\ttgt\talpha_a\talpha_b\tdelta\tfloored\n";
  tsv << std::setprecision(10);
  for (const auto& d : report)
    tsv << d.src << "\t" << d.tgt << "\t" << d.alpha_a << "\t" << d.alpha_b << "\t"
        << format_delta_pct(d.delta_pct) << "\t" << (d.floored ? 1 : 0) << "\n";
  if (out_path.empty()) {
    std::cout << tsv.str();
  } else {
    auto out = open_out(out_path);
    out << tsv.str();
  }
  return 0;
}

int cmd_gen_synth(const std::string& out_dir, const SynthConfig& cfg) {
  const Graph g = generate_synthetic(cfg);
  save_dataset(g, out_dir);
  const json j{
      {"nodes", g.num_nodes},
      {"edges", g.num_edges()},
      {"classes", g.num_classes},
      {"homophily", edge_homophily(g)},
  };
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_convert(const std::string& content, const std::string& cites, const std::string& out_dir) {
  convert_planetoid(content, cites, out_dir);
  const Graph g = load_dataset(out_dir);
  const json j{
      {"nodes", g.num_nodes},
      {"edges", g.num_edges()},
      {"classes", g.num_classes},
      {"homophily", edge_homophily(g)},
  };
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

std::string metrics_record_json(const MetricsRecord& r) {
  json cfg = config_json(r.cfg);
  cfg["dataset"] = r.dataset;
  const bool car_enabled = r.cfg.mode != TrainMode::Baseline && r.cfg.lambda != 0.0;
  const json j{
      {"config", cfg},
      {"test_accuracy", r.test_accuracy},
      {"test_loss", r.test_loss},
      {"mean_kl", r.mean_kl ? json(*r.mean_kl) : json(nullptr)},
      {"epochs_run", r.epochs_run},
      {"wall_clock_seconds", r.wall_clock_seconds},
      {"car_enabled", car_enabled},
  };
  return j.dump();
}

int run_commands(const std::vector<std::string>& args) {
  CLI::App app{"Graph attention training with causally regularized attention"};
  app.name("car");
  app.require_subcommand(1);

  const std::vector<std::string> mech_names{"gat", "gatv2", "transformer", "gcn"};
  const std::vector<std::string> mode_names{"baseline", "car", "neighbor-vote"};

  // train
  auto* t_train = app.add_subcommand("train", "Train one model; writes model.ckpt and metrics.jsonl");
  std::string tr_data, tr_out, tr_config;
  t_train->add_option("--data", tr_data, "dataset directory")->required();
  t_train->add_option("--out", tr_out, "output directory")->required();
  t_train->add_option("--config", tr_config, "JSON config file (flags override it)");
  std::string tr_mech, tr_mode;
  std::size_t tr_layers = 0, tr_heads = 0, tr_hidden = 0, tr_rounds = 0;
  std::size_t tr_batch = 0, tr_epochs = 0, tr_patience = 0;
  double tr_lambda = 0, tr_temp = 0, tr_lr = 0;
  std::uint64_t tr_seed = 0;
  t_train->add_option("--mechanism", tr_mech, "attention mechanism")->check(CLI::IsMember(mech_names));
  t_train->add_option("--layers", tr_layers, "attention layers");
  t_train->add_option("--heads", tr_heads, "attention heads");
  t_train->add_option("--hidden", tr_hidden, "hidden width");
  t_train->add_option("--lambda", tr_lambda, "causal loss weight");
  t_train->add_option("--rounds", tr_rounds, "intervention rounds per batch");
  t_train->add_option("--temperature", tr_temp, "causal effect sigmoid temperature");
  t_train->add_option("--lr", tr_lr, "Adam learning rate");
  t_train->add_option("--batch-size", tr_batch, "training batch size");
  t_train->add_option("--max-epochs", tr_epochs, "epoch cap");
  t_train->add_option("--patience", tr_patience, "early stopping patience");
  t_train->add_option("--seed", tr_seed, "RNG seed");
  t_train->add_option("--mode", tr_mode, "training mode")->check(CLI::IsMember(mode_names));

  // eval
  auto* t_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
  std::string ev_data, ev_ckpt;
  t_eval->add_option("--data", ev_data, "dataset directory")->required();
  t_eval->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();

  // sweep
  auto* t_sweep = app.add_subcommand("sweep", "Grid of runs with paired baselines and a stats summary");
  std::string sw_data, sw_out, sw_config;
  t_sweep->add_option("--data", sw_data, "dataset directory")->required();
  t_sweep->add_option("--out", sw_out, "output directory")->required();
  t_sweep->add_option("--config", sw_config, "JSON sweep config (grid axes + scalar knobs)");

  // prune
  auto* t_prune = app.add_subcommand("prune", "Attention-guided pruning and rewired-GCN retraining");
  std::string pr_data, pr_base, pr_car, pr_out;
  std::string pr_thresholds = "0,0.05,0.1,0.2,0.3,0.5";
  std::string pr_seeds = "0,1,2";
  RewiringConfig pr_cfg;
  t_prune->add_option("--data", pr_data, "dataset directory")->required();
  t_prune->add_option("--baseline", pr_base, "baseline model checkpoint")->required();
  t_prune->add_option("--car", pr_car, "regularized model checkpoint")->required();
  t_prune->add_option("--out", pr_out, "output directory")->required();
  t_prune->add_option("--thresholds", pr_thresholds, "comma-separated attention thresholds");
  t_prune->add_option("--seeds", pr_seeds, "comma-separated retraining seeds");
  t_prune->add_option("--gcn-hidden", pr_cfg.gcn_hidden, "retrained GCN width");
  t_prune->add_option("--gcn-layers", pr_cfg.gcn_layers, "retrained GCN depth");
  t_prune->add_option("--lr", pr_cfg.lr, "retraining learning rate");
  t_prune->add_option("--max-epochs", pr_cfg.max_epochs, "retraining epoch cap");
  t_prune->add_option("--patience", pr_cfg.patience, "retraining patience");

  // explain
  auto* t_explain = app.add_subcommand("explain", "Per-edge attention deltas between two checkpoints");
  std::string ex_data, ex_a, ex_b, ex_out;
  std::size_t ex_top = 0;
  t_explain->add_option("--data", ex_data, "dataset directory")->required();
  t_explain->add_option("--a", ex_a, "reference checkpoint")->required();
  t_explain->add_option("--b", ex_b, "comparison checkpoint")->required();
  t_explain->add_option("--top", ex_top, "keep the top-k edges by |delta| (0 keeps all)");
  t_explain->add_option("--out", ex_out, "TSV output path (default stdout)");

  // gen-synth
  auto* t_gen = app.add_subcommand("gen-synth", "Generate a synthetic dataset directory");
  std::string gs_out;
  SynthConfig gs_cfg;
  t_gen->set_help_flag("--help", "print help");  // frees -h/--h for homophily
  t_gen->add_option("--out", gs_out, "output directory")->required();
  t_gen->add_option("--n", gs_cfg.n, "node count");
  t_gen->add_option("--classes", gs_cfg.num_classes, "label classes");
  t_gen->add_option("--h,--homophily", gs_cfg.target_homophily, "target edge homophily")
      ->check(CLI::Range(0.0, 1.0));
  t_gen->add_option("--mean-degree", gs_cfg.mean_degree, "mean in-degree");
  t_gen->add_option("--feature-dim", gs_cfg.feature_dim, "feature width (>= classes)");
  t_gen->add_option("--seed", gs_cfg.seed, "RNG seed");
  t_gen->add_option("--train-per-class", gs_cfg.train_per_class, "training nodes per class");
  t_gen->add_option("--val-count", gs_cfg.val_count, "validation node count");

  // convert-planetoid
  auto* t_conv = app.add_subcommand("convert-planetoid", "Convert citation content/cites files");
  std::string cv_content, cv_cites, cv_out;
  t_conv->add_option("--content", cv_content, "content file (id features label)")->required();
  t_conv->add_option("--cites", cv_cites, "cites file (cited citing)")->required();
  t_conv->add_option("--out", cv_out, "output dataset directory")->required();

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (t_train->parsed()) {
      TrainConfig cfg;
      if (!tr_config.empty()) apply_config_file(cfg, tr_config);
      if (t_train->count("--mechanism")) cfg.mechanism = mechanism_from_string(tr_mech);
      if (t_train->count("--layers")) cfg.layers = tr_layers;
      if (t_train->count("--heads")) cfg.heads = tr_heads;
      if (t_train->count("--hidden")) cfg.hidden = tr_hidden;
      if (t_train->count("--lambda")) cfg.lambda = tr_lambda;
      if (t_train->count("--rounds")) cfg.rounds = tr_rounds;
      if (t_train->count("--temperature")) cfg.temperature = tr_temp;
      if (t_train->count("--lr")) cfg.lr = tr_lr;
      if (t_train->count("--batch-size")) cfg.batch_size = tr_batch;
      if (t_train->count("--max-epochs")) cfg.max_epochs = tr_epochs;
      if (t_train->count("--patience")) cfg.patience = tr_patience;
      if (t_train->count("--seed")) cfg.seed = tr_seed;
      if (t_train->count("--mode")) cfg.mode = mode_from_string(tr_mode);
      return cmd_train(tr_data, tr_out, cfg);
    }
    if (t_eval->parsed()) return cmd_eval(ev_data, ev_ckpt);
    if (t_sweep->parsed()) {
      SweepSpec spec;
      if (!sw_config.empty()) spec = parse_sweep_file(sw_config);
      return cmd_sweep(sw_data, sw_out, spec);
    }
    if (t_prune->parsed()) {
      pr_cfg.thresholds = parse_double_list(pr_thresholds, "--thresholds");
      std::sort(pr_cfg.thresholds.begin(), pr_cfg.thresholds.end());
      pr_cfg.thresholds.erase(std::unique(pr_cfg.thresholds.begin(), pr_cfg.thresholds.end()),
                              pr_cfg.thresholds.end());
      pr_cfg.seeds = parse_u64_list(pr_seeds, "--seeds");
      return cmd_prune(pr_data, pr_base, pr_car, pr_out, pr_cfg);
    }
    if (t_explain->parsed()) return cmd_explain(ex_data, ex_a, ex_b, ex_top, ex_out);
    if (t_gen->parsed()) return cmd_gen_synth(gs_out, gs_cfg);
    if (t_conv->parsed()) return cmd_convert(cv_content, cv_cites, cv_out);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace car
