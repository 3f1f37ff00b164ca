#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "collabrl/baselines.hpp"
#include "collabrl/gapg.hpp"
#include "collabrl/metrics_io.hpp"
#include "collabrl/serialization.hpp"
#include "collabrl/tasks.hpp"

namespace collabrl {

enum class Algorithm { Gapg, Grpo, GrpoCollab, Router, Naive };

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::Gapg: return "gapg";
    case Algorithm::Grpo: return "grpo";
    case Algorithm::GrpoCollab: return "grpo-collab";
    case Algorithm::Router: return "router";
    case Algorithm::Naive: return "naive";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "gapg") return Algorithm::Gapg;
  if (s == "grpo") return Algorithm::Grpo;
  if (s == "grpo-collab") return Algorithm::GrpoCollab;
  if (s == "router") return Algorithm::Router;
  if (s == "naive") return Algorithm::Naive;
  throw std::invalid_argument("unknown algorithm '" + s +
                              "' (expected gapg | grpo | grpo-collab | router | naive)");
}

namespace detail {

inline void expect_keys(const nlohmann::json& j, const std::string& path,
                        std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) ok = true;
    if (!ok) throw std::invalid_argument(path + "." + item.key() + ": unknown config field");
  }
}

template <typename T>
T get_field(const nlohmann::json& j, const std::string& path, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    throw std::invalid_argument(path + "." + key + ": wrong type");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Config files (JSON; schema documented in the README)
// ---------------------------------------------------------------------------

inline TaskGenConfig taskgen_config_from_json(const nlohmann::json& j) {
  detail::expect_keys(j, "taskgen",
                      {"n_prompts", "feature_dim", "tiers", "cloud_capability", "seed",
                       "tier_noise", "slot_noise"});
  TaskGenConfig cfg;
  cfg.n_prompts = detail::get_field(j, "taskgen", "n_prompts", 0);
  cfg.feature_dim = detail::get_field(j, "taskgen", "feature_dim", 0);
  cfg.seed = detail::get_field<std::uint64_t>(j, "taskgen", "seed", 0);
  cfg.tier_noise = detail::get_field(j, "taskgen", "tier_noise", cfg.tier_noise);
  cfg.slot_noise = detail::get_field(j, "taskgen", "slot_noise", cfg.slot_noise);
  if (j.contains("tiers")) {
    int idx = 0;
    for (const auto& tj : j.at("tiers")) {
      const std::string path = "taskgen.tiers[" + std::to_string(idx++) + "]";
      detail::expect_keys(tj, path, {"tier", "fraction", "device_solvability", "n_wrong_actions"});
      TierSpec t;
      t.tier = detail::get_field(tj, path, "tier", 0);
      t.fraction = detail::get_field(tj, path, "fraction", 0.0);
      t.device_solvability = detail::get_field(tj, path, "device_solvability", 1.0);
      t.n_wrong_actions = detail::get_field(tj, path, "n_wrong_actions", 2);
      cfg.tiers.push_back(t);
    }
  }
  cfg.cloud_capability =
      detail::get_field(j, "taskgen", "cloud_capability", std::vector<double>{});
  return cfg;
}

inline TaskGenConfig load_taskgen_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  in >> j;
  TaskGenConfig cfg = taskgen_config_from_json(j);
  const auto errs = cfg.validate();
  if (!errs.empty()) {
    std::string msg = path + ": invalid task config:";
    for (const std::string& e : errs) msg += "\n  taskgen." + e;
    throw std::invalid_argument(msg);
  }
  return cfg;
}

// One experiment: dataset, algorithm, trainer/reward/GRPO settings, and
// evaluation protocol.
struct RunConfig {
  std::string dataset;
  Algorithm algorithm = Algorithm::Gapg;
  PolicyVariant policy = PolicyVariant::LinearSoftmax;
  TrainerConfig trainer;
  double alpha_a = 2.0;
  double alpha_c = 0.5;
  double alpha_f = 0.2;
  GrpoConfig grpo;
  int eval_cadence = 10;
  double holdout_fraction = 0.2;
  double eval_cap = 0.3;
  int router_samples = 8;
  int checkpoint_every = 0;  // 0: final checkpoint only
  std::vector<double> ratio_sweep;
  std::string out_dir;

  RewardParams reward_params() const { return RewardParams(alpha_a, alpha_c, alpha_f); }

  std::vector<std::string> validate() const {
    std::vector<std::string> errs;
    if (dataset.empty()) errs.push_back("dataset: required");
    if (out_dir.empty()) errs.push_back("out_dir: required");
    for (const std::string& e : trainer.validate()) errs.push_back("trainer." + e);
    for (const std::string& e : grpo.validate()) errs.push_back("grpo." + e);
    try {
      (void)reward_params();
    } catch (const std::exception& e) {
      errs.push_back(std::string("reward: ") + e.what());
    }
    if (eval_cadence < 1) errs.push_back("eval_cadence: must be >= 1");
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
      errs.push_back("holdout_fraction: must be in [0, 1)");
    if (eval_cap < 0.0 || eval_cap > 1.0) errs.push_back("eval_cap: must be in [0, 1]");
    if (router_samples < 1) errs.push_back("router_samples: must be >= 1");
    if (checkpoint_every < 0) errs.push_back("checkpoint_every: must be >= 0");
    for (std::size_t i = 0; i < ratio_sweep.size(); ++i)
      if (!(ratio_sweep[i] > 0.0 && ratio_sweep[i] < 1.0))
        errs.push_back("ratio_sweep[" + std::to_string(i) + "]: must be in (0, 1)");
    return errs;
  }
};

inline RunConfig run_config_from_json(const nlohmann::json& j, const std::string& base_dir) {
  detail::expect_keys(j, "run",
                      {"dataset", "algorithm", "policy", "trainer", "reward", "grpo",
                       "eval_cadence", "holdout_fraction", "eval_cap", "router_samples",
                       "checkpoint_every", "ratio_sweep", "out_dir"});
  RunConfig cfg;
  cfg.dataset = detail::get_field<std::string>(j, "run", "dataset", "");
  if (!cfg.dataset.empty() && !base_dir.empty() &&
      !std::filesystem::path(cfg.dataset).is_absolute())
    cfg.dataset = (std::filesystem::path(base_dir) / cfg.dataset).string();
  if (j.contains("algorithm"))
    cfg.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  if (j.contains("policy")) {
    const std::string p = j.at("policy").get<std::string>();
    if (p == "linear")
      cfg.policy = PolicyVariant::LinearSoftmax;
    else if (p == "tabular")
      cfg.policy = PolicyVariant::Tabular;
    else
      throw std::invalid_argument("run.policy: expected 'linear' or 'tabular', got '" + p + "'");
  }
  if (j.contains("trainer")) {
    const auto& t = j.at("trainer");
    detail::expect_keys(t, "run.trainer",
                        {"group_size", "rho", "learning_rate", "total_steps", "batch_size",
                         "seed"});
    cfg.trainer.group_size = detail::get_field(t, "run.trainer", "group_size", cfg.trainer.group_size);
    cfg.trainer.rho = detail::get_field(t, "run.trainer", "rho", cfg.trainer.rho);
    cfg.trainer.learning_rate =
        detail::get_field(t, "run.trainer", "learning_rate", cfg.trainer.learning_rate);
    cfg.trainer.total_steps =
        detail::get_field(t, "run.trainer", "total_steps", cfg.trainer.total_steps);
    cfg.trainer.batch_size =
        detail::get_field(t, "run.trainer", "batch_size", cfg.trainer.batch_size);
    cfg.trainer.seed = detail::get_field<std::uint64_t>(t, "run.trainer", "seed", cfg.trainer.seed);
  }
  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    detail::expect_keys(r, "run.reward", {"alpha_a", "alpha_c", "alpha_f"});
    cfg.alpha_a = detail::get_field(r, "run.reward", "alpha_a", cfg.alpha_a);
    cfg.alpha_c = detail::get_field(r, "run.reward", "alpha_c", cfg.alpha_c);
    cfg.alpha_f = detail::get_field(r, "run.reward", "alpha_f", cfg.alpha_f);
  }
  if (j.contains("grpo")) {
    const auto& g = j.at("grpo");
    detail::expect_keys(g, "run.grpo", {"clip_eps", "kl_coef", "inner_epochs", "std_floor"});
    cfg.grpo.clip_eps = detail::get_field(g, "run.grpo", "clip_eps", cfg.grpo.clip_eps);
    cfg.grpo.kl_coef = detail::get_field(g, "run.grpo", "kl_coef", cfg.grpo.kl_coef);
    cfg.grpo.inner_epochs = detail::get_field(g, "run.grpo", "inner_epochs", cfg.grpo.inner_epochs);
    cfg.grpo.std_floor = detail::get_field(g, "run.grpo", "std_floor", cfg.grpo.std_floor);
  }
  cfg.eval_cadence = detail::get_field(j, "run", "eval_cadence", cfg.eval_cadence);
  cfg.holdout_fraction = detail::get_field(j, "run", "holdout_fraction", cfg.holdout_fraction);
  cfg.eval_cap = detail::get_field(j, "run", "eval_cap", cfg.eval_cap);
  cfg.router_samples = detail::get_field(j, "run", "router_samples", cfg.router_samples);
  cfg.checkpoint_every = detail::get_field(j, "run", "checkpoint_every", cfg.checkpoint_every);
  cfg.ratio_sweep = detail::get_field(j, "run", "ratio_sweep", cfg.ratio_sweep);
  cfg.out_dir = detail::get_field<std::string>(j, "run", "out_dir", "");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  in >> j;
  return run_config_from_json(j, std::filesystem::path(path).parent_path().string());
}

// Output roots: relative out_dir values land under $COLLABRL_OUT_ROOT
// when it is set.
inline std::string resolve_out_dir(const std::string& out_dir) {
  if (out_dir.empty() || std::filesystem::path(out_dir).is_absolute()) return out_dir;
  if (const char* root = std::getenv("COLLABRL_OUT_ROOT"))
    return (std::filesystem::path(root) / out_dir).string();
  return out_dir;
}

// ---------------------------------------------------------------------------
// Router persistence
// ---------------------------------------------------------------------------

inline void save_router(const std::string& path, const RouterFit& fit) {
  ordered_json j;
  j["weights"] = fit.params.weights;
  j["bias"] = fit.params.bias;
  j["degenerate"] = fit.degenerate;
  j["warning"] = fit.warning;
  j["train_accuracy"] = fit.train_accuracy;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump() << '\n';
}

inline RouterFit load_router(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open router file: " + path);
  nlohmann::json j;
  in >> j;
  RouterFit fit;
  fit.params.weights = j.at("weights").get<std::vector<double>>();
  fit.params.bias = j.at("bias").get<double>();
  fit.degenerate = j.value("degenerate", false);
  fit.warning = j.value("warning", std::string{});
  fit.train_accuracy = j.value("train_accuracy", 0.0);
  return fit;
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

struct SweepRow {
  double cap = 0.0;
  double device_accuracy = 0.0;
  double collab_accuracy = 0.0;
  double cloud_call_fraction = 0.0;
  double help_request_fraction = 0.0;
};

struct RunSummary {
  std::string algorithm;
  std::string policy;
  int iterations = 0;
  double eval_cap = 0.0;
  double device_accuracy = 0.0;
  double collab_accuracy = 0.0;
  double cloud_call_fraction = 0.0;
  double help_request_fraction = 0.0;
  double trailing_call_ratio_50 = 0.0;
  double trailing_call_ratio_100 = 0.0;
  double final_mean_reward = 0.0;
  bool budget_ok = true;
  int skipped_updates = 0;
  bool router_degenerate = false;
};

struct RunArtifacts {
  RunMetrics metrics;
  RunSummary summary;
  PolicyParams params;
  std::optional<RouterFit> router;
  std::vector<SweepRow> sweep;
};

namespace detail {

inline double trailing_mean_call_ratio(const RunMetrics& metrics, int window) {
  if (metrics.empty()) return 0.0;
  const int n = static_cast<int>(metrics.size());
  const int take = std::min(window, n);
  double s = 0.0;
  for (int i = n - take; i < n; ++i) s += metrics[static_cast<std::size_t>(i)].call_ratio;
  return s / take;
}

inline EvalMode final_eval_mode(Algorithm a) {
  switch (a) {
    case Algorithm::Gapg:
    case Algorithm::GrpoCollab: return EvalMode::PolicyRouted;
    case Algorithm::Grpo: return EvalMode::DeviceOnly;
    case Algorithm::Router: return EvalMode::RouterOffload;
    case Algorithm::Naive: return EvalMode::NaiveOffload;
  }
  return EvalMode::DeviceOnly;
}

inline PolicyParams init_policy(PolicyVariant variant, std::span<const Prompt> dataset) {
  if (variant == PolicyVariant::Tabular) return PolicyParams::tabular(dataset);
  int max_actions = 0;
  for (const Prompt& p : dataset) max_actions = std::max(max_actions, p.num_actions());
  return PolicyParams::linear_softmax(max_actions,
                                      static_cast<int>(dataset.front().features.size()));
}

inline nlohmann::ordered_json summary_to_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["schema"] = "summary-v1";
  j["algorithm"] = s.algorithm;
  j["policy"] = s.policy;
  j["iterations"] = s.iterations;
  j["eval_cap"] = s.eval_cap;
  j["device_accuracy"] = s.device_accuracy;
  j["collab_accuracy"] = s.collab_accuracy;
  j["cloud_call_fraction"] = s.cloud_call_fraction;
  j["help_request_fraction"] = s.help_request_fraction;
  j["trailing_call_ratio_50"] = s.trailing_call_ratio_50;
  j["trailing_call_ratio_100"] = s.trailing_call_ratio_100;
  j["final_mean_reward"] = s.final_mean_reward;
  j["budget_ok"] = s.budget_ok;
  j["skipped_updates"] = s.skipped_updates;
  j["router_degenerate"] = s.router_degenerate;
  return j;
}

inline RunSummary summary_from_json(const nlohmann::json& j) {
  RunSummary s;
  s.algorithm = j.at("algorithm").get<std::string>();
  s.policy = j.value("policy", std::string{"linear"});
  s.iterations = j.value("iterations", 0);
  s.eval_cap = j.value("eval_cap", 0.0);
  s.device_accuracy = j.value("device_accuracy", 0.0);
  s.collab_accuracy = j.value("collab_accuracy", 0.0);
  s.cloud_call_fraction = j.value("cloud_call_fraction", 0.0);
  s.help_request_fraction = j.value("help_request_fraction", 0.0);
  s.trailing_call_ratio_50 = j.value("trailing_call_ratio_50", 0.0);
  s.trailing_call_ratio_100 = j.value("trailing_call_ratio_100", 0.0);
  s.final_mean_reward = j.value("final_mean_reward", 0.0);
  s.budget_ok = j.value("budget_ok", true);
  s.skipped_updates = j.value("skipped_updates", 0);
  s.router_degenerate = j.value("router_degenerate", false);
  return s;
}

inline void write_sweep_csv(const std::string& path, std::span<const SweepRow> rows,
                            const std::string& algorithm) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "# sweep-v1\n"
      << "cap,algorithm,device_accuracy,collab_accuracy,cloud_call_fraction,"
         "help_request_fraction\n";
  for (const SweepRow& r : rows)
    out << format_double(r.cap) << ',' << algorithm << ',' << format_double(r.device_accuracy)
        << ',' << format_double(r.collab_accuracy) << ','
        << format_double(r.cloud_call_fraction) << ','
        << format_double(r.help_request_fraction) << '\n';
}

inline std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
  return buf;
}

}  // namespace detail

// Trains per the config, evaluates greedily on the held-out split, and
// writes metrics.csv, checkpoint(s), summary.json, an optional sweep.csv,
// and a run_info.json sidecar (the only file with timestamps).
inline RunArtifacts run(const RunConfig& cfg) {
  const auto errs = cfg.validate();
  if (!errs.empty()) {
    std::string msg = "invalid run config:";
    for (const std::string& e : errs) msg += "\n  " + e;
    throw std::invalid_argument(msg);
  }
  const std::string started = detail::now_iso8601();

  const std::vector<Prompt> dataset = read_dataset(cfg.dataset);
  const ValidationReport report = validate_dataset(dataset);
  if (!report.ok) {
    std::string msg = cfg.dataset + ": invalid dataset:";
    for (std::size_t i = 0; i < report.issues.size() && i < 5; ++i)
      msg += "\n  prompt " + std::to_string(report.issues[i].prompt_id) + ": " +
             report.issues[i].message;
    throw std::runtime_error(msg);
  }

  // Seeded holdout split; an empty holdout evaluates on the training set.
  std::vector<int> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  RngStream split_rng(cfg.trainer.seed, StreamPurpose::Split, {});
  split_rng.shuffle(order);
  const int n_holdout =
      static_cast<int>(std::floor(cfg.holdout_fraction * static_cast<double>(dataset.size()) + 1e-9));
  std::vector<Prompt> holdout;
  std::vector<Prompt> train_set;
  for (std::size_t i = 0; i < order.size(); ++i)
    (static_cast<int>(i) < n_holdout ? holdout : train_set)
        .push_back(dataset[static_cast<std::size_t>(order[i])]);
  const std::span<const Prompt> eval_set =
      holdout.empty() ? std::span<const Prompt>(train_set) : std::span<const Prompt>(holdout);

  const RewardParams rp = cfg.reward_params();

  std::filesystem::create_directories(cfg.out_dir);
  const auto out_path = [&](const std::string& name) {
    return (std::filesystem::path(cfg.out_dir) / name).string();
  };

  RunArtifacts art;
  art.params = detail::init_policy(cfg.policy, dataset);

  EvalOptions eo;
  eo.eval_set = eval_set;
  eo.cadence = cfg.eval_cadence;
  eo.cap = cfg.eval_cap;
  eo.mode = detail::final_eval_mode(cfg.algorithm) == EvalMode::PolicyRouted
                ? EvalMode::PolicyRouted
                : EvalMode::DeviceOnly;
  if (cfg.checkpoint_every > 0) {
    eo.iteration_hook = [&](const PolicyParams& p, int iter) {
      if (iter % cfg.checkpoint_every == 0)
        save_checkpoint(out_path("checkpoint_" + std::to_string(iter) + ".json"), p);
    };
  }

  switch (cfg.algorithm) {
    case Algorithm::Gapg:
      art.metrics = train(art.params, train_set, cfg.trainer, rp, eo);
      break;
    case Algorithm::GrpoCollab:
      art.metrics = grpo_train(art.params, train_set, cfg.trainer, cfg.grpo, rp,
                               /*allow_help=*/true, eo);
      break;
    case Algorithm::Grpo:
    case Algorithm::Router:
    case Algorithm::Naive:
      art.metrics = grpo_train(art.params, train_set, cfg.trainer, cfg.grpo, rp,
                               /*allow_help=*/false, eo);
      break;
  }
  if (cfg.algorithm == Algorithm::Router) {
    art.router = train_router(train_set, art.params, cfg.router_samples, cfg.trainer.seed);
    save_router(out_path("router.json"), *art.router);
  }

  const RouterParams* router_ptr = art.router ? &art.router->params : nullptr;
  const AccuracyReport final_eval =
      route_and_eval(detail::final_eval_mode(cfg.algorithm), art.params, router_ptr, eval_set,
                     cfg.eval_cap, cfg.trainer.seed);
  const AccuracyReport policy_probe = route_and_eval(EvalMode::PolicyRouted, art.params, nullptr,
                                                     eval_set, cfg.eval_cap, cfg.trainer.seed);

  RunSummary& s = art.summary;
  s.algorithm = algorithm_name(cfg.algorithm);
  s.policy = cfg.policy == PolicyVariant::Tabular ? "tabular" : "linear";
  s.iterations = static_cast<int>(art.metrics.size());
  s.eval_cap = cfg.eval_cap;
  s.device_accuracy = final_eval.device_accuracy;
  s.collab_accuracy = final_eval.collab_accuracy;
  s.cloud_call_fraction = final_eval.cloud_call_fraction;
  s.help_request_fraction = policy_probe.help_request_fraction;
  s.trailing_call_ratio_50 = detail::trailing_mean_call_ratio(art.metrics, 50);
  s.trailing_call_ratio_100 = detail::trailing_mean_call_ratio(art.metrics, 100);
  for (const MetricsRow& r : art.metrics) {
    if (!r.updated) ++s.skipped_updates;
    if (r.d2_size > budget_cap(cfg.trainer.rho, r.d1_size)) s.budget_ok = false;
  }
  if (!art.metrics.empty()) s.final_mean_reward = art.metrics.back().mean_reward;
  if (art.router) s.router_degenerate = art.router->degenerate;

  write_metrics_csv(out_path("metrics.csv"), art.metrics);
  save_checkpoint(out_path("checkpoint_final.json"), art.params);
  {
    std::ofstream out(out_path("summary.json"));
    out << detail::summary_to_json(s).dump(2) << '\n';
  }

  // Ratio sweep: budgeted algorithms retrain at rho = cap / (1 - cap);
  // the rest re-evaluate the trained policy at each inference cap.
  if (!cfg.ratio_sweep.empty()) {
    for (double cap : cfg.ratio_sweep) {
      AccuracyReport rep;
      if (cfg.algorithm == Algorithm::Gapg) {
        PolicyParams swept = detail::init_policy(cfg.policy, dataset);
        TrainerConfig tc = cfg.trainer;
        tc.rho = cap / (1.0 - cap);
        EvalOptions sweep_eo;
        sweep_eo.eval_set = eval_set;
        sweep_eo.cadence = cfg.eval_cadence;
        sweep_eo.cap = cap;
        train(swept, train_set, tc, rp, sweep_eo);
        rep = route_and_eval(EvalMode::PolicyRouted, swept, nullptr, eval_set, cap,
                             cfg.trainer.seed);
      } else {
        rep = route_and_eval(detail::final_eval_mode(cfg.algorithm), art.params, router_ptr,
                             eval_set, cap, cfg.trainer.seed);
      }
      art.sweep.push_back({cap, rep.device_accuracy, rep.collab_accuracy,
                           rep.cloud_call_fraction, rep.help_request_fraction});
    }
    detail::write_sweep_csv(out_path("sweep.csv"), art.sweep, algorithm_name(cfg.algorithm));
  }

  {
    nlohmann::ordered_json info;
    info["started_at"] = started;
    info["finished_at"] = detail::now_iso8601();
    std::ofstream out(out_path("run_info.json"));
    out << info.dump(2) << '\n';
  }
  return art;
}

// ---------------------------------------------------------------------------
// Cross-run report
// ---------------------------------------------------------------------------

// Merges run directories into a long-format CSV and a markdown table of
// final metrics; returns the table text.
inline std::string write_report(std::span<const std::string> run_dirs,
                                const std::string& out_dir) {
  if (run_dirs.empty()) throw std::invalid_argument("report: no run directories given");
  std::filesystem::create_directories(out_dir);

  struct Entry {
    std::string name;
    RunSummary summary;
    RunMetrics metrics;
  };
  std::vector<Entry> entries;
  for (const std::string& dir : run_dirs) {
    Entry e;
    e.name = std::filesystem::path(dir).filename().string();
    if (e.name.empty()) e.name = dir;
    const std::string summary_path = (std::filesystem::path(dir) / "summary.json").string();
    std::ifstream in(summary_path);
    if (!in) throw std::runtime_error("report: run '" + dir + "': missing summary.json");
    nlohmann::json j;
    in >> j;
    e.summary = detail::summary_from_json(j);
    const std::string metrics_path = (std::filesystem::path(dir) / "metrics.csv").string();
    if (!std::filesystem::exists(metrics_path))
      throw std::runtime_error("report: run '" + dir + "': missing metrics.csv");
    e.metrics = read_metrics_csv(metrics_path);
    entries.push_back(std::move(e));
  }

  {
    std::ofstream out((std::filesystem::path(out_dir) / "report.csv").string());
    out << "run,iteration,metric,value\n";
    for (const Entry& e : entries)
      for (const MetricsRow& r : e.metrics) {
        const auto emit = [&](const char* metric, const std::string& value) {
          out << e.name << ',' << r.iteration << ',' << metric << ',' << value << '\n';
        };
        emit("mean_reward", format_double(r.mean_reward));
        emit("call_ratio", format_double(r.call_ratio));
        emit("device_accuracy", format_double(r.device_accuracy));
        emit("collab_accuracy", format_double(r.collab_accuracy));
        emit("d1_size", std::to_string(r.d1_size));
        emit("d2_size", std::to_string(r.d2_size));
      }
  }

  std::string table;
  table += "| run | algorithm | device acc | collab acc | cloud calls | trailing call ratio "
           "(50) | final reward |\n";
  table += "|---|---|---|---|---|---|---|\n";
  for (const Entry& e : entries) {
    const RunSummary& s = e.summary;
    table += "| " + e.name + " | " + s.algorithm + " | " + format_double(s.device_accuracy) +
             " | " + format_double(s.collab_accuracy) + " | " +
             format_double(s.cloud_call_fraction) + " | " +
             format_double(s.trailing_call_ratio_50) + " | " +
             format_double(s.final_mean_reward) + " |\n";
  }
  std::ofstream md((std::filesystem::path(out_dir) / "report.md").string());
  md << table;
  return table;
}

}  // namespace collabrl
