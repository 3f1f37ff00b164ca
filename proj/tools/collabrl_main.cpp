// Command-line front end: dataset generation, training, router fitting,
// greedy evaluation, estimator verification, and cross-run reports.
//
// Exit codes: 0 success, 1 usage/config/data error, 2 verification failed.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "collabrl/harness.hpp"
#include "collabrl/oracle.hpp"

namespace {

int cmd_gen_tasks(const std::string& config_path, const std::string& out_path) {
  const collabrl::TaskGenConfig cfg = collabrl::load_taskgen_config(config_path);
  const std::vector<collabrl::Prompt> prompts = collabrl::generate(cfg);
  collabrl::write_dataset(out_path, prompts);
  std::cout << "wrote " << prompts.size() << " prompts to " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& dataset,
              const std::string& out_dir, const std::string& algo, bool collab_reward) {
  collabrl::RunConfig cfg = collabrl::load_run_config(config_path);
  if (!dataset.empty()) cfg.dataset = dataset;
  if (!algo.empty()) cfg.algorithm = collabrl::parse_algorithm(algo);
  if (collab_reward && cfg.algorithm == collabrl::Algorithm::Grpo)
    cfg.algorithm = collabrl::Algorithm::GrpoCollab;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  cfg.out_dir = collabrl::resolve_out_dir(cfg.out_dir);

  const collabrl::RunArtifacts art = collabrl::run(cfg);
  if (art.router && art.router->degenerate)
    std::cerr << "warning: " << art.router->warning << "\n";
  const collabrl::RunSummary& s = art.summary;
  std::cout << "algorithm=" << s.algorithm << " iterations=" << s.iterations
            << " device_accuracy=" << collabrl::format_double(s.device_accuracy)
            << " collab_accuracy=" << collabrl::format_double(s.collab_accuracy)
            << " cloud_call_fraction=" << collabrl::format_double(s.cloud_call_fraction)
            << " trailing_call_ratio_50=" << collabrl::format_double(s.trailing_call_ratio_50)
            << "\n"
            << "artifacts in " << cfg.out_dir << "\n";
  return 0;
}

int cmd_train_router(const std::string& dataset_path, const std::string& checkpoint,
                     const std::string& out_path, int samples, std::uint64_t seed) {
  const auto dataset = collabrl::read_dataset(dataset_path);
  const auto policy = collabrl::load_checkpoint(checkpoint);
  const collabrl::RouterFit fit = collabrl::train_router(dataset, policy, samples, seed);
  if (fit.degenerate) std::cerr << "warning: " << fit.warning << "\n";
  collabrl::save_router(out_path, fit);
  std::cout << "router train_accuracy=" << collabrl::format_double(fit.train_accuracy)
            << " -> " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& mode_name, const std::string& dataset_path,
             const std::string& checkpoint, const std::string& router_path, double cap,
             std::uint64_t seed, const std::string& report_path) {
  collabrl::EvalMode mode;
  if (mode_name == "device")
    mode = collabrl::EvalMode::DeviceOnly;
  else if (mode_name == "naive")
    mode = collabrl::EvalMode::NaiveOffload;
  else if (mode_name == "router")
    mode = collabrl::EvalMode::RouterOffload;
  else if (mode_name == "policy-routed")
    mode = collabrl::EvalMode::PolicyRouted;
  else
    throw CLI::ValidationError("--mode", "expected device | naive | router | policy-routed");

  const auto dataset = collabrl::read_dataset(dataset_path);
  const auto policy = collabrl::load_checkpoint(checkpoint);
  collabrl::RouterFit router;
  if (mode == collabrl::EvalMode::RouterOffload) {
    if (router_path.empty())
      throw CLI::ValidationError("--router", "required for router mode");
    router = collabrl::load_router(router_path);
  }
  const collabrl::AccuracyReport rep = collabrl::route_and_eval(
      mode, policy, mode == collabrl::EvalMode::RouterOffload ? &router.params : nullptr,
      dataset, cap, seed);
  std::cout << "mode=" << collabrl::eval_mode_name(rep.mode) << " n=" << rep.n
            << " cap=" << collabrl::format_double(rep.cap)
            << " device_accuracy=" << collabrl::format_double(rep.device_accuracy)
            << " collab_accuracy=" << collabrl::format_double(rep.collab_accuracy)
            << " cloud_calls=" << rep.cloud_calls
            << " help_requests=" << collabrl::format_double(rep.help_request_fraction) << "\n";
  if (!report_path.empty()) {
    nlohmann::ordered_json j;
    j["mode"] = collabrl::eval_mode_name(rep.mode);
    j["n"] = rep.n;
    j["cap"] = rep.cap;
    j["device_accuracy"] = rep.device_accuracy;
    j["collab_accuracy"] = rep.collab_accuracy;
    j["cloud_calls"] = rep.cloud_calls;
    j["cloud_call_fraction"] = rep.cloud_call_fraction;
    j["help_request_fraction"] = rep.help_request_fraction;
    std::ofstream out(report_path);
    out << j.dump(2) << '\n';
  }
  return 0;
}

int cmd_verify(bool unbiasedness, bool gradcheck, int seeds, int instances,
               const std::string& report_path) {
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  bool all_ok = true;

  if (unbiasedness) {
    const auto sweep = collabrl::unbiasedness_sweep(seeds);
    const bool estimator_ok = sweep.max_error <= 1e-10;
    const bool scaling_ok = sweep.max_scaling_error <= 1e-10;
    all_ok = all_ok && estimator_ok && scaling_ok;
    std::cout << (estimator_ok ? "PASS" : "FAIL") << " unbiasedness: max |E[estimator] - grad| = "
              << collabrl::format_double(sweep.max_error) << " over " << sweep.instances
              << " instances (tol 1e-10)\n";
    std::cout << (scaling_ok ? "PASS" : "FAIL")
              << " group-factor scaling: max |E[unscaled] - (G-1)/G grad| = "
              << collabrl::format_double(sweep.max_scaling_error) << " (tol 1e-10)\n";
    checks.push_back({{"name", "unbiasedness"},
                      {"instances", sweep.instances},
                      {"max_error", sweep.max_error},
                      {"tolerance", 1e-10},
                      {"passed", estimator_ok}});
    checks.push_back({{"name", "group_factor_scaling"},
                      {"instances", sweep.instances},
                      {"max_error", sweep.max_scaling_error},
                      {"tolerance", 1e-10},
                      {"passed", scaling_ok}});
  }
  if (gradcheck) {
    const auto gc = collabrl::gradcheck_sweep(instances);
    const bool lp_ok = gc.max_rel_error_log_prob <= 1e-6;
    const bool rw_ok = gc.max_rel_error_reward <= 1e-6;
    all_ok = all_ok && lp_ok && rw_ok;
    std::cout << (lp_ok ? "PASS" : "FAIL") << " gradcheck log_prob: max rel err = "
              << collabrl::format_double(gc.max_rel_error_log_prob) << " over " << gc.instances
              << " instances (tol 1e-6)\n";
    std::cout << (rw_ok ? "PASS" : "FAIL") << " gradcheck expected reward: max rel err = "
              << collabrl::format_double(gc.max_rel_error_reward) << " (tol 1e-6)\n";
    checks.push_back({{"name", "gradcheck_log_prob"},
                      {"instances", gc.instances},
                      {"max_error", gc.max_rel_error_log_prob},
                      {"tolerance", 1e-6},
                      {"passed", lp_ok}});
    checks.push_back({{"name", "gradcheck_expected_reward"},
                      {"instances", gc.instances},
                      {"max_error", gc.max_rel_error_reward},
                      {"tolerance", 1e-6},
                      {"passed", rw_ok}});
  }
  if (!report_path.empty()) {
    nlohmann::ordered_json j;
    j["passed"] = all_ok;
    j["checks"] = checks;
    std::ofstream out(report_path);
    out << j.dump(2) << '\n';
  }
  return all_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Device-cloud collaborative policy training testbed"};
  app.require_subcommand(1);

  std::string config_path, out_path, dataset, out_dir, algo, checkpoint, router_path,
      mode_name, report_path;
  bool collab_reward = false;
  int samples = 8;
  int seeds = 50;
  int instances = 100;
  double cap = 0.3;
  std::uint64_t seed = 1;
  std::vector<std::string> run_dirs;

  auto* gen = app.add_subcommand("gen-tasks", "Generate a synthetic prompt dataset");
  gen->add_option("--config", config_path, "Task generator config (JSON)")->required();
  gen->add_option("--out", out_path, "Output dataset file (JSONL)")->required();

  auto* train = app.add_subcommand("train", "Train a policy and write run artifacts");
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  train->add_option("--dataset", dataset, "Override the config's dataset path");
  train->add_option("--out-dir", out_dir, "Override the config's output directory");
  train->add_option("--algo", algo, "Override algorithm: gapg|grpo|grpo-collab|router|naive");
  train->add_flag("--collab-reward", collab_reward,
                  "With --algo grpo, enable the CallHelp channel (grpo-collab)");

  auto* tr = app.add_subcommand("train-router", "Fit the two-stage router on a trained policy");
  tr->add_option("--dataset", dataset, "Dataset file")->required();
  tr->add_option("--checkpoint", checkpoint, "Device policy checkpoint")->required();
  tr->add_option("--out", out_path, "Output router file (JSON)")->required();
  tr->add_option("--samples", samples, "Device samples per prompt for labels");
  tr->add_option("--seed", seed, "Label-sampling seed");

  auto* ev = app.add_subcommand("eval", "Greedy evaluation with offloading");
  ev->add_option("--mode", mode_name, "device | naive | router | policy-routed")->required();
  ev->add_option("--dataset", dataset, "Dataset file")->required();
  ev->add_option("--checkpoint", checkpoint, "Policy checkpoint")->required();
  ev->add_option("--router", router_path, "Router file (router mode)");
  ev->add_option("--cap", cap, "Cloud-usage cap in [0, 1]");
  ev->add_option("--seed", seed, "Shuffle seed for offload ordering");
  ev->add_option("--out", report_path, "Write the report as JSON");

  auto* verify = app.add_subcommand("verify", "Estimator and gradient verification");
  auto* vu = verify->add_subcommand("unbiasedness", "Enumeration check of the group estimator");
  vu->add_option("--seeds", seeds, "Number of random instances");
  vu->add_option("--report", report_path, "Write a machine-readable report");
  auto* vg = verify->add_subcommand("gradcheck", "Finite-difference gradient check");
  vg->add_option("--instances", instances, "Number of random instances");
  vg->add_option("--report", report_path, "Write a machine-readable report");
  verify->require_subcommand(1);

  auto* rep = app.add_subcommand("report", "Merge run directories into a comparison report");
  rep->add_option("--runs", run_dirs, "Run directories")->required()->expected(-1);
  rep->add_option("--out-dir", out_dir, "Report output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_tasks(config_path, out_path);
    if (train->parsed()) return cmd_train(config_path, dataset, out_dir, algo, collab_reward);
    if (tr->parsed()) return cmd_train_router(dataset, checkpoint, out_path, samples, seed);
    if (ev->parsed())
      return cmd_eval(mode_name, dataset, checkpoint, router_path, cap, seed, report_path);
    if (verify->parsed())
      return cmd_verify(vu->parsed(), vg->parsed(), seeds, instances, report_path);
    if (rep->parsed()) {
      std::cout << collabrl::write_report(run_dirs, collabrl::resolve_out_dir(out_dir));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
