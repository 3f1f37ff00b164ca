#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace collabrl {

enum class ActionKind { DeviceAnswer, CallHelp };

// One candidate response of the device model. For CallHelp actions the
// is_correct / format_ok flags are ignored everywhere; the outcome of a
// help call depends only on the prompt's cloud_correct flag.
struct ActionSpec {
  ActionKind kind = ActionKind::DeviceAnswer;
  bool is_correct = false;
  bool format_ok = false;
};

// A synthetic task instance. The action table lists the device model's
// candidate responses (at least one device answer) plus exactly one
// CallHelp action that delegates the prompt to the cloud oracle.
struct Prompt {
  int id = 0;
  std::vector<double> features;
  int difficulty = 0;
  std::vector<ActionSpec> action_table;
  bool cloud_correct = false;

  int num_actions() const { return static_cast<int>(action_table.size()); }

  int call_help_index() const {
    for (int i = 0; i < num_actions(); ++i)
      if (action_table[i].kind == ActionKind::CallHelp) return i;
    return -1;
  }

  bool has_correct_device_action() const {
    for (const ActionSpec& a : action_table)
      if (a.kind == ActionKind::DeviceAnswer && a.is_correct) return true;
    return false;
  }
};

// One sampled response; reward is filled by reward::score_group.
struct ResponseAction {
  int prompt_id = 0;
  int action_index = 0;
  bool used_cloud = false;
  double reward = 0.0;
};

// A group of G responses sampled for one prompt.
struct GroupSample {
  int prompt_id = 0;
  std::vector<ResponseAction> responses;
  double mean_reward = 0.0;
  bool cloud_queried = false;

  int size() const { return static_cast<int>(responses.size()); }
};

inline double recompute_mean_reward(const GroupSample& g) {
  double sum = 0.0;
  for (const ResponseAction& r : g.responses) sum += r.reward;
  return g.responses.empty() ? 0.0 : sum / static_cast<double>(g.responses.size());
}

// Reward hierarchy weights. Accuracy must dominate coordination, which
// must dominate format: alpha_a > alpha_c >= alpha_f >= 0. The weak
// inequalities admit the zero-format configuration.
class RewardParams {
 public:
  RewardParams(double alpha_a, double alpha_c, double alpha_f)
      : alpha_a_(alpha_a), alpha_c_(alpha_c), alpha_f_(alpha_f) {
    if (!(std::isfinite(alpha_a) && std::isfinite(alpha_c) && std::isfinite(alpha_f)))
      throw std::invalid_argument("RewardParams: weights must be finite");
    if (!(alpha_f >= 0.0))
      throw std::invalid_argument("RewardParams: alpha_f must be >= 0");
    if (!(alpha_c >= alpha_f))
      throw std::invalid_argument("RewardParams: require alpha_c >= alpha_f");
    if (!(alpha_a > alpha_c))
      throw std::invalid_argument("RewardParams: require alpha_a > alpha_c");
  }

  double alpha_a() const { return alpha_a_; }
  double alpha_c() const { return alpha_c_; }
  double alpha_f() const { return alpha_f_; }

  double max_reward() const { return alpha_a_ + alpha_f_; }

 private:
  double alpha_a_;
  double alpha_c_;
  double alpha_f_;
};

// Core algorithm hyperparameters shared by all trainers.
struct TrainerConfig {
  int group_size = 8;          // G
  double rho = 3.0 / 7.0;      // cloud-to-device usage budget
  double learning_rate = 0.05; // eta
  int total_steps = 400;       // S
  int batch_size = 32;         // |D_b|
  std::uint64_t seed = 1;

  std::vector<std::string> validate() const {
    std::vector<std::string> errs;
    if (group_size < 2) errs.push_back("group_size: must be >= 2");
    if (!(rho > 0.0)) errs.push_back("rho: must be > 0");
    if (!(learning_rate > 0.0)) errs.push_back("learning_rate: must be > 0");
    if (total_steps < 0) errs.push_back("total_steps: must be >= 0");
    if (batch_size < 1) errs.push_back("batch_size: must be >= 1");
    return errs;
  }
};

// One per-iteration telemetry record. Accuracy columns are greedy
// evaluations refreshed on the eval cadence and held constant between
// refreshes.
struct MetricsRow {
  int iteration = 0;
  double mean_reward = 0.0;
  double call_ratio = 0.0;       // fraction of sampled responses that used the cloud
  double device_accuracy = 0.0;
  double collab_accuracy = 0.0;
  int d1_size = 0;
  int d2_size = 0;
  int cloud_queries = 0;
  bool updated = true;
};

using RunMetrics = std::vector<MetricsRow>;

struct DatasetIssue {
  int prompt_id = 0;
  std::string message;
};

struct ValidationReport {
  bool ok = false;
  bool empty_dataset = false;
  std::vector<DatasetIssue> issues;
};

// Checks every dataset invariant; an empty dataset is reported as its
// own condition rather than as a per-prompt issue.
inline ValidationReport validate_dataset(std::span<const Prompt> prompts) {
  ValidationReport report;
  if (prompts.empty()) {
    report.empty_dataset = true;
    report.issues.push_back({-1, "empty dataset"});
    return report;
  }
  const std::size_t dim = prompts.front().features.size();
  std::vector<int> seen_ids;
  seen_ids.reserve(prompts.size());
  for (const Prompt& p : prompts) {
    int n_help = 0;
    int n_device = 0;
    for (const ActionSpec& a : p.action_table) {
      if (a.kind == ActionKind::CallHelp)
        ++n_help;
      else
        ++n_device;
    }
    if (n_help != 1)
      report.issues.push_back({p.id, n_help == 0 ? "missing CallHelp" : "multiple CallHelp actions"});
    if (n_device < 1) report.issues.push_back({p.id, "no device action"});
    if (p.num_actions() < 2) report.issues.push_back({p.id, "fewer than two actions"});
    if (p.features.size() != dim)
      report.issues.push_back({p.id, "inconsistent feature dim"});
    if (p.difficulty < 0) report.issues.push_back({p.id, "negative difficulty"});
    for (double f : p.features)
      if (!std::isfinite(f)) {
        report.issues.push_back({p.id, "non-finite feature"});
        break;
      }
    seen_ids.push_back(p.id);
  }
  std::sort(seen_ids.begin(), seen_ids.end());
  for (std::size_t i = 1; i < seen_ids.size(); ++i)
    if (seen_ids[i] == seen_ids[i - 1])
      report.issues.push_back({seen_ids[i], "duplicate prompt id"});
  report.ok = report.issues.empty();
  return report;
}

}  // namespace collabrl
