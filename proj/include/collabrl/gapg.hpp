#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "collabrl/baselines.hpp"
#include "collabrl/domain.hpp"
#include "collabrl/policy.hpp"
#include "collabrl/reward.hpp"
#include "collabrl/tasks.hpp"

namespace collabrl {

// Outcome of adaptive prompt filtering for one batch. d1 holds prompts
// with at least one correct device response and a non-constant reward
// group; d2 holds cloud-rescuable prompts, capped at floor(rho * |d1|).
struct FilterResult {
  std::vector<int> d1;
  std::vector<int> d2;
  int eligible_d2 = 0;  // cloud-rescuable count before capping
};

// floor(rho * count) with a tie-break for binary round-off: rho = 3/7
// times 7 must yield 3, not floor(2.9999...).
inline int budget_cap(double rho, int count) {
  return static_cast<int>(std::floor(rho * static_cast<double>(count) + 1e-9));
}

// Group-level gradient estimate for one prompt, accumulated with an
// overall weight into grad:
//   G/(G-1) * 1/G * sum_i grad log pi(a_i | x) * (r_i - rbar).
// Help-calling responses contribute through the log-probability of the
// CallHelp action itself (the device-generated part of the response);
// the cloud continuation carries no gradient.
inline void add_group_gradient(const PolicyParams& params, const Prompt& p, const GroupSample& g,
                               double weight, std::span<double> grad) {
  const int G = g.size();
  if (G < 2) throw std::invalid_argument("group_gradient: need G >= 2");
  double mean = 0.0;
  for (const ResponseAction& r : g.responses) mean += r.reward;
  mean /= static_cast<double>(G);
  const double scale = weight / static_cast<double>(G - 1);
  for (const ResponseAction& r : g.responses) {
    const double centered = r.reward - mean;
    if (centered == 0.0) continue;
    add_grad_log_prob(params, p, r.action_index, scale * centered, grad);
  }
}

inline std::vector<double> group_gradient(const PolicyParams& params, const Prompt& p,
                                          const GroupSample& g) {
  std::vector<double> grad(params.values.size(), 0.0);
  add_group_gradient(params, p, g, 1.0, grad);
  return grad;
}

// Adaptive prompt filtering over a scored batch. Groups whose rewards
// are all equal carry zero gradient, so they are excluded from d1. A
// prompt is cloud-rescuable only if its group actually queried the cloud:
// the training loop learns the cloud answer solely through help calls.
// When more prompts are rescuable than the budget admits, a seeded
// uniform subset is kept.
inline FilterResult filter_prompts(std::span<const Prompt> prompts,
                                   std::span<const GroupSample> groups, double rho,
                                   RngStream& rng) {
  if (prompts.size() != groups.size())
    throw std::invalid_argument("filter_prompts: prompt/group count mismatch");
  if (!(rho > 0.0)) throw std::invalid_argument("filter_prompts: rho must be > 0");
  FilterResult result;
  std::vector<int> eligible;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const GroupSample& g = groups[i];
    if (g.responses.empty()) continue;
    bool any_device_correct = false;
    bool all_equal = true;
    const double first = g.responses.front().reward;
    for (const ResponseAction& r : g.responses) {
      if (!r.used_cloud && prompts[i].action_table[r.action_index].is_correct)
        any_device_correct = true;
      if (r.reward != first) all_equal = false;
    }
    if (any_device_correct) {
      if (!all_equal) result.d1.push_back(prompts[i].id);
    } else if (g.cloud_queried && cloud_answer(prompts[i])) {
      eligible.push_back(prompts[i].id);
    }
  }
  result.eligible_d2 = static_cast<int>(eligible.size());
  const int cap = budget_cap(rho, static_cast<int>(result.d1.size()));
  if (static_cast<int>(eligible.size()) > cap) {
    rng.shuffle(eligible);
    eligible.resize(static_cast<std::size_t>(std::max(cap, 0)));
  }
  std::sort(eligible.begin(), eligible.end());
  result.d2 = std::move(eligible);
  return result;
}

struct GapgStepResult {
  MetricsRow row;
  FilterResult filter;
};

// One iteration of the group-adaptive trainer: sample G responses per
// prompt, query the cloud at most once per prompt (only when some
// response calls for help), score, filter, and ascend
//   theta += eta / |D1 u D2| * sum group_gradient.
// An empty D1 u D2 skips the update and flags the metrics row.
inline GapgStepResult train_step(PolicyParams& params, std::span<const Prompt> batch,
                                 const TrainerConfig& tc, const RewardParams& rp,
                                 std::uint64_t iteration) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  if (tc.group_size < 2) throw std::invalid_argument("train_step: need G >= 2");

  std::vector<GroupSample> groups;
  groups.reserve(batch.size());
  GapgStepResult result;
  int total_responses = 0;
  int cloud_responses = 0;
  double reward_sum = 0.0;
  for (const Prompt& p : batch) {
    RngStream rng(tc.seed, StreamPurpose::Sampling,
                  {iteration, static_cast<std::uint64_t>(p.id)});
    GroupSample g = sample_group(params, p, tc.group_size, rng);
    if (g.cloud_queried) {
      // One cloud query serves every help-calling response in the group.
      cloud_answer(p);
      ++result.row.cloud_queries;
    }
    g = score_group(p, std::move(g), rp);
    for (const ResponseAction& r : g.responses) {
      reward_sum += r.reward;
      cloud_responses += r.used_cloud ? 1 : 0;
      ++total_responses;
    }
    groups.push_back(std::move(g));
  }
  result.row.mean_reward = reward_sum / total_responses;
  result.row.call_ratio = static_cast<double>(cloud_responses) / total_responses;

  RngStream filter_rng(tc.seed, StreamPurpose::FilterD2, {iteration});
  result.filter = filter_prompts(batch, groups, tc.rho, filter_rng);
  result.row.d1_size = static_cast<int>(result.filter.d1.size());
  result.row.d2_size = static_cast<int>(result.filter.d2.size());
  if (result.row.d2_size > budget_cap(tc.rho, result.row.d1_size))
    throw std::logic_error("train_step: cloud-usage budget violated by filter");

  std::unordered_set<int> selected(result.filter.d1.begin(), result.filter.d1.end());
  selected.insert(result.filter.d2.begin(), result.filter.d2.end());
  if (selected.empty()) {
    result.row.updated = false;
    return result;
  }
  std::vector<double> grad(params.values.size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i)
    if (selected.contains(batch[i].id)) add_group_gradient(params, batch[i], groups[i], 1.0, grad);
  axpy(tc.learning_rate / static_cast<double>(selected.size()), grad, params.values);
  result.row.updated = true;
  return result;
}

// Full group-adaptive training run over seeded batches.
inline RunMetrics train(PolicyParams& params, std::span<const Prompt> dataset,
                        const TrainerConfig& tc, const RewardParams& rp,
                        const EvalOptions& eval_options = {}) {
  const auto errs = tc.validate();
  if (!errs.empty()) {
    std::string msg = "train: invalid config:";
    for (const std::string& e : errs) msg += "\n  " + e;
    throw std::invalid_argument(msg);
  }
  return detail::run_training_loop(
      params, dataset, tc, eval_options,
      [&](std::span<const Prompt> batch, std::uint64_t iteration) {
        return train_step(params, batch, tc, rp, iteration).row;
      });
}

}  // namespace collabrl
