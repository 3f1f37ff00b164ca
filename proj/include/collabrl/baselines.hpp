#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "collabrl/domain.hpp"
#include "collabrl/policy.hpp"
#include "collabrl/reward.hpp"
#include "collabrl/tasks.hpp"

namespace collabrl {

struct GrpoConfig {
  double clip_eps = 0.2;    // epsilon
  double kl_coef = 0.04;    // beta
  int inner_epochs = 1;     // gradient-ascent passes over stale samples
  double std_floor = 1e-6;  // added to the advantage denominator

  std::vector<std::string> validate() const {
    std::vector<std::string> errs;
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) errs.push_back("clip_eps: must be in (0, 1)");
    if (!(kl_coef >= 0.0)) errs.push_back("kl_coef: must be >= 0");
    if (inner_epochs < 1) errs.push_back("inner_epochs: must be >= 1");
    if (!(std_floor >= 0.0)) errs.push_back("std_floor: must be >= 0");
    return errs;
  }
};

// Group-normalized relative advantage A_i = (r_i - mean) / (std + floor)
// with population standard deviation. A zero-deviation group with a zero
// floor maps to all zeros. Note what this normalization throws away: a
// one-hot group has A_hot = sqrt(G-1) regardless of the hot reward's
// magnitude, so a lone 0.5 looks exactly as good as a lone 2.2.
inline std::vector<double> normalized_advantage(std::span<const double> rewards,
                                                double std_floor) {
  if (rewards.size() < 2)
    throw std::invalid_argument("normalized_advantage: need at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double sd = std::sqrt(var);
  std::vector<double> out(rewards.size(), 0.0);
  if (sd == 0.0 && std_floor == 0.0) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + std_floor);
  return out;
}

// ---------------------------------------------------------------------------
// Two-stage router baseline
// ---------------------------------------------------------------------------

struct RouterParams {
  std::vector<double> weights;
  double bias = 0.0;
};

// Predicted probability that the device policy can handle the prompt.
inline double router_predict(const RouterParams& r, const Prompt& p) {
  if (r.weights.size() != p.features.size())
    throw std::invalid_argument("router_predict: feature dim mismatch");
  double z = r.bias;
  for (std::size_t d = 0; d < r.weights.size(); ++d) z += r.weights[d] * p.features[d];
  return 1.0 / (1.0 + std::exp(-z));
}

struct RouterFit {
  RouterParams params;
  bool degenerate = false;
  std::string warning;
  double train_accuracy = 0.0;
};

// Fits a logistic router on prompt features. Labels: z = 1 iff any of
// n_samples temperature-1 device-only draws from the policy is correct.
// Plain full-batch gradient descent on the BCE loss; all-0 / all-1 label
// sets short-circuit to a constant-probability router.
inline RouterFit train_router(std::span<const Prompt> dataset, const PolicyParams& device_policy,
                              int n_samples, std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("train_router: empty dataset");
  if (n_samples < 1) throw std::invalid_argument("train_router: n_samples must be >= 1");
  const std::size_t dim = dataset.front().features.size();

  std::vector<double> labels(dataset.size(), 0.0);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Prompt& p = dataset[i];
    RngStream rng(seed, StreamPurpose::RouterLabels, {static_cast<std::uint64_t>(p.id)});
    GroupSample g = sample_group(device_policy, p, std::max(2, n_samples), rng,
                                 /*allow_help=*/false);
    bool any_correct = false;
    for (int s = 0; s < n_samples; ++s)
      any_correct = any_correct || p.action_table[g.responses[s].action_index].is_correct;
    labels[i] = any_correct ? 1.0 : 0.0;
    positives += any_correct ? 1u : 0u;
  }

  RouterFit fit;
  fit.params.weights.assign(dim, 0.0);
  if (positives == 0 || positives == dataset.size()) {
    fit.degenerate = true;
    fit.params.bias = positives == 0 ? -20.0 : 20.0;
    fit.warning = positives == 0 ? "all labels negative; router always predicts cloud"
                                 : "all labels positive; router always predicts device";
    fit.train_accuracy = 1.0;
    return fit;
  }

  const double n = static_cast<double>(dataset.size());
  const double lr = 0.5;
  const int max_iters = 20000;
  const double tol = 1e-7;
  std::vector<double> grad_w(dim);
  for (int it = 0; it < max_iters; ++it) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const double err = router_predict(fit.params, dataset[i]) - labels[i];
      for (std::size_t d = 0; d < dim; ++d) grad_w[d] += err * dataset[i].features[d];
      grad_b += err;
    }
    double max_abs = std::abs(grad_b) / n;
    for (std::size_t d = 0; d < dim; ++d) {
      grad_w[d] /= n;
      max_abs = std::max(max_abs, std::abs(grad_w[d]));
    }
    grad_b /= n;
    if (max_abs < tol) break;
    for (std::size_t d = 0; d < dim; ++d) fit.params.weights[d] -= lr * grad_w[d];
    fit.params.bias -= lr * grad_b;
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const bool pred = router_predict(fit.params, dataset[i]) >= 0.5;
    if (pred == (labels[i] > 0.5)) ++correct;
  }
  fit.train_accuracy = static_cast<double>(correct) / n;
  return fit;
}

// ---------------------------------------------------------------------------
// Greedy evaluation with offloading
// ---------------------------------------------------------------------------

enum class EvalMode { DeviceOnly, NaiveOffload, RouterOffload, PolicyRouted };

inline const char* eval_mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::DeviceOnly: return "device";
    case EvalMode::NaiveOffload: return "naive";
    case EvalMode::RouterOffload: return "router";
    case EvalMode::PolicyRouted: return "policy-routed";
  }
  return "?";
}

struct AccuracyReport {
  EvalMode mode = EvalMode::DeviceOnly;
  int n = 0;
  double cap = 0.0;
  double device_accuracy = 0.0;  // greedy best device action on every prompt
  double collab_accuracy = 0.0;  // with the mode's offloading applied
  int cloud_calls = 0;
  double cloud_call_fraction = 0.0;
  double help_request_fraction = 0.0;  // PolicyRouted: argmax == CallHelp, before capping
};

// Greedy (argmax) evaluation under a cloud-usage cap. At most
// floor(cap * n) prompts go to the cloud:
//   DeviceOnly    no offloading;
//   NaiveOffload  a seeded uniform subset of that size;
//   RouterOffload the prompts the router trusts least;
//   PolicyRouted  the policy's own help calls, a seeded shuffle breaking
//                 the tie when they exceed the cap; redirected prompts
//                 fall back to the best device action.
inline AccuracyReport route_and_eval(EvalMode mode, const PolicyParams& policy,
                                     const RouterParams* router, std::span<const Prompt> prompts,
                                     double cap, std::uint64_t seed) {
  if (cap < 0.0 || cap > 1.0) throw std::invalid_argument("route_and_eval: cap must be in [0, 1]");
  if (mode == EvalMode::RouterOffload && router == nullptr)
    throw std::invalid_argument("route_and_eval: router mode requires RouterParams");
  const int n = static_cast<int>(prompts.size());
  AccuracyReport rep;
  rep.mode = mode;
  rep.n = n;
  rep.cap = cap;
  if (n == 0) return rep;

  const int budget = static_cast<int>(std::floor(cap * n + 1e-9));
  std::vector<bool> to_cloud(prompts.size(), false);

  switch (mode) {
    case EvalMode::DeviceOnly:
      break;
    case EvalMode::NaiveOffload: {
      std::vector<int> idx(prompts.size());
      for (int i = 0; i < n; ++i) idx[i] = i;
      RngStream rng(seed, StreamPurpose::EvalShuffle, {static_cast<std::uint64_t>(mode)});
      rng.shuffle(idx);
      for (int i = 0; i < budget; ++i) to_cloud[idx[i]] = true;
      break;
    }
    case EvalMode::RouterOffload: {
      std::vector<std::pair<double, int>> ranked(prompts.size());
      for (int i = 0; i < n; ++i) ranked[i] = {router_predict(*router, prompts[i]), i};
      std::sort(ranked.begin(), ranked.end());
      for (int i = 0; i < std::min(budget, n); ++i) to_cloud[ranked[i].second] = true;
      break;
    }
    case EvalMode::PolicyRouted: {
      std::vector<int> want_help;
      for (int i = 0; i < n; ++i) {
        const int a = argmax_action(policy, prompts[i]);
        if (prompts[i].action_table[a].kind == ActionKind::CallHelp) want_help.push_back(i);
      }
      rep.help_request_fraction = static_cast<double>(want_help.size()) / n;
      if (static_cast<int>(want_help.size()) > budget) {
        RngStream rng(seed, StreamPurpose::EvalShuffle, {static_cast<std::uint64_t>(mode)});
        rng.shuffle(want_help);
        want_help.resize(static_cast<std::size_t>(budget));
      }
      for (int i : want_help) to_cloud[i] = true;
      break;
    }
  }

  int device_correct = 0;
  int collab_correct = 0;
  for (int i = 0; i < n; ++i) {
    const Prompt& p = prompts[i];
    const bool dev_ok = p.action_table[best_device_action(policy, p)].is_correct;
    device_correct += dev_ok ? 1 : 0;
    if (to_cloud[i]) {
      ++rep.cloud_calls;
      collab_correct += cloud_answer(p) ? 1 : 0;
    } else {
      collab_correct += dev_ok ? 1 : 0;
    }
  }
  rep.device_accuracy = static_cast<double>(device_correct) / n;
  rep.collab_accuracy = static_cast<double>(collab_correct) / n;
  rep.cloud_call_fraction = static_cast<double>(rep.cloud_calls) / n;
  return rep;
}

// ---------------------------------------------------------------------------
// GRPO trainer (clipped surrogate + exact KL to a reference policy)
// ---------------------------------------------------------------------------

namespace detail {

// d/dtheta KL(pi_theta || pi_ref) for one prompt, exact over the discrete
// action set: sum_a grad pi(a) * (log pi(a) - log pi_ref(a)). Accumulated
// with an overall scale.
inline void add_kl_gradient(const PolicyParams& params, const PolicyParams& reference,
                            const Prompt& p, double scale, std::span<double> grad,
                            bool allow_help) {
  const std::vector<double> probs = action_probs(params, p, allow_help);
  for (int a = 0; a < p.num_actions(); ++a) {
    if (probs[a] <= 0.0) continue;
    const double delta = log_prob(params, p, a, allow_help) - log_prob(reference, p, a, allow_help);
    add_grad_log_prob(params, p, a, scale * probs[a] * delta, grad, allow_help);
  }
}

}  // namespace detail

// Exact KL(pi_theta || pi_ref) for one prompt.
inline double kl_divergence(const PolicyParams& params, const PolicyParams& reference,
                            const Prompt& p, bool allow_help = true) {
  const std::vector<double> probs = action_probs(params, p, allow_help);
  double kl = 0.0;
  for (int a = 0; a < p.num_actions(); ++a) {
    if (probs[a] <= 0.0) continue;
    kl += probs[a] * (log_prob(params, p, a, allow_help) - log_prob(reference, p, a, allow_help));
  }
  return kl;
}

struct GrpoStepInfo {
  double mean_reward = 0.0;
  double call_ratio = 0.0;
  int cloud_queries = 0;
};

// ---------------------------------------------------------------------------
// Shared training-loop driver
// ---------------------------------------------------------------------------

// Greedy-evaluation settings used while training. Accuracies are
// refreshed on the cadence (and on the first and last iteration) and
// held constant in between.
struct EvalOptions {
  std::span<const Prompt> eval_set{};  // empty: evaluate on the training set
  int cadence = 10;
  EvalMode mode = EvalMode::PolicyRouted;
  double cap = -1.0;  // < 0: use rho / (1 + rho) from the trainer config
  std::function<void(const PolicyParams&, int)> iteration_hook{};
};

namespace detail {

// Runs S iterations of `step` over seeded batches and assembles metrics.
// step(batch, iteration) fills every MetricsRow field except iteration
// and the two accuracy columns.
template <typename StepFn>
RunMetrics run_training_loop(PolicyParams& params, std::span<const Prompt> dataset,
                             const TrainerConfig& tc, const EvalOptions& eo, StepFn&& step) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (eo.cadence < 1) throw std::invalid_argument("train: eval cadence must be >= 1");
  const double cap = eo.cap >= 0.0 ? eo.cap : tc.rho / (1.0 + tc.rho);
  const std::span<const Prompt> eval_set = eo.eval_set.empty() ? dataset : eo.eval_set;

  RunMetrics metrics;
  metrics.reserve(static_cast<std::size_t>(std::max(tc.total_steps, 0)));
  std::vector<int> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  double device_acc = 0.0;
  double collab_acc = 0.0;
  bool evaluated = false;
  for (int iter = 1; iter <= tc.total_steps; ++iter) {
    RngStream batch_rng(tc.seed, StreamPurpose::BatchSelect, {static_cast<std::uint64_t>(iter)});
    batch_rng.shuffle(order);
    const int bsz = std::min<int>(tc.batch_size, static_cast<int>(dataset.size()));
    std::vector<Prompt> batch;
    batch.reserve(static_cast<std::size_t>(bsz));
    for (int i = 0; i < bsz; ++i) batch.push_back(dataset[order[i]]);

    MetricsRow row = step(std::span<const Prompt>(batch), static_cast<std::uint64_t>(iter));
    row.iteration = iter;
    if (!evaluated || iter % eo.cadence == 0 || iter == tc.total_steps) {
      const AccuracyReport rep = route_and_eval(eo.mode, params, nullptr, eval_set, cap, tc.seed);
      device_acc = rep.device_accuracy;
      collab_acc = rep.collab_accuracy;
      evaluated = true;
    }
    row.device_accuracy = device_acc;
    row.collab_accuracy = collab_acc;
    metrics.push_back(row);
    if (eo.iteration_hook) eo.iteration_hook(params, iter);
  }
  return metrics;
}

}  // namespace detail

// One GRPO iteration: sample G responses per prompt from the stale policy
// (the parameters at entry), normalize advantages within each group, then
// take inner_epochs gradient-ascent steps on the clipped surrogate minus
// beta * KL(pi_theta || reference). With allow_help = false the CallHelp
// channel is masked everywhere (task-tuning-only mode).
inline GrpoStepInfo grpo_step(PolicyParams& params, const PolicyParams& reference,
                              std::span<const Prompt> batch, const TrainerConfig& tc,
                              const GrpoConfig& gc, const RewardParams& rp,
                              std::uint64_t iteration, bool allow_help = true) {
  if (batch.empty()) throw std::invalid_argument("grpo_step: empty batch");
  const PolicyParams stale = params;
  const int G = tc.group_size;

  std::vector<GroupSample> groups;
  groups.reserve(batch.size());
  std::vector<std::vector<double>> advantages;
  advantages.reserve(batch.size());

  GrpoStepInfo info;
  int total_responses = 0;
  int cloud_responses = 0;
  double reward_sum = 0.0;
  for (const Prompt& p : batch) {
    RngStream rng(tc.seed, StreamPurpose::Sampling,
                  {iteration, static_cast<std::uint64_t>(p.id)});
    GroupSample g = sample_group(stale, p, G, rng, allow_help);
    if (g.cloud_queried) ++info.cloud_queries;
    g = score_group(p, std::move(g), rp);
    std::vector<double> rewards(g.responses.size());
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      rewards[i] = g.responses[i].reward;
      reward_sum += rewards[i];
      cloud_responses += g.responses[i].used_cloud ? 1 : 0;
      ++total_responses;
    }
    advantages.push_back(normalized_advantage(rewards, gc.std_floor));
    groups.push_back(std::move(g));
  }
  info.mean_reward = reward_sum / total_responses;
  info.call_ratio = static_cast<double>(cloud_responses) / total_responses;

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  std::vector<double> grad(params.values.size());
  for (int epoch = 0; epoch < gc.inner_epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Prompt& p = batch[b];
      for (int i = 0; i < G; ++i) {
        const int a = groups[b].responses[i].action_index;
        const double adv = advantages[b][i];
        if (adv == 0.0) continue;
        const double ratio =
            std::exp(log_prob(params, p, a, allow_help) - log_prob(stale, p, a, allow_help));
        const double clipped = std::clamp(ratio, 1.0 - gc.clip_eps, 1.0 + gc.clip_eps);
        // min(ratio*A, clipped*A): gradient flows only through the
        // unclipped branch when it attains the min.
        if (ratio * adv <= clipped * adv)
          add_grad_log_prob(params, p, a, inv_batch / G * ratio * adv, grad, allow_help);
      }
      if (gc.kl_coef > 0.0)
        detail::add_kl_gradient(params, reference, p, -gc.kl_coef * inv_batch, grad, allow_help);
    }
    axpy(tc.learning_rate, grad, params.values);
  }
  return info;
}

// Full GRPO training run. allow_help = false is task-tuning-only mode
// (the CallHelp channel masked during both sampling and updates);
// allow_help = true is collaboration-aware tuning with the hierarchical
// reward. The KL reference is the policy at entry.
inline RunMetrics grpo_train(PolicyParams& params, std::span<const Prompt> dataset,
                             const TrainerConfig& tc, const GrpoConfig& gc,
                             const RewardParams& rp, bool allow_help,
                             const EvalOptions& eval_options = {}) {
  auto errs = tc.validate();
  for (const std::string& e : gc.validate()) errs.push_back(e);
  if (!errs.empty()) {
    std::string msg = "grpo_train: invalid config:";
    for (const std::string& e : errs) msg += "\n  " + e;
    throw std::invalid_argument(msg);
  }
  const PolicyParams reference = params;
  return detail::run_training_loop(
      params, dataset, tc, eval_options,
      [&](std::span<const Prompt> batch, std::uint64_t iteration) {
        const GrpoStepInfo info =
            grpo_step(params, reference, batch, tc, gc, rp, iteration, allow_help);
        MetricsRow row;
        row.mean_reward = info.mean_reward;
        row.call_ratio = info.call_ratio;
        row.cloud_queries = info.cloud_queries;
        row.updated = true;
        return row;
      });
}

}  // namespace collabrl
