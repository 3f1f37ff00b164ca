#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "collabrl/baselines.hpp"
#include "collabrl/gapg.hpp"
#include "collabrl/policy.hpp"
#include "collabrl/reward.hpp"

namespace collabrl {

// Reward of each action of the prompt, with help calls scored through the
// (deterministic, cached) cloud answer.
inline std::vector<double> action_rewards(const Prompt& p, const RewardParams& rp) {
  std::vector<double> out(static_cast<std::size_t>(p.num_actions()));
  for (int a = 0; a < p.num_actions(); ++a) {
    ResponseAction r;
    r.prompt_id = p.id;
    r.action_index = a;
    r.used_cloud = p.action_table[a].kind == ActionKind::CallHelp;
    out[a] = score(p, r, rp);
  }
  return out;
}

// E[r] under the policy, by direct summation over the action set.
inline double expected_reward(const PolicyParams& params, const Prompt& p,
                              const RewardParams& rp, bool allow_help = true) {
  const std::vector<double> probs = action_probs(params, p, allow_help);
  const std::vector<double> rewards = action_rewards(p, rp);
  double e = 0.0;
  for (int a = 0; a < p.num_actions(); ++a) e += probs[a] * rewards[a];
  return e;
}

// The analytic policy gradient of E[r]:
//   sum_a grad pi(a|x) * r(x, a) = sum_a pi(a|x) * grad log pi(a|x) * r(x, a).
inline std::vector<double> true_gradient(const PolicyParams& params, const Prompt& p,
                                         const RewardParams& rp, bool allow_help = true) {
  const std::vector<double> probs = action_probs(params, p, allow_help);
  const std::vector<double> rewards = action_rewards(p, rp);
  std::vector<double> grad(params.values.size(), 0.0);
  for (int a = 0; a < p.num_actions(); ++a) {
    const double w = probs[a] * rewards[a];
    if (w == 0.0) continue;
    add_grad_log_prob(params, p, a, w, grad, allow_help);
  }
  return grad;
}

enum class Estimator { GroupAdaptive, GrpoDirection };

// Exact expectation of a group estimator: enumerate every ordered
// G-tuple of actions, weight it by its product probability, apply the
// estimator, and sum. Tuples match i.i.d. group sampling exactly.
//
// GroupAdaptive runs the trainer's own group_gradient (optionally
// without its G/(G-1) factor, to expose the factor's role).
// GrpoDirection applies 1/G * sum_i A_i * grad log pi(a_i) with the
// group-normalized advantage.
inline std::vector<double> estimator_expectation(const PolicyParams& params, const Prompt& p,
                                                 int group_size, Estimator kind,
                                                 const RewardParams& rp, double std_floor = 0.0,
                                                 bool include_group_factor = true,
                                                 bool allow_help = true) {
  if (group_size < 2) throw std::invalid_argument("estimator_expectation: need G >= 2");
  const int k = p.num_actions();
  double combos = 1.0;
  for (int i = 0; i < group_size; ++i) {
    combos *= static_cast<double>(k);
    if (combos > 1e6)
      throw std::invalid_argument(
          "estimator_expectation: k^G exceeds 1e6; reduce the action count or group size");
  }

  const std::vector<double> probs = action_probs(params, p, allow_help);
  const std::vector<double> rewards = action_rewards(p, rp);

  std::vector<double> acc(params.values.size(), 0.0);
  std::vector<int> tuple(static_cast<std::size_t>(group_size), 0);
  std::vector<double> tuple_rewards(static_cast<std::size_t>(group_size), 0.0);
  while (true) {
    double weight = 1.0;
    for (int i = 0; i < group_size; ++i) weight *= probs[tuple[i]];
    if (weight > 0.0) {
      for (int i = 0; i < group_size; ++i) tuple_rewards[i] = rewards[tuple[i]];
      if (kind == Estimator::GroupAdaptive) {
        GroupSample g;
        g.prompt_id = p.id;
        g.responses.resize(static_cast<std::size_t>(group_size));
        for (int i = 0; i < group_size; ++i) {
          g.responses[i].prompt_id = p.id;
          g.responses[i].action_index = tuple[i];
          g.responses[i].used_cloud =
              p.action_table[tuple[i]].kind == ActionKind::CallHelp;
          g.responses[i].reward = tuple_rewards[i];
          g.cloud_queried = g.cloud_queried || g.responses[i].used_cloud;
        }
        g.mean_reward = recompute_mean_reward(g);
        // Without the factor the estimate is (G-1)/G of group_gradient.
        const double w = include_group_factor
                             ? weight
                             : weight * static_cast<double>(group_size - 1) / group_size;
        add_group_gradient(params, p, g, w, acc);
      } else {
        const std::vector<double> adv = normalized_advantage(tuple_rewards, std_floor);
        for (int i = 0; i < group_size; ++i) {
          if (adv[i] == 0.0) continue;
          add_grad_log_prob(params, p, tuple[i], weight * adv[i] / group_size, acc, allow_help);
        }
      }
    }
    int pos = group_size - 1;
    while (pos >= 0 && tuple[pos] == k - 1) tuple[pos--] = 0;
    if (pos < 0) break;
    ++tuple[pos];
  }
  return acc;
}

// Central finite differences of a scalar function of the parameters.
template <typename F>
std::vector<double> finite_diff(F&& f, const PolicyParams& params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff: step must be > 0");
  PolicyParams work = params;
  std::vector<double> grad(params.values.size());
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double v = params.values[i];
    work.values[i] = v + step;
    const double fp = f(work);
    work.values[i] = v - step;
    const double fm = f(work);
    work.values[i] = v;
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

// Norm-wise relative error, the usual gradient-check metric.
inline double relative_error(std::span<const double> approx, std::span<const double> exact) {
  return max_abs_diff(approx, exact) / std::max(1.0, max_abs(exact));
}

// L2 distance between the directions (unit vectors) of two gradients.
inline double direction_distance(std::span<const double> a, std::span<const double> b) {
  double na = 0.0, nb = 0.0;
  for (double x : a) na += x * x;
  for (double x : b) nb += x * x;
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na == 0.0 || nb == 0.0) return na == nb ? 0.0 : 2.0;
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] / na - b[i] / nb;
    d += t * t;
  }
  return std::sqrt(d);
}

namespace detail {

// A random single-prompt tabular instance for verification sweeps:
// k - 1 device actions with random correctness/format labels, one
// CallHelp action, random cloud answer, and a random reward hierarchy.
struct VerifyInstance {
  Prompt prompt;
  PolicyParams params;
  RewardParams reward_params;
  int group_size;
};

inline VerifyInstance make_verify_instance(std::uint64_t seed, std::uint64_t index) {
  RngStream rng(seed, StreamPurpose::Verify, {index});
  const int k = 2 + static_cast<int>(rng.next_below(3));  // actions in {2, 3, 4}
  const int G = 2 + static_cast<int>(rng.next_below(2));  // group size in {2, 3}

  Prompt p;
  p.id = 0;
  p.features = {};
  for (int a = 0; a < k - 1; ++a)
    p.action_table.push_back(
        {ActionKind::DeviceAnswer, rng.next_bernoulli(0.5), rng.next_bernoulli(0.5)});
  p.action_table.push_back({ActionKind::CallHelp, false, false});
  p.cloud_correct = rng.next_bernoulli(0.5);

  const double alpha_f = 0.5 * rng.next_double();
  const double alpha_c = alpha_f + 0.1 + rng.next_double();
  const double alpha_a = alpha_c + 0.1 + 2.0 * rng.next_double();

  PolicyParams params = PolicyParams::tabular(std::span<const Prompt>(&p, 1));
  for (double& v : params.values) v = rng.next_gauss();

  return {std::move(p), std::move(params), RewardParams(alpha_a, alpha_c, alpha_f), G};
}

}  // namespace detail

struct UnbiasednessSweepResult {
  int instances = 0;
  double max_error = 0.0;          // |E[estimator] - analytic gradient|_inf
  double max_scaling_error = 0.0;  // |E[no-factor estimator] - (G-1)/G * analytic|_inf
};

// Sweeps random tabular instances and measures, by exact enumeration,
// how far the group estimator's expectation is from the analytic
// gradient, with and without the G/(G-1) correction.
inline UnbiasednessSweepResult unbiasedness_sweep(int n_instances, std::uint64_t seed = 2024) {
  UnbiasednessSweepResult result;
  result.instances = n_instances;
  for (int i = 0; i < n_instances; ++i) {
    const auto inst = detail::make_verify_instance(seed, static_cast<std::uint64_t>(i));
    const auto exact = true_gradient(inst.params, inst.prompt, inst.reward_params);
    const auto with_factor = estimator_expectation(inst.params, inst.prompt, inst.group_size,
                                                   Estimator::GroupAdaptive, inst.reward_params);
    result.max_error = std::max(result.max_error, max_abs_diff(with_factor, exact));

    const auto without_factor =
        estimator_expectation(inst.params, inst.prompt, inst.group_size,
                              Estimator::GroupAdaptive, inst.reward_params,
                              /*std_floor=*/0.0, /*include_group_factor=*/false);
    std::vector<double> scaled(exact.size());
    const double s = static_cast<double>(inst.group_size - 1) / inst.group_size;
    for (std::size_t j = 0; j < exact.size(); ++j) scaled[j] = s * exact[j];
    result.max_scaling_error =
        std::max(result.max_scaling_error, max_abs_diff(without_factor, scaled));
  }
  return result;
}

struct GradCheckResult {
  int instances = 0;
  double max_rel_error_log_prob = 0.0;
  double max_rel_error_reward = 0.0;
};

// Finite-difference check of both analytic gradients: grad log pi against
// d log_prob / d theta, and the analytic policy gradient against
// d E[r] / d theta. Alternates tabular and linear-softmax instances.
inline GradCheckResult gradcheck_sweep(int n_instances, double step = 1e-5,
                                       std::uint64_t seed = 7) {
  GradCheckResult result;
  result.instances = n_instances;
  for (int i = 0; i < n_instances; ++i) {
    RngStream rng(seed, StreamPurpose::Verify, {static_cast<std::uint64_t>(i), 99});
    const int k = 2 + static_cast<int>(rng.next_below(4));  // actions in {2..5}
    const bool tabular = i % 2 == 0;
    const int dim = 3 + static_cast<int>(rng.next_below(4));

    Prompt p;
    p.id = 0;
    for (int a = 0; a < k - 1; ++a)
      p.action_table.push_back(
          {ActionKind::DeviceAnswer, rng.next_bernoulli(0.5), rng.next_bernoulli(0.5)});
    p.action_table.push_back({ActionKind::CallHelp, false, false});
    p.cloud_correct = rng.next_bernoulli(0.5);
    if (!tabular) {
      p.features.resize(static_cast<std::size_t>(dim));
      for (double& f : p.features) f = rng.next_gauss();
    }

    PolicyParams params = tabular ? PolicyParams::tabular(std::span<const Prompt>(&p, 1))
                                  : PolicyParams::linear_softmax(k, dim);
    for (double& v : params.values) v = 0.7 * rng.next_gauss();

    const int action = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(k)));
    const auto analytic = grad_log_prob(params, p, action);
    const auto fd = finite_diff(
        [&](const PolicyParams& q) { return log_prob(q, p, action); }, params, step);
    result.max_rel_error_log_prob =
        std::max(result.max_rel_error_log_prob, relative_error(fd, analytic));

    const RewardParams rp(2.0, 0.5, 0.2);
    const auto analytic_reward = true_gradient(params, p, rp);
    const auto fd_reward = finite_diff(
        [&](const PolicyParams& q) { return expected_reward(q, p, rp); }, params, step);
    result.max_rel_error_reward =
        std::max(result.max_rel_error_reward, relative_error(fd_reward, analytic_reward));
  }
  return result;
}

}  // namespace collabrl
