#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "collabrl/domain.hpp"
#include "collabrl/rng.hpp"

namespace collabrl {

enum class PolicyVariant { Tabular, LinearSoftmax };

// Effectively -inf for masked logits: exp(kMaskedLogit - m) underflows to
// exactly 0 for any finite m, so masking is exact in double precision.
inline constexpr double kMaskedLogit = -1e30;

// Parameters of a categorical device policy, stored flat so gradient
// vectors, finite differences, and updates all share one layout.
//
// Tabular: one logit row per prompt of an enumerated dataset;
// values[row_offsets[id] + a] is the logit of action a for prompt id.
//
// LinearSoftmax: a weight matrix W (max_actions x feature_dim, row-major)
// followed by two per-kind biases [device, call-help]. The logit of action
// a is W[a] . features + bias[kind(a)]. W rows are tied to action indices
// across prompts; the shared call-help bias gives delegation a global,
// learnable propensity.
struct PolicyParams {
  PolicyVariant variant = PolicyVariant::LinearSoftmax;
  std::vector<std::int32_t> row_offsets;  // Tabular only, size n_prompts + 1
  int max_actions = 0;                    // LinearSoftmax only
  int feature_dim = 0;                    // LinearSoftmax only
  std::vector<double> values;

  static PolicyParams tabular(std::span<const Prompt> dataset) {
    PolicyParams p;
    p.variant = PolicyVariant::Tabular;
    p.row_offsets.assign(dataset.size() + 1, 0);
    std::vector<int> sizes(dataset.size(), -1);
    for (const Prompt& pr : dataset) {
      if (pr.id < 0 || pr.id >= static_cast<int>(dataset.size()) || sizes[pr.id] != -1)
        throw std::invalid_argument("tabular policy requires dense prompt ids 0..n-1");
      sizes[pr.id] = pr.num_actions();
    }
    for (std::size_t i = 0; i < sizes.size(); ++i)
      p.row_offsets[i + 1] = p.row_offsets[i] + sizes[i];
    p.values.assign(static_cast<std::size_t>(p.row_offsets.back()), 0.0);
    return p;
  }

  static PolicyParams linear_softmax(int max_actions, int feature_dim) {
    if (max_actions < 2 || feature_dim < 1)
      throw std::invalid_argument("linear_softmax: need max_actions >= 2, feature_dim >= 1");
    PolicyParams p;
    p.variant = PolicyVariant::LinearSoftmax;
    p.max_actions = max_actions;
    p.feature_dim = feature_dim;
    p.values.assign(static_cast<std::size_t>(max_actions) * feature_dim + 2, 0.0);
    return p;
  }

  std::size_t size() const { return values.size(); }

  bool finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::size_t weight_index(int action_row, int dim) const {
    return static_cast<std::size_t>(action_row) * feature_dim + dim;
  }
  std::size_t bias_index(ActionKind kind) const {
    return static_cast<std::size_t>(max_actions) * feature_dim +
           (kind == ActionKind::CallHelp ? 1 : 0);
  }
};

namespace detail {

inline void check_prompt(const PolicyParams& params, const Prompt& p) {
  const int k = p.num_actions();
  if (params.variant == PolicyVariant::Tabular) {
    if (p.id < 0 || p.id + 1 >= static_cast<int>(params.row_offsets.size()))
      throw std::invalid_argument("tabular policy: prompt id " + std::to_string(p.id) +
                                  " outside enumerated set");
    const int row = params.row_offsets[p.id + 1] - params.row_offsets[p.id];
    if (row != k)
      throw std::invalid_argument("tabular policy: action count mismatch for prompt " +
                                  std::to_string(p.id));
  } else {
    if (k > params.max_actions)
      throw std::invalid_argument("linear policy: prompt " + std::to_string(p.id) +
                                  " has more actions than max_actions");
    if (static_cast<int>(p.features.size()) != params.feature_dim)
      throw std::invalid_argument("linear policy: feature dim mismatch for prompt " +
                                  std::to_string(p.id));
  }
}

}  // namespace detail

// Raw logits over the prompt's action table.
inline std::vector<double> logits(const PolicyParams& params, const Prompt& p) {
  detail::check_prompt(params, p);
  const int k = p.num_actions();
  std::vector<double> out(static_cast<std::size_t>(k));
  if (params.variant == PolicyVariant::Tabular) {
    const int base = params.row_offsets[p.id];
    for (int a = 0; a < k; ++a) out[a] = params.values[base + a];
  } else {
    for (int a = 0; a < k; ++a) {
      double dot = 0.0;
      for (int d = 0; d < params.feature_dim; ++d)
        dot += params.values[params.weight_index(a, d)] * p.features[d];
      out[a] = dot + params.values[params.bias_index(p.action_table[a].kind)];
    }
  }
  return out;
}

// Logits with the CallHelp action masked out when allow_help is false.
inline std::vector<double> action_logits(const PolicyParams& params, const Prompt& p,
                                         bool allow_help) {
  std::vector<double> out = logits(params, p);
  if (!allow_help) {
    for (int a = 0; a < p.num_actions(); ++a)
      if (p.action_table[a].kind == ActionKind::CallHelp) out[a] = kMaskedLogit;
  }
  return out;
}

namespace detail {

// log-sum-exp with max subtraction.
inline double log_sum_exp(std::span<const double> v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline std::vector<double> softmax(std::span<const double> logit_values) {
  double m = logit_values[0];
  for (double x : logit_values) m = std::max(m, x);
  std::vector<double> out(logit_values.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logit_values.size(); ++i) {
    out[i] = std::exp(logit_values[i] - m);
    s += out[i];
  }
  for (double& x : out) x /= s;
  return out;
}

}  // namespace detail

inline std::vector<double> action_probs(const PolicyParams& params, const Prompt& p,
                                        bool allow_help = true) {
  const std::vector<double> l = action_logits(params, p, allow_help);
  return detail::softmax(l);
}

inline double log_prob(const PolicyParams& params, const Prompt& p, int action_index,
                       bool allow_help = true) {
  const std::vector<double> l = action_logits(params, p, allow_help);
  if (action_index < 0 || action_index >= static_cast<int>(l.size()))
    throw std::out_of_range("log_prob: invalid action index");
  return l[action_index] - detail::log_sum_exp(l);
}

// Accumulates scale * d/dtheta log pi(action | prompt) into grad, which
// must have the same layout as params.values. Closed form:
// per-logit coefficient is (one_hot(action) - softmax); LinearSoftmax
// chains it through W rows (outer product with features) and kind biases.
inline void add_grad_log_prob(const PolicyParams& params, const Prompt& p, int action_index,
                              double scale, std::span<double> grad, bool allow_help = true) {
  const int k = p.num_actions();
  if (action_index < 0 || action_index >= k)
    throw std::out_of_range("grad_log_prob: invalid action index");
  if (grad.size() != params.values.size())
    throw std::invalid_argument("grad_log_prob: gradient size mismatch");
  const std::vector<double> probs = action_probs(params, p, allow_help);
  if (params.variant == PolicyVariant::Tabular) {
    const int base = params.row_offsets[p.id];
    for (int a = 0; a < k; ++a) {
      const double coeff = (a == action_index ? 1.0 : 0.0) - probs[a];
      grad[base + a] += scale * coeff;
    }
  } else {
    for (int a = 0; a < k; ++a) {
      const double coeff = (a == action_index ? 1.0 : 0.0) - probs[a];
      if (coeff == 0.0) continue;
      for (int d = 0; d < params.feature_dim; ++d)
        grad[params.weight_index(a, d)] += scale * coeff * p.features[d];
      grad[params.bias_index(p.action_table[a].kind)] += scale * coeff;
    }
  }
}

inline std::vector<double> grad_log_prob(const PolicyParams& params, const Prompt& p,
                                         int action_index, bool allow_help = true) {
  std::vector<double> g(params.values.size(), 0.0);
  add_grad_log_prob(params, p, action_index, 1.0, g, allow_help);
  return g;
}

// G independent categorical draws from the (optionally masked) softmax.
// Deterministic given the stream; used_cloud mirrors the action kind.
inline GroupSample sample_group(const PolicyParams& params, const Prompt& p, int group_size,
                                RngStream& rng, bool allow_help = true) {
  if (group_size < 2) throw std::invalid_argument("sample_group: need G >= 2");
  const std::vector<double> probs = action_probs(params, p, allow_help);
  GroupSample g;
  g.prompt_id = p.id;
  g.responses.reserve(static_cast<std::size_t>(group_size));
  for (int i = 0; i < group_size; ++i) {
    const double u = rng.next_double();
    double c = 0.0;
    int chosen = p.num_actions() - 1;
    for (int a = 0; a < p.num_actions(); ++a) {
      c += probs[a];
      if (u < c) {
        chosen = a;
        break;
      }
    }
    ResponseAction r;
    r.prompt_id = p.id;
    r.action_index = chosen;
    r.used_cloud = p.action_table[chosen].kind == ActionKind::CallHelp;
    g.responses.push_back(r);
    g.cloud_queried = g.cloud_queried || r.used_cloud;
  }
  return g;
}

// Greedy action; ties resolve to the lowest index.
inline int argmax_action(const PolicyParams& params, const Prompt& p, bool allow_help = true) {
  const std::vector<double> l = action_logits(params, p, allow_help);
  return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
}

inline int best_device_action(const PolicyParams& params, const Prompt& p) {
  return argmax_action(params, p, /*allow_help=*/false);
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace collabrl
