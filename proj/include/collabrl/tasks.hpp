#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "collabrl/domain.hpp"
#include "collabrl/rng.hpp"

namespace collabrl {

struct TierSpec {
  int tier = 0;
  double fraction = 1.0;
  double device_solvability = 1.0;  // P(a correct device action exists)
  int n_wrong_actions = 2;
};

// Configuration of the synthetic prompt distribution.
//
// Feature layout (feature_dim total):
//   [0]                           constant 1.0 (intercept)
//   [1, 1+n_tiers)                tier one-hot * 1.0 + N(0, tier_noise)
//   [1+n_tiers, 1+n_tiers+slots)  answer-slot one-hot * 1.0 + N(0, slot_noise)
//   remainder                     N(0, 1) padding
// where slots = max over tiers of (n_wrong_actions + 1). The tier block is
// deliberately noisy (difficulty is only statistically visible in the
// features); the slot block points at the correct device answer when one
// exists and at a decoy slot otherwise, so feature inspection alone cannot
// tell solvable prompts apart. The intercept lets linear policies learn
// per-action-index offsets.
struct TaskGenConfig {
  int n_prompts = 0;
  int feature_dim = 0;
  std::vector<TierSpec> tiers;
  std::vector<double> cloud_capability;  // per tier, aligned with `tiers`
  std::uint64_t seed = 0;
  double tier_noise = 1.35;
  double slot_noise = 0.3;

  int max_device_slots() const {
    int m = 0;
    for (const TierSpec& t : tiers) m = std::max(m, t.n_wrong_actions + 1);
    return m;
  }

  std::vector<std::string> validate() const {
    std::vector<std::string> errs;
    if (n_prompts < 1) errs.push_back("n_prompts: must be >= 1");
    if (tiers.empty()) errs.push_back("tiers: must be non-empty");
    double frac_sum = 0.0;
    for (std::size_t i = 0; i < tiers.size(); ++i) {
      const std::string at = "tiers[" + std::to_string(i) + "]";
      if (tiers[i].tier < 0) errs.push_back(at + ".tier: must be >= 0");
      if (!(tiers[i].fraction >= 0.0)) errs.push_back(at + ".fraction: must be >= 0");
      if (tiers[i].device_solvability < 0.0 || tiers[i].device_solvability > 1.0)
        errs.push_back(at + ".device_solvability: must be in [0, 1]");
      if (tiers[i].n_wrong_actions < 1)
        errs.push_back(at + ".n_wrong_actions: must be >= 1");
      frac_sum += tiers[i].fraction;
    }
    if (!tiers.empty() && std::abs(frac_sum - 1.0) > 1e-9)
      errs.push_back("tiers: fractions must sum to 1");
    if (cloud_capability.size() != tiers.size())
      errs.push_back("cloud_capability: must have one entry per tier");
    for (std::size_t i = 0; i < cloud_capability.size(); ++i)
      if (cloud_capability[i] < 0.0 || cloud_capability[i] > 1.0)
        errs.push_back("cloud_capability[" + std::to_string(i) + "]: must be in [0, 1]");
    if (!tiers.empty()) {
      const int needed = 1 + static_cast<int>(tiers.size()) + max_device_slots();
      if (feature_dim < needed)
        errs.push_back("feature_dim: must be >= 1 + n_tiers + max device slots (" +
                       std::to_string(needed) + ")");
    }
    if (!(tier_noise >= 0.0)) errs.push_back("tier_noise: must be >= 0");
    if (!(slot_noise >= 0.0)) errs.push_back("slot_noise: must be >= 0");
    return errs;
  }
};

// The cloud oracle: deterministic, stateless, free of sampling noise.
inline bool cloud_answer(const Prompt& p) { return p.cloud_correct; }

// Generates a dataset as a pure function of the config. Prompt ids are
// dense 0..n-1. Draw order per prompt is fixed, so datasets are
// byte-identical across runs and platforms for one config.
inline std::vector<Prompt> generate(const TaskGenConfig& cfg) {
  const auto errs = cfg.validate();
  if (!errs.empty()) {
    std::string msg = "generate: invalid config:";
    for (const std::string& e : errs) msg += "\n  " + e;
    throw std::invalid_argument(msg);
  }

  const int n_tiers = static_cast<int>(cfg.tiers.size());
  const int slots = cfg.max_device_slots();

  std::vector<double> cum;
  cum.reserve(cfg.tiers.size());
  double acc = 0.0;
  for (const TierSpec& t : cfg.tiers) {
    acc += t.fraction;
    cum.push_back(acc);
  }
  cum.back() = 1.0;

  std::vector<Prompt> out;
  out.reserve(static_cast<std::size_t>(cfg.n_prompts));
  for (int i = 0; i < cfg.n_prompts; ++i) {
    RngStream rng(cfg.seed, StreamPurpose::TaskGen, {static_cast<std::uint64_t>(i)});

    int tier_idx = 0;
    const double ut = rng.next_double();
    while (tier_idx + 1 < n_tiers && ut >= cum[tier_idx]) ++tier_idx;
    const TierSpec& tier = cfg.tiers[tier_idx];

    const bool solvable = rng.next_bernoulli(tier.device_solvability);
    const int n_wrong = tier.n_wrong_actions;
    // Slot hint in {0,...,n_wrong} for every prompt: the correct-answer
    // slot when solvable, a decoy otherwise (same range, so the hint
    // itself does not reveal solvability).
    const int hint = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_wrong + 1)));
    const bool correct_format = rng.next_bernoulli(0.85);

    Prompt p;
    p.id = i;
    p.difficulty = tier.tier;

    const int n_device = solvable ? n_wrong + 1 : n_wrong;
    p.action_table.reserve(static_cast<std::size_t>(n_device) + 1);
    for (int s = 0; s < n_device; ++s) {
      ActionSpec a;
      a.kind = ActionKind::DeviceAnswer;
      if (solvable && s == hint) {
        a.is_correct = true;
        a.format_ok = correct_format;
      } else {
        a.is_correct = false;
        a.format_ok = rng.next_bernoulli(0.5);
      }
      p.action_table.push_back(a);
    }
    p.action_table.push_back({ActionKind::CallHelp, false, false});

    p.cloud_correct = rng.next_bernoulli(cfg.cloud_capability[tier_idx]);

    p.features.resize(static_cast<std::size_t>(cfg.feature_dim));
    p.features[0] = 1.0;
    for (int d = 0; d < n_tiers; ++d)
      p.features[1 + d] = (d == tier_idx ? 1.0 : 0.0) + cfg.tier_noise * rng.next_gauss();
    for (int s = 0; s < slots; ++s)
      p.features[1 + n_tiers + s] = (s == hint ? 1.0 : 0.0) + cfg.slot_noise * rng.next_gauss();
    for (int d = 1 + n_tiers + slots; d < cfg.feature_dim; ++d)
      p.features[d] = rng.next_gauss();

    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace collabrl
