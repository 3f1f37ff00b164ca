#pragma once

#include <stdexcept>
#include <string>

#include "collabrl/domain.hpp"

namespace collabrl {

// Hierarchical reward for a single response:
//   device answer, correct, well-formatted   -> alpha_a + alpha_f
//   device answer, correct, bad format       -> alpha_a
//   help call with a correct cloud answer    -> alpha_c
//   device answer, wrong, well-formatted     -> alpha_f
//   anything else                            -> 0
// Help calls never earn the format bonus; correctness of the cloud
// answer is the prompt's fixed cloud_correct flag.
inline double score(const Prompt& p, const ResponseAction& a, const RewardParams& rp) {
  if (a.action_index < 0 || a.action_index >= p.num_actions())
    throw std::out_of_range("score: action_index " + std::to_string(a.action_index) +
                            " out of range for prompt " + std::to_string(p.id));
  const ActionSpec& act = p.action_table[a.action_index];
  if (act.kind == ActionKind::CallHelp)
    return p.cloud_correct ? rp.alpha_c() : 0.0;
  if (act.is_correct) return act.format_ok ? rp.alpha_a() + rp.alpha_f() : rp.alpha_a();
  return act.format_ok ? rp.alpha_f() : 0.0;
}

// Scores every member and refreshes the group mean. Idempotent.
inline GroupSample score_group(const Prompt& p, GroupSample g, const RewardParams& rp) {
  double sum = 0.0;
  for (ResponseAction& r : g.responses) {
    r.reward = score(p, r, rp);
    sum += r.reward;
  }
  g.mean_reward = g.responses.empty() ? 0.0 : sum / static_cast<double>(g.responses.size());
  return g;
}

}  // namespace collabrl
