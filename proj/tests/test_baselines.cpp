#include "collabrl/baselines.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "collabrl/tasks.hpp"

namespace collabrl {
namespace {

// Recorded once from GoldenReportOnFrozenSetup (seed 90, n = 200).
constexpr double kGoldenDeviceAccuracy = 0.45500000000000002;
constexpr double kGoldenNaiveAccuracy = 0.625;
constexpr double kGoldenPolicyRoutedAccuracy = 0.66500000000000004;
constexpr double kGoldenHelpRequestFraction = 0.23499999999999999;

std::vector<Prompt> small_dataset(int n, std::uint64_t seed, double hard_solvability = 0.1) {
  TaskGenConfig cfg;
  cfg.n_prompts = n;
  cfg.feature_dim = 7;
  cfg.tiers = {{0, 0.5, 0.9, 2}, {1, 0.5, hard_solvability, 2}};
  cfg.cloud_capability = {0.95, 0.95};
  cfg.seed = seed;
  return generate(cfg);
}

TEST(NormalizedAdvantageTest, OneHotGroupsAreIndistinguishable) {
  std::vector<double> high(8, 0.0);
  high[0] = 2.2;
  std::vector<double> low(8, 0.0);
  low[0] = 0.5;
  const auto a = normalized_advantage(high, 0.0);
  const auto b = normalized_advantage(low, 0.0);
  ASSERT_EQ(a.size(), 8u);
  // A one-hot group of size G has A_hot = sqrt(G - 1) regardless of the
  // hot reward's value: the 2.2 and 0.5 groups normalize identically.
  EXPECT_NEAR(a[0], std::sqrt(7.0), 1e-12);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(NormalizedAdvantageTest, ConstantGroupMapsToZeros) {
  const std::vector<double> rewards{1.0, 1.0, 1.0, 1.0};
  for (double v : normalized_advantage(rewards, 0.0)) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(NormalizedAdvantageTest, MeanCenteringAndScaleInvariance) {
  RngStream rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> rewards(8);
    for (double& r : rewards) r = 2.2 * rng.next_double();
    const auto a = normalized_advantage(rewards, 0.0);
    double sum = 0.0;
    for (double v : a) sum += v;
    EXPECT_NEAR(sum, 0.0, 1e-12);

    std::vector<double> scaled = rewards;
    for (double& r : scaled) r *= 4.4;  // positive rescaling
    const auto b = normalized_advantage(scaled, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(NormalizedAdvantageTest, StdFloorTamesNearConstantGroups) {
  const std::vector<double> rewards{1.0, 1.0 + 1e-14, 1.0, 1.0};
  for (double v : normalized_advantage(rewards, 1e-6)) EXPECT_LT(std::abs(v), 1e-6);
}

Prompt three_action_prompt(int id = 0) {
  Prompt p;
  p.id = id;
  p.action_table = {{ActionKind::DeviceAnswer, true, true},
                    {ActionKind::DeviceAnswer, false, false},
                    {ActionKind::CallHelp, false, false}};
  p.cloud_correct = true;
  return p;
}

TEST(GrpoStepTest, SingleEpochMatchesDirectAdvantageGradient) {
  const Prompt p = three_action_prompt();
  const std::vector<Prompt> batch{p};
  PolicyParams params = PolicyParams::tabular(batch);
  params.values = {0.2, -0.1, 0.4};
  const PolicyParams before = params;
  const PolicyParams reference = params;

  TrainerConfig tc;
  tc.group_size = 8;
  tc.learning_rate = 0.25;
  tc.seed = 303;
  GrpoConfig gc;
  gc.kl_coef = 0.0;
  gc.inner_epochs = 1;
  const RewardParams rp(2.0, 0.5, 0.2);

  grpo_step(params, reference, batch, tc, gc, rp, 4);

  // With one inner epoch the ratio is identically 1 at gradient time, so
  // the update direction is (1/G) sum_i A_i grad log pi(a_i).
  RngStream rng(tc.seed, StreamPurpose::Sampling, {4, 0});
  GroupSample g = score_group(p, sample_group(before, p, tc.group_size, rng), rp);
  std::vector<double> rewards;
  for (const ResponseAction& r : g.responses) rewards.push_back(r.reward);
  const auto adv = normalized_advantage(rewards, gc.std_floor);
  std::vector<double> grad(before.values.size(), 0.0);
  for (int i = 0; i < tc.group_size; ++i)
    add_grad_log_prob(before, p, g.responses[i].action_index, adv[i] / tc.group_size, grad);
  for (std::size_t i = 0; i < params.values.size(); ++i)
    EXPECT_NEAR(params.values[i], before.values[i] + tc.learning_rate * grad[i], 1e-12);
}

TEST(GrpoStepTest, EqualRewardsAndZeroBetaLeaveParamsUnchanged) {
  // Constant rewards in the group: every advantage is 0 (floor 0).
  Prompt p = three_action_prompt();
  p.action_table = {{ActionKind::DeviceAnswer, false, false},
                    {ActionKind::DeviceAnswer, false, false},
                    {ActionKind::CallHelp, false, false}};
  p.cloud_correct = false;
  const std::vector<Prompt> batch{p};
  PolicyParams params = PolicyParams::tabular(batch);
  const PolicyParams reference = params;
  const std::vector<double> before = params.values;
  TrainerConfig tc;
  tc.group_size = 8;
  GrpoConfig gc;
  gc.kl_coef = 0.0;
  gc.std_floor = 0.0;
  grpo_step(params, reference, batch, tc, gc, RewardParams(2.0, 0.5, 0.2), 1);
  EXPECT_EQ(params.values, before);
}

TEST(GrpoStepTest, KlIsZeroAtReference) {
  const Prompt p = three_action_prompt();
  PolicyParams params = PolicyParams::tabular(std::span<const Prompt>(&p, 1));
  params.values = {0.5, -0.3, 0.1};
  EXPECT_DOUBLE_EQ(kl_divergence(params, params, p), 0.0);

  PolicyParams other = params;
  other.values = {1.5, -0.3, 0.1};
  EXPECT_GT(kl_divergence(other, params, p), 0.0);
}

TEST(GrpoStepTest, MultipleInnerEpochsStayFinite) {
  const auto dataset = small_dataset(8, 71);
  PolicyParams params = PolicyParams::linear_softmax(4, 7);
  const PolicyParams reference = params;
  TrainerConfig tc;
  tc.group_size = 8;
  tc.learning_rate = 0.5;
  GrpoConfig gc;
  gc.inner_epochs = 4;
  gc.clip_eps = 0.05;  // force the clipped branch on later epochs
  for (std::uint64_t it = 1; it <= 5; ++it)
    grpo_step(params, reference, dataset, tc, gc, RewardParams(2.0, 0.5, 0.2), it);
  EXPECT_TRUE(params.finite());
}

TEST(GrpoTrainTest, CollabModeCallsCloudAndTaskModeDoesNot) {
  const auto dataset = small_dataset(32, 73);
  TrainerConfig tc;
  tc.total_steps = 5;
  tc.batch_size = 16;
  tc.group_size = 4;
  const RewardParams rp(2.0, 0.5, 0.2);
  GrpoConfig gc;

  PolicyParams collab = PolicyParams::linear_softmax(4, 7);
  const RunMetrics mc = grpo_train(collab, dataset, tc, gc, rp, /*allow_help=*/true);
  double total_ratio = 0.0;
  for (const MetricsRow& r : mc) total_ratio += r.call_ratio;
  EXPECT_GT(total_ratio, 0.0);

  PolicyParams task = PolicyParams::linear_softmax(4, 7);
  EvalOptions eo;
  eo.mode = EvalMode::DeviceOnly;
  const RunMetrics mt = grpo_train(task, dataset, tc, gc, rp, /*allow_help=*/false, eo);
  for (const MetricsRow& r : mt) {
    EXPECT_EQ(r.cloud_queries, 0);
    EXPECT_DOUBLE_EQ(r.call_ratio, 0.0);
  }
}

TEST(TrainRouterTest, SeparableLabelsFitAccurately) {
  // Hand-built dataset: solvability visible in feature 0 with a wide
  // margin, and a deterministic device policy so the labels are exactly
  // the solvability flags.
  std::vector<Prompt> prompts;
  RngStream rng(17);
  for (int i = 0; i < 120; ++i) {
    Prompt p;
    p.id = i;
    const bool solvable = i % 2 == 0;
    p.features = {solvable ? 1.0 : -1.0, 0.05 * rng.next_gauss()};
    p.action_table = {{ActionKind::DeviceAnswer, solvable, true},
                      {ActionKind::CallHelp, false, false}};
    p.cloud_correct = true;
    prompts.push_back(p);
  }
  PolicyParams policy = PolicyParams::tabular(prompts);
  for (std::size_t i = 0; i + 1 < policy.row_offsets.size(); ++i)
    policy.values[static_cast<std::size_t>(policy.row_offsets[i])] = 60.0;

  const RouterFit fit = train_router(prompts, policy, 4, 5);
  EXPECT_FALSE(fit.degenerate);
  EXPECT_GE(fit.train_accuracy, 0.99);
}

TEST(TrainRouterTest, AllPositiveLabelsDegenerate) {
  std::vector<Prompt> prompts;
  for (int i = 0; i < 20; ++i) {
    Prompt p;
    p.id = i;
    p.features = {static_cast<double>(i)};
    p.action_table = {{ActionKind::DeviceAnswer, true, true}, {ActionKind::CallHelp, false, false}};
    prompts.push_back(p);
  }
  PolicyParams policy = PolicyParams::tabular(prompts);
  for (std::size_t i = 0; i + 1 < policy.row_offsets.size(); ++i)
    policy.values[static_cast<std::size_t>(policy.row_offsets[i])] = 60.0;
  const RouterFit fit = train_router(prompts, policy, 4, 5);
  EXPECT_TRUE(fit.degenerate);
  EXPECT_GT(router_predict(fit.params, prompts[3]), 0.99);  // always predicts device
}

TEST(RouteAndEvalTest, ZeroCapEqualsDeviceOnly) {
  const auto dataset = small_dataset(100, 81);
  PolicyParams policy = PolicyParams::linear_softmax(4, 7);
  const auto rep = route_and_eval(EvalMode::NaiveOffload, policy, nullptr, dataset, 0.0, 3);
  EXPECT_EQ(rep.cloud_calls, 0);
  EXPECT_DOUBLE_EQ(rep.collab_accuracy, rep.device_accuracy);
}

TEST(RouteAndEvalTest, FullCapWithPerfectCloudIsPerfect) {
  auto dataset = small_dataset(100, 82);
  for (Prompt& p : dataset) p.cloud_correct = true;
  PolicyParams policy = PolicyParams::linear_softmax(4, 7);
  const auto rep = route_and_eval(EvalMode::NaiveOffload, policy, nullptr, dataset, 1.0, 3);
  EXPECT_EQ(rep.cloud_calls, 100);
  EXPECT_DOUBLE_EQ(rep.collab_accuracy, 1.0);
}

TEST(RouteAndEvalTest, PolicyRoutedRedirectsBeyondCap) {
  auto dataset = small_dataset(40, 83);
  // A policy that always wants help: large CallHelp bias.
  PolicyParams policy = PolicyParams::linear_softmax(4, 7);
  policy.values[policy.bias_index(ActionKind::CallHelp)] = 60.0;
  const auto rep = route_and_eval(EvalMode::PolicyRouted, policy, nullptr, dataset, 0.5, 3);
  EXPECT_DOUBLE_EQ(rep.help_request_fraction, 1.0);
  EXPECT_EQ(rep.cloud_calls, 20);  // floor(0.5 * 40)
  EXPECT_NEAR(rep.cloud_call_fraction, 0.5, 1e-12);
}

TEST(RouteAndEvalTest, RouterModeNeedsRouterAndRanksByConfidence) {
  const auto dataset = small_dataset(50, 85);
  PolicyParams policy = PolicyParams::linear_softmax(4, 7);
  EXPECT_THROW(route_and_eval(EvalMode::RouterOffload, policy, nullptr, dataset, 0.3, 3),
               std::invalid_argument);

  RouterParams router;
  router.weights.assign(7, 0.0);
  router.weights[0] = 3.0;  // trusts the device on high feature-0 prompts
  const auto rep = route_and_eval(EvalMode::RouterOffload, policy, &router, dataset, 0.3, 3);
  EXPECT_EQ(rep.cloud_calls, 15);
}

TEST(RouteAndEvalTest, CapOutOfRangeThrows) {
  const auto dataset = small_dataset(10, 86);
  PolicyParams policy = PolicyParams::linear_softmax(4, 7);
  EXPECT_THROW(route_and_eval(EvalMode::NaiveOffload, policy, nullptr, dataset, 1.2, 3),
               std::invalid_argument);
}

// Frozen behaviour of the full evaluation stack on a fixed dataset and a
// fixed hand-built policy; pins offload ordering and accounting.
TEST(RouteAndEvalTest, GoldenReportOnFrozenSetup) {
  const auto dataset = small_dataset(200, 90);
  PolicyParams policy = PolicyParams::linear_softmax(4, 7);
  // Mild preference for the slot the features point at, plus a small
  // help bias: exercises every offload path.
  for (int s = 0; s < 3; ++s) policy.values[policy.weight_index(s, 3 + s)] = 2.0;
  policy.values[policy.bias_index(ActionKind::CallHelp)] = 1.0;

  const auto device = route_and_eval(EvalMode::DeviceOnly, policy, nullptr, dataset, 0.3, 7);
  const auto naive = route_and_eval(EvalMode::NaiveOffload, policy, nullptr, dataset, 0.3, 7);
  const auto routed = route_and_eval(EvalMode::PolicyRouted, policy, nullptr, dataset, 0.3, 7);

  EXPECT_NEAR(device.device_accuracy, kGoldenDeviceAccuracy, 1e-12);
  EXPECT_DOUBLE_EQ(device.collab_accuracy, device.device_accuracy);
  EXPECT_EQ(naive.cloud_calls, 60);
  EXPECT_NEAR(naive.collab_accuracy, kGoldenNaiveAccuracy, 1e-12);
  EXPECT_NEAR(routed.collab_accuracy, kGoldenPolicyRoutedAccuracy, 1e-12);
  EXPECT_NEAR(routed.help_request_fraction, kGoldenHelpRequestFraction, 1e-12);
}

}  // namespace
}  // namespace collabrl
