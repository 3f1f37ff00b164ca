#include "collabrl/oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace collabrl {
namespace {

// Recorded once from the fixture in GrpoDirectionMisalignment.
constexpr double kGoldenGrpoDirectionGap = 0.026613367133841936;

// Two actions: one device answer worth alpha_a, one help call worth 0
// (cloud wrong). With RewardParams(1, 0.5, 0) the reward vector is [1, 0].
struct TwoActionInstance {
  Prompt prompt;
  PolicyParams params;
};

TwoActionInstance uniform_two_action() {
  TwoActionInstance inst;
  inst.prompt.id = 0;
  inst.prompt.action_table = {{ActionKind::DeviceAnswer, true, false},
                              {ActionKind::CallHelp, false, false}};
  inst.prompt.cloud_correct = false;
  inst.params = PolicyParams::tabular(std::span<const Prompt>(&inst.prompt, 1));
  return inst;
}

TEST(TrueGradientTest, AllEqualRewardsGiveZero) {
  // Every action scores 0: wrong unformatted device answers plus a help
  // call with a wrong cloud answer.
  Prompt p;
  p.id = 0;
  p.action_table = {{ActionKind::DeviceAnswer, false, false},
                    {ActionKind::DeviceAnswer, false, false},
                    {ActionKind::CallHelp, false, false}};
  p.cloud_correct = false;
  PolicyParams params = PolicyParams::tabular(std::span<const Prompt>(&p, 1));
  params.values = {0.4, -0.2, 1.0};
  for (double g : true_gradient(params, p, RewardParams(2.0, 0.5, 0.2)))
    EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(TrueGradientTest, UniformTwoActionHandCase) {
  const TwoActionInstance inst = uniform_two_action();
  const auto g = true_gradient(inst.params, inst.prompt, RewardParams(1.0, 0.5, 0.0));
  ASSERT_EQ(g.size(), 2u);
  EXPECT_NEAR(g[0], 0.25, 1e-15);
  EXPECT_NEAR(g[1], -0.25, 1e-15);
}

TEST(TrueGradientTest, MatchesFiniteDifferencesOnRandomInstance) {
  RngStream rng(21);
  Prompt p;
  p.id = 0;
  p.features = {rng.next_gauss(), rng.next_gauss(), rng.next_gauss()};
  p.action_table = {{ActionKind::DeviceAnswer, true, true},
                    {ActionKind::DeviceAnswer, false, true},
                    {ActionKind::CallHelp, false, false}};
  p.cloud_correct = true;
  PolicyParams params = PolicyParams::linear_softmax(3, 3);
  for (double& v : params.values) v = rng.next_gauss();
  const RewardParams rp(2.0, 0.5, 0.2);
  const auto analytic = true_gradient(params, p, rp);
  const auto fd = finite_diff(
      [&](const PolicyParams& q) { return expected_reward(q, p, rp); }, params, 1e-5);
  EXPECT_LE(relative_error(fd, analytic), 1e-6);
}

TEST(EstimatorExpectationTest, HandComputableTwoActionGroupOfTwo) {
  // k = 2, G = 2, uniform policy, rewards [1, 0]. The four tuples give
  // 0, [1/8, -1/8] each for (0,1) and (1,0) after the 1/4 weight, and 0,
  // summing to [1/4, -1/4] -- exactly the analytic gradient.
  const TwoActionInstance inst = uniform_two_action();
  const RewardParams rp(1.0, 0.5, 0.0);
  const auto e = estimator_expectation(inst.params, inst.prompt, 2, Estimator::GroupAdaptive, rp);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_NEAR(e[0], 0.25, 1e-12);
  EXPECT_NEAR(e[1], -0.25, 1e-12);
}

TEST(EstimatorExpectationTest, GroupEstimatorIsUnbiased) {
  for (int i = 0; i < 10; ++i) {
    const auto inst = detail::make_verify_instance(55, static_cast<std::uint64_t>(i));
    const auto exact = true_gradient(inst.params, inst.prompt, inst.reward_params);
    const auto e = estimator_expectation(inst.params, inst.prompt, inst.group_size,
                                         Estimator::GroupAdaptive, inst.reward_params);
    EXPECT_LE(max_abs_diff(e, exact), 1e-10);
  }
}

TEST(EstimatorExpectationTest, EnumerationBoundRejected) {
  Prompt p;
  p.id = 0;
  for (int a = 0; a < 3; ++a) p.action_table.push_back({ActionKind::DeviceAnswer, a == 0, true});
  p.action_table.push_back({ActionKind::CallHelp, false, false});
  const PolicyParams params = PolicyParams::tabular(std::span<const Prompt>(&p, 1));
  // 4^12 = 16M ordered tuples exceeds the 1e6 bound.
  EXPECT_THROW(estimator_expectation(params, p, 12, Estimator::GroupAdaptive,
                                     RewardParams(2.0, 0.5, 0.2)),
               std::invalid_argument);
}

// Regression fixture for the advantage-normalization bias: on a
// hierarchical-reward prompt the expected GRPO update direction
// measurably disagrees with the true gradient direction, while the group
// estimator does not.
TEST(EstimatorExpectationTest, GrpoDirectionMisalignment) {
  Prompt p;
  p.id = 0;
  p.action_table = {{ActionKind::DeviceAnswer, true, true},
                    {ActionKind::DeviceAnswer, false, false},
                    {ActionKind::CallHelp, false, false}};
  p.cloud_correct = true;  // rewards [2.2, 0, 0.5]
  PolicyParams params = PolicyParams::tabular(std::span<const Prompt>(&p, 1));
  params.values = {0.3, -0.4, 0.8};
  const RewardParams rp(2.0, 0.5, 0.2);

  const auto exact = true_gradient(params, p, rp);
  const auto grpo = estimator_expectation(params, p, 8, Estimator::GrpoDirection, rp);
  const double gap = direction_distance(grpo, exact);
  EXPECT_GT(gap, 1e-3);
  EXPECT_NEAR(gap, kGoldenGrpoDirectionGap, 1e-9);

  const auto group = estimator_expectation(params, p, 8, Estimator::GroupAdaptive, rp);
  EXPECT_LE(direction_distance(group, exact), 1e-9);
}

TEST(FiniteDiffTest, ExactOnLinearFunction) {
  const TwoActionInstance inst = uniform_two_action();
  const std::vector<double> coeff{1.25, -0.75};
  const auto fd = finite_diff(
      [&](const PolicyParams& q) { return coeff[0] * q.values[0] + coeff[1] * q.values[1]; },
      inst.params, 1e-5);
  EXPECT_NEAR(fd[0], coeff[0], 1e-9);
  EXPECT_NEAR(fd[1], coeff[1], 1e-9);
}

TEST(FiniteDiffTest, MatchesGradLogProb) {
  const auto inst = detail::make_verify_instance(77, 3);
  const int action = 0;
  const auto analytic = grad_log_prob(inst.params, inst.prompt, action);
  const auto fd = finite_diff(
      [&](const PolicyParams& q) { return log_prob(q, inst.prompt, action); }, inst.params, 1e-5);
  EXPECT_LE(relative_error(fd, analytic), 1e-6);
}

TEST(FiniteDiffTest, RejectsNonPositiveStep) {
  const TwoActionInstance inst = uniform_two_action();
  EXPECT_THROW(finite_diff([](const PolicyParams&) { return 0.0; }, inst.params, 0.0),
               std::invalid_argument);
}

TEST(SweepTest, UnbiasednessSweepFiftySeeds) {
  const UnbiasednessSweepResult r = unbiasedness_sweep(50);
  EXPECT_EQ(r.instances, 50);
  EXPECT_LE(r.max_error, 1e-10);
  // Dropping G/(G-1) rescales the expectation by exactly (G-1)/G.
  EXPECT_LE(r.max_scaling_error, 1e-10);
}

TEST(SweepTest, GradCheckHundredInstances) {
  const GradCheckResult r = gradcheck_sweep(100);
  EXPECT_EQ(r.instances, 100);
  EXPECT_LE(r.max_rel_error_log_prob, 1e-6);
  EXPECT_LE(r.max_rel_error_reward, 1e-6);
}

TEST(DirectionDistanceTest, BasicGeometry) {
  const std::vector<double> a{1.0, 0.0};
  const std::vector<double> b{2.0, 0.0};
  const std::vector<double> c{0.0, 3.0};
  EXPECT_NEAR(direction_distance(a, b), 0.0, 1e-15);
  EXPECT_NEAR(direction_distance(a, c), std::sqrt(2.0), 1e-12);
}

}  // namespace
}  // namespace collabrl
