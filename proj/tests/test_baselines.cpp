#include <gtest/gtest.h>

#include <sstream>

#include "hrl/baselines.hpp"
#include "hrl/harness.hpp"

using namespace hrl;

namespace {

const std::vector<double> kTable = AgentConfig{}.action_table;

StateVector state_with(double d_d, double d_f, double v_e = 5.0, double v_f = 5.0) {
  EnvConfig cfg;
  VehicleState ego{0.0, v_e, 0.0, 0.0};
  VehicleState front{d_f + cfg.car_length, v_f, 0.0, 0.0};
  return make_state(ego, &front, d_d, cfg);
}

StateVector random_state(Rng& rng) {
  EnvConfig cfg;
  VehicleState ego{0.0, rng.uniform(0.0, 15.0), rng.uniform(-4.0, 2.0), rng.uniform(-4.0, 2.0)};
  VehicleState front{rng.uniform(cfg.car_length, 80.0), rng.uniform(0.0, 15.0), rng.uniform(-6.0, 2.0), 0.0};
  return make_state(ego, rng.bernoulli(0.7) ? &front : nullptr, rng.uniform(0.0, 120.0), cfg);
}

}  // namespace

TEST(Rules, ConstantRules) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const StateVector s = random_state(rng);
    EXPECT_EQ(rule_option(s, RuleId::RULE1, 4.5), OptionId::FFV);
    EXPECT_EQ(rule_option(s, RuleId::RULE2, 4.5), OptionId::SSL);
  }
}

TEST(Rules, Rule3Examples) {
  EXPECT_EQ(rule_option(state_with(50, 20), RuleId::RULE3, 4.5), OptionId::FFV);
  EXPECT_EQ(rule_option(state_with(20, 20), RuleId::RULE3, 4.5), OptionId::SSL);
  EXPECT_EQ(rule_option(state_with(24.5, 20), RuleId::RULE3, 4.5), OptionId::SSL);
}

TEST(Rules, Rule4PicksTheTighterMargin) {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const StateVector s = random_state(rng);
    EXPECT_EQ(rule_option(s, RuleId::RULE4, 4.5), s.d_dc > s.d_fc ? OptionId::FFV : OptionId::SSL);
  }
  // Slow leader close ahead, line far away.
  EXPECT_EQ(rule_option(state_with(100, 10, 10, 2), RuleId::RULE4, 4.5), OptionId::FFV);
  // Leader well past the line.
  EXPECT_EQ(rule_option(state_with(10, 60, 8, 8), RuleId::RULE4, 4.5), OptionId::SSL);
}

TEST(Rules, QuantizeTakesLargestEntryNotAbove) {
  EXPECT_EQ(quantize_accel(0.0, kTable).index, 3u);
  EXPECT_EQ(quantize_accel(0.99, kTable).index, 3u);
  EXPECT_EQ(quantize_accel(1.0, kTable).index, 4u);
  EXPECT_EQ(quantize_accel(-1.5, kTable).index, 1u);
  EXPECT_EQ(quantize_accel(50.0, kTable).index, 5u);
  EXPECT_EQ(quantize_accel(-50.0, kTable).index, 0u);
  EXPECT_EQ(quantize_accel(-std::numeric_limits<double>::infinity(), kTable).index, 0u);
}

TEST(Rules, StoppedAtLineHoldsZero) {
  EnvConfig cfg;
  VehicleState ego{0.0, 0.0, 0.0, 0.0};
  const StateVector s = make_state(ego, nullptr, 0.0, cfg);
  GapController ctl;
  EXPECT_EQ(kTable[rule_action(s, OptionId::SSL, ctl, kTable).index], 0.0);
}

TEST(Rules, OvershootForcesFullBraking) {
  const StateVector s = state_with(3.0, 500.0, 10.0, 10.0);
  ASSERT_LT(s.d_dc, 0.0);
  EXPECT_EQ(rule_action(s, OptionId::SSL, GapController{}, kTable).index, 0u);
  const StateVector close = state_with(100.0, 4.0, 10.0, 3.0);
  ASSERT_LT(close.d_fc, 0.0);
  EXPECT_EQ(rule_action(close, OptionId::FFV, GapController{}, kTable).index, 0u);
}

TEST(Rules, LargeGapAccelerates) {
  const StateVector s = state_with(150.0, 60.0, 6.0, 12.0);
  EXPECT_GT(kTable[rule_action(s, OptionId::FFV, GapController{}, kTable).index], 0.0);
}

TEST(Rules, ControllerLaw) {
  GapController ctl;
  const StateVector s = state_with(40.0, 30.0, 6.0, 4.0);
  EXPECT_DOUBLE_EQ(ctl.command(s, OptionId::SSL), 0.5 * 40.0 - 6.0);
  EXPECT_DOUBLE_EQ(ctl.command(s, OptionId::FFV), 0.5 * (30.0 - 5.0) + (4.0 - 6.0));
}

TEST(Rules, PoliciesArePure) {
  EnvConfig env;
  Rng rng(3), r1(10), r2(99);
  for (RuleId id : {RuleId::RULE1, RuleId::RULE2, RuleId::RULE3, RuleId::RULE4}) {
    RulePolicy p(id, env, kTable);
    for (int i = 0; i < 100; ++i) {
      const StateVector s = random_state(rng);
      const Decision a = p.decide(s, 1.0, r1), b = p.decide(s, 0.0, r2);
      EXPECT_EQ(a.option, b.option);
      EXPECT_EQ(a.action, b.action);
      EXPECT_EQ(a.accel, kTable[a.action.index]);
    }
  }
}

TEST(Rules, Rule1NeverSucceedsWhenTheLeaderDeparts) {
  EnvConfig env;
  ScenarioMix mix;
  RulePolicy p(RuleId::RULE1, env, kTable);
  DrivingEnv probe(env, mix);
  int departing = 0;
  const auto sum = evaluate(as_policy(p), 300, 5000, env, mix, RewardConfig{}, true, 1);
  for (int i = 0; i < 300; ++i) {
    probe.reset(5000 + static_cast<std::uint64_t>(i));
    if (!probe.scenario().front_departs()) continue;
    ++departing;
    EXPECT_NE(sum.reports[static_cast<std::size_t>(i)].outcome, TerminalKind::SUCCESS);
  }
  EXPECT_GT(departing, 100);
}

TEST(Rules, Rule2CollidesMoreThanRule4BehindStoppingLeaders) {
  EnvConfig env;
  ScenarioMix mix;
  mix.p_no_front = 0.0;
  mix.w_rolls_through = 0.0;
  mix.w_stop_then_go = 1.0;
  RulePolicy r2(RuleId::RULE2, env, kTable), r4(RuleId::RULE4, env, kTable);
  const auto s2 = evaluate(as_policy(r2), 500, 7000, env, mix, RewardConfig{}, true, 1);
  const auto s4 = evaluate(as_policy(r4), 500, 7000, env, mix, RewardConfig{}, true, 1);
  EXPECT_GT(s2.collision(), s4.collision());
}

namespace {

AgentConfig flat_config() {
  AgentConfig c;
  c.reward_scale = 1.0;
  c.td_clip = 0.0;
  return c;
}

DenseNet linear_q(const Vector& bias) {
  DenseLayer l;
  l.weights = Matrix::Zero(bias.size(), FlatDdqnAgent::kStateDim);
  l.biases = bias;
  return DenseNet({l});
}

}  // namespace

TEST(FlatDdqn, TerminalAndZeroDiscountTargets) {
  FlatDdqnAgent a(flat_config(), StateEncoder::for_env(EnvConfig{}), 1);
  Transition t;
  t.r_option = -3.5;  // r_task is stored in the option slot
  EXPECT_EQ(a.target(t, 0.0), -3.5);
  t.terminal = true;
  EXPECT_EQ(a.target(t, 0.99), -3.5);
}

TEST(FlatDdqn, HandSetTargetAndTdError) {
  FlatDdqnAgent a(flat_config(), StateEncoder::for_env(EnvConfig{}), 1);
  Vector online(6), target(6);
  online << 0, 0, 0.5, 0, 0, 0.1;  // argmax 2
  target << 7, 0, 1.5, 0, 0, 0;    // value 1.5 at index 2
  a.q_net() = linear_q(online);
  a.q_target_net() = linear_q(target);
  Transition t;
  t.r_option = 1.0;
  t.action = ActionId{5};
  EXPECT_NEAR(a.target(t, 0.9), 1.0 + 0.9 * 1.5, 1e-12);
  std::vector<WeightedTransition> batch{{&t, 1.0, 1.0}};
  const TdErrors td = a.train_batch(batch);
  const double gamma = flat_config().gamma;  // training uses the configured discount
  EXPECT_NEAR(td.option[0], std::abs(0.1 - (1.0 + gamma * 1.5)), 1e-12);
  EXPECT_EQ(td.action, td.option);
}

TEST(FlatDdqn, ZeroWeightsLeaveParameters) {
  FlatDdqnAgent a(flat_config(), StateEncoder::for_env(EnvConfig{}), 2);
  const DenseNet before = a.q_net();
  Transition t;
  t.r_option = 4.0;
  std::vector<WeightedTransition> batch{{&t, 0.0, 0.0}};
  a.train_batch(batch);
  EXPECT_TRUE(a.q_net().parameters_equal(before));
}

TEST(FlatDdqn, CheckpointRoundTrip) {
  FlatDdqnAgent a(flat_config(), StateEncoder::for_env(EnvConfig{}), 3);
  std::stringstream buf;
  a.write(buf);
  const std::string first = buf.str();
  const FlatDdqnAgent b = FlatDdqnAgent::read(buf);
  std::stringstream again;
  b.write(again);
  EXPECT_EQ(again.str(), first);
  std::stringstream bad("HRL-AGENT 1\n");
  EXPECT_THROW(FlatDdqnAgent::read(bad), std::runtime_error);
}
