#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "hrl/replay.hpp"
#include "oracles.hpp"

using namespace hrl;

namespace {

Transition tagged(double tag) {
  Transition t;
  t.r_option = tag;
  t.r_action = -tag;
  t.state.v_e = tag;
  t.next_state.d_d = tag + 1;
  t.action = ActionId{static_cast<std::size_t>(tag) % 6};
  t.option = static_cast<int>(tag) % 2 ? OptionId::FFV : OptionId::SSL;
  return t;
}

ReplayConfig small(int capacity, ReplayMode mode = ReplayMode::HIERARCHICAL) {
  ReplayConfig c;
  c.capacity = capacity;
  c.mode = mode;
  return c;
}

// Forces exact priorities: a single-entry update stores max(|td_o|, eps) at
// the option level and exactly eps at the action level.
void set_option_priority(PrioritizedStore& store, std::size_t i, double p) {
  store.update_priorities({i}, {p}, {p});
}

double leaf_sum(const SumTree& t, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += t.leaf(i);
  return s;
}

}  // namespace

TEST(SumTree, FindRespectsCumulativeRanges) {
  SumTree t(5);
  EXPECT_EQ(t.capacity(), 8u);
  const std::vector<double> p{1, 0, 2, 3, 0.5};
  for (std::size_t i = 0; i < p.size(); ++i) t.set(i, p[i]);
  EXPECT_DOUBLE_EQ(t.total(), 6.5);
  EXPECT_EQ(t.find(0.0), 0u);
  EXPECT_EQ(t.find(0.999), 0u);
  EXPECT_EQ(t.find(1.0), 2u);
  EXPECT_EQ(t.find(2.999), 2u);
  EXPECT_EQ(t.find(3.0), 3u);
  EXPECT_EQ(t.find(6.2), 4u);
}

TEST(SumTree, RootMatchesLeavesAfterRandomWrites) {
  Rng rng(1);
  SumTree t(37);
  for (int k = 0; k < 20000; ++k) {
    t.set(rng.index(37), rng.uniform() < 0.1 ? 0.0 : rng.uniform(0, 100));
    if (k % 97 == 0) {
      ASSERT_NEAR(t.total(), leaf_sum(t, 37), 1e-9);
    }
  }
}

TEST(Replay, PushEvictsOldestFirst) {
  PrioritizedStore store(small(4));
  for (int i = 0; i < 5; ++i) store.push(tagged(i));
  EXPECT_EQ(store.size(), 4u);
  std::vector<double> tags;
  for (std::size_t i = 0; i < store.size(); ++i) tags.push_back(store.at(i).r_option);
  EXPECT_EQ(std::count(tags.begin(), tags.end(), 0.0), 0);
  EXPECT_EQ(store.at(0).r_option, 4.0);
}

TEST(Replay, FirstPushHasUnitPriority) {
  PrioritizedStore store(small(8));
  store.push(tagged(3));
  EXPECT_EQ(store.option_priority(0), 1.0);
  EXPECT_EQ(store.action_priority(0), 1.0);
}

TEST(Replay, PushedTransitionRoundTrips) {
  PrioritizedStore store(small(8));
  const Transition t = tagged(7);
  store.push(t);
  EXPECT_EQ(store.at(0), t);
}

TEST(Replay, NewTransitionsTakeMaxSeenPriority) {
  PrioritizedStore store(small(8));
  store.push(tagged(0));
  store.update_priorities({0}, {4.0}, {9.0});
  store.push(tagged(1));
  EXPECT_EQ(store.option_priority(1), 4.0);
  EXPECT_EQ(store.action_priority(1), 1.0);  // single-entry shift lands on eps; the max stays at 1
}

TEST(Replay, SamplingEmptyStoreThrows) {
  PrioritizedStore store(small(8));
  Rng rng(1);
  EXPECT_THROW(store.sample(4, ReplayLevel::OPTION, rng), std::logic_error);
  store.push(tagged(1));
  EXPECT_THROW(store.sample(0, ReplayLevel::OPTION, rng), std::invalid_argument);
}

TEST(Replay, HierarchicalPriorityExample) {
  const auto hp = hierarchical_priority(0.4, 0.5);
  EXPECT_EQ(hp.option, 0.4);
  EXPECT_NEAR(hp.raw_action, 0.1, 1e-15);
  EXPECT_EQ(hierarchical_priority(0.3, 0.3).raw_action, 0.0);
}

TEST(Replay, ShiftExample) {
  const double eps = 1e-3;
  const auto p = shift_action_priorities({-0.2, 0.3}, eps);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_DOUBLE_EQ(p[0], eps);
  EXPECT_DOUBLE_EQ(p[1], 0.5 + eps);
}

TEST(Replay, EqualErrorsStoreEpsilonActionPriority) {
  PrioritizedStore store(small(8));
  store.push(tagged(0));
  store.push(tagged(1));
  store.update_priorities({0, 1}, {0.7, 0.2}, {0.7, 0.9});
  EXPECT_EQ(store.option_priority(0), 0.7);
  EXPECT_EQ(store.option_priority(1), 0.2);
  EXPECT_DOUBLE_EQ(store.action_priority(0), store.config().epsilon_priority);
  EXPECT_DOUBLE_EQ(store.action_priority(1), 0.7 + store.config().epsilon_priority);
}

TEST(Replay, UpdateRejectsBadArguments) {
  PrioritizedStore store(small(8));
  store.push(tagged(0));
  EXPECT_THROW(store.update_priorities({0}, {1.0, 2.0}, {1.0}), std::invalid_argument);
  EXPECT_THROW(store.update_priorities({3}, {1.0}, {1.0}), std::out_of_range);
}

TEST(Replay, PrioritiesStayPositive) {
  Rng rng(4);
  PrioritizedStore store(small(64));
  for (int i = 0; i < 64; ++i) store.push(tagged(i));
  for (int round = 0; round < 500; ++round) {
    std::vector<std::size_t> idx;
    std::vector<double> o, a;
    const std::size_t k = 1 + rng.index(16);
    for (std::size_t j = 0; j < k; ++j) {
      idx.push_back(rng.index(64));
      o.push_back(rng.uniform() < 0.2 ? 0.0 : rng.uniform(0, 3));
      a.push_back(rng.uniform() < 0.2 ? 0.0 : rng.uniform(0, 3));
    }
    store.update_priorities(idx, o, a);
  }
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_GE(store.option_priority(i), store.config().epsilon_priority);
    EXPECT_GE(store.action_priority(i), store.config().epsilon_priority);
  }
}

TEST(Replay, TreesTrackPrioritiesUnderInterleavedWrites) {
  Rng rng(5);
  ReplayConfig cfg = small(50);
  cfg.alpha = 0.6;
  PrioritizedStore store(cfg);
  for (int step = 0; step < 3000; ++step) {
    if (store.empty() || rng.uniform() < 0.4) {
      store.push(tagged(step));
    } else {
      const std::size_t i = rng.index(store.size());
      store.update_priorities({i}, {rng.uniform(0, 5)}, {rng.uniform(0, 5)});
    }
    if (step % 50 == 0) {
      double so = 0, sa = 0;
      for (std::size_t i = 0; i < store.size(); ++i) {
        so += std::pow(store.option_priority(i), cfg.alpha);
        sa += std::pow(store.action_priority(i), cfg.alpha);
      }
      ASSERT_NEAR(store.option_total(), so, 1e-9);
      ASSERT_NEAR(store.action_total(), sa, 1e-9);
    }
  }
}

TEST(Replay, SixteenItemSamplingLaw) {
  ReplayConfig cfg = small(16);
  cfg.alpha = 0.6;
  PrioritizedStore store(cfg);
  std::vector<double> p(16);
  for (int i = 0; i < 16; ++i) {
    store.push(tagged(i));
    p[static_cast<std::size_t>(i)] = 0.05 * (i + 1) + (i % 3 == 0 ? 1.0 : 0.0);
  }
  for (std::size_t i = 0; i < 16; ++i) set_option_priority(store, i, p[i]);
  double z = 0;
  for (double x : p) z += std::pow(x, cfg.alpha);
  Rng rng(77);
  const long n = 100000;
  std::vector<long> counts(16, 0);
  for (long drawn = 0; drawn < n; drawn += 1000)
    for (const auto& s : store.sample(1000, ReplayLevel::OPTION, rng)) ++counts[s.index];
  for (std::size_t i = 0; i < 16; ++i)
    EXPECT_TRUE(oracle::within_4_sigma(counts[i], n, std::pow(p[i], cfg.alpha) / z)) << "item " << i;
}

TEST(Replay, TwoItemProportionalLaw) {
  ReplayConfig cfg = small(2);
  cfg.alpha = 1.0;
  PrioritizedStore store(cfg);
  store.push(tagged(0));
  store.push(tagged(1));
  set_option_priority(store, 0, 1.0);
  set_option_priority(store, 1, 3.0);
  Rng rng(8);
  long second = 0;
  for (const auto& s : store.sample(100000, ReplayLevel::OPTION, rng)) second += s.index == 1;
  EXPECT_NEAR(second / 100000.0, 0.75, 0.02);
}

TEST(Replay, AlphaZeroIsUniform) {
  ReplayConfig cfg = small(4);
  cfg.alpha = 0.0;
  PrioritizedStore store(cfg);
  for (int i = 0; i < 4; ++i) store.push(tagged(i));
  store.update_priorities({0, 1, 2, 3}, {0.01, 1, 5, 50}, {0, 0, 0, 0});
  Rng rng(9);
  std::vector<long> counts(4, 0);
  for (const auto& s : store.sample(100000, ReplayLevel::OPTION, rng)) ++counts[s.index];
  for (long c : counts) EXPECT_TRUE(oracle::within_4_sigma(c, 100000, 0.25));
}

TEST(Replay, ActionLevelSamplesActionTree) {
  ReplayConfig cfg = small(2);
  cfg.alpha = 1.0;
  PrioritizedStore store(cfg);
  store.push(tagged(0));
  store.push(tagged(1));
  // Option priorities favour item 0, action priorities item 1.
  store.update_priorities({0, 1}, {3.0, 0.001}, {3.0, 2.0});
  Rng rng(10);
  long second_o = 0, second_a = 0;
  for (const auto& s : store.sample(20000, ReplayLevel::OPTION, rng)) second_o += s.index == 1;
  for (const auto& s : store.sample(20000, ReplayLevel::ACTION, rng)) second_a += s.index == 1;
  EXPECT_LT(second_o, 200);
  EXPECT_GT(second_a, 19800);
}

TEST(Replay, ImportanceWeightsAreBounded) {
  ReplayConfig cfg = small(32);
  PrioritizedStore store(cfg);
  Rng rng(11);
  for (int i = 0; i < 32; ++i) store.push(tagged(i));
  for (std::size_t i = 0; i < 32; ++i) set_option_priority(store, i, rng.uniform(0.01, 4.0));
  for (int round = 0; round < 50; ++round) {
    const auto batch = store.sample(64, ReplayLevel::OPTION, rng);
    // Weights are normalized by the batch maximum, which belongs to the
    // least likely item drawn.
    double least_p = 1e300;
    for (const auto& s : batch) least_p = std::min(least_p, store.option_tree().leaf(s.index));
    for (const auto& s : batch) {
      EXPECT_GT(s.is_weight, 0.0);
      EXPECT_LE(s.is_weight, 1.0);
      if (store.option_tree().leaf(s.index) == least_p) {
        EXPECT_EQ(s.is_weight, 1.0);
      }
    }
  }
}

TEST(Replay, ImportanceWeightFormula) {
  ReplayConfig cfg = small(2);
  cfg.alpha = 1.0;
  cfg.beta = 0.4;
  PrioritizedStore store(cfg);
  store.push(tagged(0));
  store.push(tagged(1));
  set_option_priority(store, 0, 1.0);
  set_option_priority(store, 1, 3.0);
  Rng rng(12);
  const auto batch = store.sample(200, ReplayLevel::OPTION, rng);
  // w_i proportional to (N P_i)^-beta, normalised by the rarer item's weight.
  const double w0 = std::pow(2 * 0.25, -0.4), w1 = std::pow(2 * 0.75, -0.4);
  for (const auto& s : batch) EXPECT_NEAR(s.is_weight, (s.index == 0 ? w0 : w1) / w0, 1e-12);
}

TEST(Replay, UniformModeIgnoresPriorities) {
  PrioritizedStore store(small(4, ReplayMode::UNIFORM));
  for (int i = 0; i < 4; ++i) store.push(tagged(i));
  store.update_priorities({0, 1, 2, 3}, {0.001, 0.001, 0.001, 100}, {0, 0, 0, 0});
  Rng rng(13);
  std::vector<long> counts(4, 0);
  for (const auto& s : store.sample(100000, ReplayLevel::ACTION, rng)) {
    ++counts[s.index];
    EXPECT_EQ(s.is_weight, 1.0);
  }
  for (long c : counts) EXPECT_TRUE(oracle::within_4_sigma(c, 100000, 0.25));
}

TEST(Replay, SingleModeUsesOptionPrioritiesForBothLevels) {
  ReplayConfig cfg = small(2, ReplayMode::SINGLE);
  cfg.alpha = 1.0;
  PrioritizedStore store(cfg);
  store.push(tagged(0));
  store.push(tagged(1));
  store.update_priorities({0, 1}, {3.0, 1.0}, {0.0, 5.0});
  Rng rng(14);
  long first = 0;
  for (const auto& s : store.sample(100000, ReplayLevel::ACTION, rng)) first += s.index == 0;
  EXPECT_NEAR(first / 100000.0, 0.75, 0.01);
}

TEST(Replay, StatsCsvCountsEveryItemOnce) {
  PrioritizedStore store(small(10));
  for (int i = 0; i < 7; ++i) store.push(tagged(i));
  std::ostringstream out;
  store.write_stats_csv(out, 5);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "level,bin_low,bin_high,count");
  long option_total = 0, action_total = 0;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto last = line.rfind(',');
    const long c = std::stol(line.substr(last + 1));
    if (line.rfind("option", 0) == 0) option_total += c;
    if (line.rfind("action", 0) == 0) action_total += c;
    if (line.rfind("size", 0) == 0) {
      EXPECT_EQ(c, 7);
    }
  }
  EXPECT_EQ(rows, 11);
  EXPECT_EQ(option_total, 7);
  EXPECT_EQ(action_total, 7);
}

TEST(Replay, ConfigValidation) {
  ReplayConfig c;
  c.beta = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ReplayConfig{};
  c.epsilon_priority = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ReplayConfig{};
  c.capacity = 0;
  EXPECT_THROW(PrioritizedStore{c}, ConfigError);
}
