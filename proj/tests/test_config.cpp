#include <gtest/gtest.h>

#include <sstream>

#include "hrl/config_file.hpp"
#include "hrl/harness.hpp"
#include "hrl/random.hpp"

using namespace hrl;

TEST(KeyValueFile, ParsesCommentsAndWhitespace) {
  auto kv = KeyValueFile::parse_string("# header\n dt = 0.2  # inline\n\nseed=7\n");
  EnvConfig cfg;
  cfg.load(kv);
  EXPECT_DOUBLE_EQ(cfg.dt, 0.2);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_TRUE(kv.unused_keys().empty());
}

TEST(KeyValueFile, RejectsDuplicateKeys) {
  EXPECT_THROW(KeyValueFile::parse_string("dt = 0.1\ndt = 0.2\n"), ConfigError);
}

TEST(KeyValueFile, RejectsMissingEquals) {
  EXPECT_THROW(KeyValueFile::parse_string("dt 0.1\n"), ConfigError);
}

TEST(KeyValueFile, RejectsMalformedNumbers) {
  auto kv = KeyValueFile::parse_string("dt = fast\ntimeout_steps = 1.5\n");
  double dt = 0;
  int steps = 0;
  EXPECT_THROW(kv.read("dt", dt), ConfigError);
  EXPECT_THROW(kv.read("timeout_steps", steps), ConfigError);
}

TEST(KeyValueFile, ReadsLists) {
  auto kv = KeyValueFile::parse_string("action_table = -3, 0, 1.5\nhidden_sizes = 16,8\n");
  AgentConfig a;
  a.load(kv);
  EXPECT_EQ(a.action_table, (std::vector<double>{-3.0, 0.0, 1.5}));
  EXPECT_EQ(a.hidden_sizes, (std::vector<int>{16, 8}));
}

TEST(KeyValueFile, MissingFileIsConfigError) {
  EXPECT_THROW(KeyValueFile::load("/nonexistent/run.cfg"), ConfigError);
}

TEST(RunConfig, ReadsEverySectionFromOneFile) {
  auto kv = KeyValueFile::parse_string(
      "epochs = 12\neval_every = 3\npolicy = hrl2\ndt = 0.2\nsigma3 = 80\ngamma = 0.9\n"
      "replay_alpha = 0.5\np_no_front = 0.5\n");
  auto rc = RunConfig::from_file(kv);
  EXPECT_EQ(rc.epochs, 12);
  EXPECT_EQ(rc.eval_every, 3);
  EXPECT_EQ(rc.policy, PolicyKind::HRL2);
  EXPECT_DOUBLE_EQ(rc.env.dt, 0.2);
  EXPECT_DOUBLE_EQ(rc.reward.sigma3, 80.0);
  EXPECT_DOUBLE_EQ(rc.agent.gamma, 0.9);
  EXPECT_DOUBLE_EQ(rc.replay.alpha, 0.5);
  EXPECT_DOUBLE_EQ(rc.mix.p_no_front, 0.5);
}

TEST(RunConfig, RejectsUnknownKey) {
  EXPECT_THROW(RunConfig::from_file(KeyValueFile::parse_string("epoch = 3\n")), ConfigError);
}

TEST(RunConfig, RejectsInvalidValues) {
  EXPECT_THROW(RunConfig::from_file(KeyValueFile::parse_string("eval_every = 0\n")), ConfigError);
  EXPECT_THROW(RunConfig::from_file(KeyValueFile::parse_string("dt = -1\n")), ConfigError);
  EXPECT_THROW(RunConfig::from_file(KeyValueFile::parse_string("sigma1 = 0\n")), ConfigError);
  EXPECT_THROW(RunConfig::from_file(KeyValueFile::parse_string("gamma = 1\n")), ConfigError);
  EXPECT_THROW(RunConfig::from_file(KeyValueFile::parse_string("action_table = 1, 0\n")), ConfigError);
  EXPECT_THROW(RunConfig::from_file(KeyValueFile::parse_string("replay_beta = 2\n")), ConfigError);
  EXPECT_THROW(RunConfig::from_file(KeyValueFile::parse_string("policy = rule9\n")), ConfigError);
  EXPECT_THROW(RunConfig::from_file(KeyValueFile::parse_string("stop_line_pos = 400\n")), ConfigError);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(Rng, UniformStaysInUnitInterval) {
  Rng r(5);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, IndexCoversRangeEvenly) {
  Rng r(11);
  const int n = 6, draws = 60000;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < draws; ++i) ++counts[r.index(n)];
  const double p = 1.0 / n, sigma = std::sqrt(draws * p * (1 - p));
  for (int c : counts) EXPECT_NEAR(c, draws * p, 4 * sigma);
}

TEST(Rng, MixSeedSeparatesSalts) {
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
  EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
  EXPECT_EQ(mix_seed(3, 4), mix_seed(3, 4));
}
