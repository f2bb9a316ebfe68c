#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "hrl/agent.hpp"
#include "hrl/baselines.hpp"
#include "hrl/config_file.hpp"
#include "hrl/driving_env.hpp"
#include "hrl/replay.hpp"
#include "hrl/reward.hpp"

namespace hrl {

/// Feature toggles distinguishing the hierarchical variants.
struct VariantFlags {
  bool hybrid_reward = true;
  ReplayMode replay = ReplayMode::HIERARCHICAL;
  bool attention = true;
};

enum class PolicyKind : std::uint8_t { RULE1, RULE2, RULE3, RULE4, FLAT_DDQN, HRL0, HRL1, HRL2, HRL3, HYBRID_HRL };

inline constexpr std::array<std::string_view, 10> kPolicyNames = {
    "rule1", "rule2", "rule3", "rule4", "flat-ddqn", "hrl0", "hrl1", "hrl2", "hrl3", "hybrid-hrl"};

inline PolicyKind parse_policy(std::string_view name) {
  for (std::size_t i = 0; i < kPolicyNames.size(); ++i)
    if (kPolicyNames[i] == name) return static_cast<PolicyKind>(i);
  throw ConfigError("unknown policy '" + std::string(name) + "'");
}

inline std::string_view to_string(PolicyKind k) { return kPolicyNames[static_cast<std::size_t>(k)]; }

inline bool is_rule(PolicyKind k) { return k <= PolicyKind::RULE4; }
inline bool is_hierarchical(PolicyKind k) { return k >= PolicyKind::HRL0; }

inline RuleId rule_of(PolicyKind k) { return static_cast<RuleId>(static_cast<int>(k) + 1); }

/// Table of which components each hierarchical variant enables.
inline VariantFlags variant_flags(PolicyKind k) {
  switch (k) {
    case PolicyKind::HRL0: return {false, ReplayMode::UNIFORM, false};
    case PolicyKind::HRL1: return {true, ReplayMode::UNIFORM, false};
    case PolicyKind::HRL2: return {true, ReplayMode::HIERARCHICAL, false};
    case PolicyKind::HRL3: return {true, ReplayMode::UNIFORM, true};
    case PolicyKind::HYBRID_HRL: return {true, ReplayMode::HIERARCHICAL, true};
    case PolicyKind::FLAT_DDQN: return {false, ReplayMode::SINGLE, false};
    default: throw std::invalid_argument("variant_flags: not a learned policy");
  }
}

struct RunConfig {
  int epochs = 5000;
  int eval_every = 250;
  int eval_episodes = 100;
  int train_steps = 32;
  std::uint64_t run_seed = 1;
  std::uint64_t eval_seed_base = 1'000'000'000;
  PolicyKind policy = PolicyKind::HYBRID_HRL;
  EnvConfig env;
  ScenarioMix mix;
  RewardConfig reward;
  AgentConfig agent;
  ReplayConfig replay;

  void validate() const {
    if (epochs < 0) throw ConfigError("run config: epochs must be non-negative");
    if (eval_every < 1) throw ConfigError("run config: eval_every must be at least 1");
    if (eval_episodes < 1) throw ConfigError("run config: eval_episodes must be at least 1");
    if (train_steps < 1) throw ConfigError("run config: train_steps must be at least 1");
    env.validate();
    mix.validate();
    reward.validate();
    agent.validate();
    replay.validate();
  }

  /// Reads every section from one flat file; unknown keys are rejected.
  static RunConfig from_file(const KeyValueFile& kv) {
    RunConfig rc;
    kv.read("epochs", rc.epochs);
    kv.read("eval_every", rc.eval_every);
    kv.read("eval_episodes", rc.eval_episodes);
    kv.read("train_steps", rc.train_steps);
    kv.read("run_seed", rc.run_seed);
    kv.read("eval_seed_base", rc.eval_seed_base);
    std::string policy(to_string(rc.policy));
    kv.read("policy", policy);
    rc.policy = parse_policy(policy);
    rc.env.load(kv);
    rc.mix.load(kv);
    rc.reward.load(kv);
    rc.agent.load(kv);
    rc.replay.load(kv);
    if (auto unused = kv.unused_keys(); !unused.empty()) throw ConfigError("unknown config key '" + unused.front() + "'");
    rc.validate();
    return rc;
  }
};

struct EpisodeReport {
  TerminalKind outcome = TerminalKind::NONE;
  int steps = 0;
  double sum_r_option = 0.0;
  double sum_r_action = 0.0;
  double sum_r_task = 0.0;
  double unsmoothness_penalty_total = 0.0;
  double unsafe_penalty_total = 0.0;
  std::vector<std::array<double, StateVector::kSize>> attention;
};

/// One row of an episode trace.
struct TraceRow {
  int step;
  double x_e;
  StateVector state;  // state the decision was taken in
  Decision decision;
  double r_o, r_a;
  TerminalKind terminal;
};

using Policy = std::function<Decision(const StateVector&, double, Rng&)>;

template <typename P>
Policy as_policy(const P& p) {
  return [&p](const StateVector& s, double eps, Rng& rng) { return p.decide(s, eps, rng); };
}

/// Runs one episode. Flat policies (no option level) report r_task for both
/// reward sums.
inline EpisodeReport run_episode(const Policy& policy, DrivingEnv& env, std::uint64_t episode_seed,
                                 const RewardConfig& reward, bool hierarchical, double epsilon, Rng& rng,
                                 bool keep_attention = false, std::vector<TraceRow>* trace = nullptr) {
  EpisodeReport rep;
  StateVector s = env.reset(episode_seed);
  while (!env.done()) {
    const double x_e = env.ego().position;
    const Decision d = policy(s, epsilon, rng);
    const StepOutcome out = env.step(d.accel);
    const RewardBreakdown rb = hybrid_reward(out.state, d.option, out, reward);
    const double r_o = hierarchical ? rb.r_option : rb.r_task;
    const double r_a = hierarchical ? rb.r_action : rb.r_task;
    rep.sum_r_option += r_o;
    rep.sum_r_action += r_a;
    rep.sum_r_task += rb.r_task;
    rep.unsmoothness_penalty_total += rb.unsmoothness();
    rep.unsafe_penalty_total += rb.unsafe();
    if (keep_attention) rep.attention.push_back(d.attention);
    if (trace != nullptr) trace->push_back({out.step_index - 1, x_e, s, d, r_o, r_a, out.terminal_kind});
    rep.steps = out.step_index;
    rep.outcome = out.terminal_kind;
    s = out.state;
  }
  return rep;
}

struct EvalSummary {
  int episodes = 0;
  std::array<int, 5> counts{};  // indexed by TerminalKind
  double mean_r_option = 0.0;
  double mean_r_action = 0.0;
  double mean_r_task = 0.0;
  double mean_steps = 0.0;
  double mean_unsmoothness = 0.0;
  double mean_unsafe = 0.0;
  std::vector<EpisodeReport> reports;

  double rate(TerminalKind k) const {
    return episodes ? static_cast<double>(counts[static_cast<std::size_t>(k)]) / episodes : 0.0;
  }
  double success() const { return rate(TerminalKind::SUCCESS); }
  double collision() const { return rate(TerminalKind::COLLISION); }
  double not_stop() const { return rate(TerminalKind::NOT_STOP); }
  double timeout() const { return rate(TerminalKind::TIMEOUT); }
};

/// Worker count for evaluation: HRL_THREADS when set, else hardware concurrency.
inline unsigned eval_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HRL_THREADS")) {
    unsigned cap = 0;
    const std::string_view sv(env);
    if (std::from_chars(sv.data(), sv.data() + sv.size(), cap).ec == std::errc{} && cap > 0) n = std::min(n, cap);
  }
  return n;
}

/// Greedy evaluation on seeds seed_base .. seed_base + n - 1. Each worker owns
/// its environment; results are merged in seed order.
inline EvalSummary evaluate(const Policy& policy, int n_episodes, std::uint64_t seed_base, const EnvConfig& env_cfg,
                            const ScenarioMix& mix, const RewardConfig& reward, bool hierarchical,
                            unsigned threads = eval_threads()) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate: need at least one episode");
  std::vector<EpisodeReport> reports(static_cast<std::size_t>(n_episodes));
  auto work = [&](unsigned worker, unsigned stride) {
    DrivingEnv env(env_cfg, mix);
    Rng rng(0);
    for (std::size_t i = worker; i < reports.size(); i += stride)
      reports[i] = run_episode(policy, env, seed_base + i, reward, hierarchical, 0.0, rng);
  };
  threads = std::clamp(threads, 1u, static_cast<unsigned>(n_episodes));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }

  EvalSummary sum;
  sum.episodes = n_episodes;
  for (const auto& r : reports) {
    ++sum.counts[static_cast<std::size_t>(r.outcome)];
    sum.mean_r_option += r.sum_r_option;
    sum.mean_r_action += r.sum_r_action;
    sum.mean_r_task += r.sum_r_task;
    sum.mean_steps += r.steps;
    sum.mean_unsmoothness += r.unsmoothness_penalty_total;
    sum.mean_unsafe += r.unsafe_penalty_total;
  }
  const double n = n_episodes;
  sum.mean_r_option /= n;
  sum.mean_r_action /= n;
  sum.mean_r_task /= n;
  sum.mean_steps /= n;
  sum.mean_unsmoothness /= n;
  sum.mean_unsafe /= n;
  sum.reports = std::move(reports);
  return sum;
}

struct LogRow {
  int epoch;
  double success, collision, not_stop, timeout;
  double mean_ro, mean_ra, mean_steps;
};

inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline void write_log_csv(std::ostream& out, const std::vector<LogRow>& rows) {
  out << "epoch,success,collision,not_stop,timeout,mean_ro,mean_ra,mean_steps\n";
  for (const auto& r : rows)
    out << r.epoch << ',' << format_number(r.success) << ',' << format_number(r.collision) << ','
        << format_number(r.not_stop) << ',' << format_number(r.timeout) << ',' << format_number(r.mean_ro) << ','
        << format_number(r.mean_ra) << ',' << format_number(r.mean_steps) << '\n';
}

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "step,x_e,v_e,a_e,j_e,d_f,v_f,d_d,option,action,r_o,r_a,terminal\n";
  for (const auto& r : rows)
    out << r.step << ',' << format_number(r.x_e) << ',' << format_number(r.state.v_e) << ','
        << format_number(r.state.a_e) << ',' << format_number(r.state.j_e) << ',' << format_number(r.state.d_f)
        << ',' << format_number(r.state.v_f) << ',' << format_number(r.state.d_d) << ','
        << to_string(r.decision.option) << ',' << r.decision.action.index << ',' << format_number(r.r_o) << ','
        << format_number(r.r_a) << ',' << to_string(r.terminal) << '\n';
}

template <typename Learner>
struct TrainResult {
  Learner agent;
  std::vector<LogRow> log;
};

namespace detail {

/// Replay procedure run once per epoch: `steps` mini-batch updates, then a
/// target sync.
template <typename Learner>
void replay_train(Learner& agent, PrioritizedStore& store, int steps, Rng& rng) {
  const auto k = static_cast<std::size_t>(store.config().batch_size);
  if (store.size() < k) return;
  std::vector<WeightedTransition> batch;
  std::vector<std::size_t> indices;
  for (int step = 0; step < steps; ++step) {
    batch.clear();
    indices.clear();
    if (store.config().mode == ReplayMode::HIERARCHICAL) {
      // Independent option and action mini-batches; each trains only its level.
      for (const auto& s : store.sample(k, ReplayLevel::OPTION, rng)) {
        batch.push_back({s.transition, s.is_weight, 0.0});
        indices.push_back(s.index);
      }
      for (const auto& s : store.sample(k, ReplayLevel::ACTION, rng)) {
        batch.push_back({s.transition, 0.0, s.is_weight});
        indices.push_back(s.index);
      }
    } else {
      for (const auto& s : store.sample(k, ReplayLevel::OPTION, rng)) {
        batch.push_back({s.transition, s.is_weight, s.is_weight});
        indices.push_back(s.index);
      }
    }
    const TdErrors td = agent.train_batch(batch);
    if (store.config().mode != ReplayMode::UNIFORM) store.update_priorities(indices, td.option, td.action);
  }
  agent.sync_targets();
}

}  // namespace detail

/// Training loop: one exploring episode per epoch, one replay-training call,
/// and a greedy evaluation every `eval_every` epochs.
template <typename Learner>
TrainResult<Learner> train_learner(const RunConfig& run, Learner agent, const VariantFlags& flags,
                                   bool hierarchical_policy,
                                   const std::function<void(const LogRow&)>& on_log = {}) {
  run.validate();
  ReplayConfig rcfg = run.replay;
  rcfg.mode = flags.replay;
  PrioritizedStore store(rcfg);
  DrivingEnv env(run.env, run.mix);
  Rng explore(mix_seed(run.run_seed, 0xe491));
  Rng replay_rng(mix_seed(run.run_seed, 0x4e91a7));

  TrainResult<Learner> result{std::move(agent), {}};
  for (int epoch = 0; epoch < run.epochs; ++epoch) {
    const double eps = run.agent.epsilon_at(epoch, run.epochs);
    StateVector s = env.reset(mix_seed(run.run_seed, static_cast<std::uint64_t>(epoch)));
    while (!env.done()) {
      const Decision d = result.agent.decide(s, eps, explore);
      const StepOutcome out = env.step(d.accel);
      const RewardBreakdown rb = hybrid_reward(out.state, d.option, out, run.reward);
      Transition t;
      t.state = s;
      t.option = d.option;
      t.action = d.action;
      t.r_option = flags.hybrid_reward ? rb.r_option : rb.r_task;
      t.r_action = flags.hybrid_reward ? rb.r_action : rb.r_task;
      t.next_state = out.state;
      t.terminal = out.terminal();
      store.push(t);
      s = out.state;
    }
    detail::replay_train(result.agent, store, run.train_steps, replay_rng);

    if (epoch % run.eval_every == 0) {
      const auto summary = evaluate(as_policy(result.agent), run.eval_episodes, run.eval_seed_base, run.env, run.mix,
                                    run.reward, hierarchical_policy);
      LogRow row{epoch,
                 summary.success(),
                 summary.collision(),
                 summary.not_stop(),
                 summary.timeout(),
                 summary.mean_r_option,
                 summary.mean_r_action,
                 summary.mean_steps};
      result.log.push_back(row);
      if (on_log) on_log(row);
    }
  }
  return result;
}

inline TrainResult<HrlAgent> train_hrl(const RunConfig& run, const std::function<void(const LogRow&)>& on_log = {}) {
  const VariantFlags flags = variant_flags(run.policy);
  AgentConfig acfg = run.agent;
  acfg.use_attention = flags.attention;
  HrlAgent agent(acfg, StateEncoder::for_env(run.env), run.run_seed);
  return train_learner(run, std::move(agent), flags, true, on_log);
}

inline TrainResult<FlatDdqnAgent> train_flat(const RunConfig& run,
                                             const std::function<void(const LogRow&)>& on_log = {}) {
  FlatDdqnAgent agent(run.agent, StateEncoder::for_env(run.env), run.run_seed);
  return train_learner(run, std::move(agent), variant_flags(PolicyKind::FLAT_DDQN), false, on_log);
}

/// Per-step attention weights for one greedy episode.
struct AttentionRow {
  int step;
  std::array<double, StateVector::kSize> weights;
  StateVector state;
  OptionId option;
};

inline std::vector<AttentionRow> attention_trace(const HrlAgent& agent, const EnvConfig& env_cfg,
                                                 const ScenarioMix& mix, std::uint64_t episode_seed) {
  DrivingEnv env(env_cfg, mix);
  std::vector<AttentionRow> rows;
  StateVector s = env.reset(episode_seed);
  Rng rng(0);
  while (!env.done()) {
    const Decision d = agent.decide(s, 0.0, rng);
    rows.push_back({env.step_index(), d.attention, s, d.option});
    s = env.step(d.accel).state;
  }
  return rows;
}

inline void write_attention_csv(std::ostream& out, const std::vector<AttentionRow>& rows) {
  out << "step";
  for (auto name : kStateNames) out << ",w_" << name;
  out << ",d_f,d_fs,d_d,option\n";
  for (const auto& r : rows) {
    out << r.step;
    for (double w : r.weights) out << ',' << format_number(w);
    out << ',' << format_number(r.state.d_f) << ',' << format_number(r.state.d_fs()) << ','
        << format_number(r.state.d_d) << ',' << to_string(r.option) << '\n';
  }
}

}  // namespace hrl
