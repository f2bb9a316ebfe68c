#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrl/agent.hpp"
#include "hrl/dense_net.hpp"
#include "hrl/driving_env.hpp"
#include "hrl/option.hpp"
#include "hrl/replay.hpp"

namespace hrl {

enum class RuleId : std::uint8_t { RULE1 = 1, RULE2 = 2, RULE3 = 3, RULE4 = 4 };

/// Option choice of the hand-written rules.
///   RULE1  always FFV
///   RULE2  always SSL
///   RULE3  FFV while the front vehicle is short of the stop-line
///   RULE4  FFV while the front vehicle is the tighter constraint (d_dc > d_fc)
inline OptionId rule_option(const StateVector& s, RuleId rule, double car_length) {
  switch (rule) {
    case RuleId::RULE1: return OptionId::FFV;
    case RuleId::RULE2: return OptionId::SSL;
    case RuleId::RULE3: return s.d_d > s.d_f + car_length ? OptionId::FFV : OptionId::SSL;
    case RuleId::RULE4: return s.d_dc > s.d_fc ? OptionId::FFV : OptionId::SSL;
  }
  return OptionId::SSL;
}

/// Proportional longitudinal controller shared by the rule policies: tracks
/// a standstill point d0 behind the front vehicle (FFV) or on the stop-line
/// (SSL). A negative chase margin on the tracked target forces full braking.
struct GapController {
  double k_distance = 0.5;  // s^-2
  double k_speed = 1.0;     // s^-1
  double d0 = 5.0;

  double command(const StateVector& s, OptionId option) const {
    if (option == OptionId::SSL) {
      if (s.d_dc < 0.0) return -std::numeric_limits<double>::infinity();
      return k_distance * s.d_d - k_speed * s.v_e;
    }
    if (s.d_fc < 0.0) return -std::numeric_limits<double>::infinity();
    return k_distance * (s.d_f - d0) + k_speed * (s.v_f - s.v_e);
  }
};

/// Largest table entry not above `accel`; the lowest entry when all are above.
inline ActionId quantize_accel(double accel, const std::vector<double>& table) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < table.size(); ++i)
    if (table[i] <= accel) best = i;
  return ActionId{best};
}

inline ActionId rule_action(const StateVector& s, OptionId option, const GapController& ctl,
                            const std::vector<double>& table) {
  return quantize_accel(ctl.command(s, option), table);
}

class RulePolicy {
 public:
  RulePolicy(RuleId rule, const EnvConfig& env, std::vector<double> table)
      : rule_(rule), car_length_(env.car_length), table_(std::move(table)) {
    ctl_.d0 = env.d0;
  }

  RuleId rule() const { return rule_; }
  const GapController& controller() const { return ctl_; }

  Decision decide(const StateVector& s, double /*epsilon*/, Rng& /*rng*/) const {
    Decision d;
    d.option = rule_option(s, rule_, car_length_);
    d.action = rule_action(s, d.option, ctl_, table_);
    d.accel = table_[d.action.index];
    d.attention.fill(1.0 / StateVector::kSize);
    return d;
  }

 private:
  RuleId rule_;
  double car_length_;
  std::vector<double> table_;
  GapController ctl_;
};

/// Non-hierarchical Double DQN over the same action table. Trained on the
/// task reward, which the harness stores in Transition::r_option.
class FlatDdqnAgent {
 public:
  static constexpr int kStateDim = static_cast<int>(StateVector::kSize);

  FlatDdqnAgent() = default;

  FlatDdqnAgent(AgentConfig cfg, StateEncoder encoder, std::uint64_t seed) : cfg_(std::move(cfg)), encoder_(encoder) {
    cfg_.validate();
    Rng rng(mix_seed(seed, 0xf1a7));
    std::vector<int> sizes{kStateDim};
    sizes.insert(sizes.end(), cfg_.hidden_sizes.begin(), cfg_.hidden_sizes.end());
    sizes.push_back(static_cast<int>(cfg_.action_count()));
    q_ = DenseNet::make(sizes, Activation::RELU, Activation::LINEAR, rng);
    q_target_ = q_;
  }

  const AgentConfig& config() const { return cfg_; }
  DenseNet& q_net() { return q_; }
  DenseNet& q_target_net() { return q_target_; }
  const DenseNet& q_net() const { return q_; }

  Vector action_values(const StateVector& s) const { return q_.predict(encoder_.encode(s)); }

  Decision decide(const StateVector& s, double epsilon, Rng& rng) const {
    Decision d;
    if (epsilon > 0.0 && rng.uniform() < epsilon) d.action = ActionId{rng.index(cfg_.action_count())};
    else d.action = ActionId{argmax_lowest(action_values(s))};
    d.accel = cfg_.action_table[d.action.index];
    d.attention.fill(1.0 / StateVector::kSize);
    return d;
  }

  /// Y = r + gamma * Q_target(s', argmax_a Q(s', a)).
  double target(const Transition& t, double gamma) const {
    const double r = cfg_.reward_scale * t.r_option;
    if (t.terminal) return r;
    const Vector next = encoder_.encode(t.next_state);
    const std::size_t best = argmax_lowest(q_.predict(next));
    return r + gamma * q_target_.predict(next)[static_cast<Eigen::Index>(best)];
  }

  /// Uses the option-level weights; TD errors are reported for both levels.
  TdErrors train_batch(const std::vector<WeightedTransition>& batch) {
    if (batch.empty()) throw std::invalid_argument("train_batch: empty batch");
    const auto n = static_cast<Eigen::Index>(batch.size());
    Matrix s(kStateDim, n), s_next(kStateDim, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      s.col(i) = encoder_.encode(batch[static_cast<std::size_t>(i)].transition->state);
      s_next.col(i) = encoder_.encode(batch[static_cast<std::size_t>(i)].transition->next_state);
    }
    const Matrix q_next = q_.predict_batch(s_next);
    const Matrix q_next_target = q_target_.predict_batch(s_next);
    const Matrix q = q_.forward_batch(s);
    Matrix g = Matrix::Zero(q.rows(), n);
    double count = 0.0;
    for (const auto& e : batch) count += e.is_weight_o != 0.0 ? 1.0 : 0.0;
    count = std::max(count, 1.0);
    TdErrors td;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& e = batch[static_cast<std::size_t>(i)];
      const auto best = static_cast<Eigen::Index>(argmax_lowest(q_next.col(i)));
      const double y = cfg_.reward_scale * e.transition->r_option +
                       (e.transition->terminal ? 0.0 : cfg_.gamma * q_next_target(best, i));
      const auto a = static_cast<Eigen::Index>(e.transition->action.index);
      const double delta = q(a, i) - y;
      td.option.push_back(std::abs(delta));
      g(a, i) = 2.0 * e.is_weight_o * cfg_.clip_td(delta) / count;
    }
    td.action = td.option;
    q_.sgd_step(q_.backward_batch(g), cfg_.lr_action);
    return td;
  }

  void sync_targets() { q_target_.copy_weights_from(q_); }

  void write(std::ostream& out) const {
    out << "FLAT-DDQN 1 nets=q,q_target\n";
    std::ostringstream os;
    os.precision(17);
    os << "config gamma=" << cfg_.gamma << " reward_scale=" << cfg_.reward_scale << " v_scale=" << encoder_.v_scale << " a_scale=" << encoder_.a_scale
       << " jerk_scale=" << encoder_.jerk_scale << " action_table=";
    for (std::size_t i = 0; i < cfg_.action_table.size(); ++i) os << (i ? "," : "") << cfg_.action_table[i];
    out << os.str() << '\n';
    q_.write(out);
    q_target_.write(out);
  }

  static FlatDdqnAgent read(std::istream& in) {
    std::string manifest, config;
    std::getline(in, manifest);
    if (manifest != "FLAT-DDQN 1 nets=q,q_target")
      throw std::runtime_error("flat checkpoint: unexpected manifest '" + manifest + "'");
    std::getline(in, config);
    std::istringstream is(config);
    std::string word, text;
    is >> word;
    if (word != "config") throw std::runtime_error("flat checkpoint: missing config line");
    while (is >> word) text += word + "\n";
    const auto kv = KeyValueFile::parse_string(text);
    FlatDdqnAgent agent;
    kv.read("gamma", agent.cfg_.gamma);
    kv.read("reward_scale", agent.cfg_.reward_scale);
    kv.read("v_scale", agent.encoder_.v_scale);
    kv.read("a_scale", agent.encoder_.a_scale);
    kv.read("jerk_scale", agent.encoder_.jerk_scale);
    kv.read("action_table", agent.cfg_.action_table);
    agent.q_ = DenseNet::read(in);
    agent.q_target_ = DenseNet::read(in);
    if (agent.q_.out_dim() != static_cast<int>(agent.cfg_.action_count()) || agent.q_.in_dim() != kStateDim)
      throw std::runtime_error("flat checkpoint: network shapes do not match the manifest config");
    return agent;
  }

 private:
  AgentConfig cfg_;
  StateEncoder encoder_;
  DenseNet q_, q_target_;
};

}  // namespace hrl
