#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrl/config_file.hpp"
#include "hrl/dense_net.hpp"
#include "hrl/driving_env.hpp"
#include "hrl/option.hpp"
#include "hrl/random.hpp"
#include "hrl/replay.hpp"

namespace hrl {

struct AgentConfig {
  double gamma = 0.99;
  double lr_option = 0.03;
  double lr_action = 0.03;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  // Negative: decay over 60% of the training epochs.
  int epsilon_decay_epochs = -1;
  std::vector<double> action_table = {-4.0, -2.0, -1.0, 0.0, 1.0, 2.0};
  std::vector<int> hidden_sizes = {64, 64};
  int attention_hidden = 32;
  bool use_attention = true;
  // Rewards are multiplied by this before entering any bootstrap target.
  double reward_scale = 0.02;
  // Gradient of the squared TD loss uses the error clipped to +-td_clip
  // (0 disables clipping).
  double td_clip = 1.0;

  std::size_t action_count() const { return action_table.size(); }

  void validate() const {
    if (!(gamma > 0 && gamma < 1)) throw ConfigError("agent config: gamma must be in (0, 1)");
    if (!(lr_option >= 0 && lr_action >= 0)) throw ConfigError("agent config: learning rates must be non-negative");
    if (!(epsilon_start >= 0 && epsilon_start <= 1 && epsilon_end >= 0 && epsilon_end <= 1))
      throw ConfigError("agent config: epsilons must be in [0, 1]");
    if (epsilon_end > epsilon_start) throw ConfigError("agent config: epsilon_end exceeds epsilon_start");
    if (action_table.empty()) throw ConfigError("agent config: empty action table");
    for (std::size_t i = 1; i < action_table.size(); ++i)
      if (!(action_table[i] > action_table[i - 1]))
        throw ConfigError("agent config: action_table must be strictly increasing");
    if (hidden_sizes.empty()) throw ConfigError("agent config: need at least one hidden layer");
    for (int h : hidden_sizes)
      if (h <= 0) throw ConfigError("agent config: hidden sizes must be positive");
    if (attention_hidden <= 0) throw ConfigError("agent config: attention_hidden must be positive");
    if (!(reward_scale > 0)) throw ConfigError("agent config: reward_scale must be positive");
    if (!(td_clip >= 0)) throw ConfigError("agent config: td_clip must be non-negative");
  }

  void load(const KeyValueFile& kv) {
    kv.read("gamma", gamma);
    kv.read("lr_option", lr_option);
    kv.read("lr_action", lr_action);
    kv.read("epsilon_start", epsilon_start);
    kv.read("epsilon_end", epsilon_end);
    kv.read("epsilon_decay_epochs", epsilon_decay_epochs);
    kv.read("action_table", action_table);
    kv.read("hidden_sizes", hidden_sizes);
    kv.read("attention_hidden", attention_hidden);
    kv.read("reward_scale", reward_scale);
    kv.read("td_clip", td_clip);
  }

  /// TD error as it enters the gradient.
  double clip_td(double delta) const { return td_clip > 0 ? std::clamp(delta, -td_clip, td_clip) : delta; }

  /// Linear schedule from epsilon_start to epsilon_end.
  double epsilon_at(int epoch, int total_epochs) const {
    const int decay = epsilon_decay_epochs >= 0 ? epsilon_decay_epochs
                                                : static_cast<int>(0.6 * total_epochs);
    if (decay <= 0 || epoch >= decay) return epsilon_end;
    const double frac = static_cast<double>(epoch) / decay;
    return epsilon_start + (epsilon_end - epsilon_start) * frac;
  }
};

/// Fixed squashing of the raw observation into network inputs. Distances
/// and ratios span several decades, so they go through a signed log.
struct StateEncoder {
  double v_scale = 15.0;
  double a_scale = 4.0;
  double jerk_scale = 80.0;

  static StateEncoder for_env(const EnvConfig& cfg) {
    return {cfg.v_limit, cfg.a_max, 2.0 * cfg.a_max / cfg.dt};
  }

  static double slog(double x, double s) { return std::copysign(std::log1p(std::abs(x) / s), x); }

  Vector encode(const StateVector& s) const {
    Vector x(StateVector::kSize);
    x[StateVector::kVe] = s.v_e / v_scale;
    x[StateVector::kAe] = s.a_e / a_scale;
    x[StateVector::kJe] = std::clamp(s.j_e / jerk_scale, -1.0, 1.0);
    x[StateVector::kDf] = slog(s.d_f, 5.0) / 5.3;
    x[StateVector::kVf] = s.v_f / v_scale;
    x[StateVector::kAf] = s.a_f / a_scale;
    x[StateVector::kDfc] = slog(s.d_fc, 5.0) / 5.3;
    x[StateVector::kFr] = slog(s.fr, 1.0) / 5.3;
    x[StateVector::kDd] = slog(s.d_d, 1.0) / 5.0;
    x[StateVector::kDdc] = slog(s.d_dc, 1.0) / 5.0;
    x[StateVector::kDr] = std::clamp(slog(s.dr, 1.0) / 8.0, -1.5, 1.5);
    return x;
  }
};

/// One step's choice, with the attention weights that produced it.
struct Decision {
  OptionId option = OptionId::SSL;
  ActionId action;
  double accel = 0.0;
  std::array<double, StateVector::kSize> attention{};
};

/// Attention weights and the reconstructed state s^I = n * w * s (n elements).
struct AttendedState {
  Vector weights;
  Vector weighted;
};

/// Entry of a training batch: a stored transition and its importance
/// weights at the option and action level.
struct WeightedTransition {
  const Transition* transition;
  double is_weight_o;
  double is_weight_a;
};

struct TdErrors {
  std::vector<double> option;
  std::vector<double> action;
};

inline std::size_t argmax_lowest(const Vector& q) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < q.size(); ++i)
    if (q[i] > q[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  return best;
}

/// Option-value network Q^o, attention head, action-value network Q^a, and
/// target copies of both value networks.
class HrlAgent {
 public:
  static constexpr int kStateDim = static_cast<int>(StateVector::kSize);
  static constexpr int kConditionedDim = kStateDim + static_cast<int>(kOptionCount);

  HrlAgent() = default;

  HrlAgent(AgentConfig cfg, StateEncoder encoder, std::uint64_t seed) : cfg_(std::move(cfg)), encoder_(encoder) {
    cfg_.validate();
    Rng rng(mix_seed(seed, 0x51ed));
    auto sizes = [&](int in, int out) {
      std::vector<int> s{in};
      s.insert(s.end(), cfg_.hidden_sizes.begin(), cfg_.hidden_sizes.end());
      s.push_back(out);
      return s;
    };
    option_ = DenseNet::make(sizes(kStateDim, kOptionCount), Activation::RELU, Activation::LINEAR, rng);
    action_ = DenseNet::make(sizes(kConditionedDim, static_cast<int>(cfg_.action_count())), Activation::RELU,
                             Activation::LINEAR, rng);
    attention_ = DenseNet::make({kConditionedDim, cfg_.attention_hidden, kStateDim}, Activation::RELU,
                                Activation::SOFTMAX, rng);
    // Zero output layer: the head starts at uniform weights.
    attention_.layers().back().weights.setZero();
    option_target_ = option_;
    action_target_ = action_;
  }

  const AgentConfig& config() const { return cfg_; }
  const StateEncoder& encoder() const { return encoder_; }
  DenseNet& option_net() { return option_; }
  DenseNet& option_target_net() { return option_target_; }
  DenseNet& action_net() { return action_; }
  DenseNet& action_target_net() { return action_target_; }
  DenseNet& attention_net() { return attention_; }
  const DenseNet& option_net() const { return option_; }
  const DenseNet& option_target_net() const { return option_target_; }
  const DenseNet& action_net() const { return action_; }
  const DenseNet& action_target_net() const { return action_target_; }
  const DenseNet& attention_net() const { return attention_; }

  Vector option_values(const StateVector& s) const { return option_.predict(encoder_.encode(s)); }

  OptionId select_option(const StateVector& s, double epsilon, Rng& rng) const {
    if (epsilon > 0.0 && rng.uniform() < epsilon) return option_from_index(rng.index(kOptionCount));
    return option_from_index(argmax_lowest(option_values(s)));
  }

  AttendedState apply_attention(const StateVector& s, OptionId option) const {
    return attend(encoder_.encode(s), option);
  }

  Vector action_values(const Vector& weighted_state, OptionId option) const {
    return action_.predict(condition(weighted_state, option));
  }

  ActionId select_action(const Vector& weighted_state, OptionId option, double epsilon, Rng& rng) const {
    if (epsilon > 0.0 && rng.uniform() < epsilon) return ActionId{rng.index(cfg_.action_count())};
    return ActionId{argmax_lowest(action_values(weighted_state, option))};
  }

  Decision decide(const StateVector& s, double epsilon, Rng& rng) const {
    Decision d;
    d.option = select_option(s, epsilon, rng);
    const auto att = apply_attention(s, d.option);
    d.action = select_action(att.weighted, d.option, epsilon, rng);
    d.accel = cfg_.action_table[d.action.index];
    for (std::size_t i = 0; i < StateVector::kSize; ++i) d.attention[i] = att.weights[static_cast<Eigen::Index>(i)];
    return d;
  }

  /// Y^o = r^o + gamma * Q^o_target(s', argmax_o Q^o_online(s', o)).
  double option_target(const Transition& t, double gamma) const {
    const double r = cfg_.reward_scale * t.r_option;
    if (t.terminal) return r;
    const Vector next = encoder_.encode(t.next_state);
    const std::size_t best = argmax_lowest(option_.predict(next));
    return r + gamma * option_target_.predict(next)[static_cast<Eigen::Index>(best)];
  }

  /// Y^a = r^a + gamma * Q^a_target(s'^I, O*, A*), with O* from the online
  /// option net and A* from the online action net.
  double action_target(const Transition& t, double gamma) const {
    const double r = cfg_.reward_scale * t.r_action;
    if (t.terminal) return r;
    const Vector next = encoder_.encode(t.next_state);
    const OptionId o_star = option_from_index(argmax_lowest(option_.predict(next)));
    const Vector x = condition(attend(next, o_star).weighted, o_star);
    const std::size_t a_star = argmax_lowest(action_.predict(x));
    return r + gamma * action_target_.predict(x)[static_cast<Eigen::Index>(a_star)];
  }

  /// One importance-weighted gradient step on each level. Gradients are
  /// averaged over the entries whose weight at that level is non-zero.
  /// Returns absolute TD errors measured before the update.
  TdErrors train_batch(const std::vector<WeightedTransition>& batch) {
    if (batch.empty()) throw std::invalid_argument("train_batch: empty batch");
    const auto n = static_cast<Eigen::Index>(batch.size());
    Matrix s(kStateDim, n), s_next(kStateDim, n);
    Matrix onehot = Matrix::Zero(kOptionCount, n);
    Vector r_o(n), r_a(n), cont(n), w_o(n), w_a(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& e = batch[static_cast<std::size_t>(i)];
      const Transition& t = *e.transition;
      s.col(i) = encoder_.encode(t.state);
      s_next.col(i) = encoder_.encode(t.next_state);
      onehot(static_cast<Eigen::Index>(index_of(t.option)), i) = 1.0;
      r_o[i] = cfg_.reward_scale * t.r_option;
      r_a[i] = cfg_.reward_scale * t.r_action;
      cont[i] = t.terminal ? 0.0 : 1.0;
      w_o[i] = e.is_weight_o;
      w_a[i] = e.is_weight_a;
    }
    const double gamma = cfg_.gamma;

    // Bootstrap targets.
    const Matrix q_o_next = option_.predict_batch(s_next);
    const Matrix q_o_next_target = option_target_.predict_batch(s_next);
    Matrix onehot_next = Matrix::Zero(kOptionCount, n);
    Vector y_o(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto best = static_cast<Eigen::Index>(argmax_lowest(q_o_next.col(i)));
      onehot_next(best, i) = 1.0;
      y_o[i] = r_o[i] + gamma * cont[i] * q_o_next_target(best, i);
    }
    const Matrix x_next = stack(attend_batch(s_next, onehot_next), onehot_next);
    const Matrix q_a_next = action_.predict_batch(x_next);
    const Matrix q_a_next_target = action_target_.predict_batch(x_next);
    Vector y_a(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto best = static_cast<Eigen::Index>(argmax_lowest(q_a_next.col(i)));
      y_a[i] = r_a[i] + gamma * cont[i] * q_a_next_target(best, i);
    }

    TdErrors td;
    td.option.resize(batch.size());
    td.action.resize(batch.size());

    // Option level: L = w (Y - Q)^2.
    const Matrix q_o = option_.forward_batch(s);
    Matrix g_o = Matrix::Zero(q_o.rows(), n);
    const double n_o = std::max(1.0, static_cast<double>((w_o.array() != 0.0).count()));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto o = static_cast<Eigen::Index>(index_of(batch[static_cast<std::size_t>(i)].transition->option));
      const double delta = q_o(o, i) - y_o[i];
      td.option[static_cast<std::size_t>(i)] = std::abs(delta);
      g_o(o, i) = 2.0 * w_o[i] * cfg_.clip_td(delta) / n_o;
    }
    option_.sgd_step(option_.backward_batch(g_o), cfg_.lr_option);

    // Action level, through the attention weighting when enabled.
    Matrix att_weights;
    Matrix weighted = s;
    if (cfg_.use_attention) {
      att_weights = attention_.forward_batch(stack(s, onehot));
      weighted = kAttentionGain * att_weights.cwiseProduct(s);
    }
    const Matrix q_a = action_.forward_batch(stack(weighted, onehot));
    Matrix g_a = Matrix::Zero(q_a.rows(), n);
    const double n_a = std::max(1.0, static_cast<double>((w_a.array() != 0.0).count()));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto a = static_cast<Eigen::Index>(batch[static_cast<std::size_t>(i)].transition->action.index);
      const double delta = q_a(a, i) - y_a[i];
      td.action[static_cast<std::size_t>(i)] = std::abs(delta);
      g_a(a, i) = 2.0 * w_a[i] * cfg_.clip_td(delta) / n_a;
    }
    const GradientTape tape_a = action_.backward_batch(g_a);
    if (cfg_.use_attention) {
      const Matrix d_weights = kAttentionGain * tape_a.input_grad.topRows(kStateDim).cwiseProduct(s);
      attention_.sgd_step(attention_.backward_batch(d_weights), cfg_.lr_action);
    }
    action_.sgd_step(tape_a, cfg_.lr_action);
    return td;
  }

  void sync_targets() {
    option_target_.copy_weights_from(option_);
    action_target_.copy_weights_from(action_);
  }

  // Bundle: manifest line, config line, then five HRLN network blobs.
  void write(std::ostream& out) const {
    out << "HRL-AGENT 1 nets=option,option_target,action,action_target,attention\n";
    out << "config gamma=" << fmt_double(cfg_.gamma) << " reward_scale=" << fmt_double(cfg_.reward_scale)
        << " attention=" << (cfg_.use_attention ? 1 : 0)
        << " v_scale=" << fmt_double(encoder_.v_scale) << " a_scale=" << fmt_double(encoder_.a_scale)
        << " jerk_scale=" << fmt_double(encoder_.jerk_scale) << " action_table=";
    for (std::size_t i = 0; i < cfg_.action_table.size(); ++i)
      out << (i ? "," : "") << fmt_double(cfg_.action_table[i]);
    out << '\n';
    for (const DenseNet* net : {&option_, &option_target_, &action_, &action_target_, &attention_}) net->write(out);
  }

  static HrlAgent read(std::istream& in) {
    std::string manifest, config;
    std::getline(in, manifest);
    if (manifest != "HRL-AGENT 1 nets=option,option_target,action,action_target,attention")
      throw std::runtime_error("agent checkpoint: unexpected manifest '" + manifest + "'");
    std::getline(in, config);
    HrlAgent agent;
    parse_config_line(config, agent.cfg_, agent.encoder_);
    agent.option_ = DenseNet::read(in);
    agent.option_target_ = DenseNet::read(in);
    agent.action_ = DenseNet::read(in);
    agent.action_target_ = DenseNet::read(in);
    agent.attention_ = DenseNet::read(in);
    if (agent.action_.out_dim() != static_cast<int>(agent.cfg_.action_count()) ||
        agent.option_.in_dim() != kStateDim || agent.action_.in_dim() != kConditionedDim)
      throw std::runtime_error("agent checkpoint: network shapes do not match the manifest config");
    return agent;
  }

 private:
  static std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  }

  static void parse_config_line(const std::string& line, AgentConfig& cfg, StateEncoder& enc) {
    std::istringstream is(line);
    std::string word;
    is >> word;
    if (word != "config") throw std::runtime_error("agent checkpoint: missing config line");
    std::string text;
    while (is >> word) text += word + "\n";
    const auto kv = KeyValueFile::parse_string(text);
    kv.read("gamma", cfg.gamma);
    kv.read("reward_scale", cfg.reward_scale);
    kv.read("attention", cfg.use_attention);
    kv.read("v_scale", enc.v_scale);
    kv.read("a_scale", enc.a_scale);
    kv.read("jerk_scale", enc.jerk_scale);
    kv.read("action_table", cfg.action_table);
  }

  static Matrix stack(const Matrix& top, const Matrix& bottom) {
    Matrix out(top.rows() + bottom.rows(), top.cols());
    out << top, bottom;
    return out;
  }

  Vector condition(const Vector& weighted_state, OptionId option) const {
    Vector x = Vector::Zero(kConditionedDim);
    x.head(kStateDim) = weighted_state;
    x[kStateDim + static_cast<Eigen::Index>(index_of(option))] = 1.0;
    return x;
  }

  AttendedState attend(const Vector& encoded, OptionId option) const {
    AttendedState out;
    if (!cfg_.use_attention) {
      out.weights = Vector::Constant(kStateDim, 1.0 / kStateDim);
      out.weighted = encoded;
      return out;
    }
    out.weights = attention_.predict(condition(encoded, option));
    out.weighted = kAttentionGain * out.weights.cwiseProduct(encoded);
    return out;
  }

  Matrix attend_batch(const Matrix& encoded, const Matrix& onehot) const {
    if (!cfg_.use_attention) return encoded;
    return kAttentionGain * attention_.predict_batch(stack(encoded, onehot)).cwiseProduct(encoded);
  }

  // Weights sum to 1, so uniform attention would shrink s by the element count.
  // Rescaling keeps the action net's input on the same scale as without attention.
  static constexpr double kAttentionGain = static_cast<double>(kStateDim);

  AgentConfig cfg_;
  StateEncoder encoder_;
  DenseNet option_, option_target_;
  DenseNet action_, action_target_;
  DenseNet attention_;
};

}  // namespace hrl
