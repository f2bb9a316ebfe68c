#pragma once

#include <cmath>
#include <map>
#include <string>

#include "hrl/config_file.hpp"
#include "hrl/driving_env.hpp"
#include "hrl/option.hpp"

namespace hrl {

struct RewardConfig {
  double sigma1 = 0.05;  // time penalty
  double sigma2 = 0.5;   // unsmoothness penalty
  double sigma3 = 100.0; // collision penalty
  double sigma4 = 50.0;  // success reward
  double jerk_threshold = 1.0;

  void validate() const {
    if (!(sigma1 > 0 && sigma2 > 0 && sigma3 > 0 && sigma4 > 0))
      throw ConfigError("reward config: all sigmas must be positive");
    if (!(jerk_threshold >= 0)) throw ConfigError("reward config: jerk_threshold must be non-negative");
  }

  void load(const KeyValueFile& kv) {
    kv.read("sigma1", sigma1);
    kv.read("sigma2", sigma2);
    kv.read("sigma3", sigma3);
    kv.read("sigma4", sigma4);
    kv.read("jerk_threshold", jerk_threshold);
  }
};

/// Hybrid reward pair plus the flat task reward for one step.
///
/// Each map holds only the terms whose indicator fired, keyed by component
/// name, with the signed contribution as value:
///   shared         time, timeout, success (the common part sr)
///   option_terms   penalties attributed to the option level
///   action_terms   penalties attributed to the action level
///   components     every term of r_task, shared ones included
struct RewardBreakdown {
  double r_option = 0.0;
  double r_action = 0.0;
  double r_task = 0.0;
  double shared_reward = 0.0;
  std::map<std::string, double> shared;
  std::map<std::string, double> option_terms;
  std::map<std::string, double> action_terms;
  std::map<std::string, double> components;

  /// Magnitude of the jerk penalty in r_task (0 when not fired).
  double unsmoothness() const {
    auto it = components.find("unsmoothness");
    return it == components.end() ? 0.0 : -it->second;
  }
  /// Magnitude of both unsafe-distance penalties in r_task.
  double unsafe() const {
    double total = 0.0;
    for (const char* k : {"unsafe_front", "unsafe_stop"})
      if (auto it = components.find(k); it != components.end()) total -= it->second;
    return total;
  }
};

namespace detail {

struct FiredTerms {
  bool unsmooth = false, unsafe_front = false, unsafe_stop = false;
  double unsmooth_value = 0, unsafe_front_value = 0, unsafe_stop_value = 0;
};

inline FiredTerms shaping_terms(const StateVector& s, const RewardConfig& cfg) {
  FiredTerms t;
  // Jerk is penalized by magnitude so abrupt braking counts as well.
  if (std::abs(s.j_e) > cfg.jerk_threshold) {
    t.unsmooth = true;
    t.unsmooth_value = -cfg.sigma2;
  }
  if (s.d_fc < 0.0) {
    t.unsafe_front = true;
    t.unsafe_front_value = -std::exp(-s.d_fc / s.d_fs());
  }
  if (s.d_dc < 0.0) {
    t.unsafe_stop = true;
    t.unsafe_stop_value = -std::exp(-s.d_dc / s.d_ds());
  }
  return t;
}

inline double sum(const std::map<std::string, double>& m) {
  double total = 0.0;
  for (const auto& [k, v] : m) total += v;
  return total;
}

}  // namespace detail

/// Terms common to every reward: time penalty, timeout, success.
inline std::map<std::string, double> shared_terms(const StepOutcome& outcome, const RewardConfig& cfg) {
  std::map<std::string, double> sr;
  sr["time"] = -cfg.sigma1;
  if (outcome.terminal_kind == TerminalKind::TIMEOUT)
    sr["timeout"] = -outcome.state.d_d * outcome.state.d_d;
  if (outcome.terminal_kind == TerminalKind::SUCCESS) sr["success"] = cfg.sigma4;
  return sr;
}

/// `state` feeds the jerk and unsafe-distance terms; terminal terms read the
/// post-step state inside `outcome`. Terminal "distance = 0" indicators are
/// the environment's COLLISION / NOT_STOP events.
inline RewardBreakdown hybrid_reward(const StateVector& state, OptionId option,
                                     const StepOutcome& outcome, const RewardConfig& cfg) {
  RewardBreakdown rb;
  rb.shared = shared_terms(outcome, cfg);
  rb.shared_reward = detail::sum(rb.shared);

  const auto t = detail::shaping_terms(state, cfg);
  const double v_e = outcome.state.v_e;
  const bool collided = outcome.terminal_kind == TerminalKind::COLLISION;
  const bool ran_line = outcome.terminal_kind == TerminalKind::NOT_STOP;

  // Action level answers for smoothness and for the selected target.
  if (t.unsmooth) rb.action_terms["unsmoothness"] = t.unsmooth_value;
  if (option == OptionId::FFV) {
    if (t.unsafe_front) rb.action_terms["unsafe_front"] = t.unsafe_front_value;
    if (collided) rb.action_terms["collision"] = -cfg.sigma3;
    if (t.unsafe_stop) rb.option_terms["unsafe_stop"] = t.unsafe_stop_value;
    if (ran_line) rb.option_terms["not_stop"] = -v_e * v_e;
  } else {
    if (t.unsafe_stop) rb.action_terms["unsafe_stop"] = t.unsafe_stop_value;
    if (ran_line) rb.action_terms["not_stop"] = -cfg.sigma3;
    if (t.unsafe_front) rb.option_terms["unsafe_front"] = t.unsafe_front_value;
    if (collided) rb.option_terms["collision"] = -v_e * v_e;
  }

  rb.components = rb.shared;
  if (t.unsmooth) rb.components["unsmoothness"] = t.unsmooth_value;
  if (t.unsafe_front) rb.components["unsafe_front"] = t.unsafe_front_value;
  if (t.unsafe_stop) rb.components["unsafe_stop"] = t.unsafe_stop_value;
  if (collided) rb.components["collision"] = -cfg.sigma3;
  if (ran_line) rb.components["not_stop"] = -v_e * v_e;

  rb.r_option = rb.shared_reward + detail::sum(rb.option_terms);
  rb.r_action = rb.shared_reward + detail::sum(rb.action_terms);
  rb.r_task = detail::sum(rb.components);
  return rb;
}

/// Flat reward used by the non-hierarchical baseline.
inline double task_reward(const StateVector& state, const StepOutcome& outcome, const RewardConfig& cfg) {
  return hybrid_reward(state, OptionId::SSL, outcome, cfg).r_task;
}

}  // namespace hrl
