#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hrl/config_file.hpp"
#include "hrl/random.hpp"

namespace hrl {

// Gap reported when no front vehicle is ahead of the ego car.
inline constexpr double kNoFrontGap = 1000.0;
// Success window: stopped below this speed, within this distance of the line.
inline constexpr double kStopSpeedEps = 0.1;
inline constexpr double kStopDistEps = 0.5;
// Floor applied to d_ds when forming the dr ratio.
inline constexpr double kStopSafetyFloor = 1e-3;

struct EnvConfig {
  double dt = 0.25;
  double lane_length = 300.0;
  double stop_line_pos = 200.0;
  int max_front_vehicles = 3;
  double car_length = 4.5;
  double a_max = 4.0;
  double d0 = 5.0;
  double v_limit = 15.0;
  int timeout_steps = 240;
  std::uint64_t seed = 1;

  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("env config: " + what); };
    if (!(dt > 0)) fail("dt must be positive");
    if (!(a_max > 0)) fail("a_max must be positive");
    if (!(d0 > 0)) fail("d0 must be positive");
    if (!(car_length > 0)) fail("car_length must be positive");
    if (!(v_limit > 0)) fail("v_limit must be positive");
    if (timeout_steps <= 0) fail("timeout_steps must be positive");
    if (max_front_vehicles < 0) fail("max_front_vehicles must be non-negative");
    if (!(stop_line_pos < lane_length)) fail("stop_line_pos must be before lane_length");
  }

  void load(const KeyValueFile& kv) {
    kv.read("dt", dt);
    kv.read("lane_length", lane_length);
    kv.read("stop_line_pos", stop_line_pos);
    kv.read("max_front_vehicles", max_front_vehicles);
    kv.read("car_length", car_length);
    kv.read("a_max", a_max);
    kv.read("d0", d0);
    kv.read("v_limit", v_limit);
    kv.read("timeout_steps", timeout_steps);
    kv.read("seed", seed);
  }
};

struct VehicleState {
  double position = 0.0;  // front bumper along the lane
  double velocity = 0.0;
  double acceleration = 0.0;
  double prev_acceleration = 0.0;
};

enum class ProfileKind : std::uint8_t { STOPS_AT_LINE, ROLLS_THROUGH, STOP_THEN_GO };

inline std::string_view to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::STOPS_AT_LINE: return "stops_at_line";
    case ProfileKind::ROLLS_THROUGH: return "rolls_through";
    case ProfileKind::STOP_THEN_GO: return "stop_then_go";
  }
  return "?";
}

struct FrontVehicleProfile {
  ProfileKind profile_kind = ProfileKind::ROLLS_THROUGH;
  double cruise_speed = 10.0;
  double decel_onset_dist = 25.0;
  int pause_steps = 0;
};

/// Sampling weights for randomized scenarios.
struct ScenarioMix {
  double p_no_front = 0.25;
  double w_stops_at_line = 0.0;
  double w_rolls_through = 0.4;
  double w_stop_then_go = 0.6;
  double ego_min_dist = 60.0;
  double ego_max_dist = 120.0;

  void validate() const {
    if (!(p_no_front >= 0 && p_no_front <= 1)) throw ConfigError("scenario mix: p_no_front must be in [0, 1]");
    if (!(w_stops_at_line >= 0 && w_rolls_through >= 0 && w_stop_then_go >= 0) ||
        !(w_stops_at_line + w_rolls_through + w_stop_then_go > 0))
      throw ConfigError("scenario mix: profile weights must be non-negative with a positive sum");
    if (!(ego_min_dist > 0 && ego_max_dist >= ego_min_dist))
      throw ConfigError("scenario mix: need 0 < ego_min_dist <= ego_max_dist");
  }

  void load(const KeyValueFile& kv) {
    kv.read("p_no_front", p_no_front);
    kv.read("w_stops_at_line", w_stops_at_line);
    kv.read("w_rolls_through", w_rolls_through);
    kv.read("w_stop_then_go", w_stop_then_go);
    kv.read("ego_min_dist", ego_min_dist);
    kv.read("ego_max_dist", ego_max_dist);
  }
};

/// Observation in fixed order: v_e, a_e, j_e, d_f, v_f, a_f, d_fc, fr, d_d, d_dc, dr.
struct StateVector {
  static constexpr std::size_t kSize = 11;
  enum Index : std::size_t { kVe, kAe, kJe, kDf, kVf, kAf, kDfc, kFr, kDd, kDdc, kDr };

  double v_e = 0, a_e = 0, j_e = 0;
  double d_f = kNoFrontGap, v_f = 0, a_f = 0;
  double d_fc = 0, fr = 0;
  double d_d = 0, d_dc = 0, dr = 0;

  std::array<double, kSize> to_array() const {
    return {v_e, a_e, j_e, d_f, v_f, a_f, d_fc, fr, d_d, d_dc, dr};
  }

  static StateVector from_array(const std::array<double, kSize>& a) {
    StateVector s;
    s.v_e = a[kVe]; s.a_e = a[kAe]; s.j_e = a[kJe];
    s.d_f = a[kDf]; s.v_f = a[kVf]; s.a_f = a[kAf];
    s.d_fc = a[kDfc]; s.fr = a[kFr];
    s.d_d = a[kDd]; s.d_dc = a[kDdc]; s.dr = a[kDr];
    return s;
  }

  // Safety distances are recoverable from the stored chase margins.
  double d_fs() const { return d_f - d_fc; }
  double d_ds() const { return d_d - d_dc; }

  bool operator==(const StateVector&) const = default;
};

inline constexpr std::array<std::string_view, StateVector::kSize> kStateNames = {
    "v_e", "a_e", "j_e", "d_f", "v_f", "a_f", "d_fc", "fr", "d_d", "d_dc", "dr"};

enum class TerminalKind : std::uint8_t { NONE, COLLISION, NOT_STOP, TIMEOUT, SUCCESS };

inline std::string_view to_string(TerminalKind k) {
  switch (k) {
    case TerminalKind::NONE: return "none";
    case TerminalKind::COLLISION: return "collision";
    case TerminalKind::NOT_STOP: return "not_stop";
    case TerminalKind::TIMEOUT: return "timeout";
    case TerminalKind::SUCCESS: return "success";
  }
  return "?";
}

struct StepOutcome {
  StateVector state;
  TerminalKind terminal_kind = TerminalKind::NONE;
  int step_index = 0;

  bool terminal() const { return terminal_kind != TerminalKind::NONE; }
};

struct SafetyDistances {
  double d_fs, d_fc, d_ds, d_dc;
};

inline SafetyDistances safety_distances(double v_e, double v_f, double d_f, double d_d,
                                        const EnvConfig& cfg) {
  SafetyDistances s{};
  s.d_fs = std::max((v_e * v_e - v_f * v_f) / (2.0 * cfg.a_max), cfg.d0);
  s.d_fc = d_f - s.d_fs;
  s.d_ds = v_e * v_e / (2.0 * cfg.a_max);
  s.d_dc = d_d - s.d_ds;
  return s;
}

/// Assembles the observation from raw kinematics. `front` may be null.
inline StateVector make_state(const VehicleState& ego, const VehicleState* front, double d_d,
                              const EnvConfig& cfg) {
  StateVector s;
  s.v_e = ego.velocity;
  s.a_e = ego.acceleration;
  s.j_e = (ego.acceleration - ego.prev_acceleration) / cfg.dt;
  if (front != nullptr) {
    s.d_f = std::max(front->position - cfg.car_length - ego.position, 0.0);
    s.v_f = front->velocity;
    s.a_f = front->acceleration;
  } else {
    s.d_f = kNoFrontGap;
    s.v_f = 0.0;
    s.a_f = 0.0;
  }
  s.d_d = std::max(d_d, 0.0);
  const auto sd = safety_distances(s.v_e, s.v_f, s.d_f, s.d_d, cfg);
  s.d_fc = sd.d_fc;
  s.fr = sd.d_fc / sd.d_fs;
  s.d_dc = sd.d_dc;
  s.dr = sd.d_dc / std::max(sd.d_ds, kStopSafetyFloor);
  return s;
}

/// Longitudinal stop-line scenario: one ego car behind up to
/// `max_front_vehicles` scripted vehicles.
class DrivingEnv {
 public:
  struct FrontVehicle {
    enum class Phase : std::uint8_t { CRUISE, PAUSED, DEPARTING };
    VehicleState state;
    FrontVehicleProfile profile;
    Phase phase = Phase::CRUISE;
    int pause_left = 0;
  };

  /// Summary of what was drawn at reset; used to slice evaluation suites.
  struct Scenario {
    std::vector<FrontVehicleProfile> profiles;
    double ego_start_dist = 0.0;
    double ego_start_speed = 0.0;

    bool has_front() const { return !profiles.empty(); }
    bool has_profile(ProfileKind k) const {
      return std::any_of(profiles.begin(), profiles.end(),
                         [k](const auto& p) { return p.profile_kind == k; });
    }
    /// Every front vehicle eventually clears the stop-line.
    bool front_departs() const {
      return has_front() && !has_profile(ProfileKind::STOPS_AT_LINE);
    }
  };

  explicit DrivingEnv(EnvConfig cfg = {}, ScenarioMix mix = {}) : cfg_(cfg), mix_(mix) {
    cfg_.validate();
  }

  const EnvConfig& config() const { return cfg_; }
  const ScenarioMix& mix() const { return mix_; }

  StateVector reset(const EnvConfig& cfg, std::uint64_t episode_seed) {
    cfg.validate();
    cfg_ = cfg;
    return reset(episode_seed);
  }

  StateVector reset(std::uint64_t episode_seed) {
    Rng rng(mix_seed(cfg_.seed, episode_seed));
    const double min_spacing = cfg_.d0 + cfg_.car_length;
    if (mix_.ego_max_dist > cfg_.stop_line_pos)
      throw ConfigError("env config: ego start band exceeds distance from lane start to stop-line");
    if (cfg_.max_front_vehicles * min_spacing + 2.0 > mix_.ego_min_dist)
      throw ConfigError("env config: front vehicles cannot be placed without overlap");

    scenario_ = Scenario{};
    front_.clear();
    step_index_ = 0;
    done_ = false;

    const double dist = rng.uniform(mix_.ego_min_dist, mix_.ego_max_dist);
    const double speed = rng.uniform(0.5, 1.0) * cfg_.v_limit;
    ego_ = VehicleState{cfg_.stop_line_pos - dist, speed, 0.0, 0.0};
    scenario_.ego_start_dist = dist;
    scenario_.ego_start_speed = speed;

    int n = 0;
    if (cfg_.max_front_vehicles > 0 && !rng.bernoulli(mix_.p_no_front))
      n = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(cfg_.max_front_vehicles)));

    std::vector<FrontVehicleProfile> profiles;
    for (int i = 0; i < n; ++i) profiles.push_back(draw_profile(rng));

    // Minimum front-to-front spacing per vehicle; the first one also keeps a
    // kinematically feasible braking gap to the ego car.
    std::vector<double> min_gap(n);
    for (int i = 0; i < n; ++i) {
      const double vf = profiles[i].cruise_speed;
      min_gap[i] = cfg_.d0 + 2.0;
      if (i == 0) min_gap[i] = std::max(min_gap[i], (speed * speed - vf * vf) / (2.0 * cfg_.a_max) + cfg_.d0 + 2.0);
    }
    double needed = 2.0;
    for (int i = 0; i < n; ++i) needed += min_gap[i] + cfg_.car_length;
    // A tight draw (fast ego, slow leader, short approach) sheds vehicles
    // from the back of the queue until the rest fit.
    while (n > 0 && needed > dist) {
      needed -= min_gap[n - 1] + cfg_.car_length;
      --n;
      profiles.pop_back();
      min_gap.pop_back();
    }
    const double slack = dist - needed;
    double rear = ego_.position;  // front bumper of the car behind
    std::vector<FrontVehicle> placed;
    for (int i = 0; i < n; ++i) {
      const double extra = rng.uniform() * slack / n;
      FrontVehicle fv;
      fv.profile = profiles[i];
      fv.state.position = rear + min_gap[i] + extra + cfg_.car_length;
      fv.state.velocity = profiles[i].cruise_speed;
      rear = fv.state.position;
      placed.push_back(fv);
    }
    // Stored front-most first.
    front_.assign(placed.rbegin(), placed.rend());
    for (const auto& fv : placed) scenario_.profiles.push_back(fv.profile);

    state_ = observe();
    return state_;
  }

  StepOutcome step(double action_accel) {
    if (done_) throw std::logic_error("DrivingEnv::step called after the episode terminated");

    ego_.prev_acceleration = ego_.acceleration;
    ego_.acceleration = action_accel;
    ego_.velocity = std::clamp(ego_.velocity + action_accel * cfg_.dt, 0.0, cfg_.v_limit);
    ego_.position += ego_.velocity * cfg_.dt;

    advance_front_vehicles();
    ++step_index_;

    StepOutcome out;
    out.step_index = step_index_;
    out.terminal_kind = classify();
    out.state = observe();
    state_ = out.state;
    done_ = out.terminal();
    return out;
  }

  bool done() const { return done_; }
  int step_index() const { return step_index_; }
  const StateVector& state() const { return state_; }
  const VehicleState& ego() const { return ego_; }
  const std::vector<FrontVehicle>& front_vehicles() const { return front_; }
  const Scenario& scenario() const { return scenario_; }

  /// Nearest vehicle ahead of the ego car, or null.
  const FrontVehicle* nearest_front() const { return front_.empty() ? nullptr : &front_.back(); }

 private:
  static constexpr double kFrontLaunchAccel = 2.0;
  static constexpr double kFrontMaxBrake = 6.0;
  static constexpr double kFrontGapDecel = 3.0;
  static constexpr double kFrontStandstillGap = 2.5;

  FrontVehicleProfile draw_profile(Rng& rng) const {
    FrontVehicleProfile p;
    const double total = mix_.w_stops_at_line + mix_.w_rolls_through + mix_.w_stop_then_go;
    const double u = rng.uniform() * total;
    if (u < mix_.w_stops_at_line) p.profile_kind = ProfileKind::STOPS_AT_LINE;
    else if (u < mix_.w_stops_at_line + mix_.w_rolls_through) p.profile_kind = ProfileKind::ROLLS_THROUGH;
    else p.profile_kind = ProfileKind::STOP_THEN_GO;
    p.cruise_speed = rng.uniform(0.4, 0.9) * cfg_.v_limit;
    p.decel_onset_dist = rng.uniform(20.0, 35.0);
    p.pause_steps = 10 + static_cast<int>(rng.index(31));
    return p;
  }

  void advance_front_vehicles() {
    const double line = cfg_.stop_line_pos;
    for (std::size_t i = 0; i < front_.size(); ++i) {
      auto& fv = front_[i];
      auto& s = fv.state;
      const auto& prof = fv.profile;
      s.prev_acceleration = s.acceleration;

      if (fv.phase == FrontVehicle::Phase::PAUSED) {
        s.acceleration = 0.0;
        s.velocity = 0.0;
        if (prof.profile_kind == ProfileKind::STOP_THEN_GO && --fv.pause_left <= 0)
          fv.phase = FrontVehicle::Phase::DEPARTING;
        continue;
      }

      const bool stops = prof.profile_kind != ProfileKind::ROLLS_THROUGH &&
                         fv.phase == FrontVehicle::Phase::CRUISE;
      double v_ref = prof.cruise_speed;
      const double to_line = line - s.position;
      if (stops && to_line <= prof.decel_onset_dist) {
        // Constant-deceleration profile that reaches zero at the line.
        const double decel = prof.cruise_speed * prof.cruise_speed / (2.0 * prof.decel_onset_dist);
        v_ref = std::min(v_ref, std::sqrt(2.0 * decel * std::max(to_line, 0.0)));
      }
      const VehicleState* leader = i > 0 ? &front_[i - 1].state : nullptr;
      if (leader != nullptr) {
        const double gap = leader->position - cfg_.car_length - s.position;
        const double room = std::max(gap - kFrontStandstillGap, 0.0);
        v_ref = std::min(v_ref, std::sqrt(leader->velocity * leader->velocity + 2.0 * kFrontGapDecel * room));
      }

      s.acceleration = std::clamp((v_ref - s.velocity) / cfg_.dt, -kFrontMaxBrake, kFrontLaunchAccel);
      s.velocity = std::clamp(s.velocity + s.acceleration * cfg_.dt, 0.0, cfg_.v_limit);
      s.position += s.velocity * cfg_.dt;

      if (leader != nullptr) {
        const double max_pos = leader->position - cfg_.car_length - 0.5;
        if (s.position > max_pos) {
          s.position = max_pos;
          s.velocity = std::min(s.velocity, leader->velocity);
        }
      }
      if (stops && s.position >= line - 0.05 && line - s.position <= prof.decel_onset_dist) {
        s.position = std::min(s.position, line);
        s.velocity = 0.0;
        s.acceleration = 0.0;
        fv.phase = FrontVehicle::Phase::PAUSED;
        fv.pause_left = prof.pause_steps;
      }
    }
    // Vehicles whose rear bumper left the lane are gone.
    while (!front_.empty() && front_.front().state.position - cfg_.car_length > cfg_.lane_length)
      front_.erase(front_.begin());
  }

  TerminalKind classify() const {
    if (const auto* fv = nearest_front())
      if (fv->state.position - cfg_.car_length - ego_.position <= 0.0) return TerminalKind::COLLISION;
    const double signed_dist = cfg_.stop_line_pos - ego_.position;
    if (std::abs(signed_dist) <= kStopDistEps && ego_.velocity <= kStopSpeedEps)
      return TerminalKind::SUCCESS;
    if (signed_dist <= 0.0) return TerminalKind::NOT_STOP;
    if (step_index_ >= cfg_.timeout_steps) return TerminalKind::TIMEOUT;
    return TerminalKind::NONE;
  }

  StateVector observe() const {
    const auto* fv = nearest_front();
    return make_state(ego_, fv ? &fv->state : nullptr, cfg_.stop_line_pos - ego_.position, cfg_);
  }

  EnvConfig cfg_;
  ScenarioMix mix_;
  VehicleState ego_;
  std::vector<FrontVehicle> front_;
  Scenario scenario_;
  StateVector state_;
  int step_index_ = 0;
  bool done_ = false;
};

}  // namespace hrl
