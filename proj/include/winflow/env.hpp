#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "winflow/rng.hpp"
#include "winflow/util.hpp"

namespace winflow {

enum class EnvKind { reacher2, point_sparse };

inline int state_dim(EnvKind kind) { return kind == EnvKind::reacher2 ? 11 : 4; }
constexpr int kActionDim = 2;

// Point-robot integration step (position += action * dt).
constexpr double kPointDt = 1.0;
// Point-robot goal circle radius; the terminal reward 1 - d/10 reaches
// zero exactly at this distance.
constexpr double kPointGoalRadius = 10.0;

// Reacher layout: cos t0, cos t1, sin t0, sin t1, target_x, target_y,
//                 w0, w1, dx, dy, dz (dz pinned to 0).
// Point layout:   x, y, goal_x, goal_y.
struct EnvState {
  EnvKind layout = EnvKind::reacher2;
  std::vector<double> values;
};

// 2-D torque/velocity command, each component clamped to [-1, 1] at the
// environment boundary.
struct Action {
  std::array<double, kActionDim> values{0.0, 0.0};
};

struct StepResult {
  EnvState next_state;
  double reward = 0.0;
  bool terminal = false;
  int t = 0;  // index of next_state within the episode
};

enum class FaultKind { none, actuator_damage, reduced_rom };

// Actuator Damage scales joint torque; Reduced ROM narrows joint1's
// angular range. Nominal joint1 range is [-3.0, 3.0] rad.
struct FaultSpec {
  FaultKind kind = FaultKind::none;
  double torque_scale = 1.0;
  double joint1_low = -3.0;
  double joint1_high = 3.0;

  void validate() const {
    if (!(torque_scale > 0.0 && torque_scale <= 1.0))
      throw std::invalid_argument("FaultSpec: torque_scale must be in (0, 1]");
    if (!(joint1_low < joint1_high))
      throw std::invalid_argument("FaultSpec: joint1 limits must satisfy low < high");
  }
};

inline FaultSpec make_fault(FaultKind kind) {
  FaultSpec f;
  f.kind = kind;
  if (kind == FaultKind::actuator_damage) f.torque_scale = 0.25;
  if (kind == FaultKind::reduced_rom) {
    f.joint1_low = -1.5;
    f.joint1_high = 1.5;
  }
  return f;
}

struct EnvConfig {
  EnvKind kind = EnvKind::reacher2;
  int horizon = -1;  // -1: use the per-kind default (reacher 50, point 12)
  double dt = 0.02;
  double link0 = 0.1;
  double link1 = 0.1;
  double torque_gain = 10.0;
  double damping = 1.0;
  double omega_max = 8.0;
  double alpha = 0.1;  // control-penalty weight
  std::uint64_t seed = 0;

  int effective_horizon() const {
    if (horizon > 0) return horizon;
    return kind == EnvKind::reacher2 ? 50 : 12;
  }

  void validate() const {
    if (horizon != -1 && horizon < 1) throw std::invalid_argument("EnvConfig: horizon must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("EnvConfig: dt must be > 0");
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw std::invalid_argument("EnvConfig: alpha must be in [0, 1]");
    if (!(link0 > 0.0 && link1 > 0.0)) throw std::invalid_argument("EnvConfig: links must be > 0");
    if (!(omega_max > 0.0)) throw std::invalid_argument("EnvConfig: omega_max must be > 0");
  }
};

// Fingertip of the planar two-link arm.
inline std::array<double, 2> forward_kinematics(double theta0, double theta1, double l0,
                                                double l1) {
  return {l0 * std::cos(theta0) + l1 * std::cos(theta0 + theta1),
          l0 * std::sin(theta0) + l1 * std::sin(theta0 + theta1)};
}

// R(s, a) = -|fingertip - target| - alpha * |a|^2
inline double reward(const std::array<double, 2>& fingertip, const std::array<double, 2>& target,
                     const Action& action, double alpha) {
  const double dx = fingertip[0] - target[0];
  const double dy = fingertip[1] - target[1];
  const double a2 = action.values[0] * action.values[0] + action.values[1] * action.values[1];
  return -std::sqrt(dx * dx + dy * dy) - alpha * a2;
}

namespace detail {

inline double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

inline EnvState reacher_state(double th0, double th1, double tx, double ty, double w0, double w1,
                              const EnvConfig& cfg) {
  const auto tip = forward_kinematics(th0, th1, cfg.link0, cfg.link1);
  EnvState s;
  s.layout = EnvKind::reacher2;
  s.values = {std::cos(th0), std::cos(th1), std::sin(th0), std::sin(th1), tx, ty,
              w0,            w1,            tip[0] - tx,   tip[1] - ty,  0.0};
  return s;
}

}  // namespace detail

// Torque delivered to one joint for a commanded action component.
inline double effective_torque(double action_component, const EnvConfig& cfg,
                               const FaultSpec& fault) {
  return detail::clamp(action_component, -1.0, 1.0) * cfg.torque_gain * fault.torque_scale;
}

inline EnvState reset(const EnvConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.kind == EnvKind::reacher2) {
    const double th0 = rng.uniform(-0.1, 0.1);
    const double th1 = rng.uniform(-0.1, 0.1);
    const double reach = cfg.link0 + cfg.link1;
    double tx = 0.0, ty = 0.0;
    for (;;) {  // rejection sample: inside the reachable disk, off the base
      tx = rng.uniform(-reach, reach);
      ty = rng.uniform(-reach, reach);
      const double r = std::sqrt(tx * tx + ty * ty);
      if (r >= 0.05 && r <= reach) break;
    }
    return detail::reacher_state(th0, th1, tx, ty, 0.0, 0.0, cfg);
  }
  const double angle = rng.uniform(0.0, M_PI);  // goal on the upper half circle
  EnvState s;
  s.layout = EnvKind::point_sparse;
  s.values = {0.0, 0.0, kPointGoalRadius * std::cos(angle), kPointGoalRadius * std::sin(angle)};
  return s;
}

// Advances one step. `t_prev` is the index of `state` within its episode;
// the episode terminates exactly when the new index reaches the horizon.
inline StepResult step(const EnvState& state, const Action& action, const EnvConfig& cfg,
                       const FaultSpec& fault, int t_prev = 0) {
  if (state.layout != cfg.kind)
    throw std::invalid_argument("step: state layout does not match config kind");
  if (state.values.size() != static_cast<std::size_t>(state_dim(cfg.kind)))
    throw std::invalid_argument("step: state width does not match layout");
  for (double a : action.values)
    if (!std::isfinite(a)) throw std::invalid_argument("step: non-finite action entry");

  Action a;
  a.values = {detail::clamp(action.values[0], -1.0, 1.0),
              detail::clamp(action.values[1], -1.0, 1.0)};

  StepResult out;
  out.t = t_prev + 1;
  out.terminal = out.t >= cfg.effective_horizon();

  if (cfg.kind == EnvKind::point_sparse) {
    const double px = state.values[0] + a.values[0] * kPointDt;
    const double py = state.values[1] + a.values[1] * kPointDt;
    const double gx = state.values[2], gy = state.values[3];
    out.next_state.layout = EnvKind::point_sparse;
    out.next_state.values = {px, py, gx, gy};
    const double d = std::hypot(px - gx, py - gy);
    // Sparse: reward only at the final step, scaled by remaining distance.
    out.reward = (out.terminal && d <= kPointGoalRadius) ? 1.0 - d / kPointGoalRadius : 0.0;
    return out;
  }

  double th0 = std::atan2(state.values[2], state.values[0]);
  double th1 = std::atan2(state.values[3], state.values[1]);
  double w0 = state.values[6];
  double w1 = state.values[7];
  const double tx = state.values[4], ty = state.values[5];

  // Semi-implicit Euler with linear damping and per-joint torque.
  const double tq0 = effective_torque(a.values[0], cfg, fault);
  const double tq1 = effective_torque(a.values[1], cfg, fault);
  w0 = detail::clamp(w0 + (tq0 - cfg.damping * w0) * cfg.dt, -cfg.omega_max, cfg.omega_max);
  w1 = detail::clamp(w1 + (tq1 - cfg.damping * w1) * cfg.dt, -cfg.omega_max, cfg.omega_max);
  th0 += w0 * cfg.dt;
  th1 += w1 * cfg.dt;
  const double th1_free = th1;
  th1 = detail::clamp(th1, fault.joint1_low, fault.joint1_high);
  if (th1 != th1_free) w1 = 0.0;  // joint stop dissipates the velocity

  out.next_state = detail::reacher_state(th0, th1, tx, ty, w0, w1, cfg);
  const auto tip = forward_kinematics(th0, th1, cfg.link0, cfg.link1);
  out.reward = reward(tip, {tx, ty}, a, cfg.alpha);
  return out;
}

inline const char* env_name(EnvKind k) { return k == EnvKind::reacher2 ? "reacher2" : "point_sparse"; }

inline EnvKind parse_env_name(const std::string& name) {
  if (name == "reacher2") return EnvKind::reacher2;
  if (name == "point_sparse") return EnvKind::point_sparse;
  throw config_error("unknown env '" + name + "' (expected reacher2 or point_sparse)");
}

inline const char* fault_name(FaultKind k) {
  switch (k) {
    case FaultKind::none: return "none";
    case FaultKind::actuator_damage: return "ad";
    default: return "rom";
  }
}

inline FaultKind parse_fault_name(const std::string& name) {
  if (name == "none") return FaultKind::none;
  if (name == "ad") return FaultKind::actuator_damage;
  if (name == "rom") return FaultKind::reduced_rom;
  throw config_error("unknown fault '" + name + "' (expected none, ad, or rom)");
}

}  // namespace winflow
