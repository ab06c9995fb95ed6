#include "kin/bicycle.hpp"

#include <cmath>
#include <string>

namespace ap::kin {

namespace {
constexpr double kPi = 3.1415926535897932384626433832795;
constexpr double kStraightThreshold = 1e-9;  // |dtheta| below this is straight motion

void check_finite(const State& s, const char* where) {
  if (!std::isfinite(s.x)) raise(ErrorKind::Numeric, std::string(where) + ": non-finite x");
  if (!std::isfinite(s.y)) raise(ErrorKind::Numeric, std::string(where) + ": non-finite y");
  if (!std::isfinite(s.theta))
    raise(ErrorKind::Numeric, std::string(where) + ": non-finite theta");
  if (!std::isfinite(s.v)) raise(ErrorKind::Numeric, std::string(where) + ": non-finite v");
}
}  // namespace

double wrap_angle(double theta) {
  double a = std::fmod(theta + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

double slip_angle(double delta, const VehicleGeometry& g) {
  return std::atan(g.l_r * std::tan(delta) / (g.l_f + g.l_r));
}

State step(const State& s, const Action& u, const VehicleGeometry& g, double dt) {
  if (dt <= 0) raise(ErrorKind::Contract, "step: dt must be positive");
  double beta = slip_angle(u.delta, g);
  State out;
  out.x = s.x + s.v * std::cos(s.theta + beta) * dt;
  out.y = s.y + s.v * std::sin(s.theta + beta) * dt;
  out.theta = wrap_angle(s.theta + s.v / g.l_r * std::sin(beta) * dt);
  out.v = s.v + u.a * dt;
  check_finite(out, "step");
  return out;
}

std::vector<State> rollout(const State& s0, const std::vector<Action>& actions,
                           const VehicleGeometry& g, double dt) {
  if (actions.empty()) raise(ErrorKind::Contract, "rollout: need at least one action");
  std::vector<State> out;
  out.reserve(actions.size());
  State cur = s0;
  for (size_t t = 0; t < actions.size(); ++t) {
    try {
      cur = step(cur, actions[t], g, dt);
    } catch (const Error& e) {
      raise(e.kind(), "rollout step " + std::to_string(t) + ": " + e.what());
    }
    out.push_back(cur);
  }
  return out;
}

Action inverse_step(const State& s0, const State& s1, const VehicleGeometry& g, double dt) {
  FlaggedAction fa = inverse_step_flagged(s0, s1, g, dt);
  if (fa.infeasible)
    raise(ErrorKind::Infeasible,
          "inverse_step: turn tighter than the geometry allows (|dtheta|=" +
              std::to_string(std::fabs(wrap_angle(s1.theta - s0.theta))) + ")");
  return fa.action;
}

FlaggedAction inverse_step_flagged(const State& s0, const State& s1, const VehicleGeometry& g,
                                   double dt) {
  if (dt <= 0) raise(ErrorKind::Contract, "inverse_step: dt must be positive");
  FlaggedAction out;
  out.action.a = (s1.v - s0.v) / dt;
  double dtheta = wrap_angle(s1.theta - s0.theta);
  if (std::fabs(dtheta) < kStraightThreshold) {
    out.action.delta = 0.0;
    return out;
  }
  double vbar = 0.5 * (s0.v + s1.v);
  if (vbar == 0.0) {
    // heading changed while the midpoint speed is zero: not a bicycle transition
    out.infeasible = true;
    return out;
  }
  double radius = vbar * dt / dtheta;
  double radicand = radius * radius - g.l_r * g.l_r;
  if (radicand <= 0.0) {
    out.infeasible = true;
    return out;
  }
  double sign = (dtheta / vbar) >= 0.0 ? 1.0 : -1.0;
  out.action.delta = sign * std::atan((g.l_f + g.l_r) / std::sqrt(radicand));
  return out;
}

TransitionCheck check_transition(const State& s0, const State& s1, const VehicleGeometry& g,
                                 double dt, const ActionBounds& bounds, double eps) {
  TransitionCheck out;
  out.a = (s1.v - s0.v) / dt;
  FlaggedAction fa = inverse_step_flagged(s0, s1, g, dt);
  out.eq5 = fa.action;
  out.eq5_flagged = fa.infeasible;

  if (out.a < bounds.a_min - eps || out.a > bounds.a_max + eps) return out;

  double dtheta = wrap_angle(s1.theta - s0.theta);
  if (std::fabs(dtheta) < kStraightThreshold) {
    out.delta_exact = 0.0;
    out.feasible = bounds.delta_min - eps <= 0.0 && 0.0 <= bounds.delta_max + eps;
    return out;
  }
  if (std::fabs(s0.v) < 1e-12) return out;  // heading change from standstill
  double sin_beta = dtheta * g.l_r / (s0.v * dt);
  if (std::fabs(sin_beta) >= 1.0) return out;  // sharper than any steering angle
  double beta = std::asin(sin_beta);
  out.delta_exact = std::atan(std::tan(beta) * (g.l_f + g.l_r) / g.l_r);
  out.feasible = bounds.delta_min - eps <= out.delta_exact &&
                 out.delta_exact <= bounds.delta_max + eps;
  return out;
}

bool trajectory_feasible(const std::vector<State>& chain, const VehicleGeometry& g, double dt,
                         const ActionBounds& bounds, double eps) {
  if (chain.size() < 2) return true;
  for (size_t i = 0; i + 1 < chain.size(); ++i)
    if (!check_transition(chain[i], chain[i + 1], g, dt, bounds, eps).feasible) return false;
  return true;
}

std::vector<State> states_from_positions(const State& start,
                                         const std::vector<std::array<double, 2>>& positions,
                                         double dt) {
  std::vector<State> out;
  out.push_back(start);
  for (size_t i = 0; i < positions.size(); ++i) {
    const auto& prev = out.back();
    double dx = positions[i][0] - prev.x;
    double dy = positions[i][1] - prev.y;
    double dist = std::hypot(dx, dy);
    State s;
    s.x = positions[i][0];
    s.y = positions[i][1];
    s.theta = dist > 1e-9 ? std::atan2(dy, dx) : prev.theta;
    s.v = dist / dt;
    out.push_back(s);
  }
  return out;
}

std::vector<Action> actions_from_states(const std::vector<State>& states,
                                        const VehicleGeometry& g, double dt) {
  if (states.size() < 2)
    raise(ErrorKind::Contract, "actions_from_states: need at least two states");
  std::vector<Action> out;
  out.reserve(states.size() - 1);
  for (size_t t = 0; t + 1 < states.size(); ++t) {
    try {
      out.push_back(inverse_step(states[t], states[t + 1], g, dt));
    } catch (const Error& e) {
      raise(e.kind(), "actions_from_states pair " + std::to_string(t) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ap::kin
