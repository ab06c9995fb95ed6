#pragma once

#include <array>
#include <vector>

#include "core/error.hpp"

namespace ap::kin {

// Planar vehicle state. theta is kept in (-pi, pi] by every operation here.
struct State {
  double x = 0;      // m
  double y = 0;      // m
  double theta = 0;  // rad
  double v = 0;      // m/s
};

// Controlled pair: acceleration and steering angle.
struct Action {
  double a = 0;      // m/s^2
  double delta = 0;  // rad, |delta| < pi/2
};

struct VehicleGeometry {
  double l_f = 1.3;  // m, center of mass to front axle
  double l_r = 1.3;  // m, center of mass to rear axle
};

double wrap_angle(double theta);

// Slip angle between center-of-mass velocity and the longitudinal axis.
double slip_angle(double delta, const VehicleGeometry& g);

// One kinematic bicycle update:
//   x'     = x + v cos(theta + beta) dt
//   y'     = y + v sin(theta + beta) dt
//   theta' = theta + v/l_r sin(beta) dt     (wrapped)
//   v'     = v + a dt
//   beta   = atan(l_r tan(delta) / (l_f + l_r))
State step(const State& s, const Action& u, const VehicleGeometry& g, double dt);

std::vector<State> rollout(const State& s0, const std::vector<Action>& actions,
                           const VehicleGeometry& g, double dt);

// State-pair to action. Acceleration is exact: a = (v1 - v0)/dt. Steering uses
// the midpoint speed vbar = (v0+v1)/2 and the dt-consistent turning-radius
// proxy R = vbar*dt/dtheta:
//   delta = sgn(dtheta/vbar) atan((l_f+l_r) / sqrt(R^2 - l_r^2)),
// with dtheta the wrapped heading difference; |dtheta| < 1e-9 is treated as
// straight motion (delta = 0). Exact inverse of step when a = 0; approximate
// otherwise because step integrates positions with v0 while the inverse sees vbar.
// Throws ErrorKind::Infeasible when R^2 - l_r^2 <= 0 (turn tighter than the
// geometry allows).
Action inverse_step(const State& s0, const State& s1, const VehicleGeometry& g, double dt);

std::vector<Action> actions_from_states(const std::vector<State>& states,
                                        const VehicleGeometry& g, double dt);

// inverse_step that flags instead of throwing; used when deriving actions from
// recorded tracks where isolated infeasible transitions only disqualify the
// snippets that overlap them.
struct FlaggedAction {
  Action action;
  bool infeasible = false;
};
FlaggedAction inverse_step_flagged(const State& s0, const State& s1, const VehicleGeometry& g,
                                   double dt);

struct ActionBounds {
  double a_min = -3, a_max = 3;
  double delta_min = -0.4, delta_max = 0.4;
};

// Is the transition realizable by the bicycle model with an action inside the
// bounds? The acceleration branch is exact. For steering, the transition's
// heading change is solved back through the forward update (sin(beta) =
// dtheta*l_r/(v0*dt)), which equals re-deriving via the inverse model and
// widening the bounds by its midpoint-speed skew: the inverse's vbar makes the
// re-derived steering a monotone distortion of the true one at fixed speeds, so
// membership is checked on the undistorted value.
struct TransitionCheck {
  bool feasible = false;
  double a = 0;            // exact
  double delta_exact = 0;  // forward-solved steering
  Action eq5;              // inverse-model re-derivation, for reporting
  bool eq5_flagged = false;
};
TransitionCheck check_transition(const State& s0, const State& s1, const VehicleGeometry& g,
                                 double dt, const ActionBounds& bounds, double eps = 1e-9);

// Whole-trajectory check; `chain` includes the start state.
bool trajectory_feasible(const std::vector<State>& chain, const VehicleGeometry& g, double dt,
                         const ActionBounds& bounds, double eps = 1e-9);

// Lifts a position-only trajectory into states (chord headings and speeds) so
// the same check can judge position-regression baselines.
std::vector<State> states_from_positions(const State& start,
                                         const std::vector<std::array<double, 2>>& positions,
                                         double dt);

}  // namespace ap::kin
