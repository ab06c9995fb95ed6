#include "kin/diff_rollout.hpp"

namespace ap::kin {

using namespace ops;

StateTensors diff_step(const StateTensors& s, const ActionTensors& u, const VehicleGeometry& g,
                       double dt) {
  // beta = atan(l_r tan(delta) / (l_f + l_r)); tan composed as sin/cos
  Tensor tan_delta = div(ops::sin(u.delta), ops::cos(u.delta));
  Tensor beta = ops::atan(mul_scalar(tan_delta, g.l_r / (g.l_f + g.l_r)));
  Tensor course = add(s.theta, beta);
  StateTensors out;
  out.x = add(s.x, mul_scalar(mul(s.v, ops::cos(course)), dt));
  out.y = add(s.y, mul_scalar(mul(s.v, ops::sin(course)), dt));
  out.theta = ops::wrap_angle(add(s.theta, mul_scalar(mul(s.v, ops::sin(beta)), dt / g.l_r)));
  out.v = add(s.v, mul_scalar(u.a, dt));
  return out;
}

DiffRollout diff_rollout(const StateTensors& s0, const std::vector<ActionTensors>& actions,
                         const VehicleGeometry& g, double dt) {
  if (actions.empty()) raise(ErrorKind::Contract, "diff_rollout: need at least one action");
  DiffRollout out;
  out.states.reserve(actions.size());
  StateTensors cur = s0;
  for (const auto& u : actions) {
    cur = diff_step(cur, u, g, dt);
    out.states.push_back(cur);
  }
  return out;
}

StateTensors lift_states(const std::vector<State>& states) {
  size_t n = states.size();
  std::vector<double> x(n), y(n), th(n), v(n);
  for (size_t i = 0; i < n; ++i) {
    x[i] = states[i].x;
    y[i] = states[i].y;
    th[i] = states[i].theta;
    v[i] = states[i].v;
  }
  return {Tensor::from(std::move(x)), Tensor::from(std::move(y)), Tensor::from(std::move(th)),
          Tensor::from(std::move(v))};
}

}  // namespace ap::kin
