#pragma once

#include <vector>

#include "core/tensor.hpp"
#include "kin/bicycle.hpp"

namespace ap::kin {

// Differentiable counterpart of step/rollout, vectorized over a batch lane:
// every component is a [B] tensor and the same update runs for all lanes.
// Values are bit-identical to the plain rollout (the angle wrap is applied as
// an identity-gradient op), and gradients flow from every (x,y) back to every
// earlier action.
struct StateTensors {
  Tensor x, y, theta, v;  // each [B]
};

struct ActionTensors {
  Tensor a, delta;  // each [B]
};

StateTensors diff_step(const StateTensors& s, const ActionTensors& u, const VehicleGeometry& g,
                       double dt);

// positions per future step; states.back() is the chain-handoff state
struct DiffRollout {
  std::vector<StateTensors> states;  // length T
};

DiffRollout diff_rollout(const StateTensors& s0, const std::vector<ActionTensors>& actions,
                         const VehicleGeometry& g, double dt);

// Lifts a plain batch of initial states into constant [B] tensors.
StateTensors lift_states(const std::vector<State>& states);

}  // namespace ap::kin
