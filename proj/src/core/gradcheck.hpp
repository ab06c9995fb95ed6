#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace ap {

// Scalar-valued function of a list of input tensors. Called with and without an
// active tape, so it must build its graph from the passed tensors each time.
using ScalarFn = std::function<Tensor(std::vector<Tensor>&)>;

// Central finite differences against the tape gradient.
// Returns max over all input coordinates of |analytic - fd| / max(1, |fd|).
double grad_check(const ScalarFn& fn, std::vector<Tensor> point, double epsilon);

struct GradCheckCase {
  std::string name;
  double max_rel_err;
  bool passed;
};

// Checks every primitive on random in-domain points (kink-adjacent samples are
// nudged away, since finite differences are invalid at kinks). Higher layers
// append the kinematics and end-to-end loss cases to form the full suite.
std::vector<GradCheckCase> primitive_gradcheck_cases(uint64_t seed, double tolerance = 1e-4);

}  // namespace ap
