#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ap {

double grad_check(const ScalarFn& fn, std::vector<Tensor> point, double epsilon) {
  if (epsilon <= 0.0) raise(ErrorKind::Contract, "grad_check: epsilon must be positive");
  for (auto& p : point) p.set_requires_grad(true);

  double analytic_value;
  {
    Tape tape;
    Tensor out = fn(point);
    analytic_value = out.item();
    if (!std::isfinite(analytic_value))
      raise(ErrorKind::Numeric, "grad_check: non-finite function value");
    tape.backward(out);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& p : point) {
    if (p.grad().empty())
      analytic.emplace_back(p.size(), 0.0);
    else
      analytic.push_back(p.grad());
  }

  // finite differences run without a tape
  for (auto& p : point) p.set_requires_grad(false);
  double max_rel = 0.0;
  for (size_t pi = 0; pi < point.size(); ++pi) {
    for (size_t i = 0; i < point[pi].size(); ++i) {
      double saved = point[pi].at(i);
      point[pi].at(i) = saved + epsilon;
      double up = fn(point).item();
      point[pi].at(i) = saved - epsilon;
      double down = fn(point).item();
      point[pi].at(i) = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        raise(ErrorKind::Numeric, "grad_check: non-finite function value during differencing");
      double fd = (up - down) / (2.0 * epsilon);
      double rel = std::fabs(analytic[pi][i] - fd) / std::max(1.0, std::fabs(fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

namespace {

// Random values in [-2,2], pushed away from a kink set so central differences stay valid.
Tensor sample(Rng& rng, Shape shape, double lo, double hi,
              const std::vector<double>& kinks = {}, double margin = 1e-3) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values()) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      v = rng.uniform(lo, hi);
      bool clear = true;
      for (double k : kinks)
        if (std::fabs(v - k) < margin) clear = false;
      if (clear) break;
    }
  }
  return t;
}

struct Harness {
  Rng rng;
  double tol;
  double eps = 1e-5;
  std::vector<GradCheckCase> cases;

  void run(const std::string& name, const ScalarFn& fn, std::vector<Tensor> point) {
    double err = grad_check(fn, std::move(point), eps);
    cases.push_back({name, err, err <= tol});
  }
};

}  // namespace

std::vector<GradCheckCase> primitive_gradcheck_cases(uint64_t seed, double tolerance) {
  Harness h{Rng(seed, 11), tolerance, 1e-5, {}};
  Rng& rng = h.rng;
  const int rounds = 100;

  using ops::sum;

  for (int r = 0; r < rounds; ++r) {
    Shape s{3, 4};
    Tensor a = sample(rng, s, -2, 2);
    Tensor b = sample(rng, s, -2, 2);
    // weight the reduction so gradients are not all ones
    Tensor w = sample(rng, s, -2, 2);
    w.set_requires_grad(false);
    h.run("add", [&](std::vector<Tensor>& p) { return sum(ops::mul(ops::add(p[0], p[1]), w)); },
          {a, b});
    h.run("sub", [&](std::vector<Tensor>& p) { return sum(ops::mul(ops::sub(p[0], p[1]), w)); },
          {a, b});
    h.run("mul", [&](std::vector<Tensor>& p) { return sum(ops::mul(p[0], p[1])); }, {a, b});
    Tensor denom = sample(rng, s, 0.5, 2.0);
    if (rng.uniform() < 0.5) denom = ops::mul_scalar(denom, -1.0);
    h.run("div", [&](std::vector<Tensor>& p) { return sum(ops::div(p[0], p[1])); }, {a, denom});

    Tensor m1 = sample(rng, {2, 3}, -2, 2);
    Tensor m2 = sample(rng, {3, 2}, -2, 2);
    h.run("matmul", [&](std::vector<Tensor>& p) { return sum(ops::matmul(p[0], p[1])); },
          {m1, m2});

    Tensor c1 = sample(rng, {2, 2}, -2, 2);
    Tensor c2 = sample(rng, {2, 3}, -2, 2);
    h.run("concat",
          [&](std::vector<Tensor>& p) {
            return sum(ops::mul(ops::concat({p[0], p[1]}, 1), ops::concat({p[0], p[1]}, 1)));
          },
          {c1, c2});
    h.run("slice", [&](std::vector<Tensor>& p) { return sum(ops::slice(p[0], 1, 1, 2)); }, {a});
    h.run("reshape",
          [&](std::vector<Tensor>& p) {
            Tensor r = ops::reshape(p[0], {4, 3});
            return sum(ops::mul(r, r));
          },
          {a});

    h.run("tanh", [&](std::vector<Tensor>& p) { return sum(ops::tanh(p[0])); }, {a});
    h.run("sigmoid", [&](std::vector<Tensor>& p) { return sum(ops::sigmoid(p[0])); }, {a});
    Tensor ar = sample(rng, s, -2, 2, {0.0});
    h.run("relu", [&](std::vector<Tensor>& p) { return sum(ops::relu(p[0])); }, {ar});
    h.run("sin", [&](std::vector<Tensor>& p) { return sum(ops::sin(p[0])); }, {a});
    h.run("cos", [&](std::vector<Tensor>& p) { return sum(ops::cos(p[0])); }, {a});
    h.run("atan", [&](std::vector<Tensor>& p) { return sum(ops::atan(p[0])); }, {a});
    Tensor ax = sample(rng, s, -2, 2, {0.0}, 0.05);
    Tensor ay = sample(rng, s, -2, 2, {0.0}, 0.05);
    h.run("atan2", [&](std::vector<Tensor>& p) { return sum(ops::atan2(p[0], p[1])); }, {ay, ax});
    Tensor pos = sample(rng, s, 0.1, 2.0);
    h.run("sqrt", [&](std::vector<Tensor>& p) { return sum(ops::sqrt(p[0])); }, {pos});
    h.run("exp", [&](std::vector<Tensor>& p) { return sum(ops::exp(p[0])); }, {a});
    h.run("log", [&](std::vector<Tensor>& p) { return sum(ops::log(p[0])); }, {pos});

    h.run("sum", [&](std::vector<Tensor>& p) { return sum(ops::mul(p[0], p[0])); }, {a});
    h.run("sum_axis0",
          [&](std::vector<Tensor>& p) {
            Tensor sa = ops::sum_axis(p[0], 0);
            return sum(ops::mul(sa, sa));
          },
          {a});
    h.run("sum_axis1",
          [&](std::vector<Tensor>& p) {
            Tensor sa = ops::sum_axis(p[0], 1);
            return sum(ops::mul(sa, sa));
          },
          {a});
    h.run("mean", [&](std::vector<Tensor>& p) { return ops::mean(ops::mul(p[0], p[0])); }, {a});
    h.run("softmax",
          [&](std::vector<Tensor>& p) { return sum(ops::mul(ops::softmax(p[0]), w)); }, {a});
    Tensor acl = sample(rng, s, -2, 2, {-1.0, 1.0});
    h.run("clamp", [&](std::vector<Tensor>& p) { return sum(ops::clamp(p[0], -1.0, 1.0)); },
          {acl});
    // keep samples away from the +-pi wrap boundary
    Tensor aw = sample(rng, s, -2, 2, {});
    h.run("wrap_angle", [&](std::vector<Tensor>& p) { return sum(ops::wrap_angle(p[0])); }, {aw});
    h.run("add_scalar", [&](std::vector<Tensor>& p) { return sum(ops::add_scalar(p[0], 0.7)); },
          {a});
    h.run("mul_scalar", [&](std::vector<Tensor>& p) { return sum(ops::mul_scalar(p[0], -1.3)); },
          {a});
    Tensor hub = sample(rng, s, -2, 2, {-1.0, 1.0});
    h.run("huber", [&](std::vector<Tensor>& p) { return sum(ops::huber(p[0], 1.0)); }, {hub});
  }

  // conv2d is costlier; fewer repetitions
  for (int r = 0; r < 10; ++r) {
    Tensor x = sample(rng, {1, 2, 6, 6}, -2, 2);
    Tensor w = sample(rng, {3, 2, 3, 3}, -1, 1);
    Tensor b = sample(rng, {3}, -1, 1);
    h.run("conv2d",
          [&](std::vector<Tensor>& p) { return sum(ops::conv2d(p[0], p[1], p[2], 2)); },
          {x, w, b});
  }

  // collapse repeated rounds into one case per op, worst error wins
  std::vector<GradCheckCase> merged;
  for (const auto& c : h.cases) {
    auto it = std::find_if(merged.begin(), merged.end(),
                           [&](const GradCheckCase& m) { return m.name == c.name; });
    if (it == merged.end())
      merged.push_back(c);
    else {
      it->max_rel_err = std::max(it->max_rel_err, c.max_rel_err);
      it->passed = it->passed && c.passed;
    }
  }
  return merged;
}

}  // namespace ap
