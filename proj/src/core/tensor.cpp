#include "core/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ap {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

size_t shape_product(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

}  // namespace

void tape_touch(Tape* t, const std::shared_ptr<TensorData>& td) { t->touched_.push_back(td); }

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_product(shape) != values.size())
    raise(ErrorKind::Dimension, "tensor values length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape));
  d_ = std::make_shared<TensorData>();
  d_->shape = std::move(shape);
  d_->values = std::move(values);
  d_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::from(std::vector<double> values, bool requires_grad) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values), requires_grad);
}

Tensor Tensor::uniform_init(Shape shape, double bound, Rng& rng, bool requires_grad) {
  size_t n = shape_product(shape);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

double Tensor::item() const {
  if (size() != 1) raise(ErrorKind::Contract, "item() on non-scalar tensor " + shape_str(shape()));
  return d_->values[0];
}

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::clear() {
  nodes_.clear();
  touched_.clear();
}

void Tape::backward(const Tensor& output) {
  if (output.size() != 1)
    raise(ErrorKind::Contract, "backward requires a scalar output, got shape " +
                                   shape_str(output.shape()));
  for (auto& td : touched_) td->grad.assign(td->values.size(), 0.0);
  auto out = output.data();
  out->ensure_grad();
  out->grad.assign(out->values.size(), 0.0);
  out->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

namespace ops {

namespace {

// Broadcast patterns supported by the elementwise binary ops.
enum class Bc { Same, ScalarA, ScalarB, RowA, RowB };

Bc classify(const Tensor& a, const Tensor& b, const char* opname) {
  if (a.shape() == b.shape()) return Bc::Same;
  if (a.size() == 1) return Bc::ScalarA;
  if (b.size() == 1) return Bc::ScalarB;
  if (a.ndim() == 2 && b.ndim() == 1 && a.dim(1) == b.dim(0)) return Bc::RowB;
  if (b.ndim() == 2 && a.ndim() == 1 && b.dim(1) == a.dim(0)) return Bc::RowA;
  raise(ErrorKind::Dimension, std::string(opname) + ": incompatible shapes " +
                                  shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

// Maps an output flat index to operand flat indices under the pattern.
struct BcIndex {
  Bc bc;
  size_t cols = 0;
  size_t ia(size_t i) const { return bc == Bc::ScalarA ? 0 : (bc == Bc::RowA ? i % cols : i); }
  size_t ib(size_t i) const { return bc == Bc::ScalarB ? 0 : (bc == Bc::RowB ? i % cols : i); }
};

Tensor make_output(const Tensor& a, const Tensor& b, Bc bc) {
  const Tensor& big = (bc == Bc::ScalarA || bc == Bc::RowA) ? b : a;
  return Tensor::zeros(big.shape());
}

void record_unary(const Tensor& x, const Tensor& out, std::function<void()> fn) {
  Tape* t = Tape::active();
  if (!t || !x.requires_grad()) return;
  const_cast<Tensor&>(out).set_requires_grad(true);
  tape_touch(t, x.data());
  tape_touch(t, out.data());
  t->record({std::move(fn)});
}

void record_binary(const Tensor& a, const Tensor& b, const Tensor& out, std::function<void()> fn) {
  Tape* t = Tape::active();
  if (!t || (!a.requires_grad() && !b.requires_grad())) return;
  const_cast<Tensor&>(out).set_requires_grad(true);
  tape_touch(t, a.data());
  tape_touch(t, b.data());
  tape_touch(t, out.data());
  t->record({std::move(fn)});
}

Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          double (*fwd)(double, double),
                          void (*bwd)(double va, double vb, double g, double& ga, double& gb),
                          bool domain_checked = false) {
  Bc bc = classify(a, b, name);
  BcIndex ix{bc, 0};
  if (bc == Bc::RowA) ix.cols = a.dim(0);
  if (bc == Bc::RowB) ix.cols = b.dim(0);
  Tensor out = make_output(a, b, bc);
  size_t n = out.size();
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < n; ++i) {
    double vb = bv[ix.ib(i)];
    if (domain_checked && vb == 0.0)
      raise(ErrorKind::Domain, std::string(name) + ": zero divisor at index " + std::to_string(i));
    ov[i] = fwd(av[ix.ia(i)], vb);
  }
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  bool need_a = a.requires_grad();
  bool need_b = b.requires_grad();
  record_binary(a, b, out, [ad, bd, od, ix, n, bwd, need_a, need_b]() {
    if (need_a) ad->ensure_grad();
    if (need_b) bd->ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      double ga = 0, gb = 0;
      bwd(ad->values[ix.ia(i)], bd->values[ix.ib(i)], od->grad[i], ga, gb);
      if (need_a) ad->grad[ix.ia(i)] += ga;
      if (need_b) bd->grad[ix.ib(i)] += gb;
    }
  });
  return out;
}

Tensor unary_elementwise(const Tensor& x, double (*fwd)(double),
                         double (*dydx)(double x, double y)) {
  Tensor out = Tensor::zeros(x.shape());
  size_t n = x.size();
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
  auto xd = x.data();
  auto od = out.data();
  record_unary(x, out, [xd, od, n, dydx]() {
    xd->ensure_grad();
    for (size_t i = 0; i < n; ++i)
      xd->grad[i] += od->grad[i] * dydx(xd->values[i], od->values[i]);
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g, double& ga, double& gb) { ga = g; gb = g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g, double& ga, double& gb) { ga = g; gb = -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& ga, double& gb) { ga = g * y; gb = g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double x, double y, double g, double& ga, double& gb) {
        ga = g / y;
        gb = -g * x / (y * y);
      },
      /*domain_checked=*/true);
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  size_t n = a.size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + c;
  auto ad = a.data();
  auto od = out.data();
  record_unary(a, out, [ad, od, n]() {
    ad->ensure_grad();
    for (size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i];
  });
  return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  size_t n = a.size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * c;
  auto ad = a.data();
  auto od = out.data();
  record_unary(a, out, [ad, od, n, c]() {
    ad->ensure_grad();
    for (size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i] * c;
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    raise(ErrorKind::Dimension,
          "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < m; ++i)
    for (size_t l = 0; l < k; ++l) {
      double ail = av[i * k + l];
      if (ail == 0.0) continue;
      for (size_t j = 0; j < n; ++j) ov[i * n + j] += ail * bv[l * n + j];
    }
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  bool need_a = a.requires_grad();
  bool need_b = b.requires_grad();
  record_binary(a, b, out, [ad, bd, od, m, k, n, need_a, need_b]() {
    if (need_a) {
      ad->ensure_grad();
      // gA = g . B^T
      for (size_t i = 0; i < m; ++i)
        for (size_t l = 0; l < k; ++l) {
          double acc = 0;
          for (size_t j = 0; j < n; ++j) acc += od->grad[i * n + j] * bd->values[l * n + j];
          ad->grad[i * k + l] += acc;
        }
    }
    if (need_b) {
      bd->ensure_grad();
      // gB = A^T . g
      for (size_t l = 0; l < k; ++l)
        for (size_t j = 0; j < n; ++j) {
          double acc = 0;
          for (size_t i = 0; i < m; ++i) acc += ad->values[i * k + l] * od->grad[i * n + j];
          bd->grad[l * n + j] += acc;
        }
    }
  });
  return out;
}

namespace {

struct AxisSplit {
  size_t outer, axis_len, inner;
};

AxisSplit split_at(const Shape& s, size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& xs, size_t axis) {
  if (xs.empty()) raise(ErrorKind::Contract, "concat: empty input list");
  const Shape& ref = xs[0].shape();
  if (axis >= ref.size()) raise(ErrorKind::Dimension, "concat: axis out of range");
  size_t total_axis = 0;
  for (const auto& x : xs) {
    if (x.ndim() != ref.size())
      raise(ErrorKind::Dimension, "concat: rank mismatch");
    for (size_t i = 0; i < ref.size(); ++i)
      if (i != axis && x.dim(i) != ref[i])
        raise(ErrorKind::Dimension, "concat: shape mismatch at dim " + std::to_string(i));
    total_axis += x.dim(axis);
  }
  Shape out_shape = ref;
  out_shape[axis] = total_axis;
  Tensor out = Tensor::zeros(out_shape);
  AxisSplit sp = split_at(out_shape, axis);
  size_t offset = 0;
  bool any_grad = false;
  for (const auto& x : xs) {
    size_t alen = x.dim(axis);
    for (size_t o = 0; o < sp.outer; ++o)
      for (size_t a = 0; a < alen; ++a)
        for (size_t in = 0; in < sp.inner; ++in)
          out.values()[(o * sp.axis_len + offset + a) * sp.inner + in] =
              x.values()[(o * alen + a) * sp.inner + in];
    offset += alen;
    any_grad = any_grad || x.requires_grad();
  }
  Tape* t = Tape::active();
  if (t && any_grad) {
    const_cast<Tensor&>(out).set_requires_grad(true);
    std::vector<std::shared_ptr<TensorData>> in_data;
    std::vector<size_t> axis_lens;
    std::vector<bool> needs;
    for (const auto& x : xs) {
      in_data.push_back(x.data());
      axis_lens.push_back(x.dim(axis));
      needs.push_back(x.requires_grad());
      tape_touch(t, x.data());
    }
    auto od = out.data();
    tape_touch(t, od);
    t->record({[in_data, axis_lens, needs, od, sp]() {
      size_t off = 0;
      for (size_t xi = 0; xi < in_data.size(); ++xi) {
        size_t alen = axis_lens[xi];
        if (needs[xi]) {
          auto& xd = in_data[xi];
          xd->ensure_grad();
          for (size_t o = 0; o < sp.outer; ++o)
            for (size_t a = 0; a < alen; ++a)
              for (size_t in = 0; in < sp.inner; ++in)
                xd->grad[(o * alen + a) * sp.inner + in] +=
                    od->grad[(o * sp.axis_len + off + a) * sp.inner + in];
        }
        off += alen;
      }
    }});
  }
  return out;
}

Tensor slice(const Tensor& x, size_t axis, size_t start, size_t len) {
  if (axis >= x.ndim()) raise(ErrorKind::Dimension, "slice: axis out of range");
  if (start + len > x.dim(axis))
    raise(ErrorKind::Dimension, "slice: range [" + std::to_string(start) + "," +
                                    std::to_string(start + len) + ") exceeds dim " +
                                    std::to_string(x.dim(axis)));
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  Tensor out = Tensor::zeros(out_shape);
  AxisSplit sp = split_at(x.shape(), axis);
  for (size_t o = 0; o < sp.outer; ++o)
    for (size_t a = 0; a < len; ++a)
      for (size_t in = 0; in < sp.inner; ++in)
        out.values()[(o * len + a) * sp.inner + in] =
            x.values()[(o * sp.axis_len + start + a) * sp.inner + in];
  auto xd = x.data();
  auto od = out.data();
  record_unary(x, out, [xd, od, sp, start, len]() {
    xd->ensure_grad();
    for (size_t o = 0; o < sp.outer; ++o)
      for (size_t a = 0; a < len; ++a)
        for (size_t in = 0; in < sp.inner; ++in)
          xd->grad[(o * sp.axis_len + start + a) * sp.inner + in] +=
              od->grad[(o * len + a) * sp.inner + in];
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_product(shape) != x.size())
    raise(ErrorKind::Dimension,
          "reshape: size mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor out(std::move(shape), x.values());
  auto xd = x.data();
  auto od = out.data();
  size_t n = x.size();
  record_unary(x, out, [xd, od, n]() {
    xd->ensure_grad();
    for (size_t i = 0; i < n; ++i) xd->grad[i] += od->grad[i];
  });
  return out;
}

Tensor tanh(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sin(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::sin(v); },
      [](double v, double) { return std::cos(v); });
}

Tensor cos(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::cos(v); },
      [](double v, double) { return -std::sin(v); });
}

Tensor atan(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::atan(v); },
      [](double v, double) { return 1.0 / (1.0 + v * v); });
}

Tensor atan2(const Tensor& y, const Tensor& x) {
  if (y.shape() != x.shape())
    raise(ErrorKind::Dimension, "atan2: shape mismatch " + shape_str(y.shape()) + " vs " +
                                    shape_str(x.shape()));
  Tensor out = Tensor::zeros(y.shape());
  size_t n = y.size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = std::atan2(y.values()[i], x.values()[i]);
  auto yd = y.data();
  auto xd = x.data();
  auto od = out.data();
  bool need_y = y.requires_grad();
  bool need_x = x.requires_grad();
  record_binary(y, x, out, [yd, xd, od, n, need_y, need_x]() {
    if (need_y) yd->ensure_grad();
    if (need_x) xd->ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      double yv = yd->values[i], xv = xd->values[i];
      double r2 = xv * xv + yv * yv;
      // subgradient at the origin defined as zero
      double gy = r2 > 0.0 ? xv / r2 : 0.0;
      double gx = r2 > 0.0 ? -yv / r2 : 0.0;
      if (need_y) yd->grad[i] += od->grad[i] * gy;
      if (need_x) xd->grad[i] += od->grad[i] * gx;
    }
  });
  return out;
}

Tensor sqrt(const Tensor& x) {
  for (size_t i = 0; i < x.size(); ++i)
    if (x.values()[i] < 0.0)
      raise(ErrorKind::Domain, "sqrt: negative operand at index " + std::to_string(i));
  return unary_elementwise(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor exp(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (size_t i = 0; i < x.size(); ++i)
    if (x.values()[i] <= 0.0)
      raise(ErrorKind::Domain, "log: non-positive operand at index " + std::to_string(i));
  return unary_elementwise(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor sum(const Tensor& x) {
  double acc = 0;
  for (double v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  auto xd = x.data();
  auto od = out.data();
  size_t n = x.size();
  record_unary(x, out, [xd, od, n]() {
    xd->ensure_grad();
    for (size_t i = 0; i < n; ++i) xd->grad[i] += od->grad[0];
  });
  return out;
}

Tensor sum_axis(const Tensor& x, size_t axis) {
  if (x.ndim() != 2 || axis > 1) raise(ErrorKind::Dimension, "sum_axis: 2-D tensors only");
  size_t m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({axis == 0 ? n : m});
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out.values()[axis == 0 ? j : i] += x.values()[i * n + j];
  auto xd = x.data();
  auto od = out.data();
  record_unary(x, out, [xd, od, m, n, axis]() {
    xd->ensure_grad();
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) xd->grad[i * n + j] += od->grad[axis == 0 ? j : i];
  });
  return out;
}

Tensor mean(const Tensor& x) {
  size_t n = x.size();
  double acc = 0;
  for (double v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  auto xd = x.data();
  auto od = out.data();
  record_unary(x, out, [xd, od, n]() {
    xd->ensure_grad();
    double g = od->grad[0] / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) xd->grad[i] += g;
  });
  return out;
}

Tensor softmax(const Tensor& x) {
  size_t rows = 1, cols = x.size();
  if (x.ndim() == 2) {
    rows = x.dim(0);
    cols = x.dim(1);
  } else if (x.ndim() != 1) {
    raise(ErrorKind::Dimension, "softmax: 1-D or 2-D tensors only");
  }
  Tensor out = Tensor::zeros(x.shape());
  for (size_t r = 0; r < rows; ++r) {
    double mx = x.values()[r * cols];
    for (size_t j = 1; j < cols; ++j) mx = std::max(mx, x.values()[r * cols + j]);
    double z = 0;
    for (size_t j = 0; j < cols; ++j) {
      double e = std::exp(x.values()[r * cols + j] - mx);
      out.values()[r * cols + j] = e;
      z += e;
    }
    for (size_t j = 0; j < cols; ++j) out.values()[r * cols + j] /= z;
  }
  auto xd = x.data();
  auto od = out.data();
  record_unary(x, out, [xd, od, rows, cols]() {
    xd->ensure_grad();
    for (size_t r = 0; r < rows; ++r) {
      double dot = 0;
      for (size_t j = 0; j < cols; ++j)
        dot += od->grad[r * cols + j] * od->values[r * cols + j];
      for (size_t j = 0; j < cols; ++j)
        xd->grad[r * cols + j] +=
            od->values[r * cols + j] * (od->grad[r * cols + j] - dot);
    }
  });
  return out;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) raise(ErrorKind::Contract, "clamp: lo > hi");
  Tensor out = Tensor::zeros(x.shape());
  size_t n = x.size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = std::min(hi, std::max(lo, x.values()[i]));
  auto xd = x.data();
  auto od = out.data();
  record_unary(x, out, [xd, od, n, lo, hi]() {
    xd->ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      double v = xd->values[i];
      // inclusive interior: pass-through exactly at the bounds
      if (v >= lo && v <= hi) xd->grad[i] += od->grad[i];
    }
  });
  return out;
}

Tensor wrap_angle(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  size_t n = x.size();
  constexpr double two_pi = 6.283185307179586476925286766559;
  for (size_t i = 0; i < n; ++i) {
    double a = std::fmod(x.values()[i] + 3.1415926535897932384626433832795, two_pi);
    if (a < 0) a += two_pi;
    out.values()[i] = a - 3.1415926535897932384626433832795;
  }
  auto xd = x.data();
  auto od = out.data();
  record_unary(x, out, [xd, od, n]() {
    xd->ensure_grad();
    for (size_t i = 0; i < n; ++i) xd->grad[i] += od->grad[i];
  });
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride) {
  if (x.ndim() != 4 || w.ndim() != 4 || b.ndim() != 1)
    raise(ErrorKind::Dimension, "conv2d: expects x[B,C,H,W], w[O,C,kh,kw], b[O]");
  size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  size_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != C || b.dim(0) != O)
    raise(ErrorKind::Dimension, "conv2d: channel mismatch");
  if (H < kh || W < kw) raise(ErrorKind::Dimension, "conv2d: kernel larger than input");
  if (stride == 0) raise(ErrorKind::Contract, "conv2d: zero stride");
  size_t Ho = (H - kh) / stride + 1;
  size_t Wo = (W - kw) / stride + 1;
  Tensor out = Tensor::zeros({B, O, Ho, Wo});
  const auto& xv = x.values();
  const auto& wv = w.values();
  auto& ov = out.values();
  for (size_t bi = 0; bi < B; ++bi)
    for (size_t o = 0; o < O; ++o)
      for (size_t i = 0; i < Ho; ++i)
        for (size_t j = 0; j < Wo; ++j) {
          double acc = b.values()[o];
          for (size_t c = 0; c < C; ++c)
            for (size_t u = 0; u < kh; ++u) {
              const double* xrow = &xv[((bi * C + c) * H + i * stride + u) * W + j * stride];
              const double* wrow = &wv[((o * C + c) * kh + u) * kw];
              for (size_t v = 0; v < kw; ++v) acc += xrow[v] * wrow[v];
            }
          ov[((bi * O + o) * Ho + i) * Wo + j] = acc;
        }
  auto xd = x.data();
  auto wd = w.data();
  auto bdat = b.data();
  auto od = out.data();
  bool need_x = x.requires_grad();
  bool need_w = w.requires_grad();
  bool need_b = b.requires_grad();
  Tape* t = Tape::active();
  if (t && (need_x || need_w || need_b)) {
    const_cast<Tensor&>(out).set_requires_grad(true);
    tape_touch(t, xd);
    tape_touch(t, wd);
    tape_touch(t, bdat);
    tape_touch(t, od);
    t->record({[xd, wd, bdat, od, B, C, H, W, O, kh, kw, Ho, Wo, stride, need_x, need_w,
                need_b]() {
      if (need_x) xd->ensure_grad();
      if (need_w) wd->ensure_grad();
      if (need_b) bdat->ensure_grad();
      for (size_t bi = 0; bi < B; ++bi)
        for (size_t o = 0; o < O; ++o)
          for (size_t i = 0; i < Ho; ++i)
            for (size_t j = 0; j < Wo; ++j) {
              double g = od->grad[((bi * O + o) * Ho + i) * Wo + j];
              if (g == 0.0) continue;
              if (need_b) bdat->grad[o] += g;
              for (size_t c = 0; c < C; ++c)
                for (size_t u = 0; u < kh; ++u) {
                  size_t xbase = ((bi * C + c) * H + i * stride + u) * W + j * stride;
                  size_t wbase = ((o * C + c) * kh + u) * kw;
                  for (size_t v = 0; v < kw; ++v) {
                    if (need_w) wd->grad[wbase + v] += g * xd->values[xbase + v];
                    if (need_x) xd->grad[xbase + v] += g * wd->values[wbase + v];
                  }
                }
            }
    }});
  }
  return out;
}

Tensor huber(const Tensor& diff, double h) {
  if (h <= 0.0) raise(ErrorKind::Contract, "huber: cutoff must be positive");
  Tensor c = clamp(diff, -h, h);
  return sub(mul(c, diff), mul_scalar(mul(c, c), 0.5));
}

}  // namespace ops

}  // namespace ap
