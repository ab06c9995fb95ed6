#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace ap {

// Reverse-mode autodiff over dense 64-bit float tensors. Ops record nodes on a
// thread-local tape (when one is active and an input requires grad); Tape::backward
// replays the nodes in exact reverse recording order, which is a valid reverse
// topological order because every node's inputs exist before the node is recorded.

using Shape = std::vector<size_t>;

struct TensorData {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until touched by backward

  size_t size() const { return values.size(); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

class Tensor {
public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(std::vector<double> values, bool requires_grad = false);  // 1-D
  // uniform(-bound, bound), the usual fan-in init
  static Tensor uniform_init(Shape shape, double bound, Rng& rng, bool requires_grad = true);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  size_t size() const { return d_->values.size(); }
  size_t dim(size_t i) const { return d_->shape.at(i); }
  size_t ndim() const { return d_->shape.size(); }

  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }
  double& at(size_t i) { return d_->values[i]; }
  double at(size_t i) const { return d_->values[i]; }
  double item() const;  // scalar tensors only

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }
  const std::vector<double>& grad() const { return d_->grad; }
  std::vector<double>& grad_mut() { return d_->grad; }
  void zero_grad() {
    if (d_) d_->grad.assign(d_->values.size(), 0.0);
  }

  std::shared_ptr<TensorData> data() const { return d_; }
  bool same_as(const Tensor& o) const { return d_ == o.d_; }

private:
  std::shared_ptr<TensorData> d_;
};

// One recorded primitive application. `backward` pulls the output grad and
// accumulates into the input grads.
struct TapeNode {
  std::function<void()> backward;
};

class Tape {
public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(TapeNode node) { nodes_.push_back(std::move(node)); }
  size_t node_count() const { return nodes_.size(); }

  // Seeds d(output)/d(output) = 1 and accumulates grads into every
  // requires-grad tensor that participated. Output must be scalar.
  void backward(const Tensor& output);

  // Drops recorded nodes (used between optimizer steps).
  void clear();

private:
  std::vector<TapeNode> nodes_;
  std::vector<std::shared_ptr<TensorData>> touched_;
  Tape* prev_ = nullptr;

  friend void tape_touch(Tape* t, const std::shared_ptr<TensorData>& td);
};

namespace ops {

// elementwise with limited broadcasting: same shape, scalar (size 1) either
// side, or [B,N] against [N] (row-broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);           // [m,k] x [k,n]
Tensor concat(const std::vector<Tensor>& xs, size_t axis);
Tensor slice(const Tensor& x, size_t axis, size_t start, size_t len);
Tensor reshape(const Tensor& x, Shape shape);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor atan(const Tensor& x);
Tensor atan2(const Tensor& y, const Tensor& x);            // elementwise, same shape
Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor sum(const Tensor& x);                               // -> scalar
Tensor sum_axis(const Tensor& x, size_t axis);             // 2-D only
Tensor mean(const Tensor& x);                              // -> scalar
Tensor softmax(const Tensor& x);                           // 1-D, or row-wise on 2-D
Tensor clamp(const Tensor& x, double lo, double hi);       // pass-through grad on [lo,hi]

// Angle reduction to (-pi, pi]; locally a constant shift, so the gradient is identity.
Tensor wrap_angle(const Tensor& x);

// x: [B,Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout]; valid padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride);

// Composed, not primitive: c = clamp(d,-h,h); huber = c*d - c*c/2.
// Value and gradient match the Huber definition exactly, including d(huber)/dd = clamp(d,-h,h).
Tensor huber(const Tensor& diff, double h);

}  // namespace ops

inline Tensor operator+(const Tensor& a, const Tensor& b) { return ops::add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return ops::sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return ops::mul(a, b); }

}  // namespace ap
