#include "model/nets.hpp"

#include <cmath>

namespace ap::model {

using namespace ops;

Linear::Linear(ParamRegistry& reg, const std::string& name, size_t in, size_t out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  w = reg.make(name + ".w", {in, out}, bound, rng);
  b = reg.make(name + ".b", {out}, bound, rng);
}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, w), b); }

Mlp::Mlp(ParamRegistry& reg, const std::string& name, size_t in,
         const std::vector<size_t>& hidden, size_t out, Rng& rng) {
  size_t prev = in;
  for (size_t i = 0; i < hidden.size(); ++i) {
    layers.emplace_back(reg, name + ".l" + std::to_string(i), prev, hidden[i], rng);
    prev = hidden[i];
  }
  layers.emplace_back(reg, name + ".head", prev, out, rng);
}

Tensor Mlp::forward(const Tensor& x, bool bounded_output) const {
  Tensor h = x;
  for (size_t i = 0; i + 1 < layers.size(); ++i) h = ops::tanh(layers[i].forward(h));
  h = layers.back().forward(h);
  return bounded_output ? ops::tanh(h) : h;
}

GruCell::GruCell(ParamRegistry& reg, const std::string& name, size_t in, size_t h, Rng& rng)
    : hidden(h) {
  double bound = 1.0 / std::sqrt(static_cast<double>(h));
  w_ih = reg.make(name + ".w_ih", {in, 3 * h}, bound, rng);
  w_hh = reg.make(name + ".w_hh", {h, 3 * h}, bound, rng);
  b_ih = reg.make(name + ".b_ih", {3 * h}, bound, rng);
  b_hh = reg.make(name + ".b_hh", {3 * h}, bound, rng);
}

Tensor GruCell::step(const Tensor& x, const Tensor& h) const {
  Tensor gi = add(matmul(x, w_ih), b_ih);  // [B,3H]
  Tensor gh = add(matmul(h, w_hh), b_hh);
  size_t H = hidden;
  Tensor r = sigmoid(add(slice(gi, 1, 0, H), slice(gh, 1, 0, H)));
  Tensor z = sigmoid(add(slice(gi, 1, H, H), slice(gh, 1, H, H)));
  Tensor n = ops::tanh(add(slice(gi, 1, 2 * H, H), mul(r, slice(gh, 1, 2 * H, H))));
  // h' = (1-z) n + z h
  return add(sub(n, mul(z, n)), mul(z, h));
}

Gru::Gru(ParamRegistry& reg, const std::string& name, size_t in, size_t hidden, size_t layers,
         Rng& rng) {
  size_t prev = in;
  for (size_t l = 0; l < layers; ++l) {
    cells.emplace_back(reg, name + ".l" + std::to_string(l), prev, hidden, rng);
    prev = hidden;
  }
}

std::vector<Tensor> Gru::zero_state(size_t batch) const {
  std::vector<Tensor> state;
  for (const auto& c : cells) state.push_back(Tensor::zeros({batch, c.hidden}));
  return state;
}

Tensor Gru::step(const Tensor& x, std::vector<Tensor>& state) const {
  Tensor cur = x;
  for (size_t l = 0; l < cells.size(); ++l) {
    state[l] = cells[l].step(cur, state[l]);
    cur = state[l];
  }
  return cur;
}

ConvEncoder::ConvEncoder(ParamRegistry& reg, const std::string& name, size_t c, size_t h,
                         size_t w, size_t feature_size, Rng& rng)
    : in_c(c), in_h(h), in_w(w) {
  auto conv_bound = [](size_t cin, size_t k) {
    return 1.0 / std::sqrt(static_cast<double>(cin * k * k));
  };
  const size_t c1 = 8, c2 = 16, c3 = 32, k = 3, s = 2;
  w1 = reg.make(name + ".conv1.w", {c1, c, k, k}, conv_bound(c, k), rng);
  b1 = reg.make(name + ".conv1.b", {c1}, conv_bound(c, k), rng);
  w2 = reg.make(name + ".conv2.w", {c2, c1, k, k}, conv_bound(c1, k), rng);
  b2 = reg.make(name + ".conv2.b", {c2}, conv_bound(c1, k), rng);
  w3 = reg.make(name + ".conv3.w", {c3, c2, k, k}, conv_bound(c2, k), rng);
  b3 = reg.make(name + ".conv3.b", {c3}, conv_bound(c2, k), rng);
  auto out_hw = [&](size_t d) {
    d = (d - k) / s + 1;
    d = (d - k) / s + 1;
    d = (d - k) / s + 1;
    return d;
  };
  size_t flat = c3 * out_hw(h) * out_hw(w);
  fc = Linear(reg, name + ".fc", flat, feature_size, rng);
}

Tensor ConvEncoder::forward(const Tensor& x) const {
  Tensor h1 = relu(conv2d(x, w1, b1, 2));
  Tensor h2 = relu(conv2d(h1, w2, b2, 2));
  Tensor h3 = relu(conv2d(h2, w3, b3, 2));
  size_t batch = x.dim(0);
  Tensor flat = reshape(h3, {batch, h3.size() / batch});
  return ops::tanh(fc.forward(flat));
}

}  // namespace ap::model
