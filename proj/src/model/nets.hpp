#pragma once

#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace ap::model {

// Named parameter store shared by the optimizer and the checkpoint writer.
// Registration order is the serialization order.
struct ParamRegistry {
  std::vector<std::pair<std::string, Tensor>> params;

  Tensor make(const std::string& name, Shape shape, double bound, Rng& rng) {
    Tensor t = Tensor::uniform_init(std::move(shape), bound, rng, true);
    params.emplace_back(name, t);
    return t;
  }
};

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, size_t in, size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;  // [B,in] -> [B,out]
};

struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(ParamRegistry& reg, const std::string& name, size_t in,
      const std::vector<size_t>& hidden, size_t out, Rng& rng);
  // tanh between layers; the head is linear unless bounded=true (then tanh)
  Tensor forward(const Tensor& x, bool bounded_output) const;
};

// Stacked GRU cells, PyTorch gate layout (reset, update, candidate).
struct GruCell {
  Tensor w_ih;  // [in, 3H]
  Tensor w_hh;  // [H, 3H]
  Tensor b_ih;  // [3H]
  Tensor b_hh;  // [3H]
  size_t hidden = 0;

  GruCell() = default;
  GruCell(ParamRegistry& reg, const std::string& name, size_t in, size_t h, Rng& rng);
  Tensor step(const Tensor& x, const Tensor& h) const;  // [B,in],[B,H] -> [B,H]
};

struct Gru {
  std::vector<GruCell> cells;

  Gru() = default;
  Gru(ParamRegistry& reg, const std::string& name, size_t in, size_t hidden, size_t layers,
      Rng& rng);
  size_t hidden_size() const { return cells.empty() ? 0 : cells[0].hidden; }
  std::vector<Tensor> zero_state(size_t batch) const;
  // advances all layers one step; returns the top-layer output
  Tensor step(const Tensor& x, std::vector<Tensor>& state) const;
};

// Three stride-2 convolutions and a projection head. Input [B,C,H,W].
struct ConvEncoder {
  Tensor w1, b1, w2, b2, w3, b3;
  Linear fc;
  size_t in_c = 0, in_h = 0, in_w = 0;

  ConvEncoder() = default;
  ConvEncoder(ParamRegistry& reg, const std::string& name, size_t c, size_t h, size_t w,
              size_t feature_size, Rng& rng);
  Tensor forward(const Tensor& x) const;  // -> [B,F], tanh-bounded
};

}  // namespace ap::model
