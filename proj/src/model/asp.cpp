#include "model/asp.hpp"

#include <algorithm>
#include <cmath>

#include "kin/diff_rollout.hpp"

namespace ap::model {

using namespace ops;

namespace {

constexpr double kPi = 3.1415926535897932384626433832795;

Tensor broadcast_row(const Tensor& row, size_t batch) {
  // [1,E] -> [B,E]
  Tensor ones = Tensor::full({batch, 1}, 1.0);
  return matmul(ones, row);
}

Tensor zeros_like_batch(size_t batch, size_t dim) { return Tensor::zeros({batch, dim}); }

double affine_to_phys(double raw, double lo, double hi) {
  return lo + (raw + 1.0) * 0.5 * (hi - lo);
}

double affine_to_raw(double phys, double lo, double hi) {
  double r = 2.0 * (phys - lo) / (hi - lo) - 1.0;
  return std::clamp(r, -1.0, 1.0);
}

}  // namespace

AspModel::AspModel(const ModelConfig& cfg, const LossConfig& loss, uint64_t seed)
    : cfg_(cfg), loss_(loss) {
  Rng rng(seed, 1);
  if (cfg_.encoder == EncoderKind::TinyConv) {
    conv_phi_ = ConvEncoder(reg_, "phi", cfg_.raster.channels(), cfg_.raster.height,
                            cfg_.raster.width, cfg_.feature_size, rng);
  } else {
    mlp_phi_ = Mlp(reg_, "phi", bev::kFeatureVectorSize, {32}, cfg_.feature_size, rng);
  }
  size_t gamma_in = cfg_.token_dim() + z_ctx_dim() + cfg_.mode_embed;
  gamma_ = Gru(reg_, "gamma", gamma_in, cfg_.hidden_size, cfg_.gru_layers, rng);
  gamma_head_ = Linear(reg_, "gamma.out", cfg_.hidden_size, cfg_.out_dim(), rng);
  gamma_logits_ = Linear(reg_, "gamma.logits", cfg_.hidden_size, cfg_.mode_count, rng);
  mode_embeds_ = reg_.make("gamma.mode_embeds", {cfg_.mode_count, cfg_.mode_embed}, 0.5, rng);
  if (cfg_.arch == Architecture::Ssp) {
    psi_ = Gru(reg_, "psi", 2 + cfg_.feature_size, cfg_.hidden_size, cfg_.gru_layers, rng);
    psi_head_ = Linear(reg_, "psi.out", cfg_.hidden_size, cfg_.feature_size, rng);
    xi_ = Mlp(reg_, "xi", 2 * cfg_.feature_size, cfg_.xi_layers, cfg_.horizon * 2, rng);
  }
}

Checkpoint AspModel::to_checkpoint(const std::string& config_json) const {
  Checkpoint ck;
  ck.config_json = config_json;
  for (const auto& [name, t] : reg_.params)
    ck.entries.emplace_back(name, Tensor(t.shape(), t.values()));
  return ck;
}

void AspModel::load_weights(const Checkpoint& ck) {
  for (auto& [name, t] : reg_.params) {
    const Tensor* src = ck.find(name);
    if (!src) raise(ErrorKind::Config, "checkpoint: missing parameter '" + name + "'");
    if (src->shape() != t.shape())
      raise(ErrorKind::Config, "checkpoint: shape mismatch for parameter '" + name + "'");
    t.values() = src->values();
  }
}

Tensor AspModel::encode(const Tensor& context) const {
  return cfg_.encoder == EncoderKind::TinyConv ? conv_phi_.forward(context)
                                               : mlp_phi_.forward(context, true);
}

ModeSetT AspModel::predict_actions(const Tensor& z_ctx, const std::vector<Tensor>& hist_tokens,
                                   size_t steps) const {
  if (hist_tokens.empty()) raise(ErrorKind::Contract, "predict_actions: empty history");
  size_t B = hist_tokens[0].dim(0);
  size_t token_dim = cfg_.token_dim();
  Tensor zero_emb = zeros_like_batch(B, cfg_.mode_embed);
  Tensor zero_z = zeros_like_batch(B, z_ctx_dim());

  auto state = gamma_.zero_state(B);
  Tensor top;
  for (size_t t = 0; t < hist_tokens.size(); ++t) {
    const Tensor& z_in = (cfg_.inject_z_every_step || t == 0) ? z_ctx : zero_z;
    top = gamma_.step(concat({hist_tokens[t], z_in, zero_emb}, 1), state);
  }

  ModeSetT out;
  out.logits = gamma_logits_.forward(top);
  out.raw.resize(cfg_.mode_count);
  for (size_t m = 0; m < cfg_.mode_count; ++m) {
    auto mode_state = state;  // continue from the history hidden state
    Tensor emb = broadcast_row(slice(mode_embeds_, 0, m, 1), B);
    Tensor prev = hist_tokens.back();
    for (size_t k = 0; k < steps; ++k) {
      const Tensor& z_in = cfg_.inject_z_every_step ? z_ctx : zero_z;
      Tensor h = gamma_.step(concat({prev, z_in, emb}, 1), mode_state);
      Tensor raw = ops::tanh(gamma_head_.forward(h));
      out.raw[m].push_back(raw);
      prev = cfg_.out_dim() == token_dim
                 ? raw
                 : concat({raw, zeros_like_batch(B, token_dim - cfg_.out_dim())}, 1);
    }
  }
  return out;
}

Tensor AspModel::predict_features(const Tensor& z, const std::vector<Tensor>& action_tokens) const {
  if (cfg_.arch != Architecture::Ssp)
    raise(ErrorKind::Contract, "predict_features: feed-forward model has no feature predictor");
  size_t B = z.dim(0);
  auto state = psi_.zero_state(B);
  Tensor top;
  for (const auto& a : action_tokens) top = psi_.step(concat({a, z}, 1), state);
  return ops::tanh(psi_head_.forward(top));
}

std::vector<Tensor> AspModel::reconstruct_actions(const Tensor& z0, const Tensor& z1) const {
  if (cfg_.arch != Architecture::Ssp)
    raise(ErrorKind::Contract, "reconstruct_actions: feed-forward model has no reconstructor");
  Tensor flat = xi_.forward(concat({z0, z1}, 1), true);  // [B, T*2]
  std::vector<Tensor> out;
  for (size_t t = 0; t < cfg_.horizon; ++t) out.push_back(slice(flat, 1, 2 * t, 2));
  return out;
}

double AspModel::phys_a(double raw) const { return affine_to_phys(raw, cfg_.a_min, cfg_.a_max); }
double AspModel::phys_delta(double raw) const {
  return affine_to_phys(raw, cfg_.delta_min, cfg_.delta_max);
}
double AspModel::norm_a(double a) const { return affine_to_raw(a, cfg_.a_min, cfg_.a_max); }
double AspModel::norm_delta(double d) const {
  return affine_to_raw(d, cfg_.delta_min, cfg_.delta_max);
}

Tensor AspModel::phys_a(const Tensor& raw_col) const {
  return add_scalar(mul_scalar(add_scalar(raw_col, 1.0), 0.5 * (cfg_.a_max - cfg_.a_min)),
                    cfg_.a_min);
}

Tensor AspModel::phys_delta(const Tensor& raw_col) const {
  return add_scalar(
      mul_scalar(add_scalar(raw_col, 1.0), 0.5 * (cfg_.delta_max - cfg_.delta_min)),
      cfg_.delta_min);
}

// ---------------------------------------------------------------------------
// dataset preparation

namespace {

std::array<double, 4> state_token(const kin::State& s, const bev::EgoFrame& frame,
                                  double theta0) {
  auto [fwd, left] = frame.to_local(s.x, s.y);
  return {fwd / 30.0, left / 30.0, kin::wrap_angle(s.theta - theta0) / kPi, s.v / 15.0};
}

}  // namespace

PreparedDataset prepare_dataset(const data::SnippetCache& cache, const ModelConfig& cfg,
                                bool need_future_ctx) {
  std::vector<size_t> all(cache.snippets.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  return prepare_subset(cache, all, cfg, need_future_ctx);
}

PreparedDataset prepare_subset(const data::SnippetCache& cache,
                               const std::vector<size_t>& snippet_indices,
                               const ModelConfig& cfg, bool need_future_ctx) {
  if (cache.horizon != cfg.horizon)
    raise(ErrorKind::Config, "dataset horizon " + std::to_string(cache.horizon) +
                                 " does not match model horizon " + std::to_string(cfg.horizon));
  if (std::fabs(cache.dt - cfg.dt) > 1e-9)
    raise(ErrorKind::Config, "dataset dt does not match model dt");
  if (cfg.segments == 2 && cache.segments != 2)
    raise(ErrorKind::Config, "two-segment model needs a two-segment snippet cache");

  PreparedDataset ds;
  ds.token_dim = cfg.token_dim();
  if (cfg.encoder == EncoderKind::MlpOnFeatureVector)
    ds.ctx_shape = {bev::kFeatureVectorSize};
  else
    ds.ctx_shape = {cfg.raster.channels(), cfg.raster.height, cfg.raster.width};

  const size_t T = cfg.horizon;
  for (size_t snippet_index : snippet_indices) {
    const auto& sn = cache.snippets.at(snippet_index);
    PreparedDataset::Item item;
    const data::SceneMap& map = cache.maps.at(static_cast<size_t>(sn.map_index));

    auto context_of = [&](bev::Interval iv) -> std::vector<double> {
      if (cfg.encoder == EncoderKind::MlpOnFeatureVector)
        return bev::feature_vector_context(sn, map, iv);
      return bev::rasterize(sn, map, cfg.raster, iv).values;
    };
    item.ctx0 = context_of(bev::Interval::Tau0);
    if (need_future_ctx) {
      item.ctx1 = context_of(bev::Interval::Tau1);
      if (cfg.segments == 2) item.ctx2 = context_of(bev::Interval::Tau2);
    }

    const kin::State& anchor = sn.present_state();
    bev::EgoFrame frame = bev::EgoFrame::from(anchor);
    item.anchor = anchor;
    item.v0 = anchor.v;

    auto norm_a = [&](double a) { return affine_to_raw(a, cfg.a_min, cfg.a_max); };
    auto norm_d = [&](double d) { return affine_to_raw(d, cfg.delta_min, cfg.delta_max); };

    for (size_t t = 0; t < T; ++t) {
      item.hist_actions.push_back(
          {norm_a(sn.past_actions[t].a), norm_d(sn.past_actions[t].delta)});
      std::array<double, 4> tok{0, 0, 0, 0};
      if (!cfg.ablate_action_history) {
        if (cfg.mapping == Mapping::ActionToAction) {
          tok[0] = item.hist_actions.back()[0];
          tok[1] = item.hist_actions.back()[1];
        } else {
          tok = state_token(sn.past_states[t + 1], frame, anchor.theta);
        }
      }
      item.hist_tokens.push_back(tok);
      item.gt1_actions.push_back(
          {norm_a(sn.future_actions_1[t].a), norm_d(sn.future_actions_1[t].delta)});
    }
    for (size_t t = 0; t < T; ++t) {
      auto [fx, fy] = frame.to_local(sn.future_states_1[t].x, sn.future_states_1[t].y);
      item.gt1.push_back({fx, fy});
    }
    if (cfg.segments == 2) {
      for (size_t t = 0; t < T; ++t) {
        auto [fx, fy] = frame.to_local(sn.future_states_2[t].x, sn.future_states_2[t].y);
        item.gt2.push_back({fx, fy});
      }
    }
    ds.items.push_back(std::move(item));
  }
  return ds;
}

Batch gather_batch(const PreparedDataset& ds, const std::vector<size_t>& indices) {
  if (indices.empty()) raise(ErrorKind::Contract, "gather_batch: empty index list");
  Batch b;
  b.size = indices.size();
  const auto& first = ds.items.at(indices[0]);
  b.horizon = first.hist_tokens.size();
  size_t ctx_elems = 1;
  for (size_t d : ds.ctx_shape) ctx_elems *= d;

  auto gather_ctx = [&](std::vector<double> PreparedDataset::Item::* field) {
    std::vector<double> vals;
    vals.reserve(b.size * ctx_elems);
    for (size_t idx : indices) {
      const auto& v = ds.items.at(idx).*field;
      if (v.size() != ctx_elems)
        raise(ErrorKind::Contract, "gather_batch: missing context in prepared dataset");
      vals.insert(vals.end(), v.begin(), v.end());
    }
    Shape shape{b.size};
    for (size_t d : ds.ctx_shape) shape.push_back(d);
    return Tensor(std::move(shape), std::move(vals));
  };

  b.ctx0 = gather_ctx(&PreparedDataset::Item::ctx0);
  if (!first.ctx1.empty()) b.ctx1 = gather_ctx(&PreparedDataset::Item::ctx1);
  if (!first.ctx2.empty()) b.ctx2 = gather_ctx(&PreparedDataset::Item::ctx2);

  size_t token_dim = ds.token_dim;
  for (size_t t = 0; t < b.horizon; ++t) {
    std::vector<double> tok(b.size * token_dim), act(b.size * 2), gta(b.size * 2);
    for (size_t i = 0; i < b.size; ++i) {
      const auto& item = ds.items.at(indices[i]);
      for (size_t d = 0; d < token_dim; ++d) tok[i * token_dim + d] = item.hist_tokens[t][d];
      act[i * 2] = item.hist_actions[t][0];
      act[i * 2 + 1] = item.hist_actions[t][1];
      gta[i * 2] = item.gt1_actions[t][0];
      gta[i * 2 + 1] = item.gt1_actions[t][1];
    }
    b.hist_tokens.push_back(Tensor({b.size, token_dim}, std::move(tok)));
    b.hist_actions.push_back(Tensor({b.size, 2}, std::move(act)));
    b.gt1_actions.push_back(Tensor({b.size, 2}, std::move(gta)));
  }
  for (size_t i = 0; i < b.size; ++i) {
    const auto& item = ds.items.at(indices[i]);
    b.v0.push_back(item.v0);
    b.gt1.push_back(item.gt1);
    b.gt2.push_back(item.gt2);
    b.anchors.push_back(item.anchor);
    b.indices.push_back(indices[i]);
  }
  return b;
}

// ---------------------------------------------------------------------------
// mode selection and chaining

size_t mode_select(const std::vector<std::vector<std::array<double, 2>>>& mode_positions,
                   const std::vector<std::array<double, 2>>& gt, double angle_gate_rad) {
  if (mode_positions.empty()) raise(ErrorKind::Contract, "mode_select: no modes");
  auto chord_angle = [](const std::vector<std::array<double, 2>>& tr) {
    double dx = tr.back()[0] - tr.front()[0];
    double dy = tr.back()[1] - tr.front()[1];
    return (dx * dx + dy * dy) > 1e-18 ? std::atan2(dy, dx) : 0.0;
  };
  double gt_angle = chord_angle(gt);
  std::vector<double> dist(mode_positions.size(), 0.0);
  std::vector<bool> gated(mode_positions.size(), false);
  for (size_t m = 0; m < mode_positions.size(); ++m) {
    const auto& tr = mode_positions[m];
    if (tr.size() != gt.size()) raise(ErrorKind::Contract, "mode_select: length mismatch");
    double acc = 0;
    for (size_t t = 0; t < tr.size(); ++t)
      acc += std::hypot(tr[t][0] - gt[t][0], tr[t][1] - gt[t][1]);
    dist[m] = acc / static_cast<double>(tr.size());
    gated[m] = std::fabs(kin::wrap_angle(chord_angle(tr) - gt_angle)) < angle_gate_rad;
  }
  size_t best = mode_positions.size();
  for (size_t m = 0; m < mode_positions.size(); ++m) {
    if (!gated[m]) continue;
    if (best == mode_positions.size() || dist[m] < dist[best]) best = m;
  }
  if (best != mode_positions.size()) return best;
  best = 0;
  for (size_t m = 1; m < mode_positions.size(); ++m)
    if (dist[m] < dist[best]) best = m;
  return best;
}

size_t chain_select(const std::vector<double>& logits,
                    const std::vector<std::vector<std::array<double, 2>>>& mode_positions,
                    const std::vector<std::array<double, 2>>* label, ChainPolicy policy) {
  if (policy == ChainPolicy::LabelMatch) {
    if (!label) raise(ErrorKind::Contract, "chain_select: label_match requires a label");
    return mode_select(mode_positions, *label, kPi / 4.0);
  }
  size_t best = 0;
  for (size_t m = 1; m < logits.size(); ++m)
    if (logits[m] > logits[best]) best = m;
  return best;
}

// ---------------------------------------------------------------------------
// rolled positions

namespace {

struct RolledModes {
  // [M][steps] of [B]
  std::vector<std::vector<Tensor>> px, py;
  std::vector<kin::StateTensors> final_states;           // [M]
  std::vector<std::vector<kin::StateTensors>> states;    // [M][steps] (kinematic only)
};

kin::StateTensors origin_states(const std::vector<double>& v0) {
  size_t B = v0.size();
  return {Tensor::zeros({B}), Tensor::zeros({B}), Tensor::zeros({B}), Tensor::from(v0)};
}

// Scales raw outputs and propagates them through the kinematic layer (or reads
// positions straight off the head for the regression baselines).
RolledModes roll_modes(const AspModel& m, const ModeSetT& ms, const kin::StateTensors& s0) {
  const ModelConfig& cfg = m.config();
  RolledModes out;
  size_t M = ms.raw.size();
  out.px.resize(M);
  out.py.resize(M);
  out.states.resize(M);
  for (size_t mi = 0; mi < M; ++mi) {
    if (cfg.kinematic_layer()) {
      std::vector<kin::ActionTensors> actions;
      size_t B = ms.raw[mi][0].dim(0);
      for (const auto& raw : ms.raw[mi]) {
        Tensor a_col = reshape(slice(raw, 1, 0, 1), {B});
        Tensor d_col = reshape(slice(raw, 1, 1, 1), {B});
        actions.push_back({m.phys_a(a_col), m.phys_delta(d_col)});
      }
      auto rolled = kin::diff_rollout(s0, actions, cfg.geometry, cfg.dt);
      for (auto& st : rolled.states) {
        out.px[mi].push_back(st.x);
        out.py[mi].push_back(st.y);
      }
      out.states[mi] = rolled.states;
      out.final_states.push_back(rolled.states.back());
    } else {
      size_t B = ms.raw[mi][0].dim(0);
      for (const auto& raw : ms.raw[mi]) {
        out.px[mi].push_back(mul_scalar(reshape(slice(raw, 1, 0, 1), {B}), cfg.pos_range));
        out.py[mi].push_back(mul_scalar(reshape(slice(raw, 1, 1, 1), {B}), cfg.pos_range));
      }
      out.final_states.push_back(s0);
    }
  }
  return out;
}

std::vector<std::vector<std::array<double, 2>>> positions_of_sample(const RolledModes& rolled,
                                                                    size_t b) {
  std::vector<std::vector<std::array<double, 2>>> out(rolled.px.size());
  for (size_t m = 0; m < rolled.px.size(); ++m)
    for (size_t t = 0; t < rolled.px[m].size(); ++t)
      out[m].push_back({rolled.px[m][t].at(b), rolled.py[m][t].at(b)});
  return out;
}

struct Eq10Terms {
  Tensor regression;      // scalar
  Tensor classification;  // scalar
  std::vector<size_t> selected;
};

// Huber regression on the selected mode plus cross-entropy on its score.
Eq10Terms eq10(const AspModel& m, const RolledModes& rolled, const Tensor& logits,
               const std::vector<std::vector<std::array<double, 2>>>& gt) {
  const LossConfig& lc = m.loss_config();
  size_t B = gt.size();
  size_t M = rolled.px.size();
  size_t steps = rolled.px.empty() ? 0 : rolled.px[0].size();
  double gate = lc.angle_gate_deg * kPi / 180.0;

  Eq10Terms out;
  out.selected.resize(B);
  for (size_t b = 0; b < B; ++b)
    out.selected[b] = mode_select(positions_of_sample(rolled, b), gt[b], gate);

  // per-mode sample masks
  std::vector<Tensor> masks(M);
  for (size_t mi = 0; mi < M; ++mi) {
    std::vector<double> mv(B, 0.0);
    for (size_t b = 0; b < B; ++b)
      if (out.selected[b] == mi) mv[b] = 1.0;
    masks[mi] = Tensor::from(std::move(mv));
  }

  Tensor reg = Tensor::scalar(0.0);
  for (size_t mi = 0; mi < M; ++mi) {
    bool used = false;
    for (size_t b = 0; b < B; ++b) used = used || out.selected[b] == mi;
    if (!used) continue;
    Tensor mode_sum = Tensor::scalar(0.0);
    for (size_t t = 0; t < steps; ++t) {
      std::vector<double> gx(B), gy(B);
      for (size_t b = 0; b < B; ++b) {
        gx[b] = gt[b][t][0];
        gy[b] = gt[b][t][1];
      }
      Tensor hx = huber(sub(rolled.px[mi][t], Tensor::from(std::move(gx))), lc.h);
      Tensor hy = huber(sub(rolled.py[mi][t], Tensor::from(std::move(gy))), lc.h);
      mode_sum = add(mode_sum, sum(mul(masks[mi], add(hx, hy))));
    }
    reg = add(reg, mode_sum);
  }
  out.regression = mul_scalar(reg, 1.0 / static_cast<double>(B));

  // cross-entropy of the selected mode, computed as lse(logits - c) - (logit - c)
  // with a constant row shift so exp never overflows
  Tensor ce = Tensor::scalar(0.0);
  for (size_t b = 0; b < B; ++b) {
    Tensor row = reshape(slice(logits, 0, b, 1), {M});
    double shift = row.at(0);
    for (size_t j = 1; j < M; ++j) shift = std::max(shift, row.at(j));
    Tensor shifted = add_scalar(row, -shift);
    Tensor lse = ops::log(sum(ops::exp(shifted)));
    ce = add(ce, sub(lse, slice(shifted, 0, out.selected[b], 1)));
  }
  out.classification = mul_scalar(ce, 1.0 / static_cast<double>(B));
  return out;
}

// mean over batch of the summed per-coordinate Huber over a step sequence
Tensor huber_sequence(const std::vector<Tensor>& pred, const std::vector<Tensor>& target,
                      double h) {
  if (pred.size() != target.size())
    raise(ErrorKind::Contract, "huber_sequence: length mismatch");
  Tensor acc = Tensor::scalar(0.0);
  for (size_t t = 0; t < pred.size(); ++t)
    acc = add(acc, sum(huber(sub(pred[t], target[t]), h)));
  double batch = static_cast<double>(pred[0].dim(0));
  return mul_scalar(acc, 1.0 / batch);
}

Tensor huber_pair(const Tensor& a, const Tensor& b, double h) {
  double batch = static_cast<double>(a.dim(0));
  return mul_scalar(sum(huber(sub(a, b), h)), 1.0 / batch);
}

// blends per-mode tensors with the per-sample selection mask: out_t = sum_m mask_m * x[m][t]
std::vector<Tensor> select_rows(const std::vector<std::vector<Tensor>>& per_mode,
                                const std::vector<size_t>& selected) {
  size_t M = per_mode.size();
  size_t steps = per_mode[0].size();
  size_t B = selected.size();
  size_t dim = per_mode[0][0].dim(1);
  std::vector<Tensor> masks(M);
  for (size_t m = 0; m < M; ++m) {
    std::vector<double> mv(B * dim, 0.0);
    for (size_t b = 0; b < B; ++b)
      if (selected[b] == m)
        for (size_t d = 0; d < dim; ++d) mv[b * dim + d] = 1.0;
    masks[m] = Tensor({B, dim}, std::move(mv));
  }
  std::vector<Tensor> out;
  for (size_t t = 0; t < steps; ++t) {
    Tensor acc = mul(masks[0], per_mode[0][t]);
    for (size_t m = 1; m < M; ++m) acc = add(acc, mul(masks[m], per_mode[m][t]));
    out.push_back(acc);
  }
  return out;
}

kin::StateTensors select_states(const std::vector<kin::StateTensors>& per_mode,
                                const std::vector<size_t>& selected) {
  size_t B = selected.size();
  size_t M = per_mode.size();
  std::vector<Tensor> masks(M);
  for (size_t m = 0; m < M; ++m) {
    std::vector<double> mv(B, 0.0);
    for (size_t b = 0; b < B; ++b)
      if (selected[b] == m) mv[b] = 1.0;
    masks[m] = Tensor::from(std::move(mv));
  }
  auto blend = [&](auto member) {
    Tensor acc = mul(masks[0], per_mode[0].*member);
    for (size_t m = 1; m < M; ++m) acc = add(acc, mul(masks[m], per_mode[m].*member));
    return acc;
  };
  return {blend(&kin::StateTensors::x), blend(&kin::StateTensors::y),
          blend(&kin::StateTensors::theta), blend(&kin::StateTensors::v)};
}

std::vector<Tensor> pad_tokens(const std::vector<Tensor>& tokens, size_t token_dim) {
  if (tokens[0].dim(1) == token_dim) return tokens;
  std::vector<Tensor> out;
  size_t B = tokens[0].dim(0);
  for (const auto& t : tokens)
    out.push_back(concat({t, Tensor::zeros({B, token_dim - t.dim(1)})}, 1));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// losses

LossBreakdown loss_ffw(const AspModel& m, const Batch& b) {
  const ModelConfig& cfg = m.config();
  Tensor z = m.encode(b.ctx0);
  size_t steps = cfg.horizon * static_cast<size_t>(cfg.segments);  // one-shot unroll
  ModeSetT ms = m.predict_actions(z, b.hist_tokens, steps);
  RolledModes rolled = roll_modes(m, ms, origin_states(b.v0));

  std::vector<std::vector<std::array<double, 2>>> gt(b.size);
  for (size_t i = 0; i < b.size; ++i) {
    gt[i] = b.gt1[i];
    if (cfg.segments == 2) gt[i].insert(gt[i].end(), b.gt2[i].begin(), b.gt2[i].end());
  }
  Eq10Terms terms = eq10(m, rolled, ms.logits, gt);

  LossBreakdown out;
  const LossConfig& lc = m.loss_config();
  out.total = add(mul_scalar(terms.regression, lc.w3), mul_scalar(terms.classification, lc.w4));
  out.regression = terms.regression.item();
  out.classification = terms.classification.item();
  return out;
}

namespace {

struct SspPass {
  Eq10Terms terms;
  RolledModes rolled;
  ModeSetT ms;
};

SspPass ssp_gamma_pass(const AspModel& m, const Tensor& z_ctx,
                       const std::vector<Tensor>& hist_tokens, const kin::StateTensors& s0,
                       const std::vector<std::vector<std::array<double, 2>>>& gt) {
  SspPass p;
  p.ms = m.predict_actions(z_ctx, hist_tokens, m.config().horizon);
  p.rolled = roll_modes(m, p.ms, s0);
  p.terms = eq10(m, p.rolled, p.ms.logits, gt);
  return p;
}

}  // namespace

LossBreakdown loss_ssp(const AspModel& m, const Batch& b) {
  const ModelConfig& cfg = m.config();
  const LossConfig& lc = m.loss_config();
  if (cfg.arch != Architecture::Ssp)
    raise(ErrorKind::Contract, "loss_ssp: model is not self-supervised");
  if (!b.ctx1.defined())
    raise(ErrorKind::Contract, "loss_ssp: batch is missing future contexts");

  Tensor z0 = m.encode(b.ctx0);
  Tensor z1_enc = m.encode(b.ctx1);
  Tensor z1_pred = m.predict_features(z0, b.hist_actions);
  std::vector<Tensor> recon = m.reconstruct_actions(z0, z1_enc);

  Tensor rec_term = huber_sequence(recon, b.hist_actions, lc.h);
  Tensor feat_term = huber_pair(z1_enc, z1_pred, lc.h);

  std::vector<std::vector<std::array<double, 2>>> gt1(b.gt1.begin(), b.gt1.end());
  SspPass pass_enc = ssp_gamma_pass(m, concat({z0, z1_enc}, 1), b.hist_tokens,
                                    origin_states(b.v0), gt1);
  SspPass pass_pred = ssp_gamma_pass(m, concat({z0, z1_pred}, 1), b.hist_tokens,
                                     origin_states(b.v0), gt1);
  Tensor reg = mul_scalar(add(pass_enc.terms.regression, pass_pred.terms.regression), 0.5);
  Tensor cls =
      mul_scalar(add(pass_enc.terms.classification, pass_pred.terms.classification), 0.5);

  if (cfg.segments == 2) {
    if (!b.ctx2.defined()) raise(ErrorKind::Contract, "loss_ssp: missing tau2 contexts");
    Tensor z2_enc = m.encode(b.ctx2);

    // label-matched feed from the inference-like pass: a guided-teacher-forcing chain
    std::vector<Tensor> fed = select_rows(pass_pred.ms.raw, pass_pred.terms.selected);
    kin::StateTensors handoff = cfg.kinematic_layer()
                                    ? select_states(pass_pred.rolled.final_states,
                                                    pass_pred.terms.selected)
                                    : origin_states(b.v0);
    Tensor z2_pred = m.predict_features(z1_enc, fed);
    std::vector<Tensor> recon2 = m.reconstruct_actions(z1_enc, z2_enc);

    rec_term = mul_scalar(add(rec_term, huber_sequence(recon2, b.gt1_actions, lc.h)), 0.5);
    feat_term = mul_scalar(add(feat_term, huber_pair(z2_enc, z2_pred, lc.h)), 0.5);

    std::vector<std::vector<std::array<double, 2>>> gt2(b.gt2.begin(), b.gt2.end());
    std::vector<Tensor> fed_tokens = pad_tokens(fed, cfg.token_dim());
    SspPass p2_enc = ssp_gamma_pass(m, concat({z1_enc, z2_enc}, 1), fed_tokens, handoff, gt2);
    SspPass p2_pred = ssp_gamma_pass(m, concat({z1_enc, z2_pred}, 1), fed_tokens, handoff, gt2);
    reg = mul_scalar(
        add(reg, mul_scalar(add(p2_enc.terms.regression, p2_pred.terms.regression), 0.5)), 0.5);
    cls = mul_scalar(
        add(cls, mul_scalar(add(p2_enc.terms.classification, p2_pred.terms.classification), 0.5)),
        0.5);
  }

  LossBreakdown out;
  out.total = add(add(mul_scalar(rec_term, lc.w1), mul_scalar(feat_term, lc.w2)),
                  add(mul_scalar(reg, lc.w3), mul_scalar(cls, lc.w4)));
  out.reconstruction = rec_term.item();
  out.feature = feat_term.item();
  out.regression = reg.item();
  out.classification = cls.item();
  return out;
}

LossBreakdown loss_pretrain(const AspModel& m, const Batch& b) {
  const LossConfig& lc = m.loss_config();
  if (m.config().arch != Architecture::Ssp)
    raise(ErrorKind::Contract, "loss_pretrain: model is not self-supervised");
  Tensor z0 = m.encode(b.ctx0);
  Tensor z1_enc = m.encode(b.ctx1);
  Tensor z1_pred = m.predict_features(z0, b.hist_actions);
  std::vector<Tensor> recon = m.reconstruct_actions(z0, z1_enc);
  Tensor rec_term = huber_sequence(recon, b.hist_actions, lc.h);
  Tensor feat_term = huber_pair(z1_enc, z1_pred, lc.h);
  LossBreakdown out;
  out.total = add(mul_scalar(rec_term, lc.w1), mul_scalar(feat_term, lc.w2));
  out.reconstruction = rec_term.item();
  out.feature = feat_term.item();
  return out;
}

// ---------------------------------------------------------------------------
// inference

namespace {

InferSegment segment_from(const AspModel& m, const ModeSetT& ms, const RolledModes& rolled,
                          const kin::StateTensors& start) {
  const ModelConfig& cfg = m.config();
  InferSegment seg;
  size_t M = ms.raw.size();
  size_t B = ms.raw[0][0].dim(0);
  if (B != 1) raise(ErrorKind::Contract, "segment_from expects single-sample batches");
  Tensor probs = softmax(ms.logits);
  for (size_t mi = 0; mi < M; ++mi) {
    InferMode mo;
    mo.start = {start.x.at(0), start.y.at(0), start.theta.at(0), start.v.at(0)};
    for (size_t t = 0; t < ms.raw[mi].size(); ++t) {
      const auto& raw = ms.raw[mi][t];
      mo.raw.push_back({raw.at(0), cfg.out_dim() > 1 ? raw.at(1) : 0.0});
      if (cfg.kinematic_layer())
        mo.actions.push_back({m.phys_a(raw.at(0)), m.phys_delta(raw.at(1))});
      mo.positions.push_back({rolled.px[mi][t].at(0), rolled.py[mi][t].at(0)});
      if (cfg.kinematic_layer()) {
        const auto& st = rolled.states[mi][t];
        mo.states.push_back({st.x.at(0), st.y.at(0), st.theta.at(0), st.v.at(0)});
      }
    }
    mo.logit = ms.logits.at(mi);
    mo.prob = probs.at(mi);
    seg.modes.push_back(std::move(mo));
  }
  return seg;
}

}  // namespace

std::vector<InferResult> infer(const AspModel& m, const PreparedDataset& ds,
                               const std::vector<size_t>& indices, int segments,
                               ChainPolicy policy, bool use_encoded_future) {
  if (policy == ChainPolicy::LabelMatch)
    raise(ErrorKind::Contract, "infer: label_match is a training-time policy");
  const ModelConfig& cfg = m.config();
  if (segments != 1 && segments != 2)
    raise(ErrorKind::Contract, "infer: segments must be 1 or 2");
  if (segments == 2 && cfg.segments != 2)
    raise(ErrorKind::Config, "infer: model was configured for one segment");

  std::vector<InferResult> results;
  for (size_t idx : indices) {
    Batch b = gather_batch(ds, {idx});
    InferResult res;
    res.anchor = b.anchors[0];

    if (cfg.arch == Architecture::Ffw) {
      Tensor z = m.encode(b.ctx0);
      size_t steps = cfg.horizon * static_cast<size_t>(segments);
      ModeSetT ms = m.predict_actions(z, b.hist_tokens, steps);
      kin::StateTensors s0 = origin_states(b.v0);
      RolledModes rolled = roll_modes(m, ms, s0);
      InferSegment seg = segment_from(m, ms, rolled, s0);
      std::vector<double> logits(ms.logits.values());
      seg.fed_mode = chain_select(logits, positions_of_sample(rolled, 0), nullptr, policy);
      res.segments.push_back(std::move(seg));
      results.push_back(std::move(res));
      continue;
    }

    Tensor z0 = m.encode(b.ctx0);
    Tensor z1;
    if (use_encoded_future) {
      if (!b.ctx1.defined())
        raise(ErrorKind::Contract, "infer: encoded-future diagnostics need future contexts");
      z1 = m.encode(b.ctx1);
    } else {
      z1 = m.predict_features(z0, b.hist_actions);
    }
    ModeSetT ms1 = m.predict_actions(concat({z0, z1}, 1), b.hist_tokens, cfg.horizon);
    kin::StateTensors s0 = origin_states(b.v0);
    RolledModes rolled1 = roll_modes(m, ms1, s0);
    InferSegment seg1 = segment_from(m, ms1, rolled1, s0);
    std::vector<double> logits1(ms1.logits.values());
    seg1.fed_mode = chain_select(logits1, positions_of_sample(rolled1, 0), nullptr, policy);
    size_t fed = seg1.fed_mode;
    res.segments.push_back(seg1);

    if (segments == 2) {
      InferSegment seg2;
      auto run_chain = [&](size_t mode_idx) {
        std::vector<Tensor> fed_actions;
        for (const auto& raw : ms1.raw[mode_idx]) fed_actions.push_back(raw);
        kin::StateTensors handoff = cfg.kinematic_layer()
                                        ? rolled1.final_states[mode_idx]
                                        : origin_states(b.v0);
        Tensor z2 = m.predict_features(z1, fed_actions);
        ModeSetT ms2 = m.predict_actions(concat({z1, z2}, 1),
                                         pad_tokens(fed_actions, cfg.token_dim()), cfg.horizon);
        RolledModes rolled2 = roll_modes(m, ms2, handoff);
        return std::make_tuple(ms2, rolled2, handoff);
      };
      if (cfg.chain_expand_modes) {
        // m^2 chained trajectories: every tau1 mode feeds the predictor again
        for (size_t mi = 0; mi < ms1.raw.size(); ++mi) {
          auto [ms2, rolled2, handoff] = run_chain(mi);
          InferSegment sub = segment_from(m, ms2, rolled2, handoff);
          for (auto& mo : sub.modes) {
            mo.prob *= seg1.modes[mi].prob;
            seg2.modes.push_back(std::move(mo));
          }
        }
        seg2.fed_mode = 0;
      } else {
        auto [ms2, rolled2, handoff] = run_chain(fed);
        seg2 = segment_from(m, ms2, rolled2, handoff);
        std::vector<double> logits2(ms2.logits.values());
        seg2.fed_mode =
            chain_select(logits2, positions_of_sample(rolled2, 0), nullptr, policy);
      }
      res.segments.push_back(std::move(seg2));
    }
    results.push_back(std::move(res));
  }
  return results;
}

void fit_action_scaling(const data::SnippetCache& cache, const std::vector<size_t>& train_idx,
                        ModelConfig& cfg) {
  double a_lo = 0, a_hi = 0, d_lo = 0, d_hi = 0;
  bool any = false;
  auto feed = [&](const kin::Action& u) {
    if (!any) {
      a_lo = a_hi = u.a;
      d_lo = d_hi = u.delta;
      any = true;
      return;
    }
    a_lo = std::min(a_lo, u.a);
    a_hi = std::max(a_hi, u.a);
    d_lo = std::min(d_lo, u.delta);
    d_hi = std::max(d_hi, u.delta);
  };
  for (size_t idx : train_idx) {
    const auto& sn = cache.snippets.at(idx);
    for (const auto& u : sn.past_actions) feed(u);
    for (const auto& u : sn.future_actions_1) feed(u);
    for (const auto& u : sn.future_actions_2) feed(u);
  }
  if (!any) raise(ErrorKind::Config, "fit_action_scaling: no training actions");
  // pad by 10% and keep zero inside the range
  double a_pad = std::max(0.1, 0.1 * (a_hi - a_lo));
  double d_pad = std::max(0.02, 0.1 * (d_hi - d_lo));
  cfg.a_min = std::min(a_lo - a_pad, -0.1);
  cfg.a_max = std::max(a_hi + a_pad, 0.1);
  cfg.delta_min = std::min(d_lo - d_pad, -0.02);
  cfg.delta_max = std::max(d_hi + d_pad, 0.02);
}

// ---------------------------------------------------------------------------
// gradient-check extensions

std::vector<GradCheckCase> model_gradcheck_cases(uint64_t seed, double tolerance) {
  std::vector<GradCheckCase> out;
  const double eps = 1e-5;

  // kinematic step partials
  {
    auto fx = [](std::vector<Tensor>& p) {
      kin::StateTensors s = kin::lift_states({kin::State{0, 0, 0.3, 8}});
      auto st = kin::diff_step(s, {p[0], p[1]}, kin::VehicleGeometry{1.3, 1.3}, 0.3);
      return st.x;
    };
    double err = grad_check(fx, {Tensor::scalar(0.6), Tensor::scalar(0.17)}, eps);
    out.push_back({"bicycle_step_x", err, err <= tolerance});
  }
  {
    const size_t T = 6;
    auto fn = [T](std::vector<Tensor>& p) {
      kin::StateTensors s = kin::lift_states({kin::State{0, 0, 0.1, 6}});
      std::vector<kin::ActionTensors> at;
      for (size_t t = 0; t < T; ++t)
        at.push_back({slice(p[0], 0, t, 1), slice(p[1], 0, t, 1)});
      auto r = kin::diff_rollout(s, at, kin::VehicleGeometry{1.3, 1.3}, 0.3);
      Tensor acc = Tensor::scalar(0.0);
      for (const auto& st : r.states) acc = add(acc, add(sum(st.x), sum(st.y)));
      return acc;
    };
    Rng rng(seed, 21);
    double err = grad_check(
        fn, {Tensor::uniform_init({T}, 1.5, rng, false), Tensor::uniform_init({T}, 0.3, rng, false)},
        eps);
    out.push_back({"bicycle_rollout", err, err <= tolerance});
  }

  // end-to-end FFW loss on a small instance: F=8, T=4, M=2, batch=2
  {
    ModelConfig cfg;
    cfg.arch = Architecture::Ffw;
    cfg.encoder = EncoderKind::MlpOnFeatureVector;
    cfg.feature_size = 8;
    cfg.hidden_size = 8;
    cfg.gru_layers = 1;
    cfg.mode_count = 2;
    cfg.mode_embed = 4;
    cfg.horizon = 4;
    cfg.segments = 1;
    LossConfig lc;
    AspModel model(cfg, lc, seed + 3);

    // a tiny fixed batch, built directly
    Rng rng(seed, 22);
    Batch b;
    b.size = 2;
    b.horizon = cfg.horizon;
    b.ctx0 = Tensor::uniform_init({2, bev::kFeatureVectorSize}, 0.8, rng, false);
    for (size_t t = 0; t < cfg.horizon; ++t) {
      b.hist_tokens.push_back(Tensor::uniform_init({2, 2}, 0.5, rng, false));
      b.hist_actions.push_back(b.hist_tokens.back());
    }
    b.v0 = {6.0, 9.0};
    for (size_t i = 0; i < 2; ++i) {
      std::vector<std::array<double, 2>> gt;
      double vx = b.v0[i];
      double x = 0, y = 0;
      for (size_t t = 0; t < cfg.horizon; ++t) {
        x += vx * cfg.dt;
        y += 0.15 * static_cast<double>(i ? -1 : 1) * static_cast<double>(t);
        gt.push_back({x, y});
      }
      b.gt1.push_back(gt);
      b.anchors.push_back(kin::State{});
      b.indices.push_back(i);
    }

    std::vector<Tensor> point;
    for (auto& [name, t] : model.params().params) point.push_back(t);
    auto fn = [&model, &b](std::vector<Tensor>&) { return loss_ffw(model, b).total; };
    double err = grad_check(fn, point, eps);
    out.push_back({"ffw_loss_end_to_end", err, err <= tolerance});
  }
  return out;
}

}  // namespace ap::model
