#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/gradcheck.hpp"
#include "data/cache.hpp"
#include "model/config.hpp"
#include "model/nets.hpp"

namespace ap::model {

// Graph-level multi-modal prediction: M trajectories of raw [-1,1] outputs plus
// unnormalized mode scores.
struct ModeSetT {
  std::vector<std::vector<Tensor>> raw;  // [M][steps] of [B, out_dim]
  Tensor logits;                         // [B, M]
};

// The learned networks: observation encoder (phi), action predictor (gamma),
// feature predictor (psi), action reconstructor (xi).
class AspModel {
public:
  AspModel(const ModelConfig& cfg, const LossConfig& loss, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const LossConfig& loss_config() const { return loss_; }
  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }

  Checkpoint to_checkpoint(const std::string& config_json) const;
  void load_weights(const Checkpoint& ck);

  // phi: context batch -> [B,F]; deterministic given weights
  Tensor encode(const Tensor& context) const;

  // gamma: recurrent decoder. Consumes the token history step by step with the
  // context features injected at every step, then unrolls `steps` future steps
  // per mode, feeding its own bounded outputs back between steps.
  ModeSetT predict_actions(const Tensor& z_ctx, const std::vector<Tensor>& hist_tokens,
                           size_t steps) const;

  // psi: recurrent over the action steps conditioned on z -> [B,F]
  Tensor predict_features(const Tensor& z, const std::vector<Tensor>& action_tokens) const;

  // xi: MLP on two consecutive features -> T action pairs in [-1,1]
  std::vector<Tensor> reconstruct_actions(const Tensor& z0, const Tensor& z1) const;

  // scaling between raw [-1,1] outputs and physical units
  double phys_a(double raw) const;
  double phys_delta(double raw) const;
  double norm_a(double a) const;
  double norm_delta(double d) const;
  Tensor phys_a(const Tensor& raw_col) const;      // [B]
  Tensor phys_delta(const Tensor& raw_col) const;  // [B]

private:
  ModelConfig cfg_;
  LossConfig loss_;
  ParamRegistry reg_;

  ConvEncoder conv_phi_;
  Mlp mlp_phi_;
  Gru gamma_;
  Linear gamma_head_;
  Linear gamma_logits_;
  Tensor mode_embeds_;  // [M, E]
  Gru psi_;
  Linear psi_head_;
  Mlp xi_;

  size_t z_ctx_dim() const {
    return cfg_.arch == Architecture::Ssp ? 2 * cfg_.feature_size : cfg_.feature_size;
  }
  friend struct AspGraphs;
};

// Value-level inputs for one batch, already in the ego frame of each snippet.
struct Batch {
  size_t size = 0;
  size_t horizon = 0;
  Tensor ctx0;                        // [B, ...] context at tau0
  Tensor ctx1, ctx2;                  // future contexts (SSP training / diagnostics)
  std::vector<Tensor> hist_tokens;    // [T] of [B, token_dim]
  std::vector<Tensor> hist_actions;   // [T] of [B,2], normalized (psi/xi inputs and targets)
  std::vector<Tensor> gt1_actions;    // [T] of [B,2], normalized (two-segment chaining)
  std::vector<double> v0;             // [B]
  std::vector<std::vector<std::array<double, 2>>> gt1;  // [B][T] ego-frame positions
  std::vector<std::vector<std::array<double, 2>>> gt2;  // [B][T] when two segments
  std::vector<kin::State> anchors;    // world pose at t0
  std::vector<size_t> indices;        // source snippet indices
};

// Context tensors and ego-frame targets are computed once; batches gather them.
struct PreparedDataset {
  struct Item {
    std::vector<double> ctx0, ctx1, ctx2;
    std::vector<std::array<double, 4>> hist_tokens;   // token_dim <= 4, padded
    std::vector<std::array<double, 2>> hist_actions;  // normalized
    std::vector<std::array<double, 2>> gt1_actions;   // normalized
    double v0 = 0;
    std::vector<std::array<double, 2>> gt1, gt2;
    kin::State anchor;
  };
  std::vector<Item> items;
  Shape ctx_shape;  // per-sample context shape
  size_t token_dim = 2;
};

PreparedDataset prepare_dataset(const data::SnippetCache& cache, const ModelConfig& cfg,
                                bool need_future_ctx);
// As above but only for the chosen snippets; items are indexed 0..n-1 in the
// order given.
PreparedDataset prepare_subset(const data::SnippetCache& cache,
                               const std::vector<size_t>& snippet_indices,
                               const ModelConfig& cfg, bool need_future_ctx);
Batch gather_batch(const PreparedDataset& ds, const std::vector<size_t>& indices);

// Closest mode under the gating rule: among modes whose final-point direction
// (chord from first to last point) is within the angle gate of the ground
// truth's, the one with the lowest mean pointwise distance; if none passes the
// gate, the lowest-distance mode overall. Ties resolve to the lowest index.
size_t mode_select(const std::vector<std::vector<std::array<double, 2>>>& mode_positions,
                   const std::vector<std::array<double, 2>>& gt, double angle_gate_rad);

enum class ChainPolicy { HighestProb, LabelMatch };

// highest_prob -> argmax logit (ties to the lowest index); label_match ->
// mode_select against the provided ground truth (training only).
size_t chain_select(const std::vector<double>& logits,
                    const std::vector<std::vector<std::array<double, 2>>>& mode_positions,
                    const std::vector<std::array<double, 2>>* label, ChainPolicy policy);

struct LossBreakdown {
  Tensor total;  // scalar, on the active tape
  double reconstruction = 0, feature = 0, regression = 0, classification = 0;
};

// Eq-10-style multi-modal loss on rolled-out positions (FFW path). segments=2
// runs one continuous 2T unroll.
LossBreakdown loss_ffw(const AspModel& m, const Batch& b);
// Four-component self-supervised loss; the action predictor runs with both the
// encoded and the predicted future features and the two passes are averaged.
LossBreakdown loss_ssp(const AspModel& m, const Batch& b);
// Forward-model pre-training objective: reconstruction + feature terms only.
LossBreakdown loss_pretrain(const AspModel& m, const Batch& b);

struct InferMode {
  std::vector<std::array<double, 2>> raw;        // pre-scaling outputs
  std::vector<std::array<double, 2>> actions;    // physical, kinematic mappings only
  std::vector<std::array<double, 2>> positions;  // ego frame
  std::vector<kin::State> states;                // ego frame, kinematic mappings only
  kin::State start;                              // state the mode was rolled from
  double logit = 0;
  double prob = 0;
};

struct InferSegment {
  std::vector<InferMode> modes;
  size_t fed_mode = 0;  // mode chained into the next segment
};

struct InferResult {
  std::vector<InferSegment> segments;
  kin::State anchor;  // world pose; ego-frame outputs rotate/translate by this
};

// Runs the inference graphs for the given snippets. use_encoded_future swaps
// the predicted future features for encoded ones (diagnostic; requires future
// contexts in the prepared dataset). LabelMatch policy is training-only and
// raises a contract error here.
std::vector<InferResult> infer(const AspModel& m, const PreparedDataset& ds,
                               const std::vector<size_t>& indices, int segments,
                               ChainPolicy policy, bool use_encoded_future = false);

// Fits the action scaling ranges on the training snippets.
void fit_action_scaling(const data::SnippetCache& cache, const std::vector<size_t>& train_idx,
                        ModelConfig& cfg);

// Gradient checks for the kinematics layer and the end-to-end FFW loss on a
// small instance, appended to the primitive suite by the CLI harness.
std::vector<GradCheckCase> model_gradcheck_cases(uint64_t seed, double tolerance = 1e-4);

}  // namespace ap::model
