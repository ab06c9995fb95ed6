#pragma once

#include <string>
#include <vector>

#include "bev/raster.hpp"
#include "kin/bicycle.hpp"

namespace ap::model {

enum class Architecture { Ffw, Ssp };
enum class EncoderKind { TinyConv, MlpOnFeatureVector };
enum class Mapping { ActionToAction, StateToAction, StateToPosition, StateToState };

struct ModelConfig {
  Architecture arch = Architecture::Ffw;
  EncoderKind encoder = EncoderKind::TinyConv;
  Mapping mapping = Mapping::ActionToAction;

  size_t feature_size = 64;   // F
  size_t hidden_size = 64;    // GRU hidden units
  size_t gru_layers = 2;
  std::vector<size_t> xi_layers = {32, 16};
  size_t mode_count = 3;      // M
  size_t mode_embed = 8;

  double dt = 0.3;
  size_t horizon = 10;  // T
  int segments = 1;

  bool inject_z_every_step = true;      // else z only seeds the decoder hidden state
  bool ablate_action_history = false;   // behavioral-cloning ablation: zero the history tokens
  bool chain_expand_modes = false;      // m^2 chained trajectories instead of one feed

  kin::VehicleGeometry geometry;
  bev::RasterConfig raster;

  // action scaling, fitted on the training split
  double a_min = -3.0, a_max = 3.0;
  double delta_min = -0.4, delta_max = 0.4;
  // output scaling for the position/state regression baselines
  double pos_range = 40.0;

  size_t token_dim() const { return mapping == Mapping::ActionToAction ? 2 : 4; }
  size_t out_dim() const { return mapping == Mapping::StateToState ? 4 : 2; }
  bool kinematic_layer() const {
    return mapping == Mapping::ActionToAction || mapping == Mapping::StateToAction;
  }
  size_t context_dim() const {
    return encoder == EncoderKind::MlpOnFeatureVector ? bev::kFeatureVectorSize
                                                      : cfg_raster_elems();
  }
  size_t cfg_raster_elems() const { return raster.channels() * raster.height * raster.width; }
};

struct LossConfig {
  double h = 1.0;  // Huber cutoff
  double w1 = 1.0, w2 = 1.0, w3 = 1.0, w4 = 1.0;
  double angle_gate_deg = 45.0;
};

struct ScheduleConfig {
  size_t epochs = 10;
  size_t batch = 32;
  double lr = 1e-4;
  size_t plateau_patience = 3;  // epochs without val improvement before the cut
  double lr_factor = 0.2;       // reduce by a factor of five
  size_t pretrain_epochs = 0;   // forward-model pre-training (w1/w2 terms only)
  size_t max_steps = 0;         // 0 = no optimizer-step cap
  uint64_t seed = 1;
  std::string warm_start;       // checkpoint to load before training
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  ScheduleConfig schedule;
  std::string cache_path;
};

// JSON round trip for run-config files; parse errors carry the offending field.
RunConfig parse_run_config(const std::string& json_text);
std::string dump_run_config(const RunConfig& cfg);        // canonical (sorted keys)
std::string config_hash(const RunConfig& cfg);            // fnv1a-64 hex of the dump

const char* mapping_name(Mapping m);
const char* encoder_name(EncoderKind e);
const char* architecture_name(Architecture a);

}  // namespace ap::model
