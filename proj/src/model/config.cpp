#include "model/config.hpp"

#include <json.hpp>

#include "core/hash.hpp"

namespace ap::model {

using nlohmann::json;

namespace {

template <typename T>
T req(const json& j, const std::string& key) {
  if (!j.contains(key)) raise(ErrorKind::Config, "run config: missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    raise(ErrorKind::Config, "run config: bad value for field '" + key + "'");
  }
}

template <typename T>
T opt(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    raise(ErrorKind::Config, "run config: bad value for field '" + key + "'");
  }
}

Architecture parse_arch(const std::string& s) {
  if (s == "ffw") return Architecture::Ffw;
  if (s == "ssp") return Architecture::Ssp;
  raise(ErrorKind::Config, "run config: unknown architecture '" + s + "'");
}

EncoderKind parse_encoder(const std::string& s) {
  if (s == "tiny_conv") return EncoderKind::TinyConv;
  if (s == "mlp_on_feature_vector") return EncoderKind::MlpOnFeatureVector;
  raise(ErrorKind::Config, "run config: unknown encoder '" + s + "'");
}

Mapping parse_mapping(const std::string& s) {
  if (s == "action_to_action") return Mapping::ActionToAction;
  if (s == "state_to_action") return Mapping::StateToAction;
  if (s == "state_to_position") return Mapping::StateToPosition;
  if (s == "state_to_state") return Mapping::StateToState;
  raise(ErrorKind::Config, "run config: unknown mapping '" + s + "'");
}

bev::RasterVariant parse_variant(const std::string& s) {
  if (s == "chauffeurnet") return bev::RasterVariant::ChauffeurNet;
  if (s == "mtp") return bev::RasterVariant::Mtp;
  raise(ErrorKind::Config, "run config: unknown raster variant '" + s + "'");
}

}  // namespace

const char* mapping_name(Mapping m) {
  switch (m) {
    case Mapping::ActionToAction: return "action_to_action";
    case Mapping::StateToAction: return "state_to_action";
    case Mapping::StateToPosition: return "state_to_position";
    case Mapping::StateToState: return "state_to_state";
  }
  return "action_to_action";
}

const char* encoder_name(EncoderKind e) {
  return e == EncoderKind::TinyConv ? "tiny_conv" : "mlp_on_feature_vector";
}

const char* architecture_name(Architecture a) { return a == Architecture::Ffw ? "ffw" : "ssp"; }

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    raise(ErrorKind::Config, std::string("run config: invalid json: ") + e.what());
  }
  RunConfig cfg;
  const json& m = j.contains("model") ? j.at("model") : json::object();
  cfg.model.arch = parse_arch(opt<std::string>(m, "architecture", "ffw"));
  cfg.model.encoder = parse_encoder(opt<std::string>(m, "encoder", "tiny_conv"));
  cfg.model.mapping = parse_mapping(opt<std::string>(m, "mapping", "action_to_action"));
  cfg.model.feature_size = opt<size_t>(m, "feature_size", 64);
  cfg.model.hidden_size = opt<size_t>(m, "hidden_size", 64);
  cfg.model.gru_layers = opt<size_t>(m, "gru_layers", 2);
  cfg.model.xi_layers = opt<std::vector<size_t>>(m, "xi_layers", {32, 16});
  cfg.model.mode_count = opt<size_t>(m, "modes", 3);
  cfg.model.mode_embed = opt<size_t>(m, "mode_embed", 8);
  cfg.model.dt = opt<double>(m, "dt", 0.3);
  cfg.model.horizon = opt<size_t>(m, "horizon", 10);
  cfg.model.segments = opt<int>(m, "segments", 1);
  cfg.model.inject_z_every_step = opt<bool>(m, "inject_z_every_step", true);
  cfg.model.ablate_action_history = opt<bool>(m, "ablate_action_history", false);
  cfg.model.chain_expand_modes = opt<bool>(m, "chain_expand_modes", false);
  cfg.model.geometry.l_f = opt<double>(m, "l_f", 1.3);
  cfg.model.geometry.l_r = opt<double>(m, "l_r", 1.3);
  if (m.contains("raster")) {
    const json& r = m.at("raster");
    cfg.model.raster.variant = parse_variant(opt<std::string>(r, "variant", "chauffeurnet"));
    cfg.model.raster.width = opt<size_t>(r, "width", 64);
    cfg.model.raster.height = opt<size_t>(r, "height", 64);
    cfg.model.raster.meters_per_pixel = opt<double>(r, "meters_per_pixel", 0.5);
    cfg.model.raster.history_snapshots = opt<size_t>(r, "history_snapshots", 4);
    cfg.model.raster.ego_anchor_u = opt<double>(r, "ego_anchor_u",
                                                static_cast<double>(cfg.model.raster.width) / 2);
    cfg.model.raster.ego_anchor_v = opt<double>(r, "ego_anchor_v",
                                                static_cast<double>(cfg.model.raster.height) / 2);
  }
  cfg.model.a_min = opt<double>(m, "a_min", -3.0);
  cfg.model.a_max = opt<double>(m, "a_max", 3.0);
  cfg.model.delta_min = opt<double>(m, "delta_min", -0.4);
  cfg.model.delta_max = opt<double>(m, "delta_max", 0.4);
  cfg.model.pos_range = opt<double>(m, "pos_range", 40.0);

  if (cfg.model.feature_size == 0 || cfg.model.hidden_size == 0 || cfg.model.gru_layers == 0 ||
      cfg.model.mode_count == 0 || cfg.model.horizon == 0)
    raise(ErrorKind::Config, "run config: sizes must be positive");
  if (cfg.model.segments != 1 && cfg.model.segments != 2)
    raise(ErrorKind::Config, "run config: segments must be 1 or 2");
  if (!(cfg.model.a_min < cfg.model.a_max) || !(cfg.model.delta_min < cfg.model.delta_max))
    raise(ErrorKind::Config, "run config: scaling ranges need min < max");

  if (j.contains("loss")) {
    const json& l = j.at("loss");
    cfg.loss.h = opt<double>(l, "huber_cutoff", 1.0);
    cfg.loss.w1 = opt<double>(l, "w1", 1.0);
    cfg.loss.w2 = opt<double>(l, "w2", 1.0);
    cfg.loss.w3 = opt<double>(l, "w3", 1.0);
    cfg.loss.w4 = opt<double>(l, "w4", 1.0);
    cfg.loss.angle_gate_deg = opt<double>(l, "angle_gate_deg", 45.0);
    if (cfg.loss.h <= 0) raise(ErrorKind::Config, "run config: huber_cutoff must be positive");
    if (cfg.loss.w1 < 0 || cfg.loss.w2 < 0 || cfg.loss.w3 < 0 || cfg.loss.w4 < 0)
      raise(ErrorKind::Config, "run config: loss weights must be nonnegative");
  }

  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    cfg.schedule.epochs = opt<size_t>(s, "epochs", 10);
    cfg.schedule.batch = opt<size_t>(s, "batch", 32);
    cfg.schedule.lr = opt<double>(s, "lr", 1e-4);
    cfg.schedule.plateau_patience = opt<size_t>(s, "plateau_patience", 3);
    cfg.schedule.lr_factor = opt<double>(s, "lr_factor", 0.2);
    cfg.schedule.pretrain_epochs = opt<size_t>(s, "pretrain_epochs", 0);
    cfg.schedule.max_steps = opt<size_t>(s, "max_steps", 0);
    cfg.schedule.seed = opt<uint64_t>(s, "seed", 1);
    cfg.schedule.warm_start = opt<std::string>(s, "warm_start", "");
  }

  cfg.cache_path = opt<std::string>(j, "cache", "");
  return cfg;
}

std::string dump_run_config(const RunConfig& cfg) {
  json m{{"architecture", architecture_name(cfg.model.arch)},
         {"encoder", encoder_name(cfg.model.encoder)},
         {"mapping", mapping_name(cfg.model.mapping)},
         {"feature_size", cfg.model.feature_size},
         {"hidden_size", cfg.model.hidden_size},
         {"gru_layers", cfg.model.gru_layers},
         {"xi_layers", cfg.model.xi_layers},
         {"modes", cfg.model.mode_count},
         {"mode_embed", cfg.model.mode_embed},
         {"dt", cfg.model.dt},
         {"horizon", cfg.model.horizon},
         {"segments", cfg.model.segments},
         {"inject_z_every_step", cfg.model.inject_z_every_step},
         {"ablate_action_history", cfg.model.ablate_action_history},
         {"chain_expand_modes", cfg.model.chain_expand_modes},
         {"l_f", cfg.model.geometry.l_f},
         {"l_r", cfg.model.geometry.l_r},
         {"a_min", cfg.model.a_min},
         {"a_max", cfg.model.a_max},
         {"delta_min", cfg.model.delta_min},
         {"delta_max", cfg.model.delta_max},
         {"pos_range", cfg.model.pos_range}};
  m["raster"] = json{{"variant", cfg.model.raster.variant == bev::RasterVariant::ChauffeurNet
                                     ? "chauffeurnet"
                                     : "mtp"},
                     {"width", cfg.model.raster.width},
                     {"height", cfg.model.raster.height},
                     {"meters_per_pixel", cfg.model.raster.meters_per_pixel},
                     {"history_snapshots", cfg.model.raster.history_snapshots},
                     {"ego_anchor_u", cfg.model.raster.ego_anchor_u},
                     {"ego_anchor_v", cfg.model.raster.ego_anchor_v}};
  json root{{"model", m},
            {"loss", json{{"huber_cutoff", cfg.loss.h},
                          {"w1", cfg.loss.w1},
                          {"w2", cfg.loss.w2},
                          {"w3", cfg.loss.w3},
                          {"w4", cfg.loss.w4},
                          {"angle_gate_deg", cfg.loss.angle_gate_deg}}},
            {"schedule", json{{"epochs", cfg.schedule.epochs},
                              {"batch", cfg.schedule.batch},
                              {"lr", cfg.schedule.lr},
                              {"plateau_patience", cfg.schedule.plateau_patience},
                              {"lr_factor", cfg.schedule.lr_factor},
                              {"pretrain_epochs", cfg.schedule.pretrain_epochs},
                              {"max_steps", cfg.schedule.max_steps},
                              {"seed", cfg.schedule.seed},
                              {"warm_start", cfg.schedule.warm_start}}},
            {"cache", cfg.cache_path}};
  return root.dump(2);
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a64(dump_run_config(cfg))); }

}  // namespace ap::model
