#include "actionpredict.h"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "core/gradcheck.hpp"
#include "data/cache.hpp"
#include "data/synth.hpp"
#include "eval/evaluate.hpp"
#include "eval/svgplot.hpp"
#include "model/asp.hpp"
#include "model/train.hpp"

namespace {

thread_local std::string g_last_error;

ap_status status_of(const ap::Error& e) {
  using ap::ErrorKind;
  switch (e.kind()) {
    case ErrorKind::Dimension: return AP_ERR_DIMENSION;
    case ErrorKind::Domain: return AP_ERR_DOMAIN;
    case ErrorKind::Contract: return AP_ERR_CONTRACT;
    case ErrorKind::Numeric: return AP_ERR_NUMERIC;
    case ErrorKind::Schema: return AP_ERR_SCHEMA;
    case ErrorKind::Data: return AP_ERR_DATA;
    case ErrorKind::Config: return AP_ERR_CONFIG;
    case ErrorKind::Infeasible: return AP_ERR_INFEASIBLE;
    case ErrorKind::Io: return AP_ERR_IO;
  }
  return AP_ERR_INTERNAL;
}

template <typename Fn>
ap_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const ap::Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return AP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return AP_ERR_INTERNAL;
  }
}

ap_status invalid(const char* msg) {
  g_last_error = msg;
  return AP_ERR_INVALID_ARG;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) ap::raise(ap::ErrorKind::Io, "cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

struct ap_model {
  ap::model::RunConfig cfg;
  std::string config_hash;
  ap::model::AspModel impl;

  ap_model(ap::model::RunConfig c, const ap::Checkpoint& ck)
      : cfg(std::move(c)),
        config_hash(ck.config_hash()),
        impl(cfg.model, cfg.loss, cfg.schedule.seed) {
    impl.load_weights(ck);
  }
};

struct ap_dataset {
  ap::data::SnippetCache cache;
};

struct ap_prediction {
  std::vector<std::vector<std::array<double, 2>>> world_modes;
  std::vector<double> probs;
  size_t steps = 0;
};

extern "C" {

const char* ap_version(void) { return "0.1.0"; }

const char* ap_status_name(ap_status status) {
  switch (status) {
    case AP_OK: return "ok";
    case AP_ERR_INVALID_ARG: return "invalid_arg";
    case AP_ERR_IO: return "io";
    case AP_ERR_SCHEMA: return "schema";
    case AP_ERR_DATA: return "data";
    case AP_ERR_CONFIG: return "config";
    case AP_ERR_DIMENSION: return "dimension";
    case AP_ERR_DOMAIN: return "domain";
    case AP_ERR_CONTRACT: return "contract";
    case AP_ERR_NUMERIC: return "numeric";
    case AP_ERR_INFEASIBLE: return "infeasible";
    case AP_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* ap_last_error(void) { return g_last_error.c_str(); }

ap_status ap_synth_generate(const char* scenario, int count, int recordings, uint64_t seed,
                            int segments, const char* out_dir) {
  if (!scenario || !out_dir) return invalid("synth: scenario and out_dir are required");
  return guarded([&]() {
    auto sc = ap::data::parse_scenario(scenario);
    if (!sc) ap::raise(ap::ErrorKind::Config, std::string("unknown scenario '") + scenario + "'");
    ap::data::SynthConfig cfg;
    cfg.scenario = *sc;
    cfg.count = count;
    cfg.recordings = recordings;
    cfg.seed = seed;
    cfg.segments = segments;
    ap::data::write_dataset(ap::data::synth_generate(cfg), out_dir);
    return AP_OK;
  });
}

ap_status ap_ingest(const char* tracks_csv, const char* meta_json, const char* map_json,
                    double dt, size_t horizon, int segments, double spacing,
                    const char* out_cache, ap_ingest_stats* stats) {
  if (!tracks_csv || !meta_json || !out_cache)
    return invalid("ingest: tracks_csv, meta_json and out_cache are required");
  return guarded([&]() {
    auto recordings =
        ap::data::load_recordings(tracks_csv, meta_json, map_json ? map_json : "");
    ap::data::ExtractConfig cfg;
    cfg.dt = dt;
    cfg.horizon = horizon;
    cfg.segments = segments;
    cfg.spacing = spacing;
    ap::data::SnippetCache cache = ap::data::build_cache(recordings, cfg);
    ap::data::save_cache(cache, out_cache);
    if (stats) {
      stats->snippets = cache.stats.emitted;
      stats->dropped_infeasible = cache.stats.dropped_infeasible;
      stats->dropped_inconsistent = cache.stats.dropped_inconsistent;
    }
    return AP_OK;
  });
}

ap_status ap_train(const char* run_config_path, const char* cache_path, const char* out_dir,
                   int64_t seed_override) {
  if (!run_config_path || !out_dir)
    return invalid("train: run_config_path and out_dir are required");
  return guarded([&]() {
    ap::model::RunConfig cfg = ap::model::parse_run_config(read_file(run_config_path));
    if (cache_path && *cache_path) cfg.cache_path = cache_path;
    if (seed_override >= 0) cfg.schedule.seed = static_cast<uint64_t>(seed_override);
    if (cfg.cache_path.empty())
      ap::raise(ap::ErrorKind::Config, "train: no snippet cache given");
    ap::data::SnippetCache cache = ap::data::load_cache(cfg.cache_path);
    ap::model::train(cfg, cache, out_dir);
    return AP_OK;
  });
}

ap_status ap_evaluate(const char* checkpoint, const char* cache_path, const char* split,
                      int segments, int use_encoded_future, const char* out_report_json) {
  if (!checkpoint || !cache_path || !split || !out_report_json)
    return invalid("evaluate: checkpoint, cache_path, split and out_report_json are required");
  return guarded([&]() {
    ap::Checkpoint ck = ap::load_checkpoint(checkpoint);
    ap::model::RunConfig cfg = ap::model::parse_run_config(ck.config_json);
    ap::data::SnippetCache cache = ap::data::load_cache(cache_path);
    ap::model::AspModel model(cfg.model, cfg.loss, cfg.schedule.seed);
    model.load_weights(ck);
    bool need_future = cfg.model.arch == ap::model::Architecture::Ssp;
    ap::model::PreparedDataset ds = ap::model::prepare_dataset(cache, cfg.model, need_future);
    ap::eval::EvalReport rep =
        ap::eval::evaluate_model(model, ds, cache, split, segments, use_encoded_future != 0);
    rep.config_hash = ck.config_hash();
    std::ofstream os(out_report_json, std::ios::binary);
    if (!os) ap::raise(ap::ErrorKind::Io, std::string("cannot write ") + out_report_json);
    os << rep.to_json();
    return AP_OK;
  });
}

ap_status ap_gradcheck(uint64_t seed, double tolerance, double* max_rel_err, char* report,
                       size_t report_capacity) {
  return guarded([&]() {
    auto cases = ap::primitive_gradcheck_cases(seed, tolerance);
    auto extra = ap::model::model_gradcheck_cases(seed, tolerance);
    cases.insert(cases.end(), extra.begin(), extra.end());
    double worst = 0;
    bool all_ok = true;
    std::string text;
    for (const auto& c : cases) {
      worst = std::max(worst, c.max_rel_err);
      all_ok = all_ok && c.passed;
      char line[160];
      std::snprintf(line, sizeof(line), "%-22s %11.3e %s\n", c.name.c_str(), c.max_rel_err,
                    c.passed ? "ok" : "FAIL");
      text += line;
    }
    if (max_rel_err) *max_rel_err = worst;
    if (report && report_capacity) {
      size_t n = std::min(report_capacity - 1, text.size());
      std::memcpy(report, text.data(), n);
      report[n] = '\0';
    }
    if (!all_ok) {
      g_last_error = "gradient check failed";
      return AP_ERR_NUMERIC;
    }
    return AP_OK;
  });
}

ap_status ap_model_open(const char* checkpoint_path, ap_model** out) {
  if (!checkpoint_path || !out) return invalid("model_open: path and out are required");
  return guarded([&]() {
    ap::Checkpoint ck = ap::load_checkpoint(checkpoint_path);
    ap::model::RunConfig cfg = ap::model::parse_run_config(ck.config_json);
    *out = new ap_model(std::move(cfg), ck);
    return AP_OK;
  });
}

void ap_model_close(ap_model* model) { delete model; }

const char* ap_model_config_hash(const ap_model* model) {
  return model ? model->config_hash.c_str() : "";
}

ap_status ap_dataset_open(const char* cache_path, ap_dataset** out) {
  if (!cache_path || !out) return invalid("dataset_open: path and out are required");
  return guarded([&]() {
    auto* ds = new ap_dataset{ap::data::load_cache(cache_path)};
    *out = ds;
    return AP_OK;
  });
}

void ap_dataset_close(ap_dataset* dataset) { delete dataset; }

size_t ap_dataset_size(const ap_dataset* dataset) {
  return dataset ? dataset->cache.snippets.size() : 0;
}

ap_status ap_dataset_split_count(const ap_dataset* dataset, const char* split, size_t* out) {
  if (!dataset || !split || !out) return invalid("split_count: all arguments are required");
  return guarded([&]() {
    *out = dataset->cache.indices_of(split).size();
    return AP_OK;
  });
}

const char* ap_dataset_fingerprint(const ap_dataset* dataset) {
  return dataset ? dataset->cache.fingerprint.c_str() : "";
}

ap_status ap_predict(const ap_model* model, const ap_dataset* dataset, size_t snippet_index,
                     int segments, ap_prediction** out) {
  if (!model || !dataset || !out) return invalid("predict: model, dataset, out are required");
  return guarded([&]() {
    if (snippet_index >= dataset->cache.snippets.size())
      ap::raise(ap::ErrorKind::Contract, "predict: snippet index out of range");
    bool need_future = model->cfg.model.arch == ap::model::Architecture::Ssp;
    ap::model::PreparedDataset ds =
        ap::model::prepare_subset(dataset->cache, {snippet_index}, model->cfg.model, need_future);
    auto results = ap::model::infer(model->impl, ds, {0}, segments,
                                    ap::model::ChainPolicy::HighestProb);
    const auto& res = results[0];
    auto* pred = new ap_prediction;
    ap::bev::EgoFrame frame = ap::bev::EgoFrame::from(res.anchor);
    for (const auto& tr : ap::eval::chained_trajectories(res)) {
      std::vector<std::array<double, 2>> world;
      for (const auto& p : tr) {
        world.push_back({res.anchor.x + frame.cos_h * p[0] - frame.sin_h * p[1],
                         res.anchor.y + frame.sin_h * p[0] + frame.cos_h * p[1]});
      }
      pred->steps = world.size();
      pred->world_modes.push_back(std::move(world));
    }
    pred->probs = ap::eval::chained_probs(res);
    *out = pred;
    return AP_OK;
  });
}

size_t ap_prediction_mode_count(const ap_prediction* pred) {
  return pred ? pred->world_modes.size() : 0;
}

size_t ap_prediction_steps(const ap_prediction* pred) { return pred ? pred->steps : 0; }

ap_status ap_prediction_positions(const ap_prediction* pred, size_t mode, double* xy,
                                  size_t capacity) {
  if (!pred || !xy) return invalid("prediction_positions: pred and xy are required");
  return guarded([&]() {
    if (mode >= pred->world_modes.size())
      ap::raise(ap::ErrorKind::Contract, "prediction_positions: mode out of range");
    const auto& tr = pred->world_modes[mode];
    if (capacity < 2 * tr.size())
      ap::raise(ap::ErrorKind::Contract, "prediction_positions: buffer too small");
    for (size_t t = 0; t < tr.size(); ++t) {
      xy[2 * t] = tr[t][0];
      xy[2 * t + 1] = tr[t][1];
    }
    return AP_OK;
  });
}

ap_status ap_prediction_probs(const ap_prediction* pred, double* probs, size_t capacity) {
  if (!pred || !probs) return invalid("prediction_probs: pred and probs are required");
  return guarded([&]() {
    if (capacity < pred->probs.size())
      ap::raise(ap::ErrorKind::Contract, "prediction_probs: buffer too small");
    for (size_t i = 0; i < pred->probs.size(); ++i) probs[i] = pred->probs[i];
    return AP_OK;
  });
}

void ap_prediction_close(ap_prediction* pred) { delete pred; }

ap_status ap_plot(const ap_model* model, const ap_dataset* dataset, size_t snippet_index,
                  int segments, const char* out_svg) {
  if (!model || !dataset || !out_svg)
    return invalid("plot: model, dataset and out_svg are required");
  return guarded([&]() {
    if (snippet_index >= dataset->cache.snippets.size())
      ap::raise(ap::ErrorKind::Contract, "plot: snippet index out of range");
    bool need_future = model->cfg.model.arch == ap::model::Architecture::Ssp;
    ap::model::PreparedDataset ds =
        ap::model::prepare_subset(dataset->cache, {snippet_index}, model->cfg.model, need_future);
    auto results = ap::model::infer(model->impl, ds, {0}, segments,
                                    ap::model::ChainPolicy::HighestProb);
    const auto& sn = dataset->cache.snippets[snippet_index];
    const auto& map = dataset->cache.maps.at(static_cast<size_t>(sn.map_index));
    ap::eval::plot_inference(sn, map, results[0], out_svg);
    return AP_OK;
  });
}

ap_status ap_export_raster(const ap_dataset* dataset, size_t snippet_index, const char* variant,
                           const char* path_prefix) {
  if (!dataset || !variant || !path_prefix)
    return invalid("export_raster: dataset, variant and path_prefix are required");
  return guarded([&]() {
    if (snippet_index >= dataset->cache.snippets.size())
      ap::raise(ap::ErrorKind::Contract, "export_raster: snippet index out of range");
    ap::bev::RasterConfig cfg;
    std::string v = variant;
    if (v == "chauffeurnet")
      cfg.variant = ap::bev::RasterVariant::ChauffeurNet;
    else if (v == "mtp")
      cfg.variant = ap::bev::RasterVariant::Mtp;
    else
      ap::raise(ap::ErrorKind::Config, "export_raster: unknown variant '" + v + "'");
    const auto& sn = dataset->cache.snippets[snippet_index];
    const auto& map = dataset->cache.maps.at(static_cast<size_t>(sn.map_index));
    ap::bev::ContextTensor ct = ap::bev::rasterize(sn, map, cfg);
    ap::bev::export_png(ct, cfg, path_prefix);
    return AP_OK;
  });
}

}  // extern "C"
