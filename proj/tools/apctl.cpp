// apctl — command line front end; talks to the core exclusively through the
// actionpredict C API.
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "actionpredict.h"

namespace {

int fail(ap_status st) {
  std::fprintf(stderr, "error: %s: %s\n", ap_status_name(st), ap_last_error());
  return 1;
}

struct SynthArgs {
  std::string scenario = "straight";
  int count = 8;
  int recordings = 1;
  uint64_t seed = 1;
  int segments = 1;
  std::string out;
};

struct IngestArgs {
  std::string tracks, meta, map, out;
  double dt = 0.3;
  size_t horizon = 10;
  int segments = 1;
  double spacing = 0.6;
};

struct TrainArgs {
  std::string config, cache, out;
  int64_t seed = -1;
};

struct EvalArgs {
  std::string checkpoint, cache, split = "test", out;
  int segments = 1;
  bool encoded_future = false;
};

struct PredictArgs {
  std::string checkpoint, cache;
  size_t index = 0;
  int segments = 1;
};

struct PlotArgs {
  std::string checkpoint, cache, out;
  size_t index = 0;
  int segments = 1;
  std::string raster_prefix;
  std::string raster_variant = "chauffeurnet";
};

struct GradcheckArgs {
  uint64_t seed = 7;
  double tolerance = 1e-4;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"action-space trajectory prediction toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ap_version()));

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--scenario", sa.scenario,
                    "straight|left_turn|right_turn|roundabout_arc|stop_and_go|bimodal_fork");
  synth->add_option("--count", sa.count, "tracks per recording (pairs for bimodal_fork)");
  synth->add_option("--recordings", sa.recordings, "independent recordings");
  synth->add_option("--seed", sa.seed);
  synth->add_option("--segments", sa.segments, "1 or 2 future segments");
  synth->add_option("--out", sa.out, "output directory")->required();

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "build a snippet cache from track tables");
  ingest->add_option("--tracks", ia.tracks, "tracks csv")->required();
  ingest->add_option("--meta", ia.meta, "recording meta json")->required();
  ingest->add_option("--map", ia.map, "map polylines json");
  ingest->add_option("--dt", ia.dt);
  ingest->add_option("--horizon", ia.horizon, "steps per segment");
  ingest->add_option("--segments", ia.segments);
  ingest->add_option("--spacing", ia.spacing, "anchor spacing in seconds");
  ingest->add_option("--out", ia.out, "cache file")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model from a run config");
  train->add_option("--config", ta.config, "run config json")->required();
  train->add_option("--cache", ta.cache, "snippet cache (overrides the config)");
  train->add_option("--seed", ta.seed, "seed override");
  train->add_option("--out", ta.out, "output directory")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval->add_option("--checkpoint", ea.checkpoint)->required();
  eval->add_option("--cache", ea.cache)->required();
  eval->add_option("--split", ea.split, "train|val|test|all");
  eval->add_option("--segments", ea.segments);
  eval->add_flag("--encoded-future", ea.encoded_future,
                 "diagnostic: use encoded instead of predicted future features");
  eval->add_option("--out", ea.out, "report json")->required();

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "print multi-modal predictions for a snippet");
  predict->add_option("--checkpoint", pa.checkpoint)->required();
  predict->add_option("--cache", pa.cache)->required();
  predict->add_option("--index", pa.index, "snippet index");
  predict->add_option("--segments", pa.segments);

  PlotArgs pl;
  auto* plot = app.add_subcommand("plot", "render a scene with predictions to svg");
  plot->add_option("--checkpoint", pl.checkpoint)->required();
  plot->add_option("--cache", pl.cache)->required();
  plot->add_option("--index", pl.index, "snippet index");
  plot->add_option("--segments", pl.segments);
  plot->add_option("--out", pl.out, "output svg")->required();
  plot->add_option("--raster-prefix", pl.raster_prefix,
                   "also export the snippet's context raster under this prefix");
  plot->add_option("--raster-variant", pl.raster_variant, "chauffeurnet|mtp");

  GradcheckArgs ga;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gradcheck->add_option("--seed", ga.seed);
  gradcheck->add_option("--tolerance", ga.tolerance);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (synth->parsed()) {
    ap_status st = ap_synth_generate(sa.scenario.c_str(), sa.count, sa.recordings, sa.seed,
                                     sa.segments, sa.out.c_str());
    if (st != AP_OK) return fail(st);
    std::printf("wrote %s/{tracks.csv,meta.json,map.json}\n", sa.out.c_str());
    return 0;
  }

  if (ingest->parsed()) {
    ap_ingest_stats stats{};
    ap_status st = ap_ingest(ia.tracks.c_str(), ia.meta.c_str(),
                             ia.map.empty() ? nullptr : ia.map.c_str(), ia.dt, ia.horizon,
                             ia.segments, ia.spacing, ia.out.c_str(), &stats);
    if (st != AP_OK) return fail(st);
    std::printf("cache %s: %llu snippets (%llu dropped infeasible, %llu inconsistent)\n",
                ia.out.c_str(), static_cast<unsigned long long>(stats.snippets),
                static_cast<unsigned long long>(stats.dropped_infeasible),
                static_cast<unsigned long long>(stats.dropped_inconsistent));
    return 0;
  }

  if (train->parsed()) {
    ap_status st = ap_train(ta.config.c_str(), ta.cache.empty() ? nullptr : ta.cache.c_str(),
                            ta.out.c_str(), ta.seed);
    if (st != AP_OK) return fail(st);
    std::printf("trained: %s/model.ckpt, log: %s/metrics.jsonl\n", ta.out.c_str(),
                ta.out.c_str());
    return 0;
  }

  if (eval->parsed()) {
    ap_status st = ap_evaluate(ea.checkpoint.c_str(), ea.cache.c_str(), ea.split.c_str(),
                               ea.segments, ea.encoded_future ? 1 : 0, ea.out.c_str());
    if (st != AP_OK) return fail(st);
    std::printf("report: %s\n", ea.out.c_str());
    return 0;
  }

  if (predict->parsed()) {
    ap_model* model = nullptr;
    ap_dataset* dataset = nullptr;
    ap_prediction* pred = nullptr;
    ap_status st = ap_model_open(pa.checkpoint.c_str(), &model);
    if (st == AP_OK) st = ap_dataset_open(pa.cache.c_str(), &dataset);
    if (st == AP_OK) st = ap_predict(model, dataset, pa.index, pa.segments, &pred);
    if (st == AP_OK) {
      size_t modes = ap_prediction_mode_count(pred);
      size_t steps = ap_prediction_steps(pred);
      std::vector<double> probs(modes), xy(2 * steps);
      ap_prediction_probs(pred, probs.data(), probs.size());
      std::printf("{\"config_hash\":\"%s\",\"snippet\":%zu,\"modes\":[",
                  ap_model_config_hash(model), pa.index);
      for (size_t m = 0; m < modes; ++m) {
        ap_prediction_positions(pred, m, xy.data(), xy.size());
        std::printf("%s{\"prob\":%.6f,\"positions\":[", m ? "," : "", probs[m]);
        for (size_t t = 0; t < steps; ++t)
          std::printf("%s[%.4f,%.4f]", t ? "," : "", xy[2 * t], xy[2 * t + 1]);
        std::printf("]}");
      }
      std::printf("]}\n");
    }
    ap_prediction_close(pred);
    ap_dataset_close(dataset);
    ap_model_close(model);
    return st == AP_OK ? 0 : fail(st);
  }

  if (plot->parsed()) {
    ap_model* model = nullptr;
    ap_dataset* dataset = nullptr;
    ap_status st = ap_model_open(pl.checkpoint.c_str(), &model);
    if (st == AP_OK) st = ap_dataset_open(pl.cache.c_str(), &dataset);
    if (st == AP_OK) st = ap_plot(model, dataset, pl.index, pl.segments, pl.out.c_str());
    if (st == AP_OK && !pl.raster_prefix.empty())
      st = ap_export_raster(dataset, pl.index, pl.raster_variant.c_str(),
                            pl.raster_prefix.c_str());
    ap_dataset_close(dataset);
    ap_model_close(model);
    if (st != AP_OK) return fail(st);
    std::printf("plot: %s\n", pl.out.c_str());
    return 0;
  }

  if (gradcheck->parsed()) {
    double worst = 0;
    std::vector<char> report(16384);
    ap_status st = ap_gradcheck(ga.seed, ga.tolerance, &worst, report.data(), report.size());
    std::printf("%s", report.data());
    if (st != AP_OK) return fail(st);
    std::printf("max relative error %.3e (tolerance %.1e)\n", worst, ga.tolerance);
    return 0;
  }

  return 2;
}
