#include "model/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "eval/evaluate.hpp"

namespace ap::model {

namespace {

struct Adam {
  double lr;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  size_t t = 0;
  std::vector<std::vector<double>> m, v;

  explicit Adam(double lr_, ParamRegistry& reg) : lr(lr_) {
    for (auto& [name, p] : reg.params) {
      m.emplace_back(p.size(), 0.0);
      v.emplace_back(p.size(), 0.0);
    }
  }

  void step(ParamRegistry& reg) {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t pi = 0; pi < reg.params.size(); ++pi) {
      Tensor& p = reg.params[pi].second;
      if (p.grad().empty()) continue;
      auto& mp = m[pi];
      auto& vp = v[pi];
      for (size_t i = 0; i < p.size(); ++i) {
        double g = p.grad()[i];
        mp[i] = beta1 * mp[i] + (1 - beta1) * g;
        vp[i] = beta2 * vp[i] + (1 - beta2) * g * g;
        p.at(i) -= lr * (mp[i] / bc1) / (std::sqrt(vp[i] / bc2) + eps);
      }
      p.zero_grad();
    }
  }
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct EpochStats {
  double loss = 0, rec = 0, feat = 0, reg = 0, cls = 0;
  size_t batches = 0;
  void add(const LossBreakdown& lb) {
    loss += lb.total.item();
    rec += lb.reconstruction;
    feat += lb.feature;
    reg += lb.regression;
    cls += lb.classification;
    ++batches;
  }
  double mean(double x) const { return batches ? x / static_cast<double>(batches) : 0.0; }
};

std::string metrics_line(size_t epoch, const std::string& phase, const std::string& split,
                         const EpochStats& st, const eval::QuickMetrics& qm, double lr,
                         uint64_t seed, const std::string& config_hash,
                         const std::string& fingerprint) {
  std::string s = "{";
  s += "\"epoch\":" + std::to_string(epoch);
  s += ",\"phase\":\"" + phase + "\"";
  s += ",\"split\":\"" + split + "\"";
  s += ",\"loss\":" + fmt_double(st.mean(st.loss));
  s += ",\"reconstruction\":" + fmt_double(st.mean(st.rec));
  s += ",\"feature\":" + fmt_double(st.mean(st.feat));
  s += ",\"regression\":" + fmt_double(st.mean(st.reg));
  s += ",\"classification\":" + fmt_double(st.mean(st.cls));
  s += ",\"mae\":" + fmt_double(qm.mae);
  s += ",\"mse\":" + fmt_double(qm.mse);
  s += ",\"fde\":" + fmt_double(qm.fde);
  s += ",\"lr\":" + fmt_double(lr);
  s += ",\"seed\":" + std::to_string(seed);
  s += ",\"config_hash\":\"" + config_hash + "\"";
  s += ",\"dataset_fingerprint\":\"" + fingerprint + "\"";
  s += "}\n";
  return s;
}

void dump_diagnostic(const std::string& out_dir, const Batch& b, const LossBreakdown& lb) {
  std::ofstream os(std::filesystem::path(out_dir) / "diagnostic.json");
  os << "{\"error\":\"non-finite loss\",\"loss\":" << lb.total.item() << ",\"snippets\":[";
  for (size_t i = 0; i < b.indices.size(); ++i) os << (i ? "," : "") << b.indices[i];
  os << "],\"reconstruction\":" << lb.reconstruction << ",\"feature\":" << lb.feature
     << ",\"regression\":" << lb.regression << ",\"classification\":" << lb.classification
     << "}\n";
}

}  // namespace

TrainOutput train(const RunConfig& run_cfg, const data::SnippetCache& cache,
                  const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  RunConfig cfg = run_cfg;
  auto train_idx = cache.indices_of("train");
  auto val_idx = cache.indices_of("val");
  if (train_idx.empty()) raise(ErrorKind::Config, "train: empty training split");

  fit_action_scaling(cache, train_idx, cfg.model);
  std::string cfg_json = dump_run_config(cfg);
  std::string cfg_hash = config_hash(cfg);

  bool ssp = cfg.model.arch == Architecture::Ssp;
  PreparedDataset ds = prepare_dataset(cache, cfg.model, /*need_future_ctx=*/ssp);

  AspModel model(cfg.model, cfg.loss, cfg.schedule.seed);
  if (!cfg.schedule.warm_start.empty()) model.load_weights(load_checkpoint(cfg.schedule.warm_start));

  Adam adam(cfg.schedule.lr, model.params());
  Rng shuffle_rng(cfg.schedule.seed, 40);

  std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  std::ofstream log(metrics_path, std::ios::binary);
  if (!log) raise(ErrorKind::Io, "train: cannot open metrics log " + metrics_path);

  // deterministic subset for train metrics
  std::vector<size_t> train_metric_idx(train_idx.begin(),
                                       train_idx.begin() +
                                           std::min<size_t>(train_idx.size(), 64));

  double best_val = std::numeric_limits<double>::infinity();
  size_t stale_epochs = 0;
  size_t steps = 0;
  bool step_cap_hit = false;
  TrainOutput out;

  auto run_epoch = [&](size_t epoch, bool pretrain) {
    std::vector<size_t> order = train_idx;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    EpochStats stats;
    for (size_t begin = 0; begin < order.size(); begin += cfg.schedule.batch) {
      if (cfg.schedule.max_steps && steps >= cfg.schedule.max_steps) {
        step_cap_hit = true;
        break;
      }
      size_t end = std::min(order.size(), begin + cfg.schedule.batch);
      Batch b = gather_batch(ds, std::vector<size_t>(order.begin() + static_cast<long>(begin),
                                                     order.begin() + static_cast<long>(end)));
      Tape tape;
      LossBreakdown lb = pretrain ? loss_pretrain(model, b)
                                  : (ssp ? loss_ssp(model, b) : loss_ffw(model, b));
      if (!std::isfinite(lb.total.item())) {
        dump_diagnostic(out_dir, b, lb);
        raise(ErrorKind::Numeric, "train: non-finite loss at epoch " + std::to_string(epoch) +
                                      "; diagnostic written to " + out_dir);
      }
      tape.backward(lb.total);
      adam.step(model.params());
      ++steps;
      stats.add(lb);
    }

    const std::string phase = pretrain ? "pretrain" : "train";
    eval::QuickMetrics train_qm =
        eval::quick_metrics(model, ds, train_metric_idx, cfg.model.segments);
    out.train_fde = train_qm.fde;
    log << metrics_line(epoch, phase, "train", stats, train_qm, adam.lr, cfg.schedule.seed,
                        cfg_hash, cache.fingerprint);

    double plateau_metric = stats.mean(stats.loss);
    if (!val_idx.empty()) {
      // validation loss without gradients, plus metrics
      EpochStats vstats;
      for (size_t begin = 0; begin < val_idx.size(); begin += cfg.schedule.batch) {
        size_t end = std::min(val_idx.size(), begin + cfg.schedule.batch);
        Batch vb = gather_batch(
            ds, std::vector<size_t>(val_idx.begin() + static_cast<long>(begin),
                                    val_idx.begin() + static_cast<long>(end)));
        LossBreakdown vlb = pretrain ? loss_pretrain(model, vb)
                                     : (ssp ? loss_ssp(model, vb) : loss_ffw(model, vb));
        vstats.add(vlb);
      }
      eval::QuickMetrics val_qm = eval::quick_metrics(model, ds, val_idx, cfg.model.segments);
      log << metrics_line(epoch, phase, "val", vstats, val_qm, adam.lr, cfg.schedule.seed,
                          cfg_hash, cache.fingerprint);
      plateau_metric = vstats.mean(vstats.loss);
    }

    if (!pretrain) {
      if (plateau_metric < best_val - 1e-12) {
        best_val = plateau_metric;
        stale_epochs = 0;
      } else if (++stale_epochs >= cfg.schedule.plateau_patience) {
        adam.lr *= cfg.schedule.lr_factor;
        stale_epochs = 0;
      }
    }

    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03zu.ckpt", epoch);
    Checkpoint ck = model.to_checkpoint(cfg_json);
    save_checkpoint(ck, (fs::path(out_dir) / name).string());
  };

  size_t epoch = 0;
  for (size_t e = 0; e < cfg.schedule.pretrain_epochs && !step_cap_hit; ++e)
    run_epoch(++epoch, /*pretrain=*/true);
  for (size_t e = 0; e < cfg.schedule.epochs && !step_cap_hit; ++e)
    run_epoch(++epoch, /*pretrain=*/false);

  Checkpoint final_ck = model.to_checkpoint(cfg_json);
  out.checkpoint_path = (fs::path(out_dir) / "model.ckpt").string();
  save_checkpoint(final_ck, out.checkpoint_path);
  out.metrics_path = metrics_path;
  out.steps = steps;
  out.effective_config = cfg;
  return out;
}

}  // namespace ap::model
