#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "data/synth.hpp"
#include "eval/evaluate.hpp"
#include "model/asp.hpp"
#include "model/train.hpp"

using namespace ap;
using namespace ap::model;

namespace {

namespace fs = std::filesystem;

// small fast config on the feature-vector context
ModelConfig tiny_cfg(Architecture arch, size_t modes = 2) {
  ModelConfig cfg;
  cfg.arch = arch;
  cfg.encoder = EncoderKind::MlpOnFeatureVector;
  cfg.feature_size = 16;
  cfg.hidden_size = 16;
  cfg.gru_layers = 1;
  cfg.xi_layers = {16};
  cfg.mode_count = modes;
  cfg.mode_embed = 4;
  cfg.horizon = 10;
  return cfg;
}

data::SnippetCache synth_cache(data::Scenario scenario, int count, uint64_t seed,
                               int segments = 1, int recordings = 1, bool noise_free = false) {
  data::SynthConfig scfg;
  scfg.scenario = scenario;
  scfg.count = count;
  scfg.seed = seed;
  scfg.segments = segments;
  scfg.recordings = recordings;
  if (noise_free) {
    scfg.noise_accel = 0;
    scfg.noise_steer = 0;
  }
  data::ExtractConfig ecfg;
  ecfg.segments = segments;
  return data::build_cache(data::synth_generate(scfg), ecfg);
}

}  // namespace

TEST_CASE("encoder output is deterministic with dimension F") {
  Rng seeds(77);
  for (int round = 0; round < 20; ++round) {
    ModelConfig cfg = tiny_cfg(Architecture::Ffw);
    cfg.feature_size = 4 + seeds.below(60);
    AspModel m(cfg, LossConfig{}, seeds.next_u64());
    Rng rng(round);
    Tensor ctx = Tensor::uniform_init({3, bev::kFeatureVectorSize}, 1.0, rng, false);
    Tensor z1 = m.encode(ctx);
    Tensor z2 = m.encode(ctx);
    CHECK(z1.shape() == Shape{3, cfg.feature_size});
    CHECK(z1.values() == z2.values());
  }
}

TEST_CASE("zero input through a zeroed encoder gives a bias-determined constant") {
  ModelConfig cfg = tiny_cfg(Architecture::Ffw);
  AspModel m(cfg, LossConfig{}, 3);
  for (auto& [name, t] : m.params().params)
    if (name.rfind("phi", 0) == 0)
      for (auto& v : t.values()) v = 0.0;
  Tensor ctx = Tensor::zeros({2, bev::kFeatureVectorSize});
  Tensor z = m.encode(ctx);
  for (size_t i = 0; i < cfg.feature_size; ++i)
    CHECK(z.at(i) == z.at(cfg.feature_size + i));  // identical rows
  for (double v : z.values()) CHECK(v == 0.0);     // tanh(0 bias) = 0
}

TEST_CASE("predicted raw actions are bounded and M=1 softmax gives probability one") {
  ModelConfig cfg = tiny_cfg(Architecture::Ffw, 1);
  AspModel m(cfg, LossConfig{}, 11);
  Rng rng(4);
  Tensor z = Tensor::uniform_init({2, cfg.feature_size}, 1.0, rng, false);
  std::vector<Tensor> hist;
  for (size_t t = 0; t < cfg.horizon; ++t)
    hist.push_back(Tensor::uniform_init({2, 2}, 1.0, rng, false));
  ModeSetT ms = m.predict_actions(z, hist, cfg.horizon);
  REQUIRE(ms.raw.size() == 1);
  for (const auto& step : ms.raw[0])
    for (double v : step.values()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  Tensor probs = ops::softmax(ms.logits);
  for (double p : probs.values()) CHECK(p == doctest::Approx(1.0));
}

TEST_CASE("mode_select obeys the gate, distance and tie rules") {
  using Tr = std::vector<std::array<double, 2>>;
  Tr gt_left;   // quarter-turn to the left
  Tr straight;  // straight ahead
  Tr left_far;  // left turn, slightly offset
  for (int t = 1; t <= 10; ++t) {
    double s = t / 10.0;
    gt_left.push_back({10 * std::sin(s), 10 * (1 - std::cos(s))});
    straight.push_back({10.0 * s, 0.0});
    left_far.push_back({10 * std::sin(s) + 0.5, 10 * (1 - std::cos(s)) + 0.5});
  }
  double gate = 45.0 * 3.14159265358979 / 180.0;

  SUBCASE("single mode always wins") { CHECK(mode_select({straight}, gt_left, gate) == 0); }
  SUBCASE("exact match wins") {
    CHECK(mode_select({straight, gt_left, left_far}, gt_left, gate) == 1);
  }
  SUBCASE("angle gate rejects the straight mode even when it is closer in distance") {
    // straight endpoint angle 0 vs gt ~0.46 rad -> passes 45 deg gate, so craft a
    // sharper ground truth: half-circle to the left
    Tr gt_sharp;
    for (int t = 1; t <= 10; ++t) {
      double s = 3.14159265358979 * t / 10.0 * 0.6;
      gt_sharp.push_back({6 * std::sin(s), 6 * (1 - std::cos(s))});
    }
    Tr left_mode;
    for (int t = 1; t <= 10; ++t) {
      double s = 3.14159265358979 * t / 10.0 * 0.55;
      left_mode.push_back({7 * std::sin(s), 7 * (1 - std::cos(s))});
    }
    size_t pick = mode_select({straight, left_mode}, gt_sharp, gate);
    CHECK(pick == 1);
  }
  SUBCASE("no mode passing the gate falls back to pure distance") {
    Tr right;
    for (int t = 1; t <= 10; ++t) {
      double s = t / 10.0;
      right.push_back({10 * std::sin(s), -10 * (1 - std::cos(s))});
    }
    Tr gt_u_turn;
    for (int t = 1; t <= 10; ++t) {
      double s = 3.14159265358979 * t / 10.0;
      gt_u_turn.push_back({4 * std::sin(s), 4 * (1 - std::cos(s))});
    }
    size_t pick = mode_select({straight, right}, gt_u_turn, 0.1);
    CHECK(pick == 0);  // straight is closer even though both fail the gate
  }
  SUBCASE("translation invariance") {
    size_t before = mode_select({straight, left_far}, gt_left, gate);
    auto shift = [](Tr tr) {
      for (auto& p : tr) {
        p[0] += 113.0;
        p[1] -= 55.0;
      }
      return tr;
    };
    size_t after = mode_select({shift(straight), shift(left_far)}, shift(gt_left), gate);
    CHECK(before == after);
  }
  SUBCASE("ties resolve to the lowest index") {
    CHECK(mode_select({straight, straight, straight}, gt_left, gate) == 0);
  }
}

TEST_CASE("chain_select: argmax, ties, and label matching") {
  using Tr = std::vector<std::array<double, 2>>;
  Tr a{{1, 0}}, b{{0, 1}}, gt{{0, 1}};
  CHECK(chain_select({0.1, 2.0, 0.3}, {a, b, a}, nullptr, ChainPolicy::HighestProb) == 1);
  CHECK(chain_select({0.5, 0.5, 0.5}, {a, b, a}, nullptr, ChainPolicy::HighestProb) == 0);
  CHECK(chain_select({5.0, 0.0}, {a, b}, &gt, ChainPolicy::LabelMatch) == 1);
}

TEST_CASE("reconstruction and feature prediction are deterministic with the right shapes") {
  ModelConfig cfg = tiny_cfg(Architecture::Ssp);
  AspModel m(cfg, LossConfig{}, 9);
  Rng rng(2);
  Tensor z0 = Tensor::uniform_init({3, cfg.feature_size}, 0.9, rng, false);
  Tensor z1 = Tensor::uniform_init({3, cfg.feature_size}, 0.9, rng, false);
  auto rec1 = m.reconstruct_actions(z0, z1);
  auto rec2 = m.reconstruct_actions(z0, z1);
  REQUIRE(rec1.size() == cfg.horizon);
  for (size_t t = 0; t < rec1.size(); ++t) {
    CHECK(rec1[t].shape() == Shape{3, 2});
    CHECK(rec1[t].values() == rec2[t].values());
    for (double v : rec1[t].values()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
  std::vector<Tensor> actions;
  for (size_t t = 0; t < cfg.horizon; ++t)
    actions.push_back(Tensor::uniform_init({3, 2}, 0.8, rng, false));
  Tensor zp1 = m.predict_features(z0, actions);
  Tensor zp2 = m.predict_features(z0, actions);
  CHECK(zp1.shape() == Shape{3, cfg.feature_size});
  CHECK(zp1.values() == zp2.values());
}

TEST_CASE("ssp loss components are nonnegative and descend under a gradient step") {
  auto cache = synth_cache(data::Scenario::LeftTurn, 4, 31);
  RunConfig rc;
  rc.model = tiny_cfg(Architecture::Ssp);
  fit_action_scaling(cache, cache.indices_of("all"), rc.model);
  PreparedDataset ds = prepare_dataset(cache, rc.model, true);
  AspModel m(rc.model, rc.loss, 17);
  auto idx = cache.indices_of("all");
  REQUIRE(idx.size() >= 2);
  Batch b = gather_batch(ds, idx);

  double before;
  {
    Tape tape;
    LossBreakdown lb = loss_ssp(m, b);
    before = lb.total.item();
    CHECK(lb.reconstruction >= 0);
    CHECK(lb.feature >= 0);
    CHECK(lb.regression >= 0);
    CHECK(lb.classification >= 0);
    CHECK(before == doctest::Approx(lb.reconstruction + lb.feature + lb.regression +
                                    lb.classification)
                        .epsilon(1e-12));
    tape.backward(lb.total);
    // plain gradient step
    for (auto& [name, t] : m.params().params) {
      if (t.grad().empty()) continue;
      for (size_t i = 0; i < t.size(); ++i) t.at(i) -= 1e-4 * t.grad()[i];
      t.zero_grad();
    }
  }
  double after = loss_ssp(m, b).total.item();
  CHECK(after < before);
}

TEST_CASE("feature-mismatch term decreases over fifty descent steps") {
  auto cache = synth_cache(data::Scenario::RoundaboutArc, 3, 5);
  RunConfig rc;
  rc.model = tiny_cfg(Architecture::Ssp);
  rc.loss.w3 = 0;  // pretraining shape: reconstruction + feature only
  rc.loss.w4 = 0;
  fit_action_scaling(cache, cache.indices_of("all"), rc.model);
  PreparedDataset ds = prepare_dataset(cache, rc.model, true);
  AspModel m(rc.model, rc.loss, 23);
  Batch b = gather_batch(ds, cache.indices_of("all"));
  double first_feat = 0, last_feat = 0;
  for (int step = 0; step < 50; ++step) {
    Tape tape;
    LossBreakdown lb = loss_pretrain(m, b);
    if (step == 0) first_feat = lb.feature;
    last_feat = lb.feature;
    tape.backward(lb.total);
    for (auto& [name, t] : m.params().params) {
      if (t.grad().empty()) continue;
      for (size_t i = 0; i < t.size(); ++i) t.at(i) -= 0.05 * t.grad()[i];
      t.zero_grad();
    }
  }
  CHECK(last_feat < first_feat);
}

TEST_CASE("untrained model already yields kinematically feasible positions") {
  auto cache = synth_cache(data::Scenario::Straight, 3, 19);
  ModelConfig cfg = tiny_cfg(Architecture::Ssp, 3);
  fit_action_scaling(cache, cache.indices_of("all"), cfg);
  PreparedDataset ds = prepare_dataset(cache, cfg, true);
  AspModel m(cfg, LossConfig{}, 5);
  kin::ActionBounds bounds{cfg.a_min, cfg.a_max, cfg.delta_min, cfg.delta_max};
  auto results = infer(m, ds, {0}, 1, ChainPolicy::HighestProb);
  for (const auto& mo : results[0].segments[0].modes) {
    std::vector<kin::State> chain;
    chain.push_back(mo.start);
    chain.insert(chain.end(), mo.states.begin(), mo.states.end());
    CHECK(kin::trajectory_feasible(chain, cfg.geometry, cfg.dt, bounds));
  }
}

TEST_CASE("two-segment inference chains exactly and extends one-segment output") {
  auto cache = synth_cache(data::Scenario::LeftTurn, 3, 47, /*segments=*/2);
  ModelConfig cfg = tiny_cfg(Architecture::Ssp, 2);
  cfg.segments = 2;
  fit_action_scaling(cache, cache.indices_of("all"), cfg);
  PreparedDataset ds = prepare_dataset(cache, cfg, true);
  AspModel m(cfg, LossConfig{}, 29);

  auto two = infer(m, ds, {0}, 2, ChainPolicy::HighestProb);
  auto one = infer(m, ds, {0}, 1, ChainPolicy::HighestProb);
  REQUIRE(two[0].segments.size() == 2);
  REQUIRE(one[0].segments.size() == 1);

  // prefix property: segment 1 of the two-segment run equals the one-segment run
  const auto& seg_a = one[0].segments[0];
  const auto& seg_b = two[0].segments[0];
  REQUIRE(seg_a.modes.size() == seg_b.modes.size());
  for (size_t mi = 0; mi < seg_a.modes.size(); ++mi) {
    for (size_t t = 0; t < seg_a.modes[mi].positions.size(); ++t) {
      CHECK(std::fabs(seg_a.modes[mi].positions[t][0] - seg_b.modes[mi].positions[t][0]) <=
            1e-12);
      CHECK(std::fabs(seg_a.modes[mi].positions[t][1] - seg_b.modes[mi].positions[t][1]) <=
            1e-12);
    }
    CHECK(seg_a.modes[mi].prob == doctest::Approx(seg_b.modes[mi].prob).epsilon(1e-12));
  }

  // C0 continuity: every segment-2 mode starts exactly at the fed mode's end state
  const auto& fed = seg_b.modes[two[0].segments[0].fed_mode];
  for (const auto& mo : two[0].segments[1].modes) {
    CHECK(mo.start.x == fed.states.back().x);
    CHECK(mo.start.y == fed.states.back().y);
    CHECK(mo.start.theta == fed.states.back().theta);
    CHECK(mo.start.v == fed.states.back().v);
  }

  // repeated calls are identical
  auto again = infer(m, ds, {0}, 2, ChainPolicy::HighestProb);
  for (size_t si = 0; si < 2; ++si)
    for (size_t mi = 0; mi < two[0].segments[si].modes.size(); ++mi)
      CHECK(two[0].segments[si].modes[mi].positions ==
            again[0].segments[si].modes[mi].positions);
}

TEST_CASE("label_match is rejected at inference") {
  auto cache = synth_cache(data::Scenario::Straight, 2, 3);
  ModelConfig cfg = tiny_cfg(Architecture::Ffw);
  fit_action_scaling(cache, cache.indices_of("all"), cfg);
  PreparedDataset ds = prepare_dataset(cache, cfg, false);
  AspModel m(cfg, LossConfig{}, 1);
  CHECK_THROWS_AS(infer(m, ds, {0}, 1, ChainPolicy::LabelMatch), Error);
}

TEST_CASE("m^2 chain expansion produces M*M trajectories with probabilities summing to one") {
  auto cache = synth_cache(data::Scenario::LeftTurn, 2, 13, 2);
  ModelConfig cfg = tiny_cfg(Architecture::Ssp, 3);
  cfg.segments = 2;
  cfg.chain_expand_modes = true;
  fit_action_scaling(cache, cache.indices_of("all"), cfg);
  PreparedDataset ds = prepare_dataset(cache, cfg, true);
  AspModel m(cfg, LossConfig{}, 41);
  auto res = infer(m, ds, {0}, 2, ChainPolicy::HighestProb);
  REQUIRE(res[0].segments.size() == 2);
  CHECK(res[0].segments[1].modes.size() == 9);
  double total = 0;
  for (const auto& mo : res[0].segments[1].modes) total += mo.prob;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("checkpoint round trip reproduces inference bit for bit") {
  auto cache = synth_cache(data::Scenario::RoundaboutArc, 2, 7);
  ModelConfig cfg = tiny_cfg(Architecture::Ffw, 3);
  fit_action_scaling(cache, cache.indices_of("all"), cfg);
  PreparedDataset ds = prepare_dataset(cache, cfg, false);
  AspModel m1(cfg, LossConfig{}, 99);
  fs::path path = fs::temp_directory_path() / "ap_model_rt.ckpt";
  Checkpoint ck = m1.to_checkpoint("{}");
  save_checkpoint(ck, path.string());
  AspModel m2(cfg, LossConfig{}, 12345);  // different init, then overwritten
  m2.load_weights(load_checkpoint(path.string()));
  auto r1 = infer(m1, ds, {0}, 1, ChainPolicy::HighestProb);
  auto r2 = infer(m2, ds, {0}, 1, ChainPolicy::HighestProb);
  for (size_t mi = 0; mi < r1[0].segments[0].modes.size(); ++mi)
    CHECK(r1[0].segments[0].modes[mi].positions == r2[0].segments[0].modes[mi].positions);
  fs::remove(path);
}

TEST_CASE("end-to-end gradient checks pass on the small instance") {
  auto cases = model_gradcheck_cases(20240818, 1e-4);
  for (const auto& c : cases) {
    INFO(c.name, " max rel err ", c.max_rel_err);
    CHECK(c.passed);
  }
}

TEST_CASE("training is deterministic, writes logs, and zero epochs keep the initialization") {
  auto cache = synth_cache(data::Scenario::LeftTurn, 4, 3, 1, 1);
  RunConfig rc;
  rc.model = tiny_cfg(Architecture::Ssp);
  rc.schedule.epochs = 2;
  rc.schedule.pretrain_epochs = 1;
  rc.schedule.batch = 8;
  rc.schedule.lr = 1e-3;
  rc.schedule.seed = 5;

  fs::path dir1 = fs::temp_directory_path() / "ap_train_det1";
  fs::path dir2 = fs::temp_directory_path() / "ap_train_det2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  auto out1 = train(rc, cache, dir1.string());
  auto out2 = train(rc, cache, dir2.string());
  auto slurp = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  CHECK(slurp(out1.metrics_path) == slurp(out2.metrics_path));
  CHECK(slurp(out1.checkpoint_path) == slurp(out2.checkpoint_path));
  CHECK(out1.steps > 0);

  // zero epochs: final checkpoint equals the freshly initialized weights
  RunConfig rz = rc;
  rz.schedule.epochs = 0;
  rz.schedule.pretrain_epochs = 0;
  fs::path dir3 = fs::temp_directory_path() / "ap_train_zero";
  fs::remove_all(dir3);
  auto out3 = train(rz, cache, dir3.string());
  CHECK(out3.steps == 0);
  Checkpoint ck = load_checkpoint(out3.checkpoint_path);
  AspModel fresh(out3.effective_config.model, rz.loss, rz.schedule.seed);
  for (const auto& [name, t] : fresh.params().params) {
    const Tensor* saved = ck.find(name);
    REQUIRE(saved != nullptr);
    CHECK(saved->values() == t.values());
  }
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  fs::remove_all(dir3);
}

TEST_CASE("plateau schedule cuts the learning rate by the configured factor") {
  auto cache = synth_cache(data::Scenario::Straight, 3, 11, 1, 3);
  RunConfig rc;
  rc.model = tiny_cfg(Architecture::Ffw);
  rc.schedule.epochs = 4;
  rc.schedule.batch = 16;
  rc.schedule.lr = 1e-15;  // effectively frozen: the val loss cannot improve
  rc.schedule.plateau_patience = 2;
  rc.schedule.seed = 2;
  fs::path dir = fs::temp_directory_path() / "ap_train_plateau";
  fs::remove_all(dir);
  auto out = train(rc, cache, dir.string());
  std::ifstream is(out.metrics_path);
  std::string line;
  std::vector<double> lrs;
  while (std::getline(is, line)) {
    auto pos = line.find("\"lr\":");
    REQUIRE(pos != std::string::npos);
    lrs.push_back(std::stod(line.substr(pos + 5)));
  }
  REQUIRE(!lrs.empty());
  // after two stale epochs the rate must have been multiplied by 0.2
  CHECK(lrs.back() == doctest::Approx(1e-15 * 0.2).epsilon(1e-9));
  fs::remove_all(dir);
}

TEST_CASE("evaluate reports both conventions with best-of-M no worse than highest-prob") {
  auto cache = synth_cache(data::Scenario::LeftTurn, 4, 9);
  RunConfig rc;
  rc.model = tiny_cfg(Architecture::Ffw, 3);
  fit_action_scaling(cache, cache.indices_of("all"), rc.model);
  PreparedDataset ds = prepare_dataset(cache, rc.model, false);
  AspModel m(rc.model, rc.loss, 21);
  auto rep = eval::evaluate_model(m, ds, cache, "train", 1);
  CHECK(rep.snippet_count > 0);
  CHECK(rep.fde_best <= rep.fde_highest + 1e-12);
  CHECK(rep.mae_best <= rep.mae_highest + 1e-12);
  CHECK(rep.prob_sum_max_dev <= 1e-12);
  CHECK(rep.feasibility_failed == 0);  // kinematic mapping
  std::string json = rep.to_json();
  CHECK(json.find("best_of_m") != std::string::npos);
  CHECK(json == rep.to_json());
}

TEST_CASE("empty split produces an empty report") {
  auto cache = synth_cache(data::Scenario::Straight, 2, 3);  // single recording: all train
  RunConfig rc;
  rc.model = tiny_cfg(Architecture::Ffw);
  fit_action_scaling(cache, cache.indices_of("all"), rc.model);
  PreparedDataset ds = prepare_dataset(cache, rc.model, false);
  AspModel m(rc.model, rc.loss, 2);
  auto rep = eval::evaluate_model(m, ds, cache, "val", 1);
  CHECK(rep.snippet_count == 0);
  CHECK(rep.mae_highest == 0);
}

TEST_CASE("feasibility check accepts in-bounds rollouts and flags violations") {
  kin::ActionBounds bounds{-2.0, 2.0, -0.3, 0.3};
  kin::VehicleGeometry g{1.3, 1.3};
  Rng rng(31);
  // wide sweep, including speeds decaying through zero
  for (int round = 0; round < 2000; ++round) {
    kin::State s{0, 0, rng.uniform(-3, 3), rng.uniform(-2, 14)};
    std::vector<kin::State> chain{s};
    for (int t = 0; t < 10; ++t) {
      kin::Action u{rng.uniform(-2, 2), rng.uniform(-0.3, 0.3)};
      chain.push_back(kin::step(chain.back(), u, g, 0.3));
    }
    CHECK(kin::trajectory_feasible(chain, g, 0.3, bounds));
  }
  // steering beyond the bound is caught
  kin::State s{0, 0, 0, 8};
  std::vector<kin::State> bad{s, kin::step(s, {0.0, 0.5}, g, 0.3)};
  CHECK_FALSE(kin::trajectory_feasible(bad, g, 0.3, bounds));
  // acceleration beyond the bound is caught
  std::vector<kin::State> bad2{s, kin::step(s, {3.0, 0.0}, g, 0.3)};
  CHECK_FALSE(kin::trajectory_feasible(bad2, g, 0.3, bounds));
  // the position-only path judges a straight line feasible and a zigzag not
  kin::State start{0, 0, 0, 8};
  std::vector<std::array<double, 2>> line, zigzag;
  for (int t = 1; t <= 10; ++t) {
    line.push_back({2.4 * t, 0.0});
    zigzag.push_back({2.4 * t, t % 2 ? 2.0 : -2.0});
  }
  CHECK(kin::trajectory_feasible(kin::states_from_positions(start, line, 0.3), g, 0.3, bounds));
  CHECK_FALSE(
      kin::trajectory_feasible(kin::states_from_positions(start, zigzag, 0.3), g, 0.3, bounds));
}

TEST_CASE("single-snippet overfit drives predicted actions to the recorded ones") {
  // descent oracle: positional loss on one snippet, then compare raw action
  // outputs against the normalized recorded future actions
  auto cache = synth_cache(data::Scenario::RoundaboutArc, 1, 77, 1, 1, /*noise_free=*/true);
  cache.snippets.resize(1);
  cache.split.resize(1);
  RunConfig rc;
  rc.model = tiny_cfg(Architecture::Ffw, 1);
  fit_action_scaling(cache, {0}, rc.model);
  PreparedDataset ds = prepare_dataset(cache, rc.model, false);
  AspModel m(rc.model, rc.loss, 51);
  Batch b = gather_batch(ds, {0});
  for (int step = 0; step < 400; ++step) {
    Tape tape;
    LossBreakdown lb = loss_ffw(m, b);
    tape.backward(lb.total);
    for (auto& [name, t] : m.params().params) {
      if (t.grad().empty()) continue;
      for (size_t i = 0; i < t.size(); ++i) t.at(i) -= 2e-3 * t.grad()[i];
      t.zero_grad();
    }
  }
  auto results = infer(m, ds, {0}, 1, ChainPolicy::HighestProb);
  const auto& raw = results[0].segments[0].modes[0].raw;
  const auto& item = ds.items[0];
  double mae_actions = 0;
  for (size_t t = 0; t < raw.size(); ++t)
    mae_actions += std::fabs(raw[t][0] - item.gt1_actions[t][0]) +
                   std::fabs(raw[t][1] - item.gt1_actions[t][1]);
  mae_actions /= static_cast<double>(2 * raw.size());
  CHECK(mae_actions < 0.05);
}

TEST_CASE("single-snippet reconstruction overfit reaches MAE below 0.05") {
  auto cache = synth_cache(data::Scenario::LeftTurn, 1, 13, 1, 1, /*noise_free=*/true);
  cache.snippets.resize(1);
  cache.split.resize(1);
  RunConfig rc;
  rc.model = tiny_cfg(Architecture::Ssp, 1);
  fit_action_scaling(cache, {0}, rc.model);
  PreparedDataset ds = prepare_dataset(cache, rc.model, true);
  AspModel m(rc.model, rc.loss, 3);
  Batch b = gather_batch(ds, {0});
  for (int step = 0; step < 300; ++step) {
    Tape tape;
    LossBreakdown lb = loss_pretrain(m, b);
    tape.backward(lb.total);
    for (auto& [name, t] : m.params().params) {
      if (t.grad().empty()) continue;
      for (size_t i = 0; i < t.size(); ++i) t.at(i) -= 5e-3 * t.grad()[i];
      t.zero_grad();
    }
  }
  Tensor z0 = m.encode(b.ctx0);
  Tensor z1 = m.encode(b.ctx1);
  auto rec = m.reconstruct_actions(z0, z1);
  double mae_rec = 0;
  for (size_t t = 0; t < rec.size(); ++t)
    mae_rec += std::fabs(rec[t].at(0) - b.hist_actions[t].at(0)) +
               std::fabs(rec[t].at(1) - b.hist_actions[t].at(1));
  mae_rec /= static_cast<double>(2 * rec.size());
  CHECK(mae_rec < 0.05);
}

TEST_CASE("incompatible cache and model configs raise errors naming the field") {
  auto cache = synth_cache(data::Scenario::Straight, 2, 3);
  ModelConfig cfg = tiny_cfg(Architecture::Ffw);
  cfg.horizon = 7;  // cache was cut with horizon 10
  try {
    prepare_dataset(cache, cfg, false);
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("horizon") != std::string::npos);
  }
}

TEST_CASE("non-finite loss aborts with a diagnostic dump") {
  auto cache = synth_cache(data::Scenario::LeftTurn, 2, 3);
  RunConfig rc;
  rc.model = tiny_cfg(Architecture::Ffw);
  rc.schedule.epochs = 2;
  rc.schedule.batch = 8;
  rc.schedule.lr = 1e-3;
  fs::path dir = fs::temp_directory_path() / "ap_train_blowup";
  fs::remove_all(dir);
  fs::create_directories(dir);

  // poison one weight through the warm-start path
  RunConfig eff = rc;
  fit_action_scaling(cache, cache.indices_of("train"), eff.model);
  AspModel poisoned(eff.model, eff.loss, rc.schedule.seed);
  poisoned.params().params[0].second.at(0) = std::numeric_limits<double>::quiet_NaN();
  Checkpoint ck = poisoned.to_checkpoint("{}");
  save_checkpoint(ck, (dir / "poison.ckpt").string());
  rc.schedule.warm_start = (dir / "poison.ckpt").string();

  bool aborted = false;
  try {
    train(rc, cache, dir.string());
  } catch (const Error& e) {
    aborted = e.kind() == ErrorKind::Numeric;
  }
  CHECK(aborted);
  CHECK(fs::exists(dir / "diagnostic.json"));
  fs::remove_all(dir);
}

TEST_CASE("mapping baselines: action and state inputs both yield finite side-by-side FDEs") {
  // comparative report, not a pass/fail gate on the numbers themselves
  auto cache = synth_cache(data::Scenario::LeftTurn, 3, 41, 1, 3);
  auto run_mapping = [&](Mapping mapping) {
    RunConfig rc;
    rc.model = tiny_cfg(Architecture::Ffw, 2);
    rc.model.mapping = mapping;
    rc.schedule.epochs = 3;
    rc.schedule.batch = 16;
    rc.schedule.lr = 2e-3;
    rc.schedule.seed = 6;
    fs::path dir = fs::temp_directory_path() / ("ap_map_" + std::string(mapping_name(mapping)));
    fs::remove_all(dir);
    auto out = train(rc, cache, dir.string());
    Checkpoint ck = load_checkpoint(out.checkpoint_path);
    RunConfig eff = parse_run_config(ck.config_json);
    AspModel m(eff.model, eff.loss, 1);
    m.load_weights(ck);
    auto ds = prepare_dataset(cache, eff.model, false);
    auto rep = eval::evaluate_model(m, ds, cache, "test", 1);
    fs::remove_all(dir);
    return rep.fde_highest;
  };
  double fde_action = run_mapping(Mapping::ActionToAction);
  double fde_state = run_mapping(Mapping::StateToAction);
  MESSAGE("held-out FDE: action_to_action ", fde_action, " m, state_to_action ", fde_state,
          " m");
  CHECK(std::isfinite(fde_action));
  CHECK(std::isfinite(fde_state));
}
