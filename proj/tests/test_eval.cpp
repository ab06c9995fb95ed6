#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "data/synth.hpp"
#include "eval/metrics.hpp"
#include "eval/svgplot.hpp"

using namespace ap;
using namespace ap::eval;

namespace {
namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}
}  // namespace

TEST_CASE("identical trajectories score zero on all metrics") {
  Trajectory tr{{1, 2}, {3, 4}, {5, 6}};
  CHECK(mae(tr, tr) == 0.0);
  CHECK(mse(tr, tr) == 0.0);
  CHECK(fde(tr, tr) == 0.0);
}

TEST_CASE("constant offsets give the closed-form values") {
  Trajectory gt, off34, off_small;
  for (int t = 0; t < 7; ++t) {
    gt.push_back({2.0 * t, 1.0 * t});
    off34.push_back({2.0 * t + 3.0, 1.0 * t + 4.0});
    off_small.push_back({2.0 * t + 0.3, 1.0 * t + 0.4});
  }
  CHECK(mae(off_small, gt) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(mse(off34, gt) == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(fde(off34, gt) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("length mismatch is a contract error") {
  Trajectory a{{0, 0}};
  Trajectory b{{0, 0}, {1, 1}};
  CHECK_THROWS_AS(mae(a, b), Error);
  CHECK_THROWS_AS(mse(a, b), Error);
  CHECK_THROWS_AS(fde(a, b), Error);
}

TEST_CASE("metrics agree with a brute-force recomputation on a thousand random pairs") {
  Rng rng(555);
  for (int round = 0; round < 1000; ++round) {
    size_t T = 2 + rng.below(12);
    Trajectory pred, gt;
    for (size_t t = 0; t < T; ++t) {
      pred.push_back({rng.uniform(-50, 50), rng.uniform(-50, 50)});
      gt.push_back({rng.uniform(-50, 50), rng.uniform(-50, 50)});
    }
    // independent re-computation with separate accumulation
    double mae_acc = 0, mse_acc = 0;
    for (size_t t = 0; t < T; ++t) {
      mae_acc += std::fabs(pred[t][0] - gt[t][0]);
      mae_acc += std::fabs(pred[t][1] - gt[t][1]);
      double ex = pred[t][0] - gt[t][0], ey = pred[t][1] - gt[t][1];
      mse_acc += ex * ex + ey * ey;
    }
    double fde_ref = std::sqrt(std::pow(pred[T - 1][0] - gt[T - 1][0], 2) +
                               std::pow(pred[T - 1][1] - gt[T - 1][1], 2));
    CHECK(std::fabs(mae(pred, gt) - mae_acc / T) <= 1e-10);
    CHECK(std::fabs(mse(pred, gt) - mse_acc / T) <= 1e-10);
    CHECK(std::fabs(fde(pred, gt) - fde_ref) <= 1e-10);
  }
}

TEST_CASE("svg plots are deterministic with one stroke color per mode") {
  data::SynthConfig scfg;
  scfg.scenario = data::Scenario::LeftTurn;
  scfg.count = 1;
  scfg.seed = 4;
  auto recs = data::synth_generate(scfg);
  const auto& tr = recs[0].tracks[0];

  data::Snippet sn;
  sn.recording_id = 0;
  sn.track_id = tr.track_id;
  for (size_t i = 0; i <= 10; ++i) sn.past_states.push_back(tr.samples[i].state);
  for (size_t i = 11; i <= 20; ++i) sn.future_states_1.push_back(tr.samples[i].state);
  sn.past_actions.assign(10, kin::Action{});
  sn.future_actions_1.assign(10, kin::Action{});

  Trajectory gt;
  for (const auto& s : sn.future_states_1) gt.push_back({s.x, s.y});
  std::vector<Trajectory> modes(3);
  for (int m = 0; m < 3; ++m)
    for (size_t t = 0; t < gt.size(); ++t)
      modes[m].push_back({gt[t][0] + m, gt[t][1] - m});

  fs::path dir = fs::temp_directory_path() / "ap_svg_test";
  fs::create_directories(dir);
  plot_trajectories(sn, recs[0].map, modes, gt, (dir / "a.svg").string());
  plot_trajectories(sn, recs[0].map, modes, gt, (dir / "b.svg").string());
  std::string svg = slurp(dir / "a.svg");
  CHECK(svg == slurp(dir / "b.svg"));

  // parse stroke colors out of the emitted file
  std::set<std::string> strokes;
  size_t pos = 0;
  while ((pos = svg.find("stroke=\"", pos)) != std::string::npos) {
    pos += 8;
    strokes.insert(svg.substr(pos, svg.find('"', pos) - pos));
  }
  for (int m = 0; m < 3; ++m) CHECK(strokes.count(kModePalette[m]) == 1);
  CHECK(strokes.count("#2ca02c") == 1);  // ground truth green

  // zero modes: map and ground truth only
  plot_trajectories(sn, recs[0].map, {}, gt, (dir / "c.svg").string());
  std::string svg0 = slurp(dir / "c.svg");
  CHECK(svg0.find(kModePalette[0]) == std::string::npos);
  CHECK(svg0.find("#2ca02c") != std::string::npos);

  // more modes than palette entries is an error
  std::vector<Trajectory> too_many(kModePaletteSize + 1, gt);
  CHECK_THROWS_AS(
      plot_trajectories(sn, recs[0].map, too_many, gt, (dir / "d.svg").string()), Error);
  fs::remove_all(dir);
}

TEST_CASE("best-of-M is monotone non-increasing for nested mode sets") {
  Rng rng(8);
  Trajectory gt;
  for (int t = 0; t < 10; ++t) gt.push_back({2.0 * t, 0.5 * t});
  std::vector<Trajectory> modes;
  double prev = 1e300;
  for (int m = 0; m < 6; ++m) {
    Trajectory tr;
    for (int t = 0; t < 10; ++t)
      tr.push_back({2.0 * t + rng.uniform(-3, 3), 0.5 * t + rng.uniform(-3, 3)});
    modes.push_back(tr);
    double best = 1e300;
    for (const auto& cand : modes) best = std::min(best, fde(cand, gt));
    CHECK(best <= prev + 1e-15);
    prev = best;
  }
}
