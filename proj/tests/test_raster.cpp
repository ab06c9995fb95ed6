#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bev/raster.hpp"
#include "data/dataio.hpp"
#include "data/synth.hpp"

using namespace ap;
using namespace ap::bev;
using ap::data::Snippet;

namespace {

// straight-motion snippet at the origin, heading +x, v=8
Snippet make_snippet(size_t T = 10, double x0 = 0, double y0 = 0) {
  Snippet sn;
  sn.ego_length = 4.5;
  sn.ego_width = 2.0;
  const double dt = 0.3, v = 8.0;
  for (size_t i = 0; i <= 3 * T; ++i) {
    kin::State s{x0 + v * dt * static_cast<double>(i), y0, 0.0, v};
    if (i <= T) sn.past_states.push_back(s);
    else if (i <= 2 * T) sn.future_states_1.push_back(s);
    else sn.future_states_2.push_back(s);
  }
  sn.past_actions.assign(T, kin::Action{});
  sn.future_actions_1.assign(T, kin::Action{});
  sn.future_actions_2.assign(T, kin::Action{});
  return sn;
}

data::SceneMap map_with_boundary(double y_offset, double x0, double x1) {
  data::SceneMap m;
  m.boundaries.push_back({{x0, y_offset}, {x1, y_offset}});
  return m;
}

size_t count_nonzero(const ContextTensor& ct, size_t channel) {
  size_t n = 0;
  for (size_t v = 0; v < ct.height; ++v)
    for (size_t u = 0; u < ct.width; ++u)
      if (ct.at(channel, v, u) > 0.0) ++n;
  return n;
}

}  // namespace

TEST_CASE("ego frame is the identity for an ego at the origin heading +x") {
  EgoFrame f = EgoFrame::from({0, 0, 0, 5});
  auto [fx, fy] = f.to_local(3.0, -2.0);
  CHECK(fx == 3.0);
  CHECK(fy == -2.0);
}

TEST_CASE("ego frame preserves distances") {
  EgoFrame f = EgoFrame::from({12.0, -7.0, 2.1, 5});
  auto [ax, ay] = f.to_local(3.0, 4.0);
  auto [bx, by] = f.to_local(6.0, 8.0);
  CHECK(std::hypot(bx - ax, by - ay) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("ego heading pi/2 rotates the map by -pi/2") {
  EgoFrame f = EgoFrame::from({0, 0, 1.5707963267948966, 5});
  // a point one meter east of the ego ends up one meter to its right
  auto [fx, fy] = f.to_local(1.0, 0.0);
  CHECK(fx == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(fy == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("chauffeurnet: empty scene leaves only ego channels") {
  RasterConfig cfg;
  Snippet sn = make_snippet();
  data::SceneMap empty;
  ContextTensor ct = rasterize_chauffeurnet(sn, empty, cfg);
  CHECK(ct.channels == 3 + cfg.history_snapshots);
  CHECK(count_nonzero(ct, 0) == 0);        // no boundaries
  CHECK(count_nonzero(ct, 1) > 0);         // ego box present
  for (size_t c = 3; c < ct.channels; ++c) CHECK(count_nonzero(ct, c) == 0);
}

TEST_CASE("chauffeurnet: a static neighbor paints the same footprint in every snapshot") {
  RasterConfig cfg;
  Snippet sn = make_snippet();
  data::NeighborTrack nb;
  nb.track_id = 2;
  nb.length = 4.0;
  nb.width = 2.0;
  size_t slots = sn.past_states.size() + sn.future_states_1.size() + sn.future_states_2.size();
  for (size_t i = 0; i < slots; ++i) {
    nb.present.push_back(true);
    // static agent sitting near the ego's t0 position
    nb.states.push_back({sn.present_state().x + 6.0, 3.0, 0.0, 0.0});
  }
  sn.neighbors.push_back(nb);
  data::SceneMap empty;
  ContextTensor ct = rasterize_chauffeurnet(sn, empty, cfg);
  auto snapshot = [&](size_t c) {
    std::vector<size_t> px;
    for (size_t v = 0; v < ct.height; ++v)
      for (size_t u = 0; u < ct.width; ++u)
        if (ct.at(c, v, u) > 0) px.push_back(v * ct.width + u);
    return px;
  };
  auto first = snapshot(3);
  CHECK(!first.empty());
  for (size_t c = 4; c < ct.channels; ++c) CHECK(snapshot(c) == first);
}

TEST_CASE("ego box pixel count approximates its area") {
  RasterConfig cfg;
  Snippet sn = make_snippet();
  data::SceneMap empty;
  ContextTensor ct = rasterize_chauffeurnet(sn, empty, cfg);
  double expected = sn.ego_length * sn.ego_width /
                    (cfg.meters_per_pixel * cfg.meters_per_pixel);
  double actual = static_cast<double>(count_nonzero(ct, 1));
  CHECK(actual >= 0.8 * expected);
  CHECK(actual <= 1.2 * expected);
}

TEST_CASE("rasterization is deterministic and translation equivariant") {
  RasterConfig cfg;
  Snippet a = make_snippet();
  data::SceneMap map_a = map_with_boundary(4.0, -30.0, 120.0);
  ContextTensor r1 = rasterize_chauffeurnet(a, map_a, cfg);
  ContextTensor r2 = rasterize_chauffeurnet(a, map_a, cfg);
  CHECK(r1.values == r2.values);

  // shift the whole scene by an exactly representable offset
  const double off = 64.0;
  Snippet b = make_snippet(10, off, off);
  data::SceneMap map_b = map_with_boundary(4.0 + off, -30.0 + off, 120.0 + off);
  ContextTensor r3 = rasterize_chauffeurnet(b, map_b, cfg);
  CHECK(r3.values == r1.values);
}

TEST_CASE("mtp: empty scene is background everywhere") {
  RasterConfig cfg;
  cfg.variant = RasterVariant::Mtp;
  Snippet sn = make_snippet();
  sn.ego_length = 0;  // degenerate box paints nothing
  sn.ego_width = 0;
  data::SceneMap empty;
  ContextTensor ct = rasterize_mtp(sn, empty, cfg);
  CHECK(ct.channels == 3);
  for (double v : ct.values) CHECK(v == MtpPalette::background[0]);
}

TEST_CASE("mtp: ego-only scene paints exactly one region in the ego color") {
  RasterConfig cfg;
  cfg.variant = RasterVariant::Mtp;
  Snippet sn = make_snippet();
  data::SceneMap empty;
  ContextTensor ct = rasterize_mtp(sn, empty, cfg);
  size_t plane = ct.height * ct.width;
  size_t ego_px = 0, other_px = 0;
  for (size_t i = 0; i < plane; ++i) {
    double r = ct.values[i], g = ct.values[plane + i], b = ct.values[2 * plane + i];
    if (r == MtpPalette::ego[0] && g == MtpPalette::ego[1] && b == MtpPalette::ego[2])
      ++ego_px;
    else if (r != 0 || g != 0 || b != 0)
      ++other_px;
  }
  CHECK(ego_px > 0);
  CHECK(other_px == 0);
}

TEST_CASE("mtp: ego overdraws an overlapping neighbor") {
  RasterConfig cfg;
  cfg.variant = RasterVariant::Mtp;
  Snippet sn = make_snippet();
  data::NeighborTrack nb;
  nb.length = 4.5;
  nb.width = 2.0;
  size_t slots = sn.past_states.size() + sn.future_states_1.size() + sn.future_states_2.size();
  for (size_t i = 0; i < slots; ++i) {
    nb.present.push_back(true);
    nb.states.push_back(sn.present_state());  // exactly on top of the ego
  }
  sn.neighbors.push_back(nb);
  data::SceneMap empty;
  ContextTensor ct = rasterize_mtp(sn, empty, cfg);
  size_t plane = ct.height * ct.width;
  size_t u = static_cast<size_t>(cfg.ego_anchor_u);
  size_t v = static_cast<size_t>(cfg.ego_anchor_v);
  CHECK(ct.values[v * ct.width + u] == MtpPalette::ego[0]);
  CHECK(ct.values[plane + v * ct.width + u] == MtpPalette::ego[1]);
}

TEST_CASE("feature vector context has the documented size and is deterministic") {
  Snippet sn = make_snippet();
  data::SceneMap map = map_with_boundary(4.0, -30.0, 120.0);
  auto f1 = feature_vector_context(sn, map);
  auto f2 = feature_vector_context(sn, map);
  CHECK(f1.size() == kFeatureVectorSize);
  CHECK(f1 == f2);
  for (double v : f1) CHECK(std::isfinite(v));
  // future-interval context differs from the past one in general but has the same size
  auto f3 = feature_vector_context(sn, map, Interval::Tau1);
  CHECK(f3.size() == kFeatureVectorSize);
}

TEST_CASE("png export writes valid signatures, one file per channel") {
  namespace fs = std::filesystem;
  RasterConfig cfg;
  cfg.history_snapshots = 2;
  Snippet sn = make_snippet();
  data::SceneMap map = map_with_boundary(4.0, -30.0, 120.0);
  ContextTensor ct = rasterize_chauffeurnet(sn, map, cfg);
  fs::path dir = fs::temp_directory_path() / "ap_png_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto files = export_png(ct, cfg, (dir / "ctx").string());
  CHECK(files.size() == cfg.channels());
  for (const auto& f : files) {
    std::ifstream is(f, std::ios::binary);
    REQUIRE(is.good());
    unsigned char sig[8];
    is.read(reinterpret_cast<char*>(sig), 8);
    CHECK(sig[0] == 0x89);
    CHECK(sig[1] == 'P');
    CHECK(sig[2] == 'N');
    CHECK(sig[3] == 'G');
  }
  fs::remove_all(dir);
}

TEST_CASE("raster built from synthetic snippets shows map content") {
  data::SynthConfig scfg;
  scfg.scenario = data::Scenario::LeftTurn;
  scfg.count = 1;
  scfg.seed = 5;
  auto recs = data::synth_generate(scfg);
  data::ExtractConfig ecfg;
  auto snippets = data::extract_snippets(recs[0], ecfg);
  REQUIRE(!snippets.empty());
  RasterConfig cfg;
  ContextTensor ct = rasterize_chauffeurnet(snippets[0], recs[0].map, cfg);
  CHECK(count_nonzero(ct, 0) > 10);  // boundary polylines visible
  CHECK(count_nonzero(ct, 1) > 0);
  CHECK(count_nonzero(ct, 2) > 0);
}
