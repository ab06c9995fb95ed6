#pragma once

#include <string>
#include <vector>

#include "data/types.hpp"

namespace ap::bev {

enum class RasterVariant { ChauffeurNet, Mtp };

struct RasterConfig {
  RasterVariant variant = RasterVariant::ChauffeurNet;
  size_t width = 64;
  size_t height = 64;
  double meters_per_pixel = 0.5;
  size_t history_snapshots = 4;  // chauffeurnet only
  double ego_anchor_u = 32.0;    // pixel column of the ego
  double ego_anchor_v = 32.0;    // pixel row of the ego

  // chauffeurnet: boundaries + ego box + ego history + one channel per snapshot
  size_t channels() const {
    return variant == RasterVariant::ChauffeurNet ? 3 + history_snapshots : 3;
  }
};

// channels x height x width, values in [0,1], ego-centered with heading up
struct ContextTensor {
  size_t channels = 0;
  size_t height = 0;
  size_t width = 0;
  std::vector<double> values;

  double& at(size_t c, size_t v, size_t u) { return values[(c * height + v) * width + u]; }
  double at(size_t c, size_t v, size_t u) const { return values[(c * height + v) * width + u]; }
};

// Rigid world-to-ego transform: the ego pose maps to the origin heading along +x.
struct EgoFrame {
  double ox = 0, oy = 0, cos_h = 1, sin_h = 0;

  static EgoFrame from(const kin::State& ego);
  // returns (forward, left) in meters
  std::array<double, 2> to_local(double x, double y) const;
};

// Which time interval of the snippet to observe. Past renders at t0, the future
// intervals at their segment ends (used when encoding future observations in
// training).
enum class Interval { Tau0 = 0, Tau1 = 1, Tau2 = 2 };

ContextTensor rasterize_chauffeurnet(const data::Snippet& sn, const data::SceneMap& map,
                                     const RasterConfig& cfg, Interval interval = Interval::Tau0);
ContextTensor rasterize_mtp(const data::Snippet& sn, const data::SceneMap& map,
                            const RasterConfig& cfg, Interval interval = Interval::Tau0);
ContextTensor rasterize(const data::Snippet& sn, const data::SceneMap& map,
                        const RasterConfig& cfg, Interval interval = Interval::Tau0);

// Raster-free context: a small hand-packed summary of the ego kinematics, the
// nearest map boundary, and the closest neighbors. Fast-path plumbing for tests
// and cheap experiments, not one of the two published raster variants.
constexpr size_t kFeatureVectorSize = 24;
std::vector<double> feature_vector_context(const data::Snippet& sn, const data::SceneMap& map,
                                           Interval interval = Interval::Tau0);

// Debug export: one grayscale PNG per channel (chauffeurnet) or a single RGB
// PNG (mtp). Returns the written paths.
std::vector<std::string> export_png(const ContextTensor& ct, const RasterConfig& cfg,
                                    const std::string& path_prefix);

// Documented MTP color assignments (r,g,b in [0,1]).
struct MtpPalette {
  static constexpr double background[3] = {0.0, 0.0, 0.0};
  static constexpr double drivable[3] = {0.25, 0.25, 0.25};
  static constexpr double boundary[3] = {1.0, 1.0, 1.0};
  static constexpr double neighbor[3] = {1.0, 0.85, 0.0};
  static constexpr double ego[3] = {0.9, 0.1, 0.1};
};

}  // namespace ap::bev
