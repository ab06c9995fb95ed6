#include "eval/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace ap::eval {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

struct Bounds {
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  void feed(double x, double y) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
};

std::string polyline(const std::vector<std::array<double, 2>>& pts, const std::string& color,
                     double width, Bounds& bb) {
  std::string s = "  <polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" +
                  fmt(width) + "\" points=\"";
  for (size_t i = 0; i < pts.size(); ++i) {
    bb.feed(pts[i][0], pts[i][1]);
    s += (i ? " " : "") + fmt(pts[i][0]) + "," + fmt(-pts[i][1]);  // svg y grows downward
  }
  s += "\"/>\n";
  return s;
}

}  // namespace

void plot_trajectories(const data::Snippet& sn, const data::SceneMap& map,
                       const std::vector<Trajectory>& world_modes, const Trajectory& world_gt,
                       const std::string& out_path) {
  if (world_modes.size() > kModePaletteSize)
    raise(ErrorKind::Contract, "plot: more modes than palette entries (" +
                                   std::to_string(kModePaletteSize) + ")");
  Bounds bb;
  std::string body;
  for (const auto& poly : map.boundaries) {
    std::vector<std::array<double, 2>> pts(poly.begin(), poly.end());
    body += polyline(pts, "#9a9a9a", 0.25, bb);
  }
  {
    std::vector<std::array<double, 2>> past;
    for (const auto& s : sn.past_states) past.push_back({s.x, s.y});
    body += polyline(past, "#3c3c3c", 0.3, bb);
  }
  if (!world_gt.empty()) body += polyline(world_gt, "#2ca02c", 0.4, bb);
  for (size_t m = 0; m < world_modes.size(); ++m)
    body += polyline(world_modes[m], kModePalette[m], 0.35, bb);

  if (bb.min_x > bb.max_x) bb = Bounds{0, 0, 1, 1};
  double pad = 5.0;
  double x0 = bb.min_x - pad, y0 = -(bb.max_y + pad);
  double w = bb.max_x - bb.min_x + 2 * pad, h = bb.max_y - bb.min_y + 2 * pad;

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" + fmt(x0) + " " +
                    fmt(y0) + " " + fmt(w) + " " + fmt(h) + "\" width=\"800\" height=\"" +
                    fmt(800.0 * h / w) + "\">\n";
  svg += "  <rect x=\"" + fmt(x0) + "\" y=\"" + fmt(y0) + "\" width=\"" + fmt(w) +
         "\" height=\"" + fmt(h) + "\" fill=\"#ffffff\"/>\n";
  svg += body;
  svg += "</svg>\n";

  std::ofstream os(out_path, std::ios::binary);
  if (!os) raise(ErrorKind::Io, "plot: cannot open for write: " + out_path);
  os << svg;
  if (!os) raise(ErrorKind::Io, "plot: write failed: " + out_path);
}

void plot_inference(const data::Snippet& sn, const data::SceneMap& map,
                    const model::InferResult& res, const std::string& out_path) {
  bev::EgoFrame frame = bev::EgoFrame::from(res.anchor);
  auto to_world = [&](const std::array<double, 2>& local) -> std::array<double, 2> {
    // inverse of the ego transform: rotate by heading, translate by anchor
    double x = res.anchor.x + frame.cos_h * local[0] - frame.sin_h * local[1];
    double y = res.anchor.y + frame.sin_h * local[0] + frame.cos_h * local[1];
    return {x, y};
  };

  std::vector<Trajectory> modes;
  for (const auto& tr : chained_trajectories(res)) {
    Trajectory world;
    for (const auto& p : tr) world.push_back(to_world(p));
    modes.push_back(std::move(world));
  }
  Trajectory gt;
  for (const auto& s : sn.future_states_1) gt.push_back({s.x, s.y});
  for (const auto& s : sn.future_states_2) gt.push_back({s.x, s.y});
  plot_trajectories(sn, map, modes, gt, out_path);
}

}  // namespace ap::eval
