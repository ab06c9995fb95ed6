#include "bev/raster.hpp"

#include <algorithm>
#include <cmath>

#include "bev/png.hpp"

namespace ap::bev {

namespace {

using data::Snippet;

struct Canvas {
  size_t width, height;
  const RasterConfig* cfg;
  EgoFrame frame;

  // world meters -> pixel coordinates (u right, v down, ego heading up)
  std::array<double, 2> to_pixel(double x, double y) const {
    auto [fwd, left] = frame.to_local(x, y);
    return {cfg->ego_anchor_u - left / cfg->meters_per_pixel,
            cfg->ego_anchor_v - fwd / cfg->meters_per_pixel};
  }
};

void set_px(std::vector<double>& ch, const Canvas& cv, long u, long v, double val) {
  if (u < 0 || v < 0 || u >= static_cast<long>(cv.width) || v >= static_cast<long>(cv.height))
    return;  // outside the canvas is silently clipped
  ch[static_cast<size_t>(v) * cv.width + static_cast<size_t>(u)] = val;
}

void draw_line(std::vector<double>& ch, const Canvas& cv, std::array<double, 2> a,
               std::array<double, 2> b, double val) {
  double du = b[0] - a[0], dv = b[1] - a[1];
  double len = std::max(std::fabs(du), std::fabs(dv));
  long steps = std::max(1L, static_cast<long>(std::ceil(len)));
  for (long i = 0; i <= steps; ++i) {
    double t = static_cast<double>(i) / static_cast<double>(steps);
    set_px(ch, cv, std::lround(a[0] + du * t), std::lround(a[1] + dv * t), val);
  }
}

void draw_polyline(std::vector<double>& ch, const Canvas& cv,
                   const std::vector<std::array<double, 2>>& world_pts, double val) {
  for (size_t i = 0; i + 1 < world_pts.size(); ++i)
    draw_line(ch, cv, cv.to_pixel(world_pts[i][0], world_pts[i][1]),
              cv.to_pixel(world_pts[i + 1][0], world_pts[i + 1][1]), val);
}

// even-odd scanline fill of a polygon given in pixel coordinates
void fill_polygon(std::vector<double>& ch, const Canvas& cv,
                  const std::vector<std::array<double, 2>>& px, double val) {
  if (px.size() < 3) return;
  double vmin = px[0][1], vmax = px[0][1];
  for (const auto& p : px) {
    vmin = std::min(vmin, p[1]);
    vmax = std::max(vmax, p[1]);
  }
  long v0 = std::max(0L, static_cast<long>(std::floor(vmin)));
  long v1 = std::min(static_cast<long>(cv.height) - 1, static_cast<long>(std::ceil(vmax)));
  std::vector<double> xs;
  for (long v = v0; v <= v1; ++v) {
    double vy = static_cast<double>(v) + 0.5;
    xs.clear();
    for (size_t i = 0; i < px.size(); ++i) {
      const auto& a = px[i];
      const auto& b = px[(i + 1) % px.size()];
      if ((a[1] <= vy && b[1] > vy) || (b[1] <= vy && a[1] > vy)) {
        double t = (vy - a[1]) / (b[1] - a[1]);
        xs.push_back(a[0] + t * (b[0] - a[0]));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (size_t k = 0; k + 1 < xs.size(); k += 2) {
      long u0 = static_cast<long>(std::ceil(xs[k] - 0.5));
      long u1 = static_cast<long>(std::floor(xs[k + 1] - 0.5));
      for (long u = u0; u <= u1; ++u) set_px(ch, cv, u, v, val);
    }
  }
}

std::vector<std::array<double, 2>> box_pixels(const Canvas& cv, const kin::State& s,
                                              double length, double width) {
  double c = std::cos(s.theta), sn = std::sin(s.theta);
  double hl = length / 2, hw = width / 2;
  std::vector<std::array<double, 2>> out;
  const double corners[4][2] = {{hl, hw}, {hl, -hw}, {-hl, -hw}, {-hl, hw}};
  for (const auto& co : corners) {
    double x = s.x + c * co[0] - sn * co[1];
    double y = s.y + sn * co[0] + c * co[1];
    out.push_back(cv.to_pixel(x, y));
  }
  return out;
}

// snippet grid slots covered by an interval: [0..T], [T..2T], [2T..3T]
struct IntervalSlots {
  size_t first, last;  // inclusive
};

IntervalSlots slots_of(const Snippet& sn, Interval iv) {
  size_t T = sn.horizon();
  switch (iv) {
    case Interval::Tau0: return {0, T};
    case Interval::Tau1: return {T, 2 * T};
    case Interval::Tau2:
      if (!sn.two_segments()) raise(ErrorKind::Contract, "raster: snippet has no tau2 window");
      return {2 * T, 3 * T};
  }
  return {0, T};
}

kin::State ego_state_at_slot(const Snippet& sn, size_t slot) {
  size_t T = sn.horizon();
  if (slot <= T) return sn.past_states[slot];
  if (slot <= 2 * T) return sn.future_states_1[slot - T - 1];
  return sn.future_states_2[slot - 2 * T - 1];
}

Canvas make_canvas(const Snippet& sn, const RasterConfig& cfg, Interval iv) {
  Canvas cv;
  cv.width = cfg.width;
  cv.height = cfg.height;
  cv.cfg = &cfg;
  cv.frame = EgoFrame::from(ego_state_at_slot(sn, slots_of(sn, iv).last));
  return cv;
}

std::vector<size_t> snapshot_slots(const IntervalSlots& s, size_t count) {
  std::vector<size_t> out;
  if (count == 0) return out;
  if (count == 1) {
    out.push_back(s.last);
    return out;
  }
  double span = static_cast<double>(s.last - s.first);
  for (size_t i = 0; i < count; ++i)
    out.push_back(s.first +
                  static_cast<size_t>(std::llround(span * static_cast<double>(i) /
                                                   static_cast<double>(count - 1))));
  return out;
}

}  // namespace

EgoFrame EgoFrame::from(const kin::State& ego) {
  return {ego.x, ego.y, std::cos(ego.theta), std::sin(ego.theta)};
}

std::array<double, 2> EgoFrame::to_local(double x, double y) const {
  double dx = x - ox, dy = y - oy;
  return {cos_h * dx + sin_h * dy, -sin_h * dx + cos_h * dy};
}

ContextTensor rasterize_chauffeurnet(const Snippet& sn, const data::SceneMap& map,
                                     const RasterConfig& cfg, Interval interval) {
  if (cfg.variant != RasterVariant::ChauffeurNet)
    raise(ErrorKind::Config, "raster: config variant is not chauffeurnet");
  ContextTensor ct{cfg.channels(), cfg.height, cfg.width,
                   std::vector<double>(cfg.channels() * cfg.height * cfg.width, 0.0)};
  Canvas cv = make_canvas(sn, cfg, interval);
  IntervalSlots slots = slots_of(sn, interval);
  size_t plane = cfg.height * cfg.width;

  // [0] road boundaries
  {
    std::vector<double> ch(plane, 0.0);
    for (const auto& poly : map.boundaries) draw_polyline(ch, cv, poly, 1.0);
    std::copy(ch.begin(), ch.end(), ct.values.begin());
  }
  // [1] ego box at the interval end
  {
    std::vector<double> ch(plane, 0.0);
    fill_polygon(ch, cv, box_pixels(cv, ego_state_at_slot(sn, slots.last), sn.ego_length,
                                    sn.ego_width),
                 1.0);
    std::copy(ch.begin(), ch.end(), ct.values.begin() + static_cast<long>(plane));
  }
  // [2] ego trajectory over the interval
  {
    std::vector<double> ch(plane, 0.0);
    std::vector<std::array<double, 2>> pts;
    for (size_t s = slots.first; s <= slots.last; ++s) {
      kin::State st = ego_state_at_slot(sn, s);
      pts.push_back({st.x, st.y});
    }
    draw_polyline(ch, cv, pts, 1.0);
    std::copy(ch.begin(), ch.end(), ct.values.begin() + static_cast<long>(2 * plane));
  }
  // [3..] neighbor snapshots at regular times across the interval
  auto snaps = snapshot_slots(slots, cfg.history_snapshots);
  for (size_t si = 0; si < snaps.size(); ++si) {
    std::vector<double> ch(plane, 0.0);
    for (const auto& nb : sn.neighbors) {
      size_t slot = snaps[si];
      if (slot < nb.present.size() && nb.present[slot])
        fill_polygon(ch, cv, box_pixels(cv, nb.states[slot], nb.length, nb.width), 1.0);
    }
    std::copy(ch.begin(), ch.end(), ct.values.begin() + static_cast<long>((3 + si) * plane));
  }
  return ct;
}

ContextTensor rasterize_mtp(const Snippet& sn, const data::SceneMap& map,
                            const RasterConfig& cfg, Interval interval) {
  if (cfg.variant != RasterVariant::Mtp)
    raise(ErrorKind::Config, "raster: config variant is not mtp");
  ContextTensor ct{3, cfg.height, cfg.width,
                   std::vector<double>(3 * cfg.height * cfg.width, 0.0)};
  Canvas cv = make_canvas(sn, cfg, interval);
  IntervalSlots slots = slots_of(sn, interval);
  size_t plane = cfg.height * cfg.width;

  auto paint = [&](const std::vector<double>& mask, const double rgb[3]) {
    for (size_t i = 0; i < plane; ++i)
      if (mask[i] > 0.5)
        for (size_t c = 0; c < 3; ++c) ct.values[c * plane + i] = rgb[c];
  };

  std::vector<double> mask(plane, 0.0);
  // draw order: drivable area, boundaries, neighbors, ego — later layers overdraw
  for (const auto& area : map.drivable_areas) {
    std::fill(mask.begin(), mask.end(), 0.0);
    std::vector<std::array<double, 2>> px;
    for (const auto& p : area) px.push_back(cv.to_pixel(p[0], p[1]));
    fill_polygon(mask, cv, px, 1.0);
    paint(mask, MtpPalette::drivable);
  }
  std::fill(mask.begin(), mask.end(), 0.0);
  for (const auto& poly : map.boundaries) draw_polyline(mask, cv, poly, 1.0);
  paint(mask, MtpPalette::boundary);

  std::fill(mask.begin(), mask.end(), 0.0);
  for (const auto& nb : sn.neighbors) {
    size_t slot = slots.last;
    if (slot < nb.present.size() && nb.present[slot])
      fill_polygon(mask, cv, box_pixels(cv, nb.states[slot], nb.length, nb.width), 1.0);
  }
  paint(mask, MtpPalette::neighbor);

  std::fill(mask.begin(), mask.end(), 0.0);
  fill_polygon(mask, cv,
               box_pixels(cv, ego_state_at_slot(sn, slots.last), sn.ego_length, sn.ego_width),
               1.0);
  paint(mask, MtpPalette::ego);
  return ct;
}

ContextTensor rasterize(const Snippet& sn, const data::SceneMap& map, const RasterConfig& cfg,
                        Interval interval) {
  return cfg.variant == RasterVariant::ChauffeurNet
             ? rasterize_chauffeurnet(sn, map, cfg, interval)
             : rasterize_mtp(sn, map, cfg, interval);
}

std::vector<double> feature_vector_context(const Snippet& sn, const data::SceneMap& map,
                                           Interval interval) {
  IntervalSlots slots = slots_of(sn, interval);
  kin::State ego = ego_state_at_slot(sn, slots.last);
  kin::State begin = ego_state_at_slot(sn, slots.first);
  EgoFrame frame = EgoFrame::from(ego);

  std::vector<double> f(kFeatureVectorSize, 0.0);
  size_t k = 0;
  f[k++] = ego.v / 15.0;
  f[k++] = begin.v / 15.0;
  f[k++] = kin::wrap_angle(ego.theta - begin.theta);
  auto [bx, by] = frame.to_local(begin.x, begin.y);
  f[k++] = bx / 30.0;
  f[k++] = by / 30.0;

  // nearest boundary distance, clipped at 20 m
  double nearest = 20.0;
  for (const auto& poly : map.boundaries)
    for (const auto& p : poly)
      nearest = std::min(nearest, std::hypot(p[0] - ego.x, p[1] - ego.y));
  f[k++] = nearest / 20.0;

  // up to four nearest neighbors at the interval end: range, bearing, speed, heading
  struct Near {
    double d;
    const data::NeighborTrack* nb;
  };
  std::vector<Near> near;
  size_t slot = slots.last;
  for (const auto& nb : sn.neighbors) {
    if (slot >= nb.present.size() || !nb.present[slot]) continue;
    near.push_back({std::hypot(nb.states[slot].x - ego.x, nb.states[slot].y - ego.y), &nb});
  }
  std::sort(near.begin(), near.end(), [](const Near& a, const Near& b) { return a.d < b.d; });
  for (size_t i = 0; i < 4 && i < near.size(); ++i) {
    const auto& st = near[i].nb->states[slot];
    auto [lx, ly] = frame.to_local(st.x, st.y);
    f[k + 4 * i + 0] = lx / 30.0;
    f[k + 4 * i + 1] = ly / 30.0;
    f[k + 4 * i + 2] = st.v / 15.0;
    f[k + 4 * i + 3] = kin::wrap_angle(st.theta - ego.theta) / 3.2;
  }
  return f;
}

std::vector<std::string> export_png(const ContextTensor& ct, const RasterConfig& cfg,
                                    const std::string& path_prefix) {
  std::vector<std::string> written;
  auto to_byte = [](double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  };
  if (cfg.variant == RasterVariant::ChauffeurNet) {
    for (size_t c = 0; c < ct.channels; ++c) {
      std::vector<unsigned char> gray(ct.height * ct.width);
      for (size_t i = 0; i < gray.size(); ++i)
        gray[i] = to_byte(ct.values[c * gray.size() + i]);
      std::string path = path_prefix + "_ch" + std::to_string(c) + ".png";
      write_png_gray(path, ct.width, ct.height, gray);
      written.push_back(path);
    }
  } else {
    size_t plane = ct.height * ct.width;
    std::vector<unsigned char> rgb(plane * 3);
    for (size_t i = 0; i < plane; ++i)
      for (size_t c = 0; c < 3; ++c) rgb[i * 3 + c] = to_byte(ct.values[c * plane + i]);
    std::string path = path_prefix + ".png";
    write_png_rgb(path, ct.width, ct.height, rgb);
    written.push_back(path);
  }
  return written;
}

}  // namespace ap::bev
