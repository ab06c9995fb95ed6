#include "data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/rng.hpp"

namespace ap::data {

namespace {

constexpr double kPi = 3.1415926535897932384626433832795;

struct Profile {
  std::vector<kin::Action> actions;
  kin::State s0;
};

Track roll_track(const Profile& p, const SynthConfig& cfg, int track_id) {
  Track tr;
  tr.track_id = track_id;
  tr.agent_class = AgentClass::Car;
  tr.length = 4.5;
  tr.width = 2.0;
  TrackSample first;
  first.t = 0;
  first.state = p.s0;
  tr.samples.push_back(first);
  auto states = kin::rollout(p.s0, p.actions, cfg.geometry, cfg.dt);
  for (size_t i = 0; i < states.size(); ++i) {
    TrackSample s;
    s.t = static_cast<double>(i + 1) * cfg.dt;
    s.state = states[i];
    tr.samples.push_back(s);
  }
  return tr;
}

// clamp acceleration so speed stays inside [vmin, vmax]
double bounded_accel(double a, double v, double dt, double vmin = 0.5, double vmax = 14.0) {
  return std::clamp(a, (vmin - v) / dt, (vmax - v) / dt);
}

// constant steering that turns the heading by `target` over `steps` at speed v
double steering_for_turn(double target, int steps, double v, const SynthConfig& cfg) {
  double sin_beta = target * cfg.geometry.l_r / (static_cast<double>(steps) * v * cfg.dt);
  sin_beta = std::clamp(sin_beta, -0.95, 0.95);
  double beta = std::asin(sin_beta);
  return std::atan(std::tan(beta) * (cfg.geometry.l_f + cfg.geometry.l_r) / cfg.geometry.l_r);
}

std::vector<kin::Action> noisy(std::vector<kin::Action> base, Rng& rng,
                               const SynthConfig& cfg) {
  for (auto& u : base) {
    u.a += rng.normal(0.0, cfg.noise_accel);
    u.delta += rng.normal(0.0, cfg.noise_steer);
  }
  return base;
}

// corridor boundaries and drivable area along a rolled path
void corridor(const std::vector<TrackSample>& samples, SceneMap& map, double half_width = 3.0) {
  std::vector<std::array<double, 2>> left, right;
  for (size_t i = 0; i < samples.size(); i += 2) {
    const auto& s = samples[i].state;
    double nx = -std::sin(s.theta), ny = std::cos(s.theta);
    left.push_back({s.x + half_width * nx, s.y + half_width * ny});
    right.push_back({s.x - half_width * nx, s.y - half_width * ny});
  }
  if (left.size() < 2) return;
  map.boundaries.push_back(left);
  map.boundaries.push_back(right);
  std::vector<std::array<double, 2>> area = left;
  area.insert(area.end(), right.rbegin(), right.rend());
  map.drivable_areas.push_back(std::move(area));
}

Recording generate_one(const SynthConfig& cfg, uint64_t rec_seed, int rec_id) {
  Rng rng(rec_seed, 5);
  Recording rec;
  rec.id = rec_id;
  rec.frame_rate = 1.0 / cfg.dt;

  const int T = static_cast<int>(std::llround(cfg.horizon_s / cfg.dt));
  const int future = T * cfg.segments;
  const double extra = cfg.scenario == Scenario::BimodalFork ? 0.0 : cfg.extra_s;
  const int total_steps = T + future + static_cast<int>(std::llround(extra / cfg.dt));
  const double lane_gap = 120.0;  // keeps tracks out of each other's context radius

  int next_track_id = 1;
  auto place = [&](int slot) {
    kin::State s;
    s.x = 0;
    s.y = lane_gap * static_cast<double>(slot);
    s.theta = 0;
    s.v = 0;
    return s;
  };

  if (cfg.scenario == Scenario::BimodalFork) {
    for (int pair = 0; pair < cfg.count; ++pair) {
      double v0 = rng.uniform(5.0, 8.0);
      kin::State s0 = place(pair);
      s0.v = v0;
      // shared straight history
      std::vector<kin::Action> history(static_cast<size_t>(T));
      for (auto& u : history) {
        u.a = rng.normal(0.0, cfg.noise_accel);
        u.delta = rng.normal(0.0, cfg.noise_steer * 0.2);
      }
      double turn = 0.22;
      for (int side = 0; side < 2; ++side) {
        Profile p;
        p.s0 = s0;
        p.actions = history;  // bit-identical past for both members
        double sign = side == 0 ? 1.0 : -1.0;
        for (int k = 0; k < future; ++k) {
          kin::Action u;
          u.a = rng.normal(0.0, cfg.noise_accel);
          // ramp in over 3 steps, then hold
          double ramp = std::min(1.0, (static_cast<double>(k) + 1.0) / 3.0);
          u.delta = sign * turn * ramp + rng.normal(0.0, cfg.noise_steer);
          p.actions.push_back(u);
        }
        Track tr = roll_track(p, cfg, next_track_id++);
        tr.recording_id = rec_id;
        rec.tracks.push_back(std::move(tr));
        corridor(rec.tracks.back().samples, rec.map);
      }
    }
    return rec;
  }

  for (int i = 0; i < cfg.count; ++i) {
    Profile p;
    p.s0 = place(i);
    switch (cfg.scenario) {
      case Scenario::Straight: {
        p.s0.v = rng.uniform(4.0, 12.0);
        std::vector<kin::Action> base(static_cast<size_t>(total_steps));
        p.actions = noisy(base, rng, cfg);
        break;
      }
      case Scenario::LeftTurn:
      case Scenario::RightTurn: {
        p.s0.v = rng.uniform(5.0, 9.0);
        double sign = cfg.scenario == Scenario::LeftTurn ? 1.0 : -1.0;
        int lead = T + static_cast<int>(rng.below(3));
        int turn_steps = 10;
        double delta_star = steering_for_turn(sign * kPi / 2.0, turn_steps, p.s0.v, cfg);
        std::vector<kin::Action> base;
        for (int k = 0; k < total_steps; ++k) {
          kin::Action u;
          u.delta = (k >= lead && k < lead + turn_steps) ? delta_star : 0.0;
          base.push_back(u);
        }
        p.actions = noisy(base, rng, cfg);
        break;
      }
      case Scenario::RoundaboutArc: {
        p.s0.v = rng.uniform(4.0, 7.0);
        double delta = rng.uniform(0.15, 0.30) * (rng.uniform() < 0.5 ? 1.0 : -1.0);
        std::vector<kin::Action> base(static_cast<size_t>(total_steps));
        for (auto& u : base) u.delta = delta;
        p.actions = noisy(base, rng, cfg);
        break;
      }
      case Scenario::StopAndGo: {
        p.s0.v = rng.uniform(6.0, 9.0);
        double v = p.s0.v;
        std::vector<kin::Action> base;
        int hold = 3 + static_cast<int>(rng.below(3));
        int phase = 0;  // 0 decel, 1 hold, 2 accel
        int held = 0;
        for (int k = 0; k < total_steps; ++k) {
          kin::Action u;
          double a = 0;
          if (phase == 0) {
            a = -2.0;
            if (v <= 1.0) phase = 1;
          }
          if (phase == 1) {
            a = 0.0;
            if (++held >= hold) phase = 2;
          }
          if (phase == 2) a = 1.5;
          u.a = bounded_accel(a + rng.normal(0.0, cfg.noise_accel), v, cfg.dt, 0.6, 12.0);
          u.delta = rng.normal(0.0, cfg.noise_steer);
          base.push_back(u);
          v += u.a * cfg.dt;
        }
        p.actions = base;  // noise already folded in with the speed bound applied
        break;
      }
      case Scenario::BimodalFork:
        break;  // handled above
    }
    Track tr = roll_track(p, cfg, next_track_id++);
    tr.recording_id = rec_id;
    rec.tracks.push_back(std::move(tr));
    corridor(rec.tracks.back().samples, rec.map);
  }
  return rec;
}

void fmt(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::optional<Scenario> parse_scenario(const std::string& s) {
  if (s == "straight") return Scenario::Straight;
  if (s == "left_turn") return Scenario::LeftTurn;
  if (s == "right_turn") return Scenario::RightTurn;
  if (s == "roundabout_arc") return Scenario::RoundaboutArc;
  if (s == "stop_and_go") return Scenario::StopAndGo;
  if (s == "bimodal_fork") return Scenario::BimodalFork;
  return std::nullopt;
}

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::Straight: return "straight";
    case Scenario::LeftTurn: return "left_turn";
    case Scenario::RightTurn: return "right_turn";
    case Scenario::RoundaboutArc: return "roundabout_arc";
    case Scenario::StopAndGo: return "stop_and_go";
    case Scenario::BimodalFork: return "bimodal_fork";
  }
  return "straight";
}

std::vector<Recording> synth_generate(const SynthConfig& cfg) {
  if (cfg.count < 1) raise(ErrorKind::Config, "synth: count must be >= 1");
  if (cfg.recordings < 1) raise(ErrorKind::Config, "synth: recordings must be >= 1");
  uint64_t state = cfg.seed;
  std::vector<Recording> out;
  for (int r = 0; r < cfg.recordings; ++r) out.push_back(generate_one(cfg, splitmix64(state), r));
  return out;
}

void write_dataset(const std::vector<Recording>& recs, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);

  std::string csv = "recordingId,trackId,frame,xCenter,yCenter,heading,xVelocity,yVelocity\n";
  for (const auto& rec : recs)
    for (const auto& tr : rec.tracks)
      for (size_t i = 0; i < tr.samples.size(); ++i) {
        const auto& s = tr.samples[i].state;
        csv += std::to_string(rec.id) + "," + std::to_string(tr.track_id) + "," +
               std::to_string(i) + ",";
        fmt(csv, s.x);
        csv += ",";
        fmt(csv, s.y);
        csv += ",";
        fmt(csv, s.theta * 180.0 / kPi);
        csv += ",";
        fmt(csv, s.v * std::cos(s.theta));
        csv += ",";
        fmt(csv, s.v * std::sin(s.theta));
        csv += "\n";
      }

  std::string meta = "{\n  \"recordings\": [\n";
  for (size_t r = 0; r < recs.size(); ++r) {
    const auto& rec = recs[r];
    meta += "    {\"id\": " + std::to_string(rec.id) + ", \"frameRate\": ";
    fmt(meta, rec.frame_rate);
    meta += ", \"tracks\": [";
    for (size_t t = 0; t < rec.tracks.size(); ++t) {
      const auto& tr = rec.tracks[t];
      meta += std::string(t ? ", " : "") + "{\"trackId\": " + std::to_string(tr.track_id) +
              ", \"class\": \"" + agent_class_name(tr.agent_class) + "\", \"length\": ";
      fmt(meta, tr.length);
      meta += ", \"width\": ";
      fmt(meta, tr.width);
      meta += "}";
    }
    meta += "]}";
    meta += (r + 1 < recs.size()) ? ",\n" : "\n";
  }
  meta += "  ]\n}\n";

  std::string map = "{\n  \"maps\": [\n";
  for (size_t r = 0; r < recs.size(); ++r) {
    const auto& rec = recs[r];
    map += "    {\"recordingId\": " + std::to_string(rec.id) + ", \"boundaries\": [";
    for (size_t b = 0; b < rec.map.boundaries.size(); ++b) {
      map += b ? ", [" : "[";
      for (size_t p = 0; p < rec.map.boundaries[b].size(); ++p) {
        map += p ? ", [" : "[";
        fmt(map, rec.map.boundaries[b][p][0]);
        map += ", ";
        fmt(map, rec.map.boundaries[b][p][1]);
        map += "]";
      }
      map += "]";
    }
    map += "], \"drivableAreas\": [";
    for (size_t b = 0; b < rec.map.drivable_areas.size(); ++b) {
      map += b ? ", [" : "[";
      for (size_t p = 0; p < rec.map.drivable_areas[b].size(); ++p) {
        map += p ? ", [" : "[";
        fmt(map, rec.map.drivable_areas[b][p][0]);
        map += ", ";
        fmt(map, rec.map.drivable_areas[b][p][1]);
        map += "]";
      }
      map += "]";
    }
    map += "]}";
    map += (r + 1 < recs.size()) ? ",\n" : "\n";
  }
  map += "  ]\n}\n";

  auto dump = [&](const std::string& name, const std::string& content) {
    std::ofstream os(fs::path(dir) / name, std::ios::binary);
    if (!os) raise(ErrorKind::Io, "synth: cannot write " + name + " under " + dir);
    os << content;
  };
  dump("tracks.csv", csv);
  dump("meta.json", meta);
  dump("map.json", map);
}

}  // namespace ap::data
