#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "data/dataio.hpp"

namespace ap::data {

namespace {

constexpr double kDegToRad = 3.1415926535897932384626433832795 / 180.0;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

struct TrackMeta {
  AgentClass agent_class = AgentClass::Car;
  double length = 4.5;
  double width = 2.0;
  bool excluded = false;
};

struct RecordingMeta {
  double frame_rate = 25.0;
  std::map<int, TrackMeta> tracks;
};

std::map<int, RecordingMeta> load_meta(const std::string& meta_json) {
  std::ifstream is(meta_json);
  if (!is) raise(ErrorKind::Io, "meta: cannot open " + meta_json);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Schema, "meta: invalid json in " + meta_json + ": " + e.what());
  }
  if (!j.contains("recordings") || !j["recordings"].is_array())
    raise(ErrorKind::Schema, "meta: missing 'recordings' array in " + meta_json);
  std::map<int, RecordingMeta> out;
  for (const auto& r : j["recordings"]) {
    if (!r.contains("id")) raise(ErrorKind::Schema, "meta: recording entry missing 'id'");
    RecordingMeta rm;
    rm.frame_rate = r.value("frameRate", 25.0);
    if (rm.frame_rate <= 0) raise(ErrorKind::Schema, "meta: non-positive frameRate");
    if (r.contains("tracks")) {
      for (const auto& t : r["tracks"]) {
        TrackMeta tm;
        std::string cls = t.value("class", "car");
        auto parsed = parse_agent_class(cls);
        if (!parsed)
          tm.excluded = true;
        else
          tm.agent_class = *parsed;
        tm.length = t.value("length", 4.5);
        tm.width = t.value("width", 2.0);
        out[r["id"].get<int>()].tracks[t.value("trackId", -1)] = tm;
      }
    }
    out[r["id"].get<int>()].frame_rate = rm.frame_rate;
  }
  return out;
}

void load_maps(const std::string& map_json, std::vector<Recording>& recs) {
  if (map_json.empty()) return;
  std::ifstream is(map_json);
  if (!is) raise(ErrorKind::Io, "map: cannot open " + map_json);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Schema, "map: invalid json in " + map_json + ": " + e.what());
  }
  auto parse_polys = [&](const nlohmann::json& arr) {
    std::vector<std::vector<std::array<double, 2>>> out;
    for (const auto& poly : arr) {
      std::vector<std::array<double, 2>> pts;
      for (const auto& p : poly) {
        double x = p.at(0).get<double>();
        double y = p.at(1).get<double>();
        if (!std::isfinite(x) || !std::isfinite(y))
          raise(ErrorKind::Data, "map: non-finite coordinate");
        pts.push_back({x, y});
      }
      if (pts.size() < 2) raise(ErrorKind::Data, "map: polyline with fewer than 2 points");
      out.push_back(std::move(pts));
    }
    return out;
  };
  auto apply = [&](const nlohmann::json& entry, Recording& rec) {
    if (entry.contains("boundaries")) rec.map.boundaries = parse_polys(entry["boundaries"]);
    if (entry.contains("drivableAreas"))
      rec.map.drivable_areas = parse_polys(entry["drivableAreas"]);
  };
  const auto& maps = j.contains("maps") ? j["maps"] : j;
  for (const auto& entry : maps) {
    if (entry.contains("recordingId")) {
      int rid = entry["recordingId"].get<int>();
      for (auto& rec : recs)
        if (rec.id == rid) apply(entry, rec);
    } else {
      for (auto& rec : recs) apply(entry, rec);
    }
  }
}

}  // namespace

const char* agent_class_name(AgentClass c) {
  switch (c) {
    case AgentClass::Car: return "car";
    case AgentClass::TruckBus: return "truck_bus";
    case AgentClass::Motorcycle: return "motorcycle";
    case AgentClass::Other: return "other";
  }
  return "other";
}

std::optional<AgentClass> parse_agent_class(const std::string& s) {
  if (s == "car") return AgentClass::Car;
  if (s == "truck_bus" || s == "truck" || s == "bus") return AgentClass::TruckBus;
  if (s == "motorcycle") return AgentClass::Motorcycle;
  if (s == "bicycle" || s == "cyclist" || s == "pedestrian") return std::nullopt;
  return AgentClass::Other;
}

std::vector<Recording> load_recordings(const std::string& track_csv,
                                       const std::string& meta_json,
                                       const std::string& map_json) {
  auto meta = load_meta(meta_json);

  std::ifstream is(track_csv);
  if (!is) raise(ErrorKind::Io, "tracks: cannot open " + track_csv);
  std::string header;
  if (!std::getline(is, header)) raise(ErrorKind::Schema, "tracks: empty file " + track_csv);
  auto cols = split_csv_line(header);
  auto col = [&](const std::string& name) -> int {
    auto it = std::find(cols.begin(), cols.end(), name);
    return it == cols.end() ? -1 : static_cast<int>(it - cols.begin());
  };
  struct Cols {
    int rec, track, frame, x, y, heading, vx, vy;
  } c{col("recordingId"), col("trackId"), col("frame"),    col("xCenter"),
      col("yCenter"),     col("heading"), col("xVelocity"), col("yVelocity")};
  const char* names[] = {"recordingId", "trackId", "frame",    "xCenter",
                         "yCenter",     "heading", "xVelocity", "yVelocity"};
  int idx[] = {c.rec, c.track, c.frame, c.x, c.y, c.heading, c.vx, c.vy};
  for (int i = 0; i < 8; ++i)
    if (idx[i] < 0)
      raise(ErrorKind::Schema, std::string("tracks: missing column '") + names[i] + "'");

  // (recording, track) -> rows in file order
  std::map<std::pair<int, int>, Track> tracks;
  std::map<std::pair<int, int>, long> last_frame;
  std::string line;
  size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() < cols.size())
      raise(ErrorKind::Schema,
            "tracks: line " + std::to_string(lineno) + " has too few fields");
    auto num = [&](int i) {
      try {
        return std::stod(fields[static_cast<size_t>(i)]);
      } catch (...) {
        raise(ErrorKind::Data, "tracks: non-numeric field at line " + std::to_string(lineno));
      }
    };
    int rid = static_cast<int>(num(c.rec));
    int tid = static_cast<int>(num(c.track));
    long frame = static_cast<long>(num(c.frame));
    auto key = std::make_pair(rid, tid);
    auto lf = last_frame.find(key);
    if (lf != last_frame.end() && frame <= lf->second)
      raise(ErrorKind::Data, "tracks: non-monotone frames for recording " +
                                 std::to_string(rid) + " track " + std::to_string(tid) +
                                 " at line " + std::to_string(lineno));
    last_frame[key] = frame;

    auto mit = meta.find(rid);
    double frame_rate = mit != meta.end() ? mit->second.frame_rate : 25.0;
    TrackMeta tm;
    if (mit != meta.end()) {
      auto tmit = mit->second.tracks.find(tid);
      if (tmit != mit->second.tracks.end()) tm = tmit->second;
    }
    if (tm.excluded) continue;

    Track& tr = tracks[key];
    if (tr.samples.empty()) {
      tr.recording_id = rid;
      tr.track_id = tid;
      tr.agent_class = tm.agent_class;
      tr.length = tm.length;
      tr.width = tm.width;
    }
    TrackSample s;
    s.t = static_cast<double>(frame) / frame_rate;
    s.state.x = num(c.x);
    s.state.y = num(c.y);
    s.state.theta = kin::wrap_angle(num(c.heading) * kDegToRad);
    s.state.v = std::hypot(num(c.vx), num(c.vy));
    tr.samples.push_back(s);
  }

  std::vector<Recording> out;
  for (auto& [key, tr] : tracks) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const Recording& r) { return r.id == key.first; });
    if (it == out.end()) {
      Recording rec;
      rec.id = key.first;
      auto mit = meta.find(key.first);
      if (mit != meta.end()) rec.frame_rate = mit->second.frame_rate;
      out.push_back(std::move(rec));
      it = out.end() - 1;
    }
    it->tracks.push_back(std::move(tr));
  }
  std::sort(out.begin(), out.end(),
            [](const Recording& a, const Recording& b) { return a.id < b.id; });
  load_maps(map_json, out);
  return out;
}

std::vector<Track> load_tracks(const std::string& track_csv, const std::string& meta_json) {
  std::vector<Track> out;
  for (auto& rec : load_recordings(track_csv, meta_json))
    for (auto& t : rec.tracks) out.push_back(std::move(t));
  return out;
}

namespace {

double lerp(double a, double b, double u) { return a + (b - a) * u; }

kin::State interp_state(const kin::State& a, const kin::State& b, double u) {
  kin::State s;
  s.x = lerp(a.x, b.x, u);
  s.y = lerp(a.y, b.y, u);
  s.v = lerp(a.v, b.v, u);
  // shortest arc
  double dth = kin::wrap_angle(b.theta - a.theta);
  s.theta = kin::wrap_angle(a.theta + dth * u);
  return s;
}

}  // namespace

Track resample(const Track& track, double dt) {
  if (track.samples.size() < 2)
    raise(ErrorKind::Data, "resample: track " + std::to_string(track.track_id) +
                               " has fewer than 2 samples");
  double native = (track.samples.back().t - track.samples.front().t) /
                  static_cast<double>(track.samples.size() - 1);
  if (dt < native - 1e-9)
    raise(ErrorKind::Contract, "resample: dt below native spacing");
  if (std::fabs(dt - native) < 1e-9) return track;

  Track out = track;
  out.samples.clear();
  double t_begin = track.samples.front().t;
  double t_end = track.samples.back().t;
  size_t hi = 1;
  size_t n = static_cast<size_t>((t_end - t_begin) / dt + 1e-9) + 1;
  for (size_t k = 0; k < n; ++k) {
    double t = t_begin + static_cast<double>(k) * dt;
    while (hi + 1 < track.samples.size() && track.samples[hi].t < t) ++hi;
    const auto& a = track.samples[hi - 1];
    const auto& b = track.samples[hi];
    double u = (t - a.t) / (b.t - a.t);
    u = std::clamp(u, 0.0, 1.0);
    TrackSample s;
    s.t = t;
    s.state = interp_state(a.state, b.state, u);
    out.samples.push_back(s);
  }
  return out;
}

std::optional<kin::State> state_at(const Track& track, double t) {
  if (track.samples.size() < 2) return std::nullopt;
  if (t < track.samples.front().t - 1e-9 || t > track.samples.back().t + 1e-9)
    return std::nullopt;
  size_t hi = 1;
  while (hi + 1 < track.samples.size() && track.samples[hi].t < t) ++hi;
  const auto& a = track.samples[hi - 1];
  const auto& b = track.samples[hi];
  double u = std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0);
  return interp_state(a.state, b.state, u);
}

std::vector<kin::FlaggedAction> derive_actions(const Track& track,
                                               const kin::VehicleGeometry& g, double dt) {
  if (track.samples.size() < 2)
    raise(ErrorKind::Data, "derive_actions: track too short");
  std::vector<kin::FlaggedAction> out;
  out.reserve(track.samples.size() - 1);
  for (size_t i = 0; i + 1 < track.samples.size(); ++i)
    out.push_back(
        kin::inverse_step_flagged(track.samples[i].state, track.samples[i + 1].state, g, dt));
  return out;
}

}  // namespace ap::data
