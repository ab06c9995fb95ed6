#include "data/cache.hpp"

#include <cstring>
#include <fstream>

#include "core/hash.hpp"

namespace ap::data {

namespace {

constexpr char kMagic[4] = {'A', 'P', 'S', 'C'};
constexpr uint32_t kVersion = 1;

struct Writer {
  std::string buf;
  template <typename T>
  void put(T v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_state(const kin::State& s) {
    put(s.x);
    put(s.y);
    put(s.theta);
    put(s.v);
  }
  void put_action(const kin::Action& a) {
    put(a.a);
    put(a.delta);
  }
  void put_polys(const std::vector<std::vector<std::array<double, 2>>>& polys) {
    put<uint32_t>(static_cast<uint32_t>(polys.size()));
    for (const auto& poly : polys) {
      put<uint32_t>(static_cast<uint32_t>(poly.size()));
      for (const auto& p : poly) {
        put(p[0]);
        put(p[1]);
      }
    }
  }
};

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  template <typename T>
  T get() {
    if (pos + sizeof(T) > buf.size()) raise(ErrorKind::Io, "cache: truncated");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  kin::State get_state() {
    kin::State s;
    s.x = get<double>();
    s.y = get<double>();
    s.theta = get<double>();
    s.v = get<double>();
    return s;
  }
  kin::Action get_action() {
    kin::Action a;
    a.a = get<double>();
    a.delta = get<double>();
    return a;
  }
  std::vector<std::vector<std::array<double, 2>>> get_polys() {
    std::vector<std::vector<std::array<double, 2>>> polys(get<uint32_t>());
    for (auto& poly : polys) {
      poly.resize(get<uint32_t>());
      for (auto& p : poly) {
        p[0] = get<double>();
        p[1] = get<double>();
      }
    }
    return polys;
  }
};

}  // namespace

std::vector<size_t> SnippetCache::indices_of(const std::string& split_name) const {
  uint8_t tag;
  if (split_name == "train")
    tag = 0;
  else if (split_name == "val")
    tag = 1;
  else if (split_name == "test")
    tag = 2;
  else if (split_name == "all") {
    std::vector<size_t> all(snippets.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  } else {
    raise(ErrorKind::Config, "unknown split '" + split_name + "'");
  }
  std::vector<size_t> out;
  for (size_t i = 0; i < split.size(); ++i)
    if (split[i] == tag) out.push_back(i);
  return out;
}

SnippetCache build_cache(const std::vector<Recording>& recordings, const ExtractConfig& cfg) {
  SnippetCache cache;
  cache.dt = cfg.dt;
  cache.horizon = cfg.horizon;
  cache.segments = cfg.segments;
  cache.geometry = cfg.geometry;

  std::vector<int> ids;
  for (const auto& r : recordings) ids.push_back(r.id);
  SplitResult splits;
  bool have_splits = ids.size() >= 3;
  if (have_splits) splits = split_recordings(ids);
  auto tag_of = [&](int rid) -> uint8_t {
    if (!have_splits) return 0;
    for (int id : splits.val)
      if (id == rid) return 1;
    for (int id : splits.test)
      if (id == rid) return 2;
    return 0;
  };

  for (size_t ri = 0; ri < recordings.size(); ++ri) {
    ExtractStats st;
    auto snippets = extract_snippets(recordings[ri], cfg, &st);
    cache.stats.emitted += st.emitted;
    cache.stats.dropped_infeasible += st.dropped_infeasible;
    cache.stats.dropped_inconsistent += st.dropped_inconsistent;
    cache.maps.push_back(recordings[ri].map);
    for (auto& sn : snippets) {
      sn.map_index = static_cast<int>(ri);
      cache.split.push_back(tag_of(sn.recording_id));
      cache.snippets.push_back(std::move(sn));
    }
  }
  return cache;
}

void save_cache(SnippetCache& cache, const std::string& path) {
  Writer w;
  w.put(cache.dt);
  w.put<uint64_t>(cache.horizon);
  w.put<uint32_t>(static_cast<uint32_t>(cache.segments));
  w.put(cache.geometry.l_f);
  w.put(cache.geometry.l_r);
  w.put<uint64_t>(cache.stats.emitted);
  w.put<uint64_t>(cache.stats.dropped_infeasible);
  w.put<uint64_t>(cache.stats.dropped_inconsistent);

  w.put<uint32_t>(static_cast<uint32_t>(cache.maps.size()));
  for (const auto& m : cache.maps) {
    w.put_polys(m.boundaries);
    w.put_polys(m.drivable_areas);
  }

  const size_t T = cache.horizon;
  w.put<uint64_t>(cache.snippets.size());
  for (size_t i = 0; i < cache.snippets.size(); ++i) {
    const Snippet& sn = cache.snippets[i];
    if (sn.past_states.size() != T + 1 || sn.past_actions.size() != T ||
        sn.future_states_1.size() != T || sn.future_actions_1.size() != T)
      raise(ErrorKind::Contract, "cache: snippet window sizes do not match the header horizon");
    w.put<int32_t>(sn.recording_id);
    w.put<int32_t>(sn.track_id);
    w.put(sn.t0);
    w.put(sn.ego_length);
    w.put(sn.ego_width);
    w.put<int32_t>(sn.map_index);
    w.put<uint8_t>(cache.split.at(i));
    for (const auto& s : sn.past_states) w.put_state(s);
    for (const auto& a : sn.past_actions) w.put_action(a);
    for (const auto& s : sn.future_states_1) w.put_state(s);
    for (const auto& a : sn.future_actions_1) w.put_action(a);
    w.put<uint8_t>(sn.two_segments() ? 1 : 0);
    if (sn.two_segments()) {
      for (const auto& s : sn.future_states_2) w.put_state(s);
      for (const auto& a : sn.future_actions_2) w.put_action(a);
    }
    w.put<uint32_t>(static_cast<uint32_t>(sn.neighbors.size()));
    for (const auto& nb : sn.neighbors) {
      w.put<int32_t>(nb.track_id);
      w.put(nb.length);
      w.put(nb.width);
      w.put<uint32_t>(static_cast<uint32_t>(nb.present.size()));
      for (size_t k = 0; k < nb.present.size(); ++k) {
        w.put<uint8_t>(nb.present[k] ? 1 : 0);
        w.put_state(nb.states[k]);
      }
    }
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorKind::Io, "cache: cannot open for write: " + path);
  os.write(kMagic, 4);
  uint32_t version = kVersion;
  os.write(reinterpret_cast<const char*>(&version), sizeof(version));
  uint64_t body_hash = fnv1a64(w.buf.data(), w.buf.size());
  cache.fingerprint = hex64(body_hash);
  os.write(reinterpret_cast<const char*>(&body_hash), sizeof(body_hash));
  uint64_t body_len = w.buf.size();
  os.write(reinterpret_cast<const char*>(&body_len), sizeof(body_len));
  os.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!os) raise(ErrorKind::Io, "cache: write failed: " + path);
}

SnippetCache load_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorKind::Io, "cache: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    raise(ErrorKind::Schema, "cache: bad magic in " + path);
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion)
    raise(ErrorKind::Schema, "cache: unsupported version " + std::to_string(version));
  uint64_t body_hash = 0, body_len = 0;
  is.read(reinterpret_cast<char*>(&body_hash), sizeof(body_hash));
  is.read(reinterpret_cast<char*>(&body_len), sizeof(body_len));
  std::string body(body_len, '\0');
  is.read(body.data(), static_cast<std::streamsize>(body_len));
  if (!is) raise(ErrorKind::Io, "cache: truncated body in " + path);
  if (fnv1a64(body.data(), body.size()) != body_hash)
    raise(ErrorKind::Data, "cache: body hash mismatch in " + path);

  Reader r{body};
  SnippetCache cache;
  cache.fingerprint = hex64(body_hash);
  cache.dt = r.get<double>();
  cache.horizon = static_cast<size_t>(r.get<uint64_t>());
  cache.segments = static_cast<int>(r.get<uint32_t>());
  cache.geometry.l_f = r.get<double>();
  cache.geometry.l_r = r.get<double>();
  cache.stats.emitted = r.get<uint64_t>();
  cache.stats.dropped_infeasible = r.get<uint64_t>();
  cache.stats.dropped_inconsistent = r.get<uint64_t>();

  uint32_t map_count = r.get<uint32_t>();
  for (uint32_t m = 0; m < map_count; ++m) {
    SceneMap sm;
    sm.boundaries = r.get_polys();
    sm.drivable_areas = r.get_polys();
    cache.maps.push_back(std::move(sm));
  }

  const size_t T = cache.horizon;
  uint64_t count = r.get<uint64_t>();
  for (uint64_t i = 0; i < count; ++i) {
    Snippet sn;
    sn.recording_id = r.get<int32_t>();
    sn.track_id = r.get<int32_t>();
    sn.t0 = r.get<double>();
    sn.ego_length = r.get<double>();
    sn.ego_width = r.get<double>();
    sn.map_index = r.get<int32_t>();
    cache.split.push_back(r.get<uint8_t>());
    for (size_t k = 0; k <= T; ++k) sn.past_states.push_back(r.get_state());
    for (size_t k = 0; k < T; ++k) sn.past_actions.push_back(r.get_action());
    for (size_t k = 0; k < T; ++k) sn.future_states_1.push_back(r.get_state());
    for (size_t k = 0; k < T; ++k) sn.future_actions_1.push_back(r.get_action());
    if (r.get<uint8_t>()) {
      for (size_t k = 0; k < T; ++k) sn.future_states_2.push_back(r.get_state());
      for (size_t k = 0; k < T; ++k) sn.future_actions_2.push_back(r.get_action());
    }
    uint32_t nb_count = r.get<uint32_t>();
    for (uint32_t nb = 0; nb < nb_count; ++nb) {
      NeighborTrack nt;
      nt.track_id = r.get<int32_t>();
      nt.length = r.get<double>();
      nt.width = r.get<double>();
      uint32_t slots = r.get<uint32_t>();
      for (uint32_t k = 0; k < slots; ++k) {
        nt.present.push_back(r.get<uint8_t>() != 0);
        nt.states.push_back(r.get_state());
      }
      sn.neighbors.push_back(std::move(nt));
    }
    cache.snippets.push_back(std::move(sn));
  }
  return cache;
}

}  // namespace ap::data
