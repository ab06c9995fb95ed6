#include <algorithm>
#include <cmath>

#include "data/dataio.hpp"

namespace ap::data {

namespace {

// max position deviation between a rollout of the derived actions and the
// recorded states over [first, last]
double consistency_error(const std::vector<TrackSample>& samples,
                         const std::vector<kin::FlaggedAction>& actions, size_t first,
                         size_t last, const kin::VehicleGeometry& g, double dt) {
  kin::State cur = samples[first].state;
  double worst = 0.0;
  for (size_t i = first; i < last; ++i) {
    cur = kin::step(cur, actions[i].action, g, dt);
    const auto& ref = samples[i + 1].state;
    worst = std::max(worst, std::hypot(cur.x - ref.x, cur.y - ref.y));
  }
  return worst;
}

}  // namespace

std::vector<Snippet> extract_snippets(const Recording& rec, const ExtractConfig& cfg,
                                      ExtractStats* stats) {
  if (cfg.spacing <= 0) raise(ErrorKind::Config, "extract: spacing must be positive");
  if (cfg.segments != 1 && cfg.segments != 2)
    raise(ErrorKind::Config, "extract: segments must be 1 or 2");
  double stride_f = cfg.spacing / cfg.dt;
  size_t stride = static_cast<size_t>(std::llround(stride_f));
  if (stride == 0 || std::fabs(stride_f - static_cast<double>(stride)) > 1e-9)
    raise(ErrorKind::Config, "extract: spacing must be a multiple of dt");

  const size_t T = cfg.horizon;
  const size_t future_steps = T * static_cast<size_t>(cfg.segments);

  // resample everything once; neighbors are interpolated from these
  std::vector<Track> resampled;
  resampled.reserve(rec.tracks.size());
  for (const auto& tr : rec.tracks) {
    if (tr.samples.size() >= 2) resampled.push_back(resample(tr, cfg.dt));
  }

  std::vector<Snippet> out;
  ExtractStats local;
  for (size_t ti = 0; ti < resampled.size(); ++ti) {
    const Track& tr = resampled[ti];
    size_t n = tr.samples.size();
    if (n < T + future_steps + 1) continue;
    auto actions = derive_actions(tr, cfg.geometry, cfg.dt);

    for (size_t anchor = T; anchor + future_steps <= n - 1; anchor += stride) {
      size_t first = anchor - T;
      size_t last = anchor + future_steps;
      bool flagged = false;
      for (size_t i = first; i < last; ++i) flagged = flagged || actions[i].infeasible;
      if (flagged) {
        ++local.dropped_infeasible;
        continue;
      }
      if (consistency_error(tr.samples, actions, first, last, cfg.geometry, cfg.dt) >
          cfg.consistency_tol) {
        ++local.dropped_inconsistent;
        continue;
      }

      Snippet sn;
      sn.recording_id = tr.recording_id;
      sn.track_id = tr.track_id;
      sn.t0 = tr.samples[anchor].t;
      sn.ego_length = tr.length;
      sn.ego_width = tr.width;
      for (size_t i = first; i <= anchor; ++i) sn.past_states.push_back(tr.samples[i].state);
      for (size_t i = first; i < anchor; ++i) sn.past_actions.push_back(actions[i].action);
      for (size_t i = anchor + 1; i <= anchor + T; ++i)
        sn.future_states_1.push_back(tr.samples[i].state);
      for (size_t i = anchor; i < anchor + T; ++i)
        sn.future_actions_1.push_back(actions[i].action);
      if (cfg.segments == 2) {
        for (size_t i = anchor + T + 1; i <= anchor + 2 * T; ++i)
          sn.future_states_2.push_back(tr.samples[i].state);
        for (size_t i = anchor + T; i < anchor + 2 * T; ++i)
          sn.future_actions_2.push_back(actions[i].action);
      }

      // neighbors interpolated onto the ego grid, within radius at t0
      const kin::State& ego0 = sn.present_state();
      for (size_t nj = 0; nj < resampled.size(); ++nj) {
        if (nj == ti) continue;
        const Track& nb = resampled[nj];
        auto at_t0 = state_at(nb, sn.t0);
        if (!at_t0) continue;
        if (std::hypot(at_t0->x - ego0.x, at_t0->y - ego0.y) > cfg.neighbor_radius) continue;
        NeighborTrack nt;
        nt.track_id = nb.track_id;
        nt.length = nb.length;
        nt.width = nb.width;
        for (size_t i = first; i <= last; ++i) {
          double t = tr.samples[i].t;
          auto st = state_at(nb, t);
          nt.present.push_back(st.has_value());
          nt.states.push_back(st.value_or(kin::State{}));
        }
        sn.neighbors.push_back(std::move(nt));
      }
      out.push_back(std::move(sn));
      ++local.emitted;
    }
  }
  if (stats) *stats = local;
  return out;
}

SplitResult split_recordings(std::vector<int> recording_ids) {
  std::sort(recording_ids.begin(), recording_ids.end());
  recording_ids.erase(std::unique(recording_ids.begin(), recording_ids.end()),
                      recording_ids.end());
  size_t n = recording_ids.size();
  if (n < 3) raise(ErrorKind::Config, "split: need at least 3 recordings, got " +
                                          std::to_string(n));

  // largest-remainder apportionment of 8:1:1, val and test at least 1 each
  double quota[3] = {0.8 * static_cast<double>(n), 0.1 * static_cast<double>(n),
                     0.1 * static_cast<double>(n)};
  size_t count[3];
  double rem[3];
  for (int i = 0; i < 3; ++i) {
    count[i] = static_cast<size_t>(quota[i]);
    rem[i] = quota[i] - static_cast<double>(count[i]);
  }
  for (int i = 1; i < 3; ++i)
    if (count[i] == 0) {
      count[i] = 1;
      rem[i] = 0;
    }
  size_t assigned = count[0] + count[1] + count[2];
  while (assigned > n) {
    --count[0];
    --assigned;
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best]) best = i;
    ++count[best];
    rem[best] = -1;
    ++assigned;
  }

  SplitResult r;
  size_t k = 0;
  for (size_t i = 0; i < count[0]; ++i) r.train.push_back(recording_ids[k++]);
  for (size_t i = 0; i < count[1]; ++i) r.val.push_back(recording_ids[k++]);
  for (size_t i = 0; i < count[2]; ++i) r.test.push_back(recording_ids[k++]);
  return r;
}

}  // namespace ap::data
