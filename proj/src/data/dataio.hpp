#pragma once

#include <string>
#include <vector>

#include "data/types.hpp"

namespace ap::data {

// CSV in the drone-dataset column layout (recordingId, trackId, frame, xCenter,
// yCenter, heading, xVelocity, yVelocity, ...). heading is in degrees; speed is
// assembled from the velocity components. The meta JSON maps recording ids to
// frame rates and per-track agent classes/dimensions; excluded classes
// (cyclists, pedestrians) are dropped here.
std::vector<Recording> load_recordings(const std::string& track_csv,
                                       const std::string& meta_json,
                                       const std::string& map_json = "");

// Flat track list, for callers that do not care about recording grouping.
std::vector<Track> load_tracks(const std::string& track_csv, const std::string& meta_json);

// Uniform resampling to the model step: linear in x, y, v; shortest-arc in theta.
// dt must be >= the native spacing; equal dt returns the track unchanged.
Track resample(const Track& track, double dt);

// Interpolated state at absolute time t, or nullopt outside the track's span.
std::optional<kin::State> state_at(const Track& track, double t);

// Per-step actions via the inverse bicycle model; infeasible transitions are
// flagged, not fatal (snippets overlapping a flag are dropped downstream).
std::vector<kin::FlaggedAction> derive_actions(const Track& track,
                                               const kin::VehicleGeometry& g, double dt);

struct ExtractConfig {
  double dt = 0.3;           // model step, s
  size_t horizon = 10;       // T steps per segment
  int segments = 1;          // 1 or 2 future segments
  double spacing = 0.6;      // anchor spacing, s (must be a multiple of dt)
  kin::VehicleGeometry geometry;
  double consistency_tol = 0.25;  // max |rollout - recorded| position error, m
  double neighbor_radius = 50.0;  // m around the ego at t0
};

struct ExtractStats {
  size_t emitted = 0;
  size_t dropped_infeasible = 0;
  size_t dropped_inconsistent = 0;
};

// Cuts aligned past/future snippets from every track of a recording. Tracks are
// resampled to cfg.dt first; anchors sit on the first feasible step and then
// every cfg.spacing seconds. Every emitted snippet satisfies the kinematic
// consistency invariant (rollout of its derived actions reproduces its recorded
// states within cfg.consistency_tol).
std::vector<Snippet> extract_snippets(const Recording& rec, const ExtractConfig& cfg,
                                      ExtractStats* stats = nullptr);

struct SplitResult {
  std::vector<int> train, val, test;  // recording ids
};

// 8:1:1 at recording granularity, largest-remainder rounding, val and test get
// at least one recording each. Ids are sorted, then assigned in contiguous
// blocks (recordings are ordered by capture time in the source datasets).
SplitResult split_recordings(std::vector<int> recording_ids);

}  // namespace ap::data
