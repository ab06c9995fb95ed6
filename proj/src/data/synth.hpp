#pragma once

#include <optional>
#include <string>
#include <vector>

#include "data/types.hpp"

namespace ap::data {

enum class Scenario { Straight, LeftTurn, RightTurn, RoundaboutArc, StopAndGo, BimodalFork };

std::optional<Scenario> parse_scenario(const std::string& s);
const char* scenario_name(Scenario s);

struct SynthConfig {
  Scenario scenario = Scenario::Straight;
  int count = 8;        // tracks per recording; pairs for bimodal_fork
  uint64_t seed = 1;
  int recordings = 1;   // independent recordings (>=3 allows recording-level splits)
  double dt = 0.3;
  int segments = 1;     // sizes tracks for 3+3 s or 3+6 s extraction
  double horizon_s = 3.0;
  double extra_s = 2.4;          // slack beyond one anchor; forced to 0 for bimodal_fork
  double noise_accel = 0.05;     // stddev, m/s^2
  double noise_steer = 0.005;    // stddev, rad
  kin::VehicleGeometry geometry;
};

// Kinematically exact tracks: scripted action profiles (plus seeded noise on the
// actions themselves) rolled through the bicycle model. bimodal_fork emits pairs
// that share a bit-identical history and diverge afterwards; pair members are
// placed far apart so they never appear in each other's context.
std::vector<Recording> synth_generate(const SynthConfig& cfg);

// Writes tracks.csv / meta.json / map.json in the ingestion format.
// Deterministic bytes for a given input.
void write_dataset(const std::vector<Recording>& recs, const std::string& dir);

}  // namespace ap::data
