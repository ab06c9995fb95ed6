#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "kin/bicycle.hpp"

namespace ap::data {

enum class AgentClass { Car, TruckBus, Motorcycle, Other };

const char* agent_class_name(AgentClass c);
std::optional<AgentClass> parse_agent_class(const std::string& s);

struct TrackSample {
  double t = 0;  // seconds from recording start
  kin::State state;
};

struct Track {
  int recording_id = 0;
  int track_id = 0;
  AgentClass agent_class = AgentClass::Car;
  double length = 4.5;  // m, bounding box
  double width = 2.0;   // m
  std::vector<TrackSample> samples;

  double duration() const {
    return samples.size() < 2 ? 0.0 : samples.back().t - samples.front().t;
  }
};

struct SceneMap {
  std::vector<std::vector<std::array<double, 2>>> boundaries;      // polylines
  std::vector<std::vector<std::array<double, 2>>> drivable_areas;  // polygons
};

// A neighbor track clipped to a snippet window; samples are aligned to the
// snippet's uniform grid (NaN state slots where the agent is absent).
struct NeighborTrack {
  int track_id = 0;
  double length = 4.5;
  double width = 2.0;
  std::vector<bool> present;         // one per grid slot
  std::vector<kin::State> states;    // one per grid slot, valid where present
};

// Aligned past window tau0 and future window(s) tau1 (and tau2) for one ego agent.
struct Snippet {
  int recording_id = 0;
  int track_id = 0;
  double t0 = 0;  // present time, seconds in recording time base
  double ego_length = 4.5;
  double ego_width = 2.0;

  std::vector<kin::State> past_states;     // T+1, tau0 (includes the state at t0)
  std::vector<kin::Action> past_actions;   // T
  std::vector<kin::State> future_states_1;  // T, tau1
  std::vector<kin::Action> future_actions_1;
  std::vector<kin::State> future_states_2;  // T when two segments, else empty
  std::vector<kin::Action> future_actions_2;

  std::vector<NeighborTrack> neighbors;  // clipped to the full window
  int map_index = -1;                    // into the cache's per-recording maps

  size_t horizon() const { return past_actions.size(); }
  bool two_segments() const { return !future_states_2.empty(); }
  const kin::State& present_state() const { return past_states.back(); }
};

struct Recording {
  int id = 0;
  double frame_rate = 25.0;
  std::vector<Track> tracks;
  SceneMap map;
};

}  // namespace ap::data
