#pragma once

#include <string>

#include "eval/evaluate.hpp"

namespace ap::eval {

// Mode stroke palette, in order; more modes than entries is an error.
constexpr const char* kModePalette[] = {"#d62728", "#ff7f0e", "#ffd700",
                                        "#c71585", "#00bfbf", "#4169e1"};
constexpr size_t kModePaletteSize = sizeof(kModePalette) / sizeof(kModePalette[0]);

// Scene plot: map polylines (gray), ground truth (green), predicted modes in
// the palette colors. World frame; deterministic bytes per input.
void plot_trajectories(const data::Snippet& sn, const data::SceneMap& map,
                       const std::vector<Trajectory>& world_modes,
                       const Trajectory& world_gt, const std::string& out_path);

// Convenience: maps ego-frame inference output to the world and writes the plot.
void plot_inference(const data::Snippet& sn, const data::SceneMap& map,
                    const model::InferResult& res, const std::string& out_path);

}  // namespace ap::eval
