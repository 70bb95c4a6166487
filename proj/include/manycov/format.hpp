#pragma once

#include <string>
#include <vector>

#include "manycov/bootstrap.hpp"
#include "manycov/mte.hpp"
#include "manycov/simulate.hpp"

namespace manycov {

// Shortest decimal that round-trips the exact double, so serialized
// output is reproducible byte for byte.
std::string format_double(double v);

// Fixed number of decimals (plot coordinates, aligned tables).
std::string format_fixed(double v, int precision);

std::string report_to_json(const InferenceReport& rep);

std::string simulation_csv(const SimulationResult& res);
std::string simulation_text(const SimulationResult& res);

std::string mte_curve_csv(const std::vector<MteCurvePoint>& curve);
// Self-contained SVG with a fixed viewbox and fixed-precision
// coordinates; identical input renders an identical byte stream.
std::string mte_curve_svg(const std::vector<MteCurvePoint>& curve);

// key=value study configuration ('#' starts a comment). Recognized
// keys: n, k_grid, reps, bootstrap_B, weights, seed, eval_a, mode.
SimulationSpec parse_sim_config(const std::string& path);
void apply_sim_option(SimulationSpec& spec, const std::string& key,
                      const std::string& value);

}  // namespace manycov
