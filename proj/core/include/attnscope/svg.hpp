#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attnscope/analysis.hpp"
#include "attnscope/heatmap.hpp"

// Minimal deterministic SVG rendering. Output depends only on the inputs,
// so regenerated figures are byte-identical and can be diffed in tests.

namespace attnscope::svg {

// "#rrggbb" sampled from an 8-stop dark-to-bright ramp, t clamped to [0,1].
std::string ramp_color(double t);

// One rect per cell, minmax-scaled; a constant map renders as the ramp floor.
std::string render_heatmap(const heatmap::Heatmap& m, int cell_px = 12);

struct Series {
    std::string label;
    std::string color;  // "#rrggbb"
    std::vector<std::pair<double, double>> points;
    std::optional<analysis::Regression> fit;  // line spans the series x range
};

std::string render_scatter(const std::vector<Series>& series, const std::string& x_label,
                           const std::string& y_label, const std::string& title = "");

}  // namespace attnscope::svg
