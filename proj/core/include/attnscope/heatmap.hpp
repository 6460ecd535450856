#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attnscope/telemetry.hpp"

namespace attnscope::heatmap {

// Grid geometry for one magnification level. mag_level is a tag from the
// configured magnification set ("2x", "4x", ...), not used by the math.
struct GridSpec {
    int rows = 0;
    int cols = 0;
    std::string mag_level;

    int cells() const { return rows * cols; }
    bool same_dims(const GridSpec& o) const { return rows == o.rows && cols == o.cols; }
};

enum class Norm { raw, unit_sum, minmax, zscore };

const char* to_string(Norm n);
Norm norm_from_string(std::string_view s);

struct Heatmap {
    GridSpec grid;
    std::vector<double> values;  // rows*cols, row-major
    Norm norm = Norm::raw;

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * grid.cols + c]; }
    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * grid.cols + c]; }
    double total() const;
    double max_value() const;

    static Heatmap zeros(const GridSpec& g);
};

// Retains samples with t_ms <= first + time_fraction * duration and/or
// magnification in (lo, hi].
struct SampleFilter {
    std::optional<double> time_fraction;                // (0, 1]
    std::optional<std::pair<double, double>> mag_bin;   // (lo, hi]

    bool passes(const telemetry::ViewportSample& v, std::int64_t first_ms,
                std::int64_t duration_ms) const;
};

// One magnification bin with its grid size.
struct MagBin {
    std::string label;
    double lo = 0, hi = 0;  // (lo, hi]
    int rows = 0, cols = 0;

    bool contains(double mag) const { return mag > lo && mag <= hi; }
    GridSpec grid() const { return GridSpec{rows, cols, label}; }
};

// 2x/4x/10x/20x with grid sizes 10x10 / 20x20 / 50x50 / 60x60 and
// bin edges (1,3], (3,7], (7,15], (15,30].
const std::vector<MagBin>& default_mag_bins();
const MagBin& default_bin(std::string_view label);  // throws DataError("UnknownMagLevel")

// ---------------------------------------------------------------------------

// Fractional-area overlap of a sample's bbox with each grid cell, as
// (flat cell index, weight) with weights summing to exactly 1.
using CellWeight = std::pair<int, double>;
std::vector<CellWeight> footprint_weights(const telemetry::ViewportSample& v, const GridSpec& g);

// Dwell per sample: t[i+1]-t[i]; the last sample gets the session median dwell.
double median_dwell_ms(const telemetry::Session& s);
std::vector<double> sample_dwells_ms(const telemetry::Session& s);

// Dwell-weighted footprint accumulation over the retained samples.
// Throws NumericError("EmptyAfterFilter") if nothing passes the filter.
Heatmap accumulate(const telemetry::Session& s, const GridSpec& g, const SampleFilter& f = {});

// Cumulative maps at increasing time fractions; cellwise monotone.
std::vector<Heatmap> temporal_stack(const telemetry::Session& s, const GridSpec& g,
                                    const std::vector<double>& fractions = {0.25, 0.5, 0.75, 1.0});

struct MagStackEntry {
    MagBin bin;
    Heatmap map;
    bool empty = false;         // no sample fell into this bin
    std::size_t n_samples = 0;
};

struct MagnificationStack {
    std::vector<MagStackEntry> entries;
    std::size_t dropped_samples = 0;  // magnification outside every bin
    double dropped_mass = 0.0;
};

MagnificationStack magnification_stack(const telemetry::Session& s,
                                       const std::vector<MagBin>& bins = default_mag_bins());

// unit_sum: values sum to 1; minmax: range [0,1]; zscore: mean 0, population
// std 1. Throws NumericError("DegenerateMap") on constant (minmax/zscore) or
// zero (unit_sum) input.
Heatmap normalize(const Heatmap& m, Norm mode);

// Area-weighted conservative resampling; total mass preserved.
// Input must be raw or unit_sum.
Heatmap resample(const Heatmap& m, const GridSpec& new_grid);

// Optional post-accumulation smoothing. Mass-preserving: each source cell
// scatters through a kernel renormalized over the grid. sigma in cells.
Heatmap gaussian_blur(const Heatmap& m, double sigma_cells);

telemetry::TensorFile to_atnt(const Heatmap& m);
Heatmap heatmap_from_atnt(const telemetry::TensorFile& t, std::string mag_level = "");

}  // namespace attnscope::heatmap
