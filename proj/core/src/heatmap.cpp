#include "attnscope/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "attnscope/error.hpp"

namespace attnscope::heatmap {

const char* to_string(Norm n) {
    switch (n) {
        case Norm::raw: return "raw";
        case Norm::unit_sum: return "unit_sum";
        case Norm::minmax: return "minmax";
        case Norm::zscore: return "zscore";
    }
    return "?";
}

Norm norm_from_string(std::string_view s) {
    if (s == "raw") return Norm::raw;
    if (s == "unit_sum") return Norm::unit_sum;
    if (s == "minmax") return Norm::minmax;
    if (s == "zscore") return Norm::zscore;
    throw DataError("MalformedRecord", "unknown norm '" + std::string(s) + "'");
}

double Heatmap::total() const { return std::accumulate(values.begin(), values.end(), 0.0); }

double Heatmap::max_value() const {
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

Heatmap Heatmap::zeros(const GridSpec& g) {
    Heatmap m;
    m.grid = g;
    m.values.assign(static_cast<std::size_t>(g.rows) * g.cols, 0.0);
    return m;
}

bool SampleFilter::passes(const telemetry::ViewportSample& v, std::int64_t first_ms,
                          std::int64_t duration_ms) const {
    if (time_fraction) {
        double cutoff = static_cast<double>(first_ms) + *time_fraction * static_cast<double>(duration_ms);
        if (static_cast<double>(v.t_ms) > cutoff) return false;
    }
    if (mag_bin) {
        if (!(v.mag > mag_bin->first && v.mag <= mag_bin->second)) return false;
    }
    return true;
}

const std::vector<MagBin>& default_mag_bins() {
    static const std::vector<MagBin> bins = {
        {"2x", 1.0, 3.0, 10, 10},
        {"4x", 3.0, 7.0, 20, 20},
        {"10x", 7.0, 15.0, 50, 50},
        {"20x", 15.0, 30.0, 60, 60},
    };
    return bins;
}

const MagBin& default_bin(std::string_view label) {
    for (const auto& b : default_mag_bins())
        if (b.label == label) return b;
    throw DataError("UnknownMagLevel", "no default bin named '" + std::string(label) + "'");
}

std::vector<CellWeight> footprint_weights(const telemetry::ViewportSample& v, const GridSpec& g) {
    if (g.rows < 1 || g.cols < 1) throw DataError("GridMismatch", "grid must be at least 1x1");
    const double area = v.width() * v.height();
    const double cw = 1.0 / g.cols;
    const double ch = 1.0 / g.rows;
    int c0 = std::clamp(static_cast<int>(std::floor(v.x0 * g.cols)), 0, g.cols - 1);
    int c1 = std::clamp(static_cast<int>(std::ceil(v.x1 * g.cols)) - 1, 0, g.cols - 1);
    int r0 = std::clamp(static_cast<int>(std::floor(v.y0 * g.rows)), 0, g.rows - 1);
    int r1 = std::clamp(static_cast<int>(std::ceil(v.y1 * g.rows)) - 1, 0, g.rows - 1);
    std::vector<CellWeight> out;
    out.reserve(static_cast<std::size_t>(r1 - r0 + 1) * (c1 - c0 + 1));
    for (int r = r0; r <= r1; ++r) {
        double oy = std::min(v.y1, (r + 1) * ch) - std::max(v.y0, r * ch);
        if (oy <= 0) continue;
        for (int c = c0; c <= c1; ++c) {
            double ox = std::min(v.x1, (c + 1) * cw) - std::max(v.x0, c * cw);
            if (ox <= 0) continue;
            out.emplace_back(r * g.cols + c, ox * oy / area);
        }
    }
    return out;
}

double median_dwell_ms(const telemetry::Session& s) {
    telemetry::check_session(s);
    std::vector<double> gaps;
    gaps.reserve(s.samples.size() - 1);
    for (std::size_t i = 0; i + 1 < s.samples.size(); ++i)
        gaps.push_back(static_cast<double>(s.samples[i + 1].t_ms - s.samples[i].t_ms));
    std::sort(gaps.begin(), gaps.end());
    std::size_t n = gaps.size();
    return n % 2 == 1 ? gaps[n / 2] : 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]);
}

std::vector<double> sample_dwells_ms(const telemetry::Session& s) {
    std::vector<double> dwells(s.samples.size());
    for (std::size_t i = 0; i + 1 < s.samples.size(); ++i)
        dwells[i] = static_cast<double>(s.samples[i + 1].t_ms - s.samples[i].t_ms);
    dwells.back() = median_dwell_ms(s);
    return dwells;
}

Heatmap accumulate(const telemetry::Session& s, const GridSpec& g, const SampleFilter& f) {
    telemetry::check_session(s);
    if (f.time_fraction && !(*f.time_fraction > 0.0 && *f.time_fraction <= 1.0))
        throw DataError("MalformedRecord", "time_fraction must lie in (0,1]");
    if (f.mag_bin && !(f.mag_bin->first < f.mag_bin->second))
        throw DataError("MalformedRecord", "mag_bin must satisfy lo < hi");
    const auto dwells = sample_dwells_ms(s);
    const std::int64_t first = s.samples.front().t_ms;
    const std::int64_t duration = s.duration_ms();
    Heatmap m = Heatmap::zeros(g);
    std::size_t retained = 0;
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        if (!f.passes(s.samples[i], first, duration)) continue;
        ++retained;
        for (const auto& [cell, w] : footprint_weights(s.samples[i], g))
            m.values[cell] += dwells[i] * w;
    }
    if (retained == 0) throw NumericError("EmptyAfterFilter", "no samples pass the filter");
    return m;
}

std::vector<Heatmap> temporal_stack(const telemetry::Session& s, const GridSpec& g,
                                    const std::vector<double>& fractions) {
    if (fractions.empty()) throw DataError("MalformedRecord", "need at least one fraction");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] <= 1.0))
            throw DataError("MalformedRecord", "fractions must lie in (0,1]");
        if (i > 0 && fractions[i] <= fractions[i - 1])
            throw DataError("MalformedRecord", "fractions must be strictly increasing");
    }
    std::vector<Heatmap> stack;
    stack.reserve(fractions.size());
    for (double f : fractions) {
        SampleFilter filter;
        filter.time_fraction = f;
        stack.push_back(accumulate(s, g, filter));
    }
    return stack;
}

MagnificationStack magnification_stack(const telemetry::Session& s,
                                       const std::vector<MagBin>& bins) {
    telemetry::check_session(s);
    for (const auto& b : bins)
        if (!(b.lo < b.hi) || b.rows < 1 || b.cols < 1)
            throw DataError("MalformedRecord", "bad magnification bin '" + b.label + "'");
    const auto dwells = sample_dwells_ms(s);
    MagnificationStack out;
    out.entries.reserve(bins.size());
    for (const auto& b : bins) out.entries.push_back({b, Heatmap::zeros(b.grid()), true, 0});
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        bool binned = false;
        for (auto& e : out.entries) {
            if (!e.bin.contains(s.samples[i].mag)) continue;
            for (const auto& [cell, w] : footprint_weights(s.samples[i], e.bin.grid()))
                e.map.values[cell] += dwells[i] * w;
            e.empty = false;
            e.n_samples += 1;
            binned = true;
            break;  // bins are disjoint; first match wins if they are not
        }
        if (!binned) {
            out.dropped_samples += 1;
            out.dropped_mass += dwells[i];
        }
    }
    return out;
}

Heatmap normalize(const Heatmap& m, Norm mode) {
    for (double v : m.values)
        if (!std::isfinite(v)) throw DataError("NonFiniteValue", "map contains NaN/Inf");
    Heatmap out = m;
    out.norm = mode;
    const std::size_t n = m.values.size();
    if (n == 0) throw NumericError("DegenerateMap", "empty map");
    switch (mode) {
        case Norm::raw:
            out.norm = Norm::raw;
            return out;
        case Norm::unit_sum: {
            double sum = m.total();
            if (!(sum > 0.0)) throw NumericError("DegenerateMap", "zero map cannot be unit_sum");
            for (double& v : out.values) v /= sum;
            return out;
        }
        case Norm::minmax: {
            auto [mn, mx] = std::minmax_element(m.values.begin(), m.values.end());
            if (!(*mx > *mn)) throw NumericError("DegenerateMap", "constant map cannot be minmax");
            double span = *mx - *mn;
            for (double& v : out.values) v = (v - *mn) / span;
            return out;
        }
        case Norm::zscore: {
            double mean = m.total() / static_cast<double>(n);
            double var = 0.0;
            for (double v : m.values) var += (v - mean) * (v - mean);
            var /= static_cast<double>(n);  // population variance
            if (!(var > 0.0)) throw NumericError("DegenerateMap", "constant map cannot be zscore");
            double sd = std::sqrt(var);
            for (double& v : out.values) v = (v - mean) / sd;
            return out;
        }
    }
    throw NumericError("DegenerateMap", "unreachable");
}

Heatmap resample(const Heatmap& m, const GridSpec& new_grid) {
    if (m.norm != Norm::raw && m.norm != Norm::unit_sum)
        throw DataError("InvalidNorm", "resample needs a raw or unit_sum map");
    if (new_grid.rows < 1 || new_grid.cols < 1)
        throw DataError("GridMismatch", "target grid must be at least 1x1");
    Heatmap out = Heatmap::zeros(new_grid);
    out.norm = m.norm;
    if (m.grid.same_dims(new_grid)) {
        out.values = m.values;
        return out;
    }
    // 1-D overlap fractions, row axis and column axis separately; each source
    // cell's mass is spread over the target cells it intersects.
    auto overlaps = [](int n_src, int n_dst) {
        // [src][(dst, fraction of src interval)]
        std::vector<std::vector<std::pair<int, double>>> table(n_src);
        for (int i = 0; i < n_src; ++i) {
            double lo = static_cast<double>(i) / n_src;
            double hi = static_cast<double>(i + 1) / n_src;
            int j0 = std::clamp(static_cast<int>(std::floor(lo * n_dst)), 0, n_dst - 1);
            int j1 = std::clamp(static_cast<int>(std::ceil(hi * n_dst)) - 1, 0, n_dst - 1);
            for (int j = j0; j <= j1; ++j) {
                double o = std::min(hi, static_cast<double>(j + 1) / n_dst) -
                           std::max(lo, static_cast<double>(j) / n_dst);
                if (o > 0) table[i].emplace_back(j, o * n_src);
            }
        }
        return table;
    };
    const auto row_tab = overlaps(m.grid.rows, new_grid.rows);
    const auto col_tab = overlaps(m.grid.cols, new_grid.cols);
    for (int r = 0; r < m.grid.rows; ++r)
        for (int c = 0; c < m.grid.cols; ++c) {
            double v = m.at(r, c);
            if (v == 0.0) continue;
            for (const auto& [tr, fr] : row_tab[r])
                for (const auto& [tc, fc] : col_tab[c]) out.at(tr, tc) += v * fr * fc;
        }
    return out;
}

Heatmap gaussian_blur(const Heatmap& m, double sigma_cells) {
    if (!(sigma_cells > 0.0)) return m;
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_cells)));
    std::vector<double> kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i)
        kernel[i + radius] = std::exp(-0.5 * (i / sigma_cells) * (i / sigma_cells));

    // scatter with per-source renormalisation so total mass is unchanged
    auto blur_axis = [&](const std::vector<double>& in, int rows, int cols, bool along_cols) {
        std::vector<double> out(in.size(), 0.0);
        int len = along_cols ? cols : rows;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                double v = in[static_cast<std::size_t>(r) * cols + c];
                if (v == 0.0) continue;
                int pos = along_cols ? c : r;
                double norm = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    int q = pos + k;
                    if (q >= 0 && q < len) norm += kernel[k + radius];
                }
                for (int k = -radius; k <= radius; ++k) {
                    int q = pos + k;
                    if (q < 0 || q >= len) continue;
                    std::size_t idx = along_cols ? static_cast<std::size_t>(r) * cols + q
                                                 : static_cast<std::size_t>(q) * cols + c;
                    out[idx] += v * kernel[k + radius] / norm;
                }
            }
        return out;
    };
    Heatmap out = m;
    out.values = blur_axis(out.values, m.grid.rows, m.grid.cols, true);
    out.values = blur_axis(out.values, m.grid.rows, m.grid.cols, false);
    return out;
}

telemetry::TensorFile to_atnt(const Heatmap& m) {
    telemetry::TensorFile t;
    t.dims = {static_cast<std::uint32_t>(m.grid.rows), static_cast<std::uint32_t>(m.grid.cols)};
    t.data.assign(m.values.begin(), m.values.end());
    return t;
}

Heatmap heatmap_from_atnt(const telemetry::TensorFile& t, std::string mag_level) {
    if (t.dims.size() != 2)
        throw DataError("DimMismatch", "heatmap needs 2 dims, got " + std::to_string(t.dims.size()));
    Heatmap m;
    m.grid = {static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), std::move(mag_level)};
    m.values.assign(t.data.begin(), t.data.end());
    return m;
}

}  // namespace attnscope::heatmap
