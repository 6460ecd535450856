#include "attnscope/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "attnscope/error.hpp"

namespace attnscope::metrics {

using heatmap::Heatmap;

Fixations fixations_from_session(const telemetry::Session& s, const heatmap::GridSpec& g,
                                 const heatmap::SampleFilter& f) {
    telemetry::check_session(s);
    Fixations fix;
    const std::int64_t first = s.samples.front().t_ms;
    const std::int64_t duration = s.duration_ms();
    for (const auto& v : s.samples) {
        if (!f.passes(v, first, duration)) continue;
        int r = std::clamp(static_cast<int>(v.center_y() * g.rows), 0, g.rows - 1);
        int c = std::clamp(static_cast<int>(v.center_x() * g.cols), 0, g.cols - 1);
        fix.push_back({r, c});
    }
    return fix;
}

namespace {

struct Moments {
    double mean = 0;
    double var = 0;  // population
};

Moments moments(const std::vector<double>& v) {
    Moments m;
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(v.size());
    for (double x : v) m.var += (x - m.mean) * (x - m.mean);
    m.var /= static_cast<double>(v.size());
    return m;
}

void require_same_dims(const Heatmap& a, const Heatmap& b) {
    if (!a.grid.same_dims(b.grid))
        throw DataError("GridMismatch", std::to_string(a.grid.rows) + "x" +
                                               std::to_string(a.grid.cols) + " vs " +
                                               std::to_string(b.grid.rows) + "x" +
                                               std::to_string(b.grid.cols));
}

}  // namespace

double cc(const Heatmap& a, const Heatmap& b) {
    require_same_dims(a, b);
    const std::size_t n = a.values.size();
    if (n < 2) throw NumericError("DegenerateMap", "need at least 2 cells");
    Moments ma = moments(a.values), mb = moments(b.values);
    if (!(ma.var > 0)) throw NumericError("DegenerateMap", "first map is constant");
    if (!(mb.var > 0)) throw NumericError("DegenerateMap", "second map is constant");
    double cov = 0;
    for (std::size_t i = 0; i < n; ++i) cov += (a.values[i] - ma.mean) * (b.values[i] - mb.mean);
    cov /= static_cast<double>(n);
    return cov / std::sqrt(ma.var * mb.var);
}

double nss(const Heatmap& map, const Fixations& fix) {
    if (fix.empty()) throw NumericError("EmptyFixations", "no fixation cells");
    Moments m = moments(map.values);
    if (!(m.var > 0)) throw NumericError("DegenerateMap", "map is constant");
    double sd = std::sqrt(m.var);
    double sum = 0;
    for (const auto& cell : fix) {
        if (cell.row < 0 || cell.row >= map.grid.rows || cell.col < 0 || cell.col >= map.grid.cols)
            throw DataError("OutOfBounds", "fixation (" + std::to_string(cell.row) + "," +
                                                  std::to_string(cell.col) + ") outside grid");
        sum += (map.at(cell.row, cell.col) - m.mean) / sd;
    }
    return sum / static_cast<double>(fix.size());
}

double kld(const Heatmap& p, const Heatmap& q, double eps) {
    require_same_dims(p, q);
    auto distribution = [eps](const Heatmap& m, const char* which) {
        double sum = m.total();
        if (!(sum > 0)) throw NumericError("ZeroMap", std::string(which) + " map has no mass");
        std::vector<double> d(m.values.size());
        double floored_sum = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            d[i] = std::max(m.values[i] / sum, eps);
            floored_sum += d[i];
        }
        for (double& v : d) v /= floored_sum;
        return d;
    };
    const auto dp = distribution(p, "first");
    const auto dq = distribution(q, "second");
    double kl = 0;
    for (std::size_t i = 0; i < dp.size(); ++i) kl += dp[i] * std::log(dp[i] / dq[i]);
    return std::max(kl, 0.0);  // clamp tiny negative round-off on p == q
}

KldDirection kld_direction_from_string(std::string_view s) {
    if (s == "gt_to_pred") return KldDirection::gt_to_pred;
    if (s == "pred_to_gt") return KldDirection::pred_to_gt;
    throw DataError("MalformedRecord", "unknown kld direction '" + std::string(s) + "'");
}

const char* to_string(KldDirection d) {
    return d == KldDirection::gt_to_pred ? "gt_to_pred" : "pred_to_gt";
}

SegScores eval_against_mask(const Heatmap& map, const Heatmap& mask) {
    require_same_dims(map, mask);
    for (double v : mask.values)
        if (!(v >= 0.0 && v <= 1.0)) throw DataError("MalformedRecord", "mask values must lie in [0,1]");
    SegScores out;
    try {
        out.cc_seg = cc(map, mask);
    } catch (const NumericError&) {
    }
    Fixations mask_cells;
    for (int r = 0; r < mask.grid.rows; ++r)
        for (int c = 0; c < mask.grid.cols; ++c)
            if (mask.at(r, c) > 0.5) mask_cells.push_back({r, c});
    try {
        out.nss_seg = nss(map, mask_cells);
    } catch (const NumericError&) {
    }
    try {
        out.kld_seg = kld(mask, map);
    } catch (const NumericError&) {
    }
    return out;
}

}  // namespace attnscope::metrics
