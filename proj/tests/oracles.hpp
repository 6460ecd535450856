// Brute-force reference implementations used to cross-check the library.
// Everything here is written the slow, obvious way on purpose; none of it
// shares code with the core modules.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Population standard deviation (divide by n, not n-1).
inline double pop_std(const std::vector<double>& v) {
    double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::runtime_error("pearson oracle: bad input");
    double ma = mean_of(a), mb = mean_of(b);
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

// NSS: z-score the map with population stats, average at fixated cells.
inline double nss(const std::vector<double>& map, const std::vector<std::size_t>& fix_idx) {
    double m = mean_of(map), sd = pop_std(map);
    double s = 0.0;
    for (std::size_t i : fix_idx) s += (map[i] - m) / sd;
    return s / static_cast<double>(fix_idx.size());
}

// KL(gt || pred) in nats. Both sides normalised to sum 1, then floored at eps
// and renormalised.
inline double kld(std::vector<double> gt, std::vector<double> pred, double eps = 1e-8) {
    auto prep = [eps](std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        for (double& x : v) x /= s;
        s = 0.0;
        for (double& x : v) {
            x = std::max(x, eps);
            s += x;
        }
        for (double& x : v) x /= s;
    };
    prep(gt);
    prep(pred);
    double d = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) d += gt[i] * std::log(gt[i] / pred[i]);
    return d;
}

// Grade concordance for (primary, secondary) pairs on the 3..5 grade scale.
inline double concordance(int pg_a, int sg_a, int pg_b, int sg_b) {
    double dp = pg_a - pg_b, ds = sg_a - sg_b;
    return 1.0 - std::sqrt(dp * dp + ds * ds) / std::sqrt(8.0);
}

inline double accuracy(const std::vector<std::vector<double>>& scores,
                       const std::vector<int>& labels) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < scores[i].size(); ++c)
            if (scores[i][c] > scores[i][arg]) arg = c;
        if (static_cast<int>(arg) == labels[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

// Macro F1 over all classes; a class with zero precision+recall contributes 0.
inline double macro_f1(const std::vector<std::vector<double>>& scores,
                       const std::vector<int>& labels, int n_classes) {
    std::vector<int> preds(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < scores[i].size(); ++c)
            if (scores[i][c] > scores[i][arg]) arg = c;
        preds[i] = static_cast<int>(arg);
    }
    double sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (preds[i] == c && labels[i] == c) tp += 1;
            if (preds[i] == c && labels[i] != c) fp += 1;
            if (preds[i] != c && labels[i] == c) fn += 1;
        }
        double denom = 2 * tp + fp + fn;
        sum += denom > 0 ? 2 * tp / denom : 0.0;
    }
    return sum / n_classes;
}

// Binary AUC by exhaustive pair counting; ties count 0.5.
inline double auc_binary(const std::vector<double>& score_pos_class,
                         const std::vector<int>& is_pos) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < is_pos.size(); ++i) {
        if (!is_pos[i]) continue;
        for (std::size_t j = 0; j < is_pos.size(); ++j) {
            if (is_pos[j]) continue;
            ++pairs;
            if (score_pos_class[i] > score_pos_class[j]) wins += 1.0;
            else if (score_pos_class[i] == score_pos_class[j]) wins += 0.5;
        }
    }
    if (pairs == 0) throw std::runtime_error("auc oracle: one class absent");
    return wins / static_cast<double>(pairs);
}

// Macro one-vs-rest AUC; classes missing a positive or negative are skipped.
inline double auc_macro_ovr(const std::vector<std::vector<double>>& scores,
                            const std::vector<int>& labels, int n_classes) {
    double sum = 0.0;
    int used = 0;
    for (int c = 0; c < n_classes; ++c) {
        std::vector<double> sc;
        std::vector<int> pos;
        int n_pos = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            sc.push_back(scores[i][c]);
            pos.push_back(labels[i] == c ? 1 : 0);
            n_pos += pos.back();
        }
        if (n_pos == 0 || n_pos == static_cast<int>(labels.size())) continue;
        sum += auc_binary(sc, pos);
        ++used;
    }
    if (used == 0) throw std::runtime_error("auc oracle: no scoreable class");
    return sum / used;
}

// Student's t density with df degrees of freedom.
inline double t_pdf(double x, double df) {
    double lg = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) -
                0.5 * std::log(df * M_PI);
    return std::exp(lg - (df + 1.0) / 2.0 * std::log1p(x * x / df));
}

// Two-tailed p via composite Simpson over [0, |t|]: p = 1 - 2 * integral.
// 200k panels is overkill but runs in microseconds per call at test sizes.
inline double t_two_tailed_p(double t, double df) {
    double a = 0.0, b = std::fabs(t);
    if (b == 0.0) return 1.0;
    const int n = 200000;
    double h = (b - a) / n;
    double s = t_pdf(a, df) + t_pdf(b, df);
    for (int i = 1; i < n; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * t_pdf(a + i * h, df);
    double integral = s * h / 3.0;
    double p = 1.0 - 2.0 * integral;
    return std::min(std::max(p, 0.0), 1.0);
}

inline double p_from_r(double r, std::size_t n) {
    double t = r * std::sqrt((static_cast<double>(n) - 2.0) / (1.0 - r * r));
    return t_two_tailed_p(t, static_cast<double>(n) - 2.0);
}

// Fraction of the [x0,x1]x[y0,y1] box lying inside grid cell (row, col) of a
// rows x cols grid over the unit square, relative to the box area.
inline double footprint_cell(double x0, double y0, double x1, double y1,
                             std::size_t row, std::size_t col,
                             std::size_t rows, std::size_t cols) {
    double cw = 1.0 / static_cast<double>(cols);
    double ch = 1.0 / static_cast<double>(rows);
    double cx0 = col * cw, cx1 = (col + 1) * cw;
    double cy0 = row * ch, cy1 = (row + 1) * ch;
    double ox = std::max(0.0, std::min(x1, cx1) - std::max(x0, cx0));
    double oy = std::max(0.0, std::min(y1, cy1) - std::max(y0, cy0));
    double area = (x1 - x0) * (y1 - y0);
    return ox * oy / area;
}

// Relative error used by all gradient checks.
inline double rel_err(double analytic, double numeric) {
    return std::fabs(analytic - numeric) /
           std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
}

// Central finite differences of a scalar function of a flat parameter vector.
// f must re-run the whole forward pass from scratch each call.
inline std::vector<double> numeric_grad(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-4) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double keep = x[i];
        x[i] = keep + h;
        double fp = f(x);
        x[i] = keep - h;
        double fm = f(x);
        x[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double max_grad_rel_err(const std::vector<double>& analytic,
                               const std::vector<double>& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, rel_err(analytic[i], numeric[i]));
    return worst;
}

// Closed-form parameter count for the attention transformer.
inline std::size_t transformer_param_count(std::size_t rows, std::size_t cols,
                                           std::size_t d, std::size_t layers,
                                           std::size_t mlp_ratio) {
    std::size_t n = rows * cols;
    std::size_t hidden = mlp_ratio * d;
    std::size_t per_block = 2 * d            // ln1
                            + 4 * (d * d + d)  // q, k, v, out projections
                            + 2 * d            // ln2
                            + d * hidden + hidden + hidden * d + d;  // mlp
    return n * d + layers * per_block + 2 * d + d + 1;
}

}  // namespace oracle
