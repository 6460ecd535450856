#include "attnscope/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "attnscope/error.hpp"
#include "attnscope/metrics.hpp"

namespace attnscope::analysis {

using telemetry::GradePair;
using telemetry::Session;

double grade_concordance(const GradePair& gi, const GradePair& gj, const GradeDomain& domain) {
    for (int g : {gi.primary, gi.secondary, gj.primary, gj.secondary})
        if (!domain.contains(g))
            throw DataError("GradeOutOfDomain", "grade " + std::to_string(g) + " outside [" +
                                                    std::to_string(domain.lo) + "," +
                                                    std::to_string(domain.hi) + "]");
    if (domain.span() == 0) return 1.0;
    double dp = gi.primary - gj.primary;
    double ds = gi.secondary - gj.secondary;
    double max_sq = static_cast<double>(domain.span()) * domain.span();
    return 1.0 - std::sqrt(dp * dp + ds * ds) / std::sqrt(2.0 * max_sq);
}

double pairwise_attention_agreement(const std::vector<heatmap::Heatmap>& maps) {
    if (maps.size() < 2)
        throw NumericError("TooFewMaps", "need at least 2 maps, got " + std::to_string(maps.size()));
    double sum = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < maps.size(); ++i)
        for (std::size_t j = i + 1; j < maps.size(); ++j) {
            sum += metrics::cc(maps[i], maps[j]);
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

double mean_pairwise_concordance(const std::vector<GradePair>& grades, const GradeDomain& domain) {
    if (grades.size() < 2)
        throw NumericError("TooFewGrades",
                           "need at least 2 grade pairs, got " + std::to_string(grades.size()));
    double sum = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < grades.size(); ++i)
        for (std::size_t j = i + 1; j < grades.size(); ++j) {
            sum += grade_concordance(grades[i], grades[j], domain);
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

namespace {

// Continued fraction for the regularized incomplete beta, modified Lentz.
double betacf(double a, double b, double x) {
    const int max_iter = 300;
    const double eps = 3e-16;
    const double fpmin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_bt =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_two_tailed_p(double t, double df) {
    return reg_inc_beta(df / 2.0, 0.5, df / (df + t * t));
}

Regression pearson_with_p(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw DataError("SizeMismatch", std::to_string(xs.size()) + " xs vs " +
                                            std::to_string(ys.size()) + " ys");
    const std::size_t n = xs.size();
    if (n < 3) throw NumericError("TooFewPoints", "need at least 3 points, got " + std::to_string(n));
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0, vy = 0, cov = 0;
    for (std::size_t i = 0; i < n; ++i) {
        vx += (xs[i] - mx) * (xs[i] - mx);
        vy += (ys[i] - my) * (ys[i] - my);
        cov += (xs[i] - mx) * (ys[i] - my);
    }
    if (!(vx > 0)) throw NumericError("ConstantInput", "xs are constant");
    if (!(vy > 0)) throw NumericError("ConstantInput", "ys are constant");
    Regression reg;
    reg.n = static_cast<int>(n);
    reg.r = std::clamp(cov / std::sqrt(vx * vy), -1.0, 1.0);
    reg.slope = cov / vx;
    reg.intercept = my - reg.slope * mx;
    double one_minus_r2 = 1.0 - reg.r * reg.r;
    if (one_minus_r2 <= 1e-15) {
        reg.p = 0.0;  // collinear, tail mass below representable precision
    } else {
        double t = std::fabs(reg.r) * std::sqrt((n - 2) / one_minus_r2);
        reg.p = student_t_two_tailed_p(t, static_cast<double>(n - 2));
    }
    return reg;
}

namespace {

struct ReaderAggregate {
    heatmap::Heatmap map;
    std::optional<GradePair> grade;
    std::string grade_session;  // session_id the grade was taken from
};

}  // namespace

AgreementReport expertise_agreement_report(const std::vector<Session>& sessions,
                                           const heatmap::GridSpec& grid,
                                           const GradeDomain& domain) {
    // (wsi, expertise) -> reader -> merged map + grade
    std::map<std::pair<std::string, int>, std::map<std::string, ReaderAggregate>> groups;
    for (const auto& s : sessions) {
        telemetry::check_session(s);
        auto key = std::make_pair(s.wsi_id, static_cast<int>(s.expertise));
        auto& agg = groups[key][s.pathologist_id];
        heatmap::Heatmap m = heatmap::accumulate(s, grid);
        if (agg.map.values.empty()) {
            agg.map = std::move(m);
        } else {
            for (std::size_t i = 0; i < agg.map.values.size(); ++i)
                agg.map.values[i] += m.values[i];
        }
        if (s.grade && (!agg.grade || s.session_id > agg.grade_session)) {
            agg.grade = s.grade;
            agg.grade_session = s.session_id;
        }
    }

    AgreementReport report;
    for (const auto& [key, readers] : groups) {
        std::vector<heatmap::Heatmap> maps;
        std::vector<GradePair> grades;
        for (const auto& [reader, agg] : readers) {
            if (!agg.grade) continue;
            maps.push_back(agg.map);
            grades.push_back(*agg.grade);
        }
        if (maps.size() < 2) continue;
        double cc_sum = 0;
        std::size_t cc_pairs = 0;
        for (std::size_t i = 0; i < maps.size(); ++i)
            for (std::size_t j = i + 1; j < maps.size(); ++j) {
                try {
                    cc_sum += metrics::cc(maps[i], maps[j]);
                    ++cc_pairs;
                } catch (const NumericError&) {
                    // constant map, pair carries no signal
                }
            }
        if (cc_pairs == 0) continue;
        WsiAgreementPoint pt;
        pt.wsi_id = key.first;
        pt.expertise = static_cast<telemetry::Expertise>(key.second);
        pt.n_readers = static_cast<int>(maps.size());
        pt.attn_agreement = cc_sum / static_cast<double>(cc_pairs);
        pt.grade_concordance = mean_pairwise_concordance(grades, domain);
        report.points.push_back(std::move(pt));
    }
    std::sort(report.points.begin(), report.points.end(),
              [](const WsiAgreementPoint& a, const WsiAgreementPoint& b) {
                  if (a.wsi_id != b.wsi_id) return a.wsi_id < b.wsi_id;
                  return static_cast<int>(a.expertise) < static_cast<int>(b.expertise);
              });

    for (int e = 0; e < 3; ++e) {
        std::vector<double> agree, concord;
        for (const auto& pt : report.points)
            if (static_cast<int>(pt.expertise) == e) {
                agree.push_back(pt.attn_agreement);
                concord.push_back(pt.grade_concordance);
            }
        if (agree.empty()) continue;
        GroupStats gs;
        gs.expertise = static_cast<telemetry::Expertise>(e);
        gs.n_points = static_cast<int>(agree.size());
        double sa = 0, sc = 0;
        for (std::size_t i = 0; i < agree.size(); ++i) {
            sa += agree[i];
            sc += concord[i];
        }
        gs.mean_agreement = sa / static_cast<double>(agree.size());
        gs.mean_concordance = sc / static_cast<double>(agree.size());
        if (agree.size() >= 3) {
            try {
                gs.regression = pearson_with_p(agree, concord);
            } catch (const NumericError&) {
                // constant columns, slope undefined
            }
        }
        report.groups.push_back(std::move(gs));
    }
    return report;
}

}  // namespace attnscope::analysis
