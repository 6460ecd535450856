#pragma once

#include <optional>
#include <string>
#include <vector>

#include "attnscope/heatmap.hpp"
#include "attnscope/telemetry.hpp"

// Cohort-level statistics: grade concordance, pairwise attention agreement,
// and the per-expertise regression relating the two.

namespace attnscope::analysis {

// Inclusive contiguous range of legal grades. Both components of a grade
// pair share the same domain.
struct GradeDomain {
    int lo = 3;
    int hi = 5;

    bool contains(int g) const { return g >= lo && g <= hi; }
    int span() const { return hi - lo; }
};

// Normalized concordance between two grade pairs:
//   1 - sqrt(dPG^2 + dSG^2) / sqrt(2 * span^2)
// The denominator uses the largest squared difference achievable over the
// domain, not over any observed cohort, so scores are comparable across
// slides. Symmetric, in [0,1], 1 iff identical.
double grade_concordance(const telemetry::GradePair& gi, const telemetry::GradePair& gj,
                         const GradeDomain& domain = {});

// Mean Pearson correlation over all unordered map pairs.
double pairwise_attention_agreement(const std::vector<heatmap::Heatmap>& maps);

// Mean grade_concordance over all unordered grade pairs.
double mean_pairwise_concordance(const std::vector<telemetry::GradePair>& grades,
                                 const GradeDomain& domain = {});

struct Regression {
    double r = 0;
    double p = 1;  // two-tailed
    double slope = 0;
    double intercept = 0;
    int n = 0;
};

// Two-tailed tail mass of Student's t distribution with df degrees of
// freedom, via the regularized incomplete beta function. |error| < 1e-10.
double student_t_two_tailed_p(double t, double df);

// Pearson r with least-squares line and a two-tailed p-value from
// t = r * sqrt((n-2)/(1-r^2)). Collinear inputs report p = 0.
Regression pearson_with_p(const std::vector<double>& xs, const std::vector<double>& ys);

// One point per (wsi, expertise) with at least two graded readers.
struct WsiAgreementPoint {
    std::string wsi_id;
    telemetry::Expertise expertise;
    int n_readers = 0;
    double attn_agreement = 0;    // mean pairwise map correlation, in [-1,1]
    double grade_concordance = 0; // mean pairwise concordance, in [0,1]
};

struct GroupStats {
    telemetry::Expertise expertise;
    int n_points = 0;
    std::optional<Regression> regression;  // absent below 3 points or for constant inputs
    double mean_agreement = 0;
    double mean_concordance = 0;
};

struct AgreementReport {
    std::vector<WsiAgreementPoint> points;  // ordered by (wsi_id, expertise)
    std::vector<GroupStats> groups;         // ordered by expertise, only non-empty groups
};

// Full agreement pipeline. Per reader, sessions of one slide are merged by
// summing dwell maps; the grade comes from the graded session with the
// greatest session_id, which keeps the report independent of input order.
// Ungraded readers and degenerate map pairs are skipped; a point is emitted
// only when two or more readers survive.
AgreementReport expertise_agreement_report(const std::vector<telemetry::Session>& sessions,
                                           const heatmap::GridSpec& grid = {50, 50, "10x"},
                                           const GradeDomain& domain = {});

}  // namespace attnscope::analysis
