#pragma once

#include <optional>
#include <vector>

#include "attnscope/heatmap.hpp"

namespace attnscope::metrics {

struct Cell {
    int row = 0;
    int col = 0;
};

// Viewport-center cells of a session mapped onto a grid; the fixation proxy.
using Fixations = std::vector<Cell>;

Fixations fixations_from_session(const telemetry::Session& s, const heatmap::GridSpec& g,
                                 const heatmap::SampleFilter& f = {});

// Pearson correlation of the flattened maps. Symmetric, in [-1,1], invariant
// under positive affine transforms of either argument.
double cc(const heatmap::Heatmap& a, const heatmap::Heatmap& b);

// Mean z-scored map value (population std) at the fixation cells.
double nss(const heatmap::Heatmap& map, const Fixations& fix);

// KL(P||Q) in nats between the unit_sum-normalized maps; both sides floored
// at eps and renormalised first. P is the ground truth by convention.
double kld(const heatmap::Heatmap& p, const heatmap::Heatmap& q, double eps = 1e-8);

enum class KldDirection { gt_to_pred, pred_to_gt };
KldDirection kld_direction_from_string(std::string_view s);
const char* to_string(KldDirection d);

// Map-versus-tumor-annotation scores. A metric whose preconditions fail
// (constant map, ...) is reported as unset rather than raised.
struct SegScores {
    std::optional<double> cc_seg;
    std::optional<double> nss_seg;   // NSS at the cells where mask > 0.5
    std::optional<double> kld_seg;   // KL(mask || map), both unit_sum
};

SegScores eval_against_mask(const heatmap::Heatmap& map, const heatmap::Heatmap& mask);

}  // namespace attnscope::metrics
