#include <cmath>
#include <vector>

#include "attnscope/error.hpp"
#include "attnscope/metrics.hpp"
#include "attnscope/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace attnscope;
using namespace attnscope::metrics;
using heatmap::GridSpec;
using heatmap::Heatmap;
using testsup::thrown_code;

namespace {

Heatmap map_of(int rows, int cols, std::vector<double> values) {
    Heatmap m = Heatmap::zeros(GridSpec{rows, cols, ""});
    m.values = std::move(values);
    return m;
}

}  // namespace

TEST_CASE("cc: perfectly correlated and anti-correlated maps") {
    Heatmap a = map_of(2, 2, {0, 1, 2, 3});
    Heatmap b = map_of(2, 2, {3, 2, 1, 0});
    CHECK(cc(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cc(a, b) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("cc: invariant under positive affine transforms, symmetric, bounded") {
    rng::Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        Heatmap a = testsup::random_map(rng, 5, 5);
        Heatmap b = testsup::random_map(rng, 5, 5);
        double r = cc(a, b);
        CHECK(r >= -1.0 - 1e-12);
        CHECK(r <= 1.0 + 1e-12);
        CHECK(cc(b, a) == doctest::Approx(r).epsilon(1e-12));

        Heatmap a2 = a;
        for (auto& v : a2.values) v = 2.0 * v + 5.0;
        CHECK(cc(a2, b) == doctest::Approx(r).epsilon(1e-9));

        CHECK(r == doctest::Approx(oracle::pearson(a.values, b.values)).epsilon(1e-9));
    }
}

TEST_CASE("cc: shape and degeneracy errors") {
    Heatmap a = map_of(2, 2, {0, 1, 2, 3});
    Heatmap c = map_of(2, 3, {0, 1, 2, 3, 4, 5});
    CHECK(thrown_code([&] { cc(a, c); }) == "GridMismatch");
    Heatmap flat = map_of(2, 2, {1, 1, 1, 1});
    CHECK(thrown_code([&] { cc(a, flat); }) == "DegenerateMap");
    CHECK(thrown_code([&] { cc(flat, a); }) == "DegenerateMap");
}

TEST_CASE("nss: hand-computed value on a 2x2 ramp") {
    Heatmap m = map_of(2, 2, {1, 3, 5, 7});
    // mean 4, population std sqrt(5); value at (1,1) is 7
    double v = nss(m, {{1, 1}});
    CHECK(v == doctest::Approx(3.0 / std::sqrt(5.0)).epsilon(1e-12));
}

TEST_CASE("nss: fixating every cell averages to zero") {
    rng::Rng rng(103);
    Heatmap m = testsup::random_map(rng, 4, 5);
    Fixations all;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 5; ++c) all.push_back({r, c});
    CHECK(nss(m, all) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("nss: errors for empty, out-of-range and constant inputs") {
    Heatmap m = map_of(2, 2, {1, 3, 5, 7});
    CHECK(thrown_code([&] { nss(m, {}); }) == "EmptyFixations");
    CHECK(thrown_code([&] { nss(m, {{2, 0}}); }) == "OutOfBounds");
    CHECK(thrown_code([&] { nss(m, {{0, -1}}); }) == "OutOfBounds");
    Heatmap flat = map_of(2, 2, {1, 1, 1, 1});
    CHECK(thrown_code([&] { nss(flat, {{0, 0}}); }) == "DegenerateMap");
}

TEST_CASE("nss: matches the oracle on random maps and fixation sets") {
    rng::Rng rng(107);
    for (int trial = 0; trial < 100; ++trial) {
        int rows = 2 + static_cast<int>(rng.bounded(8));
        int cols = 2 + static_cast<int>(rng.bounded(8));
        Heatmap m = testsup::random_map(rng, rows, cols);
        Fixations fix;
        std::vector<std::size_t> idx;
        int n_fix = 1 + static_cast<int>(rng.bounded(6));
        for (int i = 0; i < n_fix; ++i) {
            int r = static_cast<int>(rng.bounded(rows));
            int c = static_cast<int>(rng.bounded(cols));
            fix.push_back({r, c});
            idx.push_back(static_cast<std::size_t>(r) * cols + c);
        }
        CHECK(nss(m, fix) == doctest::Approx(oracle::nss(m.values, idx)).epsilon(1e-9));
    }
}

TEST_CASE("kld: zero for identical distributions, known value for a biased coin") {
    Heatmap p = map_of(1, 2, {0.5, 0.5});
    Heatmap q = map_of(1, 2, {0.25, 0.75});
    CHECK(kld(p, p) == doctest::Approx(0.0).epsilon(1e-12));
    // 0.5*ln(2) + 0.5*ln(2/3) = 0.5*ln(4/3)
    CHECK(kld(p, q) == doctest::Approx(0.143841).epsilon(1e-6));
    CHECK(kld(p, q) == doctest::Approx(0.5 * std::log(4.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("kld: nonnegative, asymmetric, matches the oracle") {
    rng::Rng rng(109);
    for (int trial = 0; trial < 100; ++trial) {
        Heatmap p = testsup::random_map(rng, 4, 4, /*nonneg=*/true);
        Heatmap q = testsup::random_map(rng, 4, 4, /*nonneg=*/true);
        double forward = kld(p, q);
        CHECK(forward >= -1e-12);
        CHECK(forward == doctest::Approx(oracle::kld(p.values, q.values)).epsilon(1e-9));
    }
    // a generic pair is asymmetric (a pure reversal would not be)
    Heatmap p = map_of(1, 3, {0.7, 0.2, 0.1});
    Heatmap q = map_of(1, 3, {0.25, 0.5, 0.25});
    CHECK(std::fabs(kld(p, q) - kld(q, p)) > 1e-3);
}

TEST_CASE("kld: rejects zero maps and mismatched grids") {
    Heatmap z = map_of(2, 2, {0, 0, 0, 0});
    Heatmap p = map_of(2, 2, {1, 2, 3, 4});
    CHECK(thrown_code([&] { kld(z, p); }) == "ZeroMap");
    CHECK(thrown_code([&] { kld(p, z); }) == "ZeroMap");
    Heatmap other = map_of(1, 4, {1, 2, 3, 4});
    CHECK(thrown_code([&] { kld(p, other); }) == "GridMismatch");
}

TEST_CASE("kld: zero cells are handled by the epsilon floor") {
    Heatmap p = map_of(1, 3, {1.0, 0.0, 0.0});
    Heatmap q = map_of(1, 3, {0.0, 1.0, 0.0});
    double d = kld(p, q);
    CHECK(std::isfinite(d));
    CHECK(d > 10.0);  // ~ln(1/eps)
}

TEST_CASE("kld direction names round-trip") {
    CHECK(kld_direction_from_string("gt_to_pred") == KldDirection::gt_to_pred);
    CHECK(kld_direction_from_string("pred_to_gt") == KldDirection::pred_to_gt);
    CHECK(std::string(to_string(KldDirection::gt_to_pred)) == "gt_to_pred");
    CHECK(thrown_code([] { kld_direction_from_string("both"); }) == "MalformedRecord");
}

TEST_CASE("mask scores: map proportional to the mask is a perfect match") {
    Heatmap mask = map_of(2, 2, {1, 0, 0, 1});
    Heatmap m = map_of(2, 2, {3, 0, 0, 3});
    SegScores s = eval_against_mask(m, mask);
    REQUIRE(s.cc_seg.has_value());
    CHECK(*s.cc_seg == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(s.kld_seg.has_value());
    CHECK(*s.kld_seg == doctest::Approx(0.0).epsilon(1e-9));
    REQUIRE(s.nss_seg.has_value());
    CHECK(*s.nss_seg > 0.0);
}

TEST_CASE("mask scores: degenerate metrics are unset, not raised") {
    Heatmap mask = map_of(2, 2, {1, 0, 0, 1});
    Heatmap uniform = map_of(2, 2, {1, 1, 1, 1});
    SegScores s = eval_against_mask(uniform, mask);
    CHECK_FALSE(s.cc_seg.has_value());   // constant map has no correlation
    CHECK_FALSE(s.nss_seg.has_value());  // nor z-scores
    CHECK(s.kld_seg.has_value());        // but KL against it is fine

    Heatmap empty_mask = map_of(2, 2, {0, 0, 0, 0});
    Heatmap m = map_of(2, 2, {1, 2, 3, 4});
    SegScores t = eval_against_mask(m, empty_mask);
    CHECK_FALSE(t.cc_seg.has_value());
    CHECK_FALSE(t.nss_seg.has_value());
    CHECK_FALSE(t.kld_seg.has_value());
}

TEST_CASE("mask scores: agree with computing each metric directly") {
    rng::Rng rng(113);
    for (int trial = 0; trial < 50; ++trial) {
        Heatmap m = testsup::random_map(rng, 5, 5, true);
        Heatmap mask = Heatmap::zeros(GridSpec{5, 5, ""});
        for (auto& v : mask.values) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
        SegScores s = eval_against_mask(m, mask);
        bool any_on = mask.total() > 0;
        if (!any_on) {
            CHECK_FALSE(s.cc_seg.has_value());
            continue;
        }
        REQUIRE(s.cc_seg.has_value());
        CHECK(*s.cc_seg == doctest::Approx(cc(m, mask)).epsilon(1e-12));
        REQUIRE(s.kld_seg.has_value());
        CHECK(*s.kld_seg == doctest::Approx(kld(mask, m)).epsilon(1e-12));
        Fixations on_cells;
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 5; ++c)
                if (mask.at(r, c) > 0.5) on_cells.push_back({r, c});
        REQUIRE(s.nss_seg.has_value());
        CHECK(*s.nss_seg == doctest::Approx(nss(m, on_cells)).epsilon(1e-12));
    }
}

TEST_CASE("fixations: viewport centers land in their grid cells") {
    auto s = testsup::make_session({testsup::sample(0, 0.125, 0.125, 0.1, 10),
                                    testsup::sample(100, 0.875, 0.625, 0.1, 2.0),
                                    testsup::sample(200, 0.375, 0.875, 0.1, 10)});
    GridSpec g{4, 4, ""};
    Fixations all = fixations_from_session(s, g);
    REQUIRE(all.size() == 3);
    CHECK(all[0].row == 0);
    CHECK(all[0].col == 0);
    CHECK(all[1].row == 2);
    CHECK(all[1].col == 3);
    CHECK(all[2].row == 3);
    CHECK(all[2].col == 1);

    heatmap::SampleFilter f;
    f.mag_bin = {7.0, 15.0};
    Fixations filtered = fixations_from_session(s, g, f);
    REQUIRE(filtered.size() == 2);
    CHECK(filtered[1].row == 3);
}
