#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "attnscope/error.hpp"
#include "attnscope/rng.hpp"
#include "attnscope/telemetry.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace attnscope;
using namespace attnscope::telemetry;
using testsup::thrown_code;

namespace {

const char* kThreeSampleLog =
    R"({"type":"header","session_id":"p07_wsi-012","pathologist_id":"p07","wsi_id":"wsi-012","expertise":"specialist","primary_grade":4,"secondary_grade":3,"confidence":0.8}
{"type":"sample","t_ms":0,"x0":0.1,"y0":0.2,"x1":0.35,"y1":0.45,"mag":10.0}
{"type":"sample","t_ms":120,"x0":0.15,"y0":0.2,"x1":0.4,"y1":0.45,"mag":10.0}
{"type":"sample","t_ms":250,"x0":0.5,"y0":0.5,"x1":0.75,"y1":0.75,"mag":10.0}
)";

Session two_sample_session() {
    return testsup::make_session({testsup::sample(0, 0.5, 0.5, 0.2, 10.0),
                                  testsup::sample(100, 0.6, 0.5, 0.2, 10.0)});
}

}  // namespace

TEST_CASE("session log: three-sample file parses with all fields") {
    Session s = parse_session_log(kThreeSampleLog);
    CHECK(s.session_id == "p07_wsi-012");
    CHECK(s.pathologist_id == "p07");
    CHECK(s.wsi_id == "wsi-012");
    CHECK(s.expertise == Expertise::specialist);
    REQUIRE(s.samples.size() == 3);
    CHECK(s.samples[0].t_ms == 0);
    CHECK(s.samples[2].t_ms == 250);
    CHECK(s.samples[1].x0 == doctest::Approx(0.15));
    CHECK(s.duration_ms() == 250);
    REQUIRE(s.grade.has_value());
    CHECK(s.grade->primary == 4);
    CHECK(s.grade->secondary == 3);
    REQUIRE(s.grade->confidence.has_value());
    CHECK(*s.grade->confidence == doctest::Approx(0.8));
}

TEST_CASE("session log: header without samples is rejected") {
    std::string log =
        R"({"type":"header","session_id":"a","pathologist_id":"p","wsi_id":"w","expertise":"resident","primary_grade":null,"secondary_grade":null})";
    log += "\n";
    CHECK(thrown_code([&] { parse_session_log(log); }) == "EmptySession");
}

TEST_CASE("session log: one sample is still an empty session") {
    auto s = two_sample_session();
    s.samples.resize(1);
    CHECK(thrown_code([&] { check_session(s); }) == "EmptySession");
    s.samples.clear();
    CHECK(thrown_code([&] { check_session(s); }) == "EmptySession");
}

TEST_CASE("session log: repeated timestamp is non-monotonic") {
    auto s = testsup::make_session({testsup::sample(0, 0.5, 0.5, 0.2, 10.0),
                                    testsup::sample(100, 0.5, 0.5, 0.2, 10.0),
                                    testsup::sample(100, 0.6, 0.5, 0.2, 10.0)});
    CHECK(thrown_code([&] { check_session(s); }) == "NonMonotonicTime");
}

TEST_CASE("session log: inverted and out-of-range bboxes are bad coordinates") {
    auto s = two_sample_session();
    std::swap(s.samples[1].x0, s.samples[1].x1);
    CHECK(thrown_code([&] { check_session(s); }) == "BadCoordinate");

    s = two_sample_session();
    s.samples[0].x1 = 1.2;
    CHECK(thrown_code([&] { check_session(s); }) == "BadCoordinate");

    s = two_sample_session();
    s.samples[0].y0 = -0.01;
    CHECK(thrown_code([&] { check_session(s); }) == "BadCoordinate");
}

TEST_CASE("session log: malformed lines and unknown fields") {
    CHECK(thrown_code([] { parse_session_log("not json\n"); }) == "MalformedRecord");
    CHECK(thrown_code([] { parse_session_log("{\"type\":\"mystery\"}\n"); }) ==
          "MalformedRecord");
    // sample before any header
    CHECK(thrown_code([] {
              parse_session_log(
                  R"({"type":"sample","t_ms":0,"x0":0,"y0":0,"x1":1,"y1":1,"mag":2})" "\n");
          }) == "MalformedRecord");
    CHECK(thrown_code([] { parse_session_log(""); }) == "MalformedRecord");
    // bad expertise string
    CHECK(thrown_code([] { expertise_from_string("expert"); }) == "MalformedRecord");
}

TEST_CASE("session log: write then parse is field-exact") {
    rng::Rng rng(41);
    for (int i = 0; i < 30; ++i) {
        Session s = testsup::random_session(rng);
        if (i % 2 == 0) {
            GradePair g;
            g.primary = 3 + static_cast<int>(rng.bounded(3));
            g.secondary = 3 + static_cast<int>(rng.bounded(3));
            if (i % 4 == 0) g.confidence = 0.25 * static_cast<double>(rng.bounded(5));
            s.grade = g;
        }
        Session back = parse_session_log(write_session_log(s));
        CHECK(back.session_id == s.session_id);
        CHECK(back.pathologist_id == s.pathologist_id);
        CHECK(back.wsi_id == s.wsi_id);
        CHECK(back.expertise == s.expertise);
        CHECK(back.grade.has_value() == s.grade.has_value());
        if (s.grade) {
            CHECK(back.grade->primary == s.grade->primary);
            CHECK(back.grade->secondary == s.grade->secondary);
            CHECK(back.grade->confidence == s.grade->confidence);
        }
        REQUIRE(back.samples.size() == s.samples.size());
        for (std::size_t k = 0; k < s.samples.size(); ++k) {
            CHECK(back.samples[k].t_ms == s.samples[k].t_ms);
            CHECK(back.samples[k].x0 == s.samples[k].x0);
            CHECK(back.samples[k].y0 == s.samples[k].y0);
            CHECK(back.samples[k].x1 == s.samples[k].x1);
            CHECK(back.samples[k].y1 == s.samples[k].y1);
            CHECK(back.samples[k].mag == s.samples[k].mag);
        }
    }
}

TEST_CASE("atnt: 2x2x3 tensor round-trips") {
    TensorFile t;
    t.dims = {2, 2, 3};
    for (int i = 0; i < 12; ++i) t.data.push_back(static_cast<float>(i) * 0.5f - 1.0f);
    std::string bytes = write_atnt(t);
    CHECK(bytes.size() == 4 + 4 + 1 + 1 + 3 * 4 + 12 * 4);
    CHECK(bytes.compare(0, 4, "ATNT") == 0);
    TensorFile back = read_atnt(bytes);
    CHECK(back.dims == t.dims);
    CHECK(back.data == t.data);
}

TEST_CASE("atnt: header corruption is reported by kind") {
    TensorFile t;
    t.dims = {2, 2};
    t.data = {1.f, 2.f, 3.f, 4.f};
    std::string good = write_atnt(t);

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    CHECK(thrown_code([&] { read_atnt(bad_magic); }) == "BadMagic");

    std::string bad_version = good;
    bad_version[4] = 9;
    CHECK(thrown_code([&] { read_atnt(bad_version); }) == "UnsupportedVersion");

    // payload 4 bytes short of the declared element count
    std::string truncated = good.substr(0, good.size() - 4);
    CHECK(thrown_code([&] { read_atnt(truncated); }) == "DimMismatch");

    std::string header_only = good.substr(0, 6);
    CHECK(thrown_code([&] { read_atnt(header_only); }) == "Truncated");
}

TEST_CASE("atnt: non-finite payload values are rejected") {
    TensorFile t;
    t.dims = {2};
    t.data = {1.f, std::numeric_limits<float>::quiet_NaN()};
    std::string bytes = write_atnt(t);
    CHECK(thrown_code([&] { read_atnt(bytes); }) == "NonFiniteValue");
    t.data = {1.f, std::numeric_limits<float>::infinity()};
    CHECK(thrown_code([&] { read_atnt(write_atnt(t)); }) == "NonFiniteValue");
}

TEST_CASE("atnt: write(read(bytes)) reproduces the bytes") {
    rng::Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        TensorFile t;
        int ndim = 1 + static_cast<int>(rng.bounded(4));
        std::size_t count = 1;
        for (int d = 0; d < ndim; ++d) {
            std::uint32_t dim = 1 + static_cast<std::uint32_t>(rng.bounded(5));
            t.dims.push_back(dim);
            count *= dim;
        }
        for (std::size_t i = 0; i < count; ++i)
            t.data.push_back(static_cast<float>(rng.normal()));
        std::string bytes = write_atnt(t);
        CHECK(write_atnt(read_atnt(bytes)) == bytes);
    }
}

TEST_CASE("atnt: file round-trip and feature grid conversion") {
    testsup::TempDir tmp("atnt");
    FeatureGrid g;
    g.grid_h = 3;
    g.grid_w = 4;
    g.dim = 2;
    g.data.resize(24);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = static_cast<double>(i);

    auto p = tmp.path / "feat.atnt";
    write_atnt_file(p, to_atnt(g));
    FeatureGrid back = feature_grid_from_atnt(read_atnt_file(p));
    CHECK(back.grid_h == 3);
    CHECK(back.grid_w == 4);
    CHECK(back.dim == 2);
    CHECK(back.at(2, 3, 1) == doctest::Approx(23.0));

    // a rank-2 tensor is not a feature grid
    TensorFile flat;
    flat.dims = {3, 4};
    flat.data.resize(12, 0.f);
    CHECK(thrown_code([&] { feature_grid_from_atnt(flat); }) == "DimMismatch");

    CHECK(thrown_code([&] { read_atnt_file(tmp.path / "nope.atnt"); }) == "IoError");
}

TEST_CASE("cohort summary: empty input gives empty summary") {
    CohortSummary sum = validate_cohort({});
    CHECK(sum.n_sessions == 0);
    CHECK(sum.sessions_per_expertise.empty());
    CHECK(sum.underpowered.empty());
}

TEST_CASE("cohort summary: single-reader cohorts are flagged underpowered") {
    auto a = two_sample_session();
    a.pathologist_id = "p1";
    a.session_id = "p1_w1";
    auto b = two_sample_session();
    b.pathologist_id = "p1";  // same reader twice, still one distinct reader
    b.session_id = "p1_w1_again";
    auto c = two_sample_session();
    c.pathologist_id = "p2";
    c.session_id = "p2_w1";
    c.expertise = Expertise::specialist;

    CohortSummary sum = validate_cohort({a, b, c});
    CHECK(sum.n_sessions == 3);
    CHECK(sum.sessions_per_wsi.at("w1") == 3);
    CHECK(sum.readers_per_wsi.at("w1") == 2);
    // both (w1,resident) and (w1,specialist) have < 2 distinct readers
    REQUIRE(sum.underpowered.size() == 2);
}

TEST_CASE("cohort summary: reproduces published cohort shape") {
    // 43 readers split 18/15/10 across expertise levels producing 329/158/529
    // sessions; the summary must echo those counts exactly.
    struct Group {
        Expertise e;
        int readers;
        std::size_t sessions;
    };
    std::vector<Group> groups = {{Expertise::resident, 18, 329},
                                 {Expertise::general, 15, 158},
                                 {Expertise::specialist, 10, 529}};
    std::vector<Session> sessions;
    for (const auto& grp : groups) {
        for (std::size_t i = 0; i < grp.sessions; ++i) {
            auto s = two_sample_session();
            s.expertise = grp.e;
            s.pathologist_id =
                std::string(to_string(grp.e)) + "-" + std::to_string(i % grp.readers);
            s.wsi_id = "wsi-" + std::to_string(i % 123);
            s.session_id = s.pathologist_id + "_" + s.wsi_id + "_" + std::to_string(i);
            sessions.push_back(std::move(s));
        }
    }
    CohortSummary sum = validate_cohort(sessions);
    CHECK(sum.n_sessions == 1016);
    CHECK(sum.sessions_per_expertise.at(Expertise::resident) == 329);
    CHECK(sum.sessions_per_expertise.at(Expertise::general) == 158);
    CHECK(sum.sessions_per_expertise.at(Expertise::specialist) == 529);
    CHECK(sum.readers_per_expertise.at(Expertise::resident) == 18);
    CHECK(sum.readers_per_expertise.at(Expertise::general) == 15);
    CHECK(sum.readers_per_expertise.at(Expertise::specialist) == 10);
    CHECK(sum.mean_duration_ms == doctest::Approx(100.0));
}
