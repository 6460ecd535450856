#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace attnscope::telemetry {

enum class Expertise { resident, general, specialist };

const char* to_string(Expertise e);
Expertise expertise_from_string(std::string_view s);  // throws DataError("MalformedRecord")

// One viewport position sample. Coordinates are the viewport bounding box in
// normalized slide space [0,1]^2; mag is the displayed magnification factor.
struct ViewportSample {
    std::int64_t t_ms = 0;  // milliseconds since session start, non-negative
    double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
    double mag = 1.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double center_x() const { return 0.5 * (x0 + x1); }
    double center_y() const { return 0.5 * (y0 + y1); }
};

// Primary/secondary Gleason pattern entered at the end of a reading.
// Confidence is recorded but feeds no computation.
struct GradePair {
    int primary = 0;
    int secondary = 0;
    std::optional<double> confidence;  // [0,1]
};

// One reading of one slide by one pathologist.
// Invariants: >= 2 samples, t_ms strictly increasing (so duration > 0),
// every sample's bbox valid. check_session() enforces these.
struct Session {
    std::string session_id;
    std::string pathologist_id;
    std::string wsi_id;
    Expertise expertise = Expertise::resident;
    std::vector<ViewportSample> samples;
    std::optional<GradePair> grade;

    std::int64_t duration_ms() const {
        return samples.empty() ? 0 : samples.back().t_ms - samples.front().t_ms;
    }
};

// Throws DataError (EmptySession / NonMonotonicTime / BadCoordinate /
// MalformedRecord) if any invariant fails.
void check_session(const Session& s);

// Precomputed per-patch embeddings standing in for a frozen feature
// extractor. Row-major [grid_h][grid_w][dim].
struct FeatureGrid {
    int grid_h = 0, grid_w = 0, dim = 0;
    std::vector<double> data;

    double at(int r, int c, int d) const {
        return data[(static_cast<std::size_t>(r) * grid_w + c) * dim + d];
    }
    double& at(int r, int c, int d) {
        return data[(static_cast<std::size_t>(r) * grid_w + c) * dim + d];
    }
};

// ---------------------------------------------------------------------------
// Session log format: JSON Lines. First line is a header object, every
// following line one sample object. See write_session_log for the schema.

Session parse_session_log(std::string_view bytes);
std::string write_session_log(const Session& s);

Session read_session_file(const std::filesystem::path& p);
void write_session_file(const std::filesystem::path& p, const Session& s);

// ---------------------------------------------------------------------------
// ATNT tensor file (little-endian): magic "ATNT"; u32 version=1;
// u8 dtype=1 (float32); u8 ndim; ndim x u32 dims; row-major f32 payload.

struct TensorFile {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;  // size = product(dims)
};

TensorFile read_atnt(std::string_view bytes);
std::string write_atnt(const TensorFile& t);

TensorFile read_atnt_file(const std::filesystem::path& p);
void write_atnt_file(const std::filesystem::path& p, const TensorFile& t);

FeatureGrid feature_grid_from_atnt(const TensorFile& t);  // requires ndim == 3
TensorFile to_atnt(const FeatureGrid& g);

// ---------------------------------------------------------------------------
// Cohort validation (report-only)

struct CohortSummary {
    std::size_t n_sessions = 0;
    std::map<Expertise, std::size_t> sessions_per_expertise;
    std::map<Expertise, std::size_t> readers_per_expertise;  // distinct pathologist ids
    std::map<std::string, std::size_t> sessions_per_wsi;
    std::map<std::string, std::size_t> readers_per_wsi;
    double mean_duration_ms = 0.0;
    // (wsi, expertise) cohorts seen with fewer than two distinct readers;
    // those cannot enter the pairwise agreement analysis.
    std::vector<std::pair<std::string, Expertise>> underpowered;
};

CohortSummary validate_cohort(const std::vector<Session>& sessions);

}  // namespace attnscope::telemetry
