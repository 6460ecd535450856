#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "attnscope/heatmap.hpp"
#include "attnscope/telemetry.hpp"

// Synthetic slides and expertise-conditioned reading sessions. Everything is
// a pure function of its seed, so cohorts regenerate bit-identically and
// per-item seeds keep parallel generation order-independent.

namespace attnscope::synth {

struct SlideConfig {
    std::vector<heatmap::MagBin> bins = heatmap::default_mag_bins();
    int roi_count = 2;
    int feature_dim = 16;
    double feature_noise_sd = 0.1;
    double mask_smooth_sigma = 1.5;  // cells, per grid
    // Semi-axis range of the ROI ellipses. With two ellipses this keeps the
    // mask fraction inside [0.05, 0.3]: one ellipse covers at least
    // pi*0.135^2 ~ 0.057, the union at most 2*pi*0.2^2 ~ 0.251.
    double roi_min_axis = 0.135;
    double roi_max_axis = 0.2;
};
void validate(const SlideConfig& c);

struct SyntheticSlide {
    std::string wsi_id;
    heatmap::Heatmap roi_mask;  // finest-bin grid, cell-center membership in {0,1}
    std::map<std::string, telemetry::FeatureGrid> features;  // mag label -> grid
    double difficulty = 0;  // [0,1]; raises grade noise and lowers ROI seeking
    telemetry::GradePair true_grade;
};

// Reader behavior knobs. mag_mix has one weight per slide bin.
struct ExpertiseProfile {
    double roi_affinity = 0.5;  // Bernoulli chance a step seeks the ROI
    std::vector<double> mag_mix;
    double step_scale = 0.2;  // random-walk sd in slide units
    double dwell_ms = 60;
    double grade_noise_sd = 0.5;
    int n_samples = 240;
};
void validate(const ExpertiseProfile& p, std::size_t n_bins);

// Affinity 0.85/0.6/0.4 and grade noise 0.2/0.5/0.7 for specialist/general/
// resident, encoding the constructed ordering the agreement report recovers.
std::map<telemetry::Expertise, ExpertiseProfile> default_profiles();

// ROI = union of roi_count random axis-aligned ellipses. Feature channels
// 0..2 encode the (smoothed) mask plus noise, the rest are standard normal.
SyntheticSlide generate_slide(std::string wsi_id, std::uint64_t seed,
                              const SlideConfig& cfg = {});

// Random-walk viewport with ROI-seeking steps. Difficulty couples attention
// and grading: effective affinity drops and grade noise grows with it, which
// plants the within-group agreement/concordance correlation.
telemetry::Session generate_session(const SyntheticSlide& slide, const ExpertiseProfile& profile,
                                    telemetry::GradePair true_grade, std::uint64_t seed,
                                    std::string session_id, std::string pathologist_id,
                                    telemetry::Expertise expertise,
                                    const std::vector<heatmap::MagBin>& bins);

struct CohortConfig {
    int n_slides = 30;
    int readers_per_expertise = 4;
    std::map<telemetry::Expertise, ExpertiseProfile> profiles = default_profiles();
    SlideConfig slide;
    std::uint64_t seed = 0;
};

struct Cohort {
    CohortConfig config;
    std::vector<SyntheticSlide> slides;
    std::vector<telemetry::Session> sessions;  // every reader reads every slide
};

// Requires specialist > general > resident roi_affinity and the smallest
// specialist grade noise; otherwise DataError("InvalidProfileOrder").
Cohort generate_cohort(const CohortConfig& cfg);

// Directory layout: cohort.json manifest, sessions/*.jsonl, features/*.atnt,
// masks/*.atnt. write/load round-trip exactly up to f32 feature storage.
void write_cohort(const std::filesystem::path& dir, const Cohort& c);
Cohort load_cohort(const std::filesystem::path& dir);

}  // namespace attnscope::synth
