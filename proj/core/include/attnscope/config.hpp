#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attnscope/heatmap.hpp"
#include "attnscope/models.hpp"
#include "attnscope/synth.hpp"
#include "attnscope/telemetry.hpp"
#include "attnscope/training.hpp"

// Experiment configuration files and the input loading shared by the CLI
// subcommands. Parsing is strict: unknown keys, wrong types and out-of-range
// values are all DataError("InvalidConfig").

namespace attnscope::config {

enum class Task { attention, expertise };
const char* to_string(Task t);
Task task_from_string(std::string_view s);

struct CohortFilter {
    std::optional<telemetry::Expertise> expertise;
    std::vector<std::string> wsi_ids;  // empty keeps all

    bool keeps(const telemetry::Session& s) const;
};

struct ExperimentConfig {
    std::filesystem::path sessions_dir;
    std::filesystem::path features_dir;
    std::filesystem::path masks_dir;  // may be empty; only segmentation eval needs it
    std::filesystem::path output_dir;
    Task task = Task::attention;
    std::vector<heatmap::MagBin> bins = heatmap::default_mag_bins();
    models::ProstAttFormerConfig attention_model;
    models::ExpertiseNetConfig expertise_model;
    training::HyperParams hyper;  // hyper.seed mirrors the top-level seed
    int k = 5;
    std::uint64_t seed = 0;
    CohortFilter filter;
    // expertise task only: also train the temporal-only and magnification-only
    // variants so the ablation table comes out of a single run
    bool ablation = false;
};

ExperimentConfig parse_experiment(std::string_view text);
ExperimentConfig load_experiment(const std::filesystem::path& p);

synth::CohortConfig parse_cohort(std::string_view text);
synth::CohortConfig load_cohort_config(const std::filesystem::path& p);

// All *.jsonl files under dir, lexicographic order.
std::vector<telemetry::Session> load_sessions_dir(const std::filesystem::path& dir);

// dir/<wsi_id>_<mag_label>.atnt
telemetry::FeatureGrid load_features(const std::filesystem::path& dir, const std::string& wsi_id,
                                     const std::string& mag_label);

}  // namespace attnscope::config
