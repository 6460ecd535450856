#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "attnscope/analysis.hpp"
#include "attnscope/models.hpp"
#include "attnscope/training.hpp"

// CSV serialization of the analysis/training outputs and the run-directory
// report generator. Artifact names are fixed so `report` can find what the
// other subcommands wrote.

namespace attnscope::report {

inline constexpr const char* kAgreementPoints = "agreement_points.csv";
inline constexpr const char* kAgreementGroups = "agreement_groups.csv";
inline constexpr const char* kAttentionFolds = "attention_folds.csv";
inline constexpr const char* kAttentionWsis = "attention_wsis.csv";
inline constexpr const char* kExpertiseFolds = "expertise_folds.csv";
inline constexpr const char* kEvalWsis = "eval_wsis.csv";
inline constexpr const char* kRunManifest = "run.json";

std::string agreement_points_csv(const analysis::AgreementReport& r);
std::string agreement_groups_csv(const analysis::AgreementReport& r);
std::string attention_folds_csv(const training::FoldReport& r);
std::string wsi_metrics_csv(const std::vector<training::WsiMetrics>& rows);
// folds of all trained fusion variants, keyed by the variant tag
std::string expertise_folds_csv(
    const std::map<models::FusionMode, training::FoldReport>& by_variant);

struct GeneratedReport {
    std::vector<std::filesystem::path> written;  // relative to the run dir
};

// Reads the artifacts above from run_dir and writes report.md, the scatter
// SVG, Table-1/Table-3 shaped CSVs and one SVG per .atnt map found.
// Byte-identical on rerun; DataError("MissingInputs") when run_dir holds
// nothing usable.
GeneratedReport generate(const std::filesystem::path& run_dir);

}  // namespace attnscope::report
