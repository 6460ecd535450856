#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attnscope/heatmap.hpp"
#include "attnscope/telemetry.hpp"
#include "attnscope/tensor.hpp"

// The two models, assembled from tensor ops with deterministic init.
// Graph builders are shared between training and inference so the forward
// definition exists exactly once.

namespace attnscope::models {

struct ProstAttFormerConfig {
    heatmap::GridSpec grid{50, 50, "10x"};
    int embed_dim = 384;
    int layers = 12;
    int n_heads = 8;
    int mlp_ratio = 4;
};

enum class FusionMode { both, temporal_only, magnification_only };
const char* to_string(FusionMode m);
FusionMode fusion_from_string(std::string_view s);

struct ExpertiseNetConfig {
    heatmap::GridSpec grid{60, 60, "20x"};  // common grid all inputs are resampled to
    int feature_dim = 384;
    int n_classes = 3;
    int encoder_channels = 16;
    FusionMode fusion = FusionMode::both;

    bool has_temporal() const { return fusion != FusionMode::magnification_only; }
    bool has_magnification() const { return fusion != FusionMode::temporal_only; }
    int concat_channels() const {
        return encoder_channels * (1 + (has_temporal() ? 1 : 0) + (has_magnification() ? 1 : 0));
    }
};

void validate(const ProstAttFormerConfig& c);
void validate(const ExpertiseNetConfig& c);

ExpertiseNetConfig ablation_variant(ExpertiseNetConfig base, FusionMode mode);

// Canonical JSON (sorted keys) and its FNV-1a hash; hashes differ iff the
// configs differ.
std::string config_json(const ProstAttFormerConfig& c);
std::string config_json(const ExpertiseNetConfig& c);
std::string config_hash(const std::string& canonical_json);

// inverse of config_json; "model" discriminator selects the parser.
// Wrong or missing discriminator is DataError("BadManifest").
std::string model_kind_from_json(const std::string& text);
ProstAttFormerConfig prostattformer_config_from_json(const std::string& text);
ExpertiseNetConfig expertisenet_config_from_json(const std::string& text);

struct ParamSpec {
    std::string name;
    std::vector<int> dims;
    std::string role;  // weight | he_weight | bias | ln_gamma | ln_beta | pos
};

std::vector<ParamSpec> prostattformer_param_specs(const ProstAttFormerConfig& c);
std::vector<ParamSpec> expertisenet_param_specs(const ExpertiseNetConfig& c);
std::size_t param_count(const std::vector<ParamSpec>& specs);

struct ModelParams {
    std::map<std::string, tensor::Tensor> tensors;
    std::uint64_t seed = 0;
    std::string config_hash;
};

// truncated-normal(0, 0.02) for weight/pos roles, truncated-normal with
// sqrt(2/fan_in) sigma for he_weight, zeros for bias/ln_beta, ones for
// ln_gamma; draw order is sorted parameter name.
ModelParams init_params(const ProstAttFormerConfig& c, std::uint64_t seed);
ModelParams init_params(const ExpertiseNetConfig& c, std::uint64_t seed);

// Graph builders. `p` maps parameter name to a node already registered in
// `g`; every spec name must be present with matching dims.
using ParamNodes = std::map<std::string, tensor::Graph::NodeId>;

ParamNodes register_params(tensor::Graph& g, const ModelParams& params, bool trainable);

// tokens [N,D] -> per-token scores [N,1] (pre-norm blocks, final LN, linear decode)
tensor::Graph::NodeId prostattformer_graph(tensor::Graph& g, const ProstAttFormerConfig& c,
                                           const ParamNodes& p, tensor::Graph::NodeId tokens);

// features [D,h,w] (+ temporal [4,h,w], magnification [4,h,w] per fusion mode)
// -> logits [1,n_classes]
tensor::Graph::NodeId expertisenet_graph(tensor::Graph& g, const ExpertiseNetConfig& c,
                                         const ParamNodes& p, tensor::Graph::NodeId features,
                                         std::optional<tensor::Graph::NodeId> temporal,
                                         std::optional<tensor::Graph::NodeId> magnification);

// Packing between pipeline types and tensors. Token order and the chw pixel
// order are both row-major over the grid.
tensor::Tensor tokens_from_features(const telemetry::FeatureGrid& f);          // [N,D]
tensor::Tensor chw_from_features(const telemetry::FeatureGrid& f);             // [D,h,w]
tensor::Tensor stack_from_maps(const std::vector<heatmap::Heatmap>& maps);     // [n,h,w]

struct AttentionPrediction {
    heatmap::Heatmap map;    // minmax-normalized; all-zero flat map when degenerate
    bool degenerate = false;
};

AttentionPrediction prostattformer_forward(const telemetry::FeatureGrid& features,
                                           const ModelParams& params,
                                           const ProstAttFormerConfig& c);

std::vector<double> expertisenet_forward(const telemetry::FeatureGrid& features,
                                         const std::vector<heatmap::Heatmap>& temporal,
                                         const std::vector<heatmap::Heatmap>& magnification,
                                         const ModelParams& params, const ExpertiseNetConfig& c);

// Checkpoint: one ATNT file per parameter plus manifest.json carrying the
// config, seed, hash, and name -> {file, shape, role}.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params,
                     const std::vector<ParamSpec>& specs, const std::string& cfg_json);

struct Checkpoint {
    ModelParams params;
    std::string config_json;
};
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace attnscope::models
