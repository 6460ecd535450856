#include "attnscope/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "attnscope/error.hpp"
#include "attnscope/rng.hpp"
#include "attnscope/util.hpp"

namespace attnscope::models {

namespace fs = std::filesystem;
using tensor::Graph;
using tensor::Tensor;

const char* to_string(FusionMode m) {
    switch (m) {
    case FusionMode::both: return "both";
    case FusionMode::temporal_only: return "temporal_only";
    case FusionMode::magnification_only: return "magnification_only";
    }
    return "both";
}

FusionMode fusion_from_string(std::string_view s) {
    if (s == "both") return FusionMode::both;
    if (s == "temporal_only") return FusionMode::temporal_only;
    if (s == "magnification_only") return FusionMode::magnification_only;
    throw DataError("InvalidConfig", "unknown fusion mode '" + std::string(s) + "'");
}

void validate(const ProstAttFormerConfig& c) {
    if (c.grid.rows < 1 || c.grid.cols < 1)
        throw DataError("InvalidConfig", "grid must be positive");
    if (c.embed_dim < 2 || c.layers < 1 || c.n_heads < 1 || c.mlp_ratio < 1)
        throw DataError("InvalidConfig", "embed_dim/layers/n_heads/mlp_ratio must be positive");
    if (c.embed_dim % c.n_heads != 0)
        throw DataError("HeadDivisibility", "embed_dim " + std::to_string(c.embed_dim) +
                                                " not divisible by " + std::to_string(c.n_heads));
}

void validate(const ExpertiseNetConfig& c) {
    if (c.grid.rows < 3 || c.grid.cols < 3)
        throw DataError("InvalidConfig", "grid must be at least 3x3 for the pooling decoder");
    if (c.feature_dim < 1 || c.encoder_channels < 1)
        throw DataError("InvalidConfig", "feature_dim/encoder_channels must be positive");
    if (c.n_classes != 2 && c.n_classes != 3)
        throw DataError("InvalidConfig", "n_classes must be 2 or 3");
}

ExpertiseNetConfig ablation_variant(ExpertiseNetConfig base, FusionMode mode) {
    base.fusion = mode;
    return base;
}

std::string config_json(const ProstAttFormerConfig& c) {
    nlohmann::json j;
    j["model"] = "prostattformer";
    j["grid"] = {{"rows", c.grid.rows}, {"cols", c.grid.cols}, {"mag_level", c.grid.mag_level}};
    j["embed_dim"] = c.embed_dim;
    j["layers"] = c.layers;
    j["n_heads"] = c.n_heads;
    j["mlp_ratio"] = c.mlp_ratio;
    return j.dump();
}

std::string config_json(const ExpertiseNetConfig& c) {
    nlohmann::json j;
    j["model"] = "expertisenet";
    j["grid"] = {{"rows", c.grid.rows}, {"cols", c.grid.cols}, {"mag_level", c.grid.mag_level}};
    j["feature_dim"] = c.feature_dim;
    j["n_classes"] = c.n_classes;
    j["encoder_channels"] = c.encoder_channels;
    j["fusion"] = to_string(c.fusion);
    return j.dump();
}

std::string config_hash(const std::string& canonical_json) {
    return util::hex64(util::fnv1a64(canonical_json));
}

namespace {

nlohmann::json parse_model_json(const std::string& text) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("BadManifest", e.what());
    }
}

heatmap::GridSpec grid_from_json(const nlohmann::json& j) {
    heatmap::GridSpec g;
    g.rows = j.at("rows").get<int>();
    g.cols = j.at("cols").get<int>();
    g.mag_level = j.at("mag_level").get<std::string>();
    return g;
}

}  // namespace

std::string model_kind_from_json(const std::string& text) {
    nlohmann::json j = parse_model_json(text);
    if (!j.contains("model") || !j["model"].is_string())
        throw DataError("BadManifest", "missing model discriminator");
    return j["model"].get<std::string>();
}

ProstAttFormerConfig prostattformer_config_from_json(const std::string& text) {
    nlohmann::json j = parse_model_json(text);
    try {
        if (j.at("model").get<std::string>() != "prostattformer")
            throw DataError("BadManifest", "not a prostattformer config");
        ProstAttFormerConfig c;
        c.grid = grid_from_json(j.at("grid"));
        c.embed_dim = j.at("embed_dim").get<int>();
        c.layers = j.at("layers").get<int>();
        c.n_heads = j.at("n_heads").get<int>();
        c.mlp_ratio = j.at("mlp_ratio").get<int>();
        validate(c);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("BadManifest", e.what());
    }
}

ExpertiseNetConfig expertisenet_config_from_json(const std::string& text) {
    nlohmann::json j = parse_model_json(text);
    try {
        if (j.at("model").get<std::string>() != "expertisenet")
            throw DataError("BadManifest", "not an expertisenet config");
        ExpertiseNetConfig c;
        c.grid = grid_from_json(j.at("grid"));
        c.feature_dim = j.at("feature_dim").get<int>();
        c.n_classes = j.at("n_classes").get<int>();
        c.encoder_channels = j.at("encoder_channels").get<int>();
        c.fusion = fusion_from_string(j.at("fusion").get<std::string>());
        validate(c);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("BadManifest", e.what());
    }
}

namespace {

std::string blk(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "block%02d", i);
    return buf;
}

}  // namespace

std::vector<ParamSpec> prostattformer_param_specs(const ProstAttFormerConfig& c) {
    validate(c);
    const int d = c.embed_dim;
    const int n = c.grid.cells();
    const int m = c.mlp_ratio * d;
    std::vector<ParamSpec> specs;
    specs.push_back({"pos", {n, d}, "pos"});
    for (int i = 0; i < c.layers; ++i) {
        std::string b = blk(i);
        specs.push_back({b + ".ln1.gamma", {d}, "ln_gamma"});
        specs.push_back({b + ".ln1.beta", {d}, "ln_beta"});
        for (const char* w : {"wq", "wk", "wv", "wo"})
            specs.push_back({b + ".attn." + w, {d, d}, "weight"});
        for (const char* bb : {"bq", "bk", "bv", "bo"})
            specs.push_back({b + ".attn." + bb, {d}, "bias"});
        specs.push_back({b + ".ln2.gamma", {d}, "ln_gamma"});
        specs.push_back({b + ".ln2.beta", {d}, "ln_beta"});
        specs.push_back({b + ".mlp.w1", {d, m}, "weight"});
        specs.push_back({b + ".mlp.b1", {m}, "bias"});
        specs.push_back({b + ".mlp.w2", {m, d}, "weight"});
        specs.push_back({b + ".mlp.b2", {d}, "bias"});
    }
    specs.push_back({"final_ln.gamma", {d}, "ln_gamma"});
    specs.push_back({"final_ln.beta", {d}, "ln_beta"});
    specs.push_back({"decode.w", {d, 1}, "weight"});
    specs.push_back({"decode.b", {1}, "bias"});
    return specs;
}

std::vector<ParamSpec> expertisenet_param_specs(const ExpertiseNetConfig& c) {
    validate(c);
    const int ch = c.encoder_channels;
    std::vector<ParamSpec> specs;
    specs.push_back({"wsi_enc.w", {c.feature_dim, ch}, "he_weight"});
    specs.push_back({"wsi_enc.b", {ch}, "bias"});
    if (c.has_temporal()) {
        specs.push_back({"temporal_enc.w", {4, ch}, "he_weight"});
        specs.push_back({"temporal_enc.b", {ch}, "bias"});
    }
    if (c.has_magnification()) {
        specs.push_back({"mag_enc.w", {4, ch}, "he_weight"});
        specs.push_back({"mag_enc.b", {ch}, "bias"});
    }
    specs.push_back({"decoder.conv.w", {c.concat_channels(), 1}, "he_weight"});
    specs.push_back({"decoder.conv.b", {1}, "bias"});
    specs.push_back({"decoder.fc.w", {256, c.n_classes}, "he_weight"});
    specs.push_back({"decoder.fc.b", {c.n_classes}, "bias"});
    return specs;
}

std::size_t param_count(const std::vector<ParamSpec>& specs) {
    std::size_t total = 0;
    for (const auto& s : specs) {
        std::size_t n = 1;
        for (int d : s.dims) n *= static_cast<std::size_t>(d);
        total += n;
    }
    return total;
}

namespace {

ModelParams init_from_specs(std::vector<ParamSpec> specs, std::uint64_t seed,
                            const std::string& cjson) {
    std::sort(specs.begin(), specs.end(),
              [](const ParamSpec& a, const ParamSpec& b) { return a.name < b.name; });
    rng::Rng r(seed);
    ModelParams mp;
    mp.seed = seed;
    mp.config_hash = config_hash(cjson);
    for (const auto& s : specs) {
        Tensor t(s.dims);
        if (s.role == "weight" || s.role == "pos") {
            for (double& v : t.data) v = r.truncated_normal(0.0, 0.02);
        } else if (s.role == "he_weight") {
            // fan-in scaled; a plain conv stack has no normalization layers to
            // rescue it from a flat 0.02 init, unlike the residual blocks
            double sd = std::sqrt(2.0 / static_cast<double>(s.dims[0]));
            for (double& v : t.data) v = r.truncated_normal(0.0, sd);
        } else if (s.role == "ln_gamma") {
            std::fill(t.data.begin(), t.data.end(), 1.0);
        }
        // bias and ln_beta stay zero
        mp.tensors.emplace(s.name, std::move(t));
    }
    return mp;
}

void check_params(const ModelParams& mp, const std::vector<ParamSpec>& specs) {
    if (mp.tensors.size() != specs.size())
        throw DataError("ParamSetMismatch", std::to_string(mp.tensors.size()) + " params, " +
                                                std::to_string(specs.size()) + " expected");
    for (const auto& s : specs) {
        auto it = mp.tensors.find(s.name);
        if (it == mp.tensors.end()) throw DataError("MissingParam", s.name);
        if (it->second.dims != s.dims)
            throw DataError("ShapeMismatch", "param " + s.name + " has wrong shape");
    }
}

Graph::NodeId pid(const ParamNodes& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw DataError("MissingParam", name);
    return it->second;
}

// Channel concat for [c,h,w] stacks, via flatten/transpose/concat_cols.
Graph::NodeId concat_channels(Graph& g, const std::vector<Graph::NodeId>& parts, int h, int w) {
    if (parts.size() == 1) return parts[0];
    std::vector<Graph::NodeId> flat;
    int total = 0;
    for (Graph::NodeId part : parts) {
        int ci = g.val(part).dims[0];
        flat.push_back(g.transpose(g.reshape(part, {ci, h * w})));
        total += ci;
    }
    return g.reshape(g.transpose(g.concat_cols(flat)), {total, h, w});
}

}  // namespace

ModelParams init_params(const ProstAttFormerConfig& c, std::uint64_t seed) {
    return init_from_specs(prostattformer_param_specs(c), seed, config_json(c));
}

ModelParams init_params(const ExpertiseNetConfig& c, std::uint64_t seed) {
    return init_from_specs(expertisenet_param_specs(c), seed, config_json(c));
}

ParamNodes register_params(Graph& g, const ModelParams& params, bool trainable) {
    ParamNodes p;
    for (const auto& [name, t] : params.tensors)
        p.emplace(name, trainable ? g.param(t) : g.value(t));
    return p;
}

Graph::NodeId prostattformer_graph(Graph& g, const ProstAttFormerConfig& c, const ParamNodes& p,
                                   Graph::NodeId tokens) {
    validate(c);
    const Tensor& t = g.val(tokens);
    if (t.rank() != 2 || t.dims[0] != c.grid.cells() || t.dims[1] != c.embed_dim)
        throw DataError("ShapeMismatch", "tokens must be [" + std::to_string(c.grid.cells()) +
                                             "," + std::to_string(c.embed_dim) + "]");
    Graph::NodeId z = g.add(tokens, pid(p, "pos"));
    for (int i = 0; i < c.layers; ++i) {
        std::string b = blk(i);
        Graph::NodeId h = g.layer_norm(z, pid(p, b + ".ln1.gamma"), pid(p, b + ".ln1.beta"));
        Graph::MhsaParams mp{pid(p, b + ".attn.wq"), pid(p, b + ".attn.bq"),
                             pid(p, b + ".attn.wk"), pid(p, b + ".attn.bk"),
                             pid(p, b + ".attn.wv"), pid(p, b + ".attn.bv"),
                             pid(p, b + ".attn.wo"), pid(p, b + ".attn.bo")};
        z = g.add(z, g.mhsa(h, mp, c.n_heads));
        Graph::NodeId h2 = g.layer_norm(z, pid(p, b + ".ln2.gamma"), pid(p, b + ".ln2.beta"));
        Graph::NodeId m = g.linear(h2, pid(p, b + ".mlp.w1"), pid(p, b + ".mlp.b1"));
        m = g.gelu(m);
        m = g.linear(m, pid(p, b + ".mlp.w2"), pid(p, b + ".mlp.b2"));
        z = g.add(z, m);
    }
    z = g.layer_norm(z, pid(p, "final_ln.gamma"), pid(p, "final_ln.beta"));
    return g.linear(z, pid(p, "decode.w"), pid(p, "decode.b"));
}

Graph::NodeId expertisenet_graph(Graph& g, const ExpertiseNetConfig& c, const ParamNodes& p,
                                 Graph::NodeId features, std::optional<Graph::NodeId> temporal,
                                 std::optional<Graph::NodeId> magnification) {
    validate(c);
    const int h = c.grid.rows, w = c.grid.cols;
    auto want = [&](Graph::NodeId id, int channels, const char* which) {
        const Tensor& t = g.val(id);
        if (t.rank() != 3 || (channels > 0 && t.dims[0] != channels) || t.dims[1] != h ||
            t.dims[2] != w)
            throw DataError("ShapeMismatch", std::string(which) + " input shape");
    };
    want(features, c.feature_dim, "features");
    std::vector<Graph::NodeId> parts;
    parts.push_back(g.relu(g.conv1x1(features, pid(p, "wsi_enc.w"), pid(p, "wsi_enc.b"))));
    if (c.has_temporal()) {
        if (!temporal) throw DataError("ShapeMismatch", "temporal branch input required");
        want(*temporal, 4, "temporal");
        parts.push_back(
            g.relu(g.conv1x1(*temporal, pid(p, "temporal_enc.w"), pid(p, "temporal_enc.b"))));
    }
    if (c.has_magnification()) {
        if (!magnification) throw DataError("ShapeMismatch", "magnification branch input required");
        want(*magnification, 4, "magnification");
        parts.push_back(
            g.relu(g.conv1x1(*magnification, pid(p, "mag_enc.w"), pid(p, "mag_enc.b"))));
    }
    Graph::NodeId cat = concat_channels(g, parts, h, w);
    Graph::NodeId pooled = g.avg_pool2d(cat, 3, 2);
    Graph::NodeId conv =
        g.relu(g.conv1x1(pooled, pid(p, "decoder.conv.w"), pid(p, "decoder.conv.b")));
    Graph::NodeId ada = g.adaptive_avg_pool(conv, 16, 16);
    Graph::NodeId flat = g.reshape(ada, {1, 256});
    return g.linear(flat, pid(p, "decoder.fc.w"), pid(p, "decoder.fc.b"));
}

Tensor tokens_from_features(const telemetry::FeatureGrid& f) {
    Tensor t({f.grid_h * f.grid_w, f.dim});
    t.data = f.data;  // row-major [h][w][dim] is already token-major
    return t;
}

Tensor chw_from_features(const telemetry::FeatureGrid& f) {
    Tensor t({f.dim, f.grid_h, f.grid_w});
    for (int d = 0; d < f.dim; ++d)
        for (int r = 0; r < f.grid_h; ++r)
            for (int c = 0; c < f.grid_w; ++c) t.at3(d, r, c) = f.at(r, c, d);
    return t;
}

Tensor stack_from_maps(const std::vector<heatmap::Heatmap>& maps) {
    if (maps.empty()) throw DataError("ShapeMismatch", "empty map stack");
    const int h = maps[0].grid.rows, w = maps[0].grid.cols;
    Tensor t({static_cast<int>(maps.size()), h, w});
    for (std::size_t i = 0; i < maps.size(); ++i) {
        if (!maps[i].grid.same_dims(maps[0].grid))
            throw DataError("ShapeMismatch", "map stack grids differ");
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) t.at3(static_cast<int>(i), r, c) = maps[i].at(r, c);
    }
    return t;
}

AttentionPrediction prostattformer_forward(const telemetry::FeatureGrid& features,
                                           const ModelParams& params,
                                           const ProstAttFormerConfig& c) {
    if (features.grid_h != c.grid.rows || features.grid_w != c.grid.cols ||
        features.dim != c.embed_dim)
        throw DataError("ShapeMismatch", "feature grid does not match model config");
    check_params(params, prostattformer_param_specs(c));
    Graph g;
    ParamNodes p = register_params(g, params, false);
    Graph::NodeId scores = prostattformer_graph(g, c, p, g.value(tokens_from_features(features)));
    const Tensor& s = g.val(scores);
    AttentionPrediction out;
    out.map = heatmap::Heatmap::zeros(c.grid);
    double lo = s.data[0], hi = s.data[0];
    for (double v : s.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi > lo) {
        for (std::size_t i = 0; i < s.data.size(); ++i)
            out.map.values[i] = (s.data[i] - lo) / (hi - lo);
    } else {
        out.degenerate = true;  // flat map stays all zero
    }
    out.map.norm = heatmap::Norm::minmax;
    return out;
}

std::vector<double> expertisenet_forward(const telemetry::FeatureGrid& features,
                                         const std::vector<heatmap::Heatmap>& temporal,
                                         const std::vector<heatmap::Heatmap>& magnification,
                                         const ModelParams& params, const ExpertiseNetConfig& c) {
    if (features.grid_h != c.grid.rows || features.grid_w != c.grid.cols ||
        features.dim != c.feature_dim)
        throw DataError("ShapeMismatch", "feature grid does not match model config");
    check_params(params, expertisenet_param_specs(c));
    Graph g;
    ParamNodes p = register_params(g, params, false);
    std::optional<Graph::NodeId> tnode, mnode;
    if (c.has_temporal()) {
        if (temporal.size() != 4)
            throw DataError("ShapeMismatch", "temporal stack must have 4 maps");
        tnode = g.value(stack_from_maps(temporal));
    }
    if (c.has_magnification()) {
        if (magnification.size() != 4)
            throw DataError("ShapeMismatch", "magnification stack must have 4 maps");
        mnode = g.value(stack_from_maps(magnification));
    }
    Graph::NodeId logits =
        expertisenet_graph(g, c, p, g.value(chw_from_features(features)), tnode, mnode);
    return g.val(logits).data;
}

void save_checkpoint(const fs::path& dir, const ModelParams& params,
                     const std::vector<ParamSpec>& specs, const std::string& cfg_json) {
    check_params(params, specs);
    fs::create_directories(dir);
    std::vector<ParamSpec> ordered = specs;
    std::sort(ordered.begin(), ordered.end(),
              [](const ParamSpec& a, const ParamSpec& b) { return a.name < b.name; });
    nlohmann::json manifest;
    manifest["config"] = nlohmann::json::parse(cfg_json);
    manifest["seed"] = params.seed;
    manifest["config_hash"] = params.config_hash;
    nlohmann::json pj = nlohmann::json::object();
    for (const auto& s : ordered) {
        const Tensor& t = params.tensors.at(s.name);
        telemetry::TensorFile tf;
        for (int d : t.dims) tf.dims.push_back(static_cast<std::uint32_t>(d));
        tf.data.reserve(t.data.size());
        for (double v : t.data) tf.data.push_back(static_cast<float>(v));
        std::string file = s.name + ".atnt";
        telemetry::write_atnt_file(dir / file, tf);
        pj[s.name] = {{"file", file}, {"shape", s.dims}, {"role", s.role}};
    }
    manifest["params"] = pj;
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw DataError("IoError", "cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    if (!in) throw DataError("IoError", "cannot read " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("BadManifest", e.what());
    }
    Checkpoint cp;
    try {
        cp.config_json = manifest.at("config").dump();
        cp.params.seed = manifest.at("seed").get<std::uint64_t>();
        cp.params.config_hash = manifest.at("config_hash").get<std::string>();
        for (const auto& [name, entry] : manifest.at("params").items()) {
            telemetry::TensorFile tf =
                telemetry::read_atnt_file(dir / entry.at("file").get<std::string>());
            std::vector<int> want = entry.at("shape").get<std::vector<int>>();
            std::vector<int> got;
            for (std::uint32_t d : tf.dims) got.push_back(static_cast<int>(d));
            if (got != want) throw DataError("ShapeMismatch", "param " + name + " shape");
            Tensor t(got);
            for (std::size_t i = 0; i < tf.data.size(); ++i)
                t.data[i] = static_cast<double>(tf.data[i]);
            cp.params.tensors.emplace(name, std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("BadManifest", e.what());
    }
    return cp;
}

}  // namespace attnscope::models
