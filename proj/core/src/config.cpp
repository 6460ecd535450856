#include "attnscope/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "attnscope/error.hpp"

namespace attnscope::config {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Task t) {
    return t == Task::attention ? "attention" : "expertise";
}

Task task_from_string(std::string_view s) {
    if (s == "attention") return Task::attention;
    if (s == "expertise") return Task::expertise;
    throw DataError("InvalidConfig", "unknown task '" + std::string(s) + "'");
}

bool CohortFilter::keeps(const telemetry::Session& s) const {
    if (expertise && s.expertise != *expertise) return false;
    if (!wsi_ids.empty() &&
        std::find(wsi_ids.begin(), wsi_ids.end(), s.wsi_id) == wsi_ids.end())
        return false;
    return true;
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    if (!j.is_object())
        throw DataError("InvalidConfig", std::string(where) + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok)
            throw DataError("InvalidConfig",
                            "unknown key '" + key + "' in " + where);
    }
}

// wraps json type errors so every schema failure carries the same code
template <class T>
T get_as(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw DataError("InvalidConfig", std::string("bad value for '") + key + "'");
    }
}

template <class T>
T require(const json& j, const char* key, const char* where) {
    if (!j.contains(key))
        throw DataError("InvalidConfig",
                        std::string("missing key '") + key + "' in " + where);
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw DataError("InvalidConfig", std::string("bad value for '") + key + "'");
    }
}

heatmap::GridSpec parse_grid(const json& j, const char* where) {
    check_keys(j, {"rows", "cols", "mag_level"}, where);
    heatmap::GridSpec g;
    g.rows = require<int>(j, "rows", where);
    g.cols = require<int>(j, "cols", where);
    g.mag_level = get_as<std::string>(j, "mag_level", "");
    if (g.rows <= 0 || g.cols <= 0)
        throw DataError("InvalidConfig", std::string(where) + ": grid dims must be positive");
    return g;
}

std::vector<heatmap::MagBin> parse_bins(const json& j) {
    if (!j.is_array() || j.empty())
        throw DataError("InvalidConfig", "bins must be a non-empty array");
    std::vector<heatmap::MagBin> bins;
    for (const auto& bj : j) {
        check_keys(bj, {"label", "lo", "hi", "rows", "cols"}, "bins[]");
        heatmap::MagBin b;
        b.label = require<std::string>(bj, "label", "bins[]");
        b.lo = require<double>(bj, "lo", "bins[]");
        b.hi = require<double>(bj, "hi", "bins[]");
        b.rows = require<int>(bj, "rows", "bins[]");
        b.cols = require<int>(bj, "cols", "bins[]");
        if (!(b.lo < b.hi) || b.rows <= 0 || b.cols <= 0)
            throw DataError("InvalidConfig", "bin '" + b.label + "' is malformed");
        bins.push_back(std::move(b));
    }
    return bins;
}

json parse_text(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw DataError("InvalidConfig", e.what());
    }
}

}  // namespace

ExperimentConfig parse_experiment(std::string_view text) {
    json j = parse_text(text);
    check_keys(j,
               {"paths", "task", "bins", "attention_model", "expertise_model", "hyper", "k",
                "seed", "filter", "ablation"},
               "config");
    ExperimentConfig c;

    const json& paths = j.contains("paths") ? j.at("paths") : json::object();
    check_keys(paths, {"sessions", "features", "masks", "output"}, "paths");
    c.sessions_dir = require<std::string>(paths, "sessions", "paths");
    c.features_dir = require<std::string>(paths, "features", "paths");
    c.masks_dir = get_as<std::string>(paths, "masks", "");
    c.output_dir = require<std::string>(paths, "output", "paths");

    c.task = task_from_string(get_as<std::string>(j, "task", "attention"));
    if (j.contains("bins")) c.bins = parse_bins(j.at("bins"));

    if (j.contains("attention_model")) {
        const json& m = j.at("attention_model");
        check_keys(m, {"grid", "embed_dim", "layers", "n_heads", "mlp_ratio"}, "attention_model");
        if (m.contains("grid")) c.attention_model.grid = parse_grid(m.at("grid"), "grid");
        c.attention_model.embed_dim = get_as<int>(m, "embed_dim", c.attention_model.embed_dim);
        c.attention_model.layers = get_as<int>(m, "layers", c.attention_model.layers);
        c.attention_model.n_heads = get_as<int>(m, "n_heads", c.attention_model.n_heads);
        c.attention_model.mlp_ratio = get_as<int>(m, "mlp_ratio", c.attention_model.mlp_ratio);
    }
    if (j.contains("expertise_model")) {
        const json& m = j.at("expertise_model");
        check_keys(m, {"grid", "feature_dim", "n_classes", "encoder_channels", "fusion"},
                   "expertise_model");
        if (m.contains("grid")) c.expertise_model.grid = parse_grid(m.at("grid"), "grid");
        c.expertise_model.feature_dim =
            get_as<int>(m, "feature_dim", c.expertise_model.feature_dim);
        c.expertise_model.n_classes = get_as<int>(m, "n_classes", c.expertise_model.n_classes);
        c.expertise_model.encoder_channels =
            get_as<int>(m, "encoder_channels", c.expertise_model.encoder_channels);
        if (m.contains("fusion"))
            c.expertise_model.fusion =
                models::fusion_from_string(require<std::string>(m, "fusion", "expertise_model"));
    }
    if (j.contains("hyper")) {
        const json& h = j.at("hyper");
        check_keys(h, {"batch_size", "lr", "weight_decay", "epochs", "optimizer"}, "hyper");
        c.hyper.batch_size = get_as<int>(h, "batch_size", c.hyper.batch_size);
        c.hyper.lr = get_as<double>(h, "lr", c.hyper.lr);
        c.hyper.weight_decay = get_as<double>(h, "weight_decay", c.hyper.weight_decay);
        c.hyper.epochs = get_as<int>(h, "epochs", c.hyper.epochs);
        if (h.contains("optimizer"))
            c.hyper.optimizer =
                training::optimizer_from_string(require<std::string>(h, "optimizer", "hyper"));
    }
    c.k = get_as<int>(j, "k", c.k);
    if (c.k < 2) throw DataError("InvalidConfig", "k must be >= 2");
    c.seed = get_as<std::uint64_t>(j, "seed", c.seed);
    c.hyper.seed = c.seed;
    c.ablation = get_as<bool>(j, "ablation", c.ablation);

    if (j.contains("filter")) {
        const json& f = j.at("filter");
        check_keys(f, {"expertise", "wsi_ids"}, "filter");
        if (f.contains("expertise"))
            c.filter.expertise =
                telemetry::expertise_from_string(require<std::string>(f, "expertise", "filter"));
        c.filter.wsi_ids = get_as<std::vector<std::string>>(f, "wsi_ids", {});
    }

    models::validate(c.attention_model);
    models::validate(c.expertise_model);
    training::validate(c.hyper);
    return c;
}

ExperimentConfig load_experiment(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("IoError", "cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_experiment(buf.str());
}

synth::CohortConfig parse_cohort(std::string_view text) {
    json j = parse_text(text);
    check_keys(j, {"n_slides", "readers_per_expertise", "seed", "slide", "profiles"}, "config");
    synth::CohortConfig c;
    c.n_slides = get_as<int>(j, "n_slides", c.n_slides);
    c.readers_per_expertise = get_as<int>(j, "readers_per_expertise", c.readers_per_expertise);
    c.seed = get_as<std::uint64_t>(j, "seed", c.seed);
    if (c.n_slides < 0 || c.readers_per_expertise < 0)
        throw DataError("InvalidConfig", "cohort sizes must be non-negative");

    if (j.contains("slide")) {
        const json& s = j.at("slide");
        check_keys(s,
                   {"bins", "roi_count", "feature_dim", "feature_noise_sd", "mask_smooth_sigma",
                    "roi_min_axis", "roi_max_axis"},
                   "slide");
        if (s.contains("bins")) c.slide.bins = parse_bins(s.at("bins"));
        c.slide.roi_count = get_as<int>(s, "roi_count", c.slide.roi_count);
        c.slide.feature_dim = get_as<int>(s, "feature_dim", c.slide.feature_dim);
        c.slide.feature_noise_sd = get_as<double>(s, "feature_noise_sd", c.slide.feature_noise_sd);
        c.slide.mask_smooth_sigma =
            get_as<double>(s, "mask_smooth_sigma", c.slide.mask_smooth_sigma);
        c.slide.roi_min_axis = get_as<double>(s, "roi_min_axis", c.slide.roi_min_axis);
        c.slide.roi_max_axis = get_as<double>(s, "roi_max_axis", c.slide.roi_max_axis);
    }
    synth::validate(c.slide);

    if (j.contains("profiles")) {
        const json& ps = j.at("profiles");
        check_keys(ps, {"resident", "general", "specialist"}, "profiles");
        for (const auto& [name, pj] : ps.items()) {
            telemetry::Expertise e = telemetry::expertise_from_string(name);
            synth::ExpertiseProfile p = c.profiles.at(e);  // defaults fill missing keys
            check_keys(pj,
                       {"roi_affinity", "mag_mix", "step_scale", "dwell_ms", "grade_noise_sd",
                        "n_samples"},
                       "profile");
            p.roi_affinity = get_as<double>(pj, "roi_affinity", p.roi_affinity);
            p.mag_mix = get_as<std::vector<double>>(pj, "mag_mix", p.mag_mix);
            p.step_scale = get_as<double>(pj, "step_scale", p.step_scale);
            p.dwell_ms = get_as<double>(pj, "dwell_ms", p.dwell_ms);
            p.grade_noise_sd = get_as<double>(pj, "grade_noise_sd", p.grade_noise_sd);
            p.n_samples = get_as<int>(pj, "n_samples", p.n_samples);
            c.profiles[e] = std::move(p);
        }
    }
    for (const auto& [e, p] : c.profiles) {
        (void)e;
        synth::validate(p, c.slide.bins.size());
    }
    return c;
}

synth::CohortConfig load_cohort_config(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("IoError", "cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_cohort(buf.str());
}

std::vector<telemetry::Session> load_sessions_dir(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw DataError("IoError", "not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<telemetry::Session> sessions;
    sessions.reserve(files.size());
    for (const auto& f : files) sessions.push_back(telemetry::read_session_file(f));
    return sessions;
}

telemetry::FeatureGrid load_features(const fs::path& dir, const std::string& wsi_id,
                                     const std::string& mag_label) {
    fs::path p = dir / (wsi_id + "_" + mag_label + ".atnt");
    return telemetry::feature_grid_from_atnt(telemetry::read_atnt_file(p));
}

}  // namespace attnscope::config
