#include "attnscope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "attnscope/error.hpp"
#include "attnscope/rng.hpp"
#include "attnscope/util.hpp"

namespace attnscope::synth {

namespace fs = std::filesystem;
using telemetry::Expertise;
using telemetry::GradePair;
using telemetry::Session;

namespace {

constexpr int kGradeLo = 3;
constexpr int kGradeHi = 5;

std::string pad_id(const char* prefix, int i, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
    return buf;
}

struct Ellipse {
    double cx, cy, ax, ay;
};

bool inside(const std::vector<Ellipse>& rois, double x, double y) {
    for (const auto& e : rois) {
        double dx = (x - e.cx) / e.ax;
        double dy = (y - e.cy) / e.ay;
        if (dx * dx + dy * dy <= 1.0) return true;
    }
    return false;
}

heatmap::Heatmap mask_on_grid(const std::vector<Ellipse>& rois, const heatmap::GridSpec& g) {
    heatmap::Heatmap m = heatmap::Heatmap::zeros(g);
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) {
            double x = (c + 0.5) / g.cols;
            double y = (r + 0.5) / g.rows;
            if (inside(rois, x, y)) m.at(r, c) = 1.0;
        }
    return m;
}

double reflect01(double x) {
    x = std::fmod(x, 2.0);
    if (x < 0) x += 2.0;
    return x > 1.0 ? 2.0 - x : x;
}

}  // namespace

void validate(const SlideConfig& c) {
    if (c.bins.empty()) throw DataError("InvalidConfig", "slide needs magnification bins");
    if (c.roi_count < 0) throw DataError("InvalidConfig", "roi_count must be >= 0");
    if (c.feature_dim < 1) throw DataError("InvalidConfig", "feature_dim must be positive");
    if (!(c.feature_noise_sd >= 0) || !(c.mask_smooth_sigma > 0))
        throw DataError("InvalidConfig", "noise/smoothing must be non-negative");
    if (!(c.roi_min_axis > 0) || !(c.roi_min_axis <= c.roi_max_axis) || !(c.roi_max_axis < 0.5))
        throw DataError("InvalidConfig", "roi axes must satisfy 0 < min <= max < 0.5");
}

void validate(const ExpertiseProfile& p, std::size_t n_bins) {
    if (!(p.roi_affinity >= 0 && p.roi_affinity <= 1))
        throw DataError("InvalidConfig", "roi_affinity must be in [0,1]");
    if (p.mag_mix.size() != n_bins)
        throw DataError("InvalidConfig", "mag_mix needs one weight per bin");
    double sum = 0;
    for (double w : p.mag_mix) {
        if (!(w >= 0)) throw DataError("InvalidConfig", "mag_mix weights must be >= 0");
        sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw DataError("InvalidConfig", "mag_mix must sum to 1");
    if (!(p.step_scale > 0) || !(p.dwell_ms > 0) || !(p.grade_noise_sd >= 0))
        throw DataError("InvalidConfig", "step_scale/dwell_ms must be positive");
    if (p.n_samples < 2) throw DataError("InvalidConfig", "need at least 2 samples per session");
}

std::map<Expertise, ExpertiseProfile> default_profiles() {
    std::map<Expertise, ExpertiseProfile> p;
    p[Expertise::resident] = {0.4, {0.4, 0.3, 0.2, 0.1}, 0.25, 50.0, 0.7, 240};
    p[Expertise::general] = {0.6, {0.25, 0.25, 0.25, 0.25}, 0.2, 60.0, 0.5, 240};
    p[Expertise::specialist] = {0.85, {0.1, 0.2, 0.3, 0.4}, 0.15, 70.0, 0.2, 240};
    return p;
}

SyntheticSlide generate_slide(std::string wsi_id, std::uint64_t seed, const SlideConfig& cfg) {
    validate(cfg);
    rng::Rng r(seed);
    std::vector<Ellipse> rois;
    for (int i = 0; i < cfg.roi_count; ++i) {
        Ellipse e;
        e.ax = r.uniform(cfg.roi_min_axis, cfg.roi_max_axis);
        e.ay = r.uniform(cfg.roi_min_axis, cfg.roi_max_axis);
        e.cx = r.uniform(e.ax, 1.0 - e.ax);
        e.cy = r.uniform(e.ay, 1.0 - e.ay);
        rois.push_back(e);
    }
    SyntheticSlide slide;
    slide.wsi_id = std::move(wsi_id);
    slide.roi_mask = mask_on_grid(rois, cfg.bins.back().grid());
    for (const auto& bin : cfg.bins) {
        heatmap::GridSpec g = bin.grid();
        heatmap::Heatmap raw = mask_on_grid(rois, g);
        heatmap::Heatmap sm1 = heatmap::gaussian_blur(raw, cfg.mask_smooth_sigma);
        heatmap::Heatmap sm2 = heatmap::gaussian_blur(raw, 2.0 * cfg.mask_smooth_sigma);
        telemetry::FeatureGrid f;
        f.grid_h = g.rows;
        f.grid_w = g.cols;
        f.dim = cfg.feature_dim;
        f.data.assign(static_cast<std::size_t>(g.rows) * g.cols * cfg.feature_dim, 0.0);
        for (int rr = 0; rr < g.rows; ++rr)
            for (int cc = 0; cc < g.cols; ++cc)
                for (int d = 0; d < cfg.feature_dim; ++d) {
                    double v;
                    if (d == 0) v = sm1.at(rr, cc) + cfg.feature_noise_sd * r.normal();
                    else if (d == 1) v = sm2.at(rr, cc) + cfg.feature_noise_sd * r.normal();
                    else if (d == 2) v = raw.at(rr, cc) + cfg.feature_noise_sd * r.normal();
                    else v = r.normal();
                    f.at(rr, cc, d) = v;
                }
        slide.features.emplace(bin.label, std::move(f));
    }
    // arcsine-shaped: mass piles at the easy and hard extremes, which widens
    // the within-group spread the agreement regression has to detect
    slide.difficulty = 0.5 * (1.0 - std::cos(3.14159265358979323846 * r.uniform()));
    slide.true_grade.primary = kGradeLo + static_cast<int>(r.bounded(kGradeHi - kGradeLo + 1));
    slide.true_grade.secondary = kGradeLo + static_cast<int>(r.bounded(kGradeHi - kGradeLo + 1));
    return slide;
}

Session generate_session(const SyntheticSlide& slide, const ExpertiseProfile& profile,
                         GradePair true_grade, std::uint64_t seed, std::string session_id,
                         std::string pathologist_id, Expertise expertise,
                         const std::vector<heatmap::MagBin>& bins) {
    validate(profile, bins.size());
    rng::Rng r(seed);
    const double eff_affinity =
        profile.roi_affinity * (1.0 - slide.difficulty * (1.0 - profile.roi_affinity));
    const double eff_grade_sd = profile.grade_noise_sd * (1.0 + 2.0 * slide.difficulty);

    std::vector<std::pair<int, int>> roi_cells;
    const heatmap::GridSpec& mg = slide.roi_mask.grid;
    for (int rr = 0; rr < mg.rows; ++rr)
        for (int cc = 0; cc < mg.cols; ++cc)
            if (slide.roi_mask.at(rr, cc) > 0.5) roi_cells.emplace_back(rr, cc);

    Session s;
    s.session_id = std::move(session_id);
    s.pathologist_id = std::move(pathologist_id);
    s.wsi_id = slide.wsi_id;
    s.expertise = expertise;

    double cx = 0.5, cy = 0.5;
    std::int64_t t = 0;
    for (int i = 0; i < profile.n_samples; ++i) {
        const heatmap::MagBin& bin = bins[r.categorical(profile.mag_mix)];
        double mag = bin.hi - (bin.hi - bin.lo) * r.uniform();  // in (lo, hi]
        double side = std::min(0.25 / mag, 1.0);
        if (r.bernoulli(eff_affinity) && !roi_cells.empty()) {
            auto [rr, cc] = roi_cells[r.bounded(roi_cells.size())];
            cx = (cc + 0.5) / mg.cols;
            cy = (rr + 0.5) / mg.rows;
        } else {
            cx = reflect01(cx + r.normal(0.0, profile.step_scale));
            cy = reflect01(cy + r.normal(0.0, profile.step_scale));
        }
        double half = side / 2.0;
        double bx = std::clamp(cx, half, 1.0 - half);
        double by = std::clamp(cy, half, 1.0 - half);
        telemetry::ViewportSample v;
        v.t_ms = t;
        v.x0 = bx - half;
        v.x1 = bx + half;
        v.y0 = by - half;
        v.y1 = by + half;
        v.mag = mag;
        s.samples.push_back(v);
        double dwell = r.normal(profile.dwell_ms, 0.3 * profile.dwell_ms);
        t += std::max<std::int64_t>(1, std::llround(dwell));
    }
    GradePair g;
    g.primary = std::clamp(
        static_cast<int>(std::lround(true_grade.primary + r.normal(0.0, eff_grade_sd))),
        kGradeLo, kGradeHi);
    g.secondary = std::clamp(
        static_cast<int>(std::lround(true_grade.secondary + r.normal(0.0, eff_grade_sd))),
        kGradeLo, kGradeHi);
    s.grade = g;
    telemetry::check_session(s);
    return s;
}

Cohort generate_cohort(const CohortConfig& cfg) {
    validate(cfg.slide);
    if (cfg.n_slides < 0 || cfg.readers_per_expertise < 0)
        throw DataError("InvalidConfig", "negative cohort size");
    for (Expertise e : {Expertise::resident, Expertise::general, Expertise::specialist}) {
        auto it = cfg.profiles.find(e);
        if (it == cfg.profiles.end())
            throw DataError("InvalidConfig",
                            std::string("missing profile for ") + telemetry::to_string(e));
        validate(it->second, cfg.slide.bins.size());
    }
    const ExpertiseProfile& res = cfg.profiles.at(Expertise::resident);
    const ExpertiseProfile& gen = cfg.profiles.at(Expertise::general);
    const ExpertiseProfile& spe = cfg.profiles.at(Expertise::specialist);
    if (!(spe.roi_affinity > gen.roi_affinity && gen.roi_affinity > res.roi_affinity))
        throw DataError("InvalidProfileOrder", "roi_affinity must increase with expertise");
    if (!(spe.grade_noise_sd < gen.grade_noise_sd && spe.grade_noise_sd < res.grade_noise_sd))
        throw DataError("InvalidProfileOrder", "specialist grade noise must be smallest");

    Cohort cohort;
    cohort.config = cfg;
    for (int i = 0; i < cfg.n_slides; ++i) {
        std::string id = pad_id("wsi-", i, 3);
        std::uint64_t s = rng::derive_seed(cfg.seed, util::fnv1a64(id), 0);
        cohort.slides.push_back(generate_slide(id, s, cfg.slide));
    }
    for (Expertise e : {Expertise::resident, Expertise::general, Expertise::specialist}) {
        const ExpertiseProfile& profile = cfg.profiles.at(e);
        for (int j = 0; j < cfg.readers_per_expertise; ++j) {
            std::string reader = pad_id((std::string(telemetry::to_string(e)) + "-").c_str(), j, 2);
            for (const auto& slide : cohort.slides) {
                std::string sid = reader + "_" + slide.wsi_id;
                std::uint64_t s = rng::derive_seed(cfg.seed, util::fnv1a64(sid), 1);
                cohort.sessions.push_back(generate_session(slide, profile, slide.true_grade, s,
                                                           sid, reader, e, cfg.slide.bins));
            }
        }
    }
    return cohort;
}

namespace {

nlohmann::json profile_json(const ExpertiseProfile& p) {
    return {{"roi_affinity", p.roi_affinity}, {"mag_mix", p.mag_mix},
            {"step_scale", p.step_scale},     {"dwell_ms", p.dwell_ms},
            {"grade_noise_sd", p.grade_noise_sd}, {"n_samples", p.n_samples}};
}

ExpertiseProfile profile_from_json(const nlohmann::json& j) {
    ExpertiseProfile p;
    p.roi_affinity = j.at("roi_affinity").get<double>();
    p.mag_mix = j.at("mag_mix").get<std::vector<double>>();
    p.step_scale = j.at("step_scale").get<double>();
    p.dwell_ms = j.at("dwell_ms").get<double>();
    p.grade_noise_sd = j.at("grade_noise_sd").get<double>();
    p.n_samples = j.at("n_samples").get<int>();
    return p;
}

nlohmann::json bin_json(const heatmap::MagBin& b) {
    return {{"label", b.label}, {"lo", b.lo}, {"hi", b.hi}, {"rows", b.rows}, {"cols", b.cols}};
}

heatmap::MagBin bin_from_json(const nlohmann::json& j) {
    heatmap::MagBin b;
    b.label = j.at("label").get<std::string>();
    b.lo = j.at("lo").get<double>();
    b.hi = j.at("hi").get<double>();
    b.rows = j.at("rows").get<int>();
    b.cols = j.at("cols").get<int>();
    return b;
}

}  // namespace

void write_cohort(const fs::path& dir, const Cohort& c) {
    fs::create_directories(dir / "sessions");
    fs::create_directories(dir / "features");
    fs::create_directories(dir / "masks");
    nlohmann::json manifest;
    manifest["seed"] = c.config.seed;
    manifest["n_slides"] = c.config.n_slides;
    manifest["readers_per_expertise"] = c.config.readers_per_expertise;
    nlohmann::json profiles = nlohmann::json::object();
    for (const auto& [e, p] : c.config.profiles) profiles[telemetry::to_string(e)] = profile_json(p);
    manifest["profiles"] = profiles;
    nlohmann::json sc;
    sc["roi_count"] = c.config.slide.roi_count;
    sc["feature_dim"] = c.config.slide.feature_dim;
    sc["feature_noise_sd"] = c.config.slide.feature_noise_sd;
    sc["mask_smooth_sigma"] = c.config.slide.mask_smooth_sigma;
    sc["roi_min_axis"] = c.config.slide.roi_min_axis;
    sc["roi_max_axis"] = c.config.slide.roi_max_axis;
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : c.config.slide.bins) bins.push_back(bin_json(b));
    sc["bins"] = bins;
    manifest["slide_config"] = sc;

    nlohmann::json slides = nlohmann::json::array();
    for (const auto& slide : c.slides) {
        nlohmann::json sj;
        sj["wsi_id"] = slide.wsi_id;
        sj["difficulty"] = slide.difficulty;
        sj["true_grade"] = {{"primary", slide.true_grade.primary},
                            {"secondary", slide.true_grade.secondary}};
        std::string mask_file = "masks/" + slide.wsi_id + ".atnt";
        telemetry::write_atnt_file(dir / mask_file, heatmap::to_atnt(slide.roi_mask));
        sj["mask"] = mask_file;
        nlohmann::json feats = nlohmann::json::object();
        for (const auto& [label, f] : slide.features) {
            std::string file = "features/" + slide.wsi_id + "_" + label + ".atnt";
            telemetry::write_atnt_file(dir / file, telemetry::to_atnt(f));
            feats[label] = file;
        }
        sj["features"] = feats;
        slides.push_back(std::move(sj));
    }
    manifest["slides"] = slides;

    nlohmann::json sessions = nlohmann::json::array();
    for (const auto& s : c.sessions) {
        std::string file = "sessions/" + s.session_id + ".jsonl";
        telemetry::write_session_file(dir / file, s);
        sessions.push_back(file);
    }
    manifest["sessions"] = sessions;

    std::ofstream out(dir / "cohort.json", std::ios::binary);
    if (!out) throw DataError("IoError", "cannot write " + (dir / "cohort.json").string());
    out << manifest.dump(2) << "\n";
}

Cohort load_cohort(const fs::path& dir) {
    std::ifstream in(dir / "cohort.json", std::ios::binary);
    if (!in) throw DataError("IoError", "cannot read " + (dir / "cohort.json").string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("BadManifest", e.what());
    }
    Cohort c;
    try {
        c.config.seed = manifest.at("seed").get<std::uint64_t>();
        c.config.n_slides = manifest.at("n_slides").get<int>();
        c.config.readers_per_expertise = manifest.at("readers_per_expertise").get<int>();
        c.config.profiles.clear();
        for (const auto& [name, pj] : manifest.at("profiles").items())
            c.config.profiles[telemetry::expertise_from_string(name)] = profile_from_json(pj);
        const auto& sc = manifest.at("slide_config");
        c.config.slide.roi_count = sc.at("roi_count").get<int>();
        c.config.slide.feature_dim = sc.at("feature_dim").get<int>();
        c.config.slide.feature_noise_sd = sc.at("feature_noise_sd").get<double>();
        c.config.slide.mask_smooth_sigma = sc.at("mask_smooth_sigma").get<double>();
        c.config.slide.roi_min_axis = sc.at("roi_min_axis").get<double>();
        c.config.slide.roi_max_axis = sc.at("roi_max_axis").get<double>();
        c.config.slide.bins.clear();
        for (const auto& bj : sc.at("bins")) c.config.slide.bins.push_back(bin_from_json(bj));
        for (const auto& sj : manifest.at("slides")) {
            SyntheticSlide slide;
            slide.wsi_id = sj.at("wsi_id").get<std::string>();
            slide.difficulty = sj.at("difficulty").get<double>();
            slide.true_grade.primary = sj.at("true_grade").at("primary").get<int>();
            slide.true_grade.secondary = sj.at("true_grade").at("secondary").get<int>();
            telemetry::TensorFile mf =
                telemetry::read_atnt_file(dir / sj.at("mask").get<std::string>());
            std::string mask_label =
                c.config.slide.bins.empty() ? "" : c.config.slide.bins.back().label;
            slide.roi_mask = heatmap::heatmap_from_atnt(mf, mask_label);
            for (const auto& [label, file] : sj.at("features").items())
                slide.features[label] = telemetry::feature_grid_from_atnt(
                    telemetry::read_atnt_file(dir / file.get<std::string>()));
            c.slides.push_back(std::move(slide));
        }
        for (const auto& file : manifest.at("sessions"))
            c.sessions.push_back(telemetry::read_session_file(dir / file.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("BadManifest", e.what());
    }
    return c;
}

}  // namespace attnscope::synth
