// attnscope: viewport scanpath analytics pipeline.
// Exit codes: 0 ok, 2 usage, 3 data/validation, 4 numeric/degenerate input.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "attnscope/analysis.hpp"
#include "attnscope/config.hpp"
#include "attnscope/error.hpp"
#include "attnscope/heatmap.hpp"
#include "attnscope/metrics.hpp"
#include "attnscope/models.hpp"
#include "attnscope/report.hpp"
#include "attnscope/svg.hpp"
#include "attnscope/synth.hpp"
#include "attnscope/telemetry.hpp"
#include "attnscope/training.hpp"
#include "attnscope/util.hpp"

namespace fs = std::filesystem;
using namespace attnscope;
using nlohmann::json;

namespace {

struct Options {
    bool quiet = false;
    bool timestamp = false;
};

void info(const Options& o, const std::string& msg) {
    if (!o.quiet) std::cout << msg << "\n";
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("IoError", "cannot write " + p.string());
    out << text;
}

std::string timestamp_utc() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

heatmap::GridSpec parse_grid_arg(const std::string& s, const std::string& mag_level) {
    int rows = 0, cols = 0;
    char x = 0;
    std::istringstream in(s);
    if (!(in >> rows >> x >> cols) || x != 'x' || rows <= 0 || cols <= 0 || !in.eof())
        throw UsageError("BadGridArg", "expected ROWSxCOLS, got '" + s + "'");
    return {rows, cols, mag_level};
}

metrics::Fixations parse_fixation_csv(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("IoError", "cannot read " + p.string());
    metrics::Fixations fix;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        int row = 0, col = 0;
        char comma = 0;
        std::istringstream cells(line);
        if (cells >> row >> comma >> col && comma == ',') {
            fix.push_back({row, col});
        } else if (first) {
            // a non-numeric first line is taken as a header
        } else {
            throw DataError("MalformedRecord", "bad fixation line '" + line + "'");
        }
        first = false;
    }
    return fix;
}

json summary_json(const telemetry::CohortSummary& s) {
    json j;
    j["n_sessions"] = s.n_sessions;
    j["mean_duration_ms"] = s.mean_duration_ms;
    json a = json::object(), b = json::object();
    for (const auto& [e, n] : s.sessions_per_expertise) a[telemetry::to_string(e)] = n;
    for (const auto& [e, n] : s.readers_per_expertise) b[telemetry::to_string(e)] = n;
    j["sessions_per_expertise"] = a;
    j["readers_per_expertise"] = b;
    j["sessions_per_wsi"] = s.sessions_per_wsi;
    j["readers_per_wsi"] = s.readers_per_wsi;
    json up = json::array();
    for (const auto& [wsi, e] : s.underpowered)
        up.push_back({{"wsi_id", wsi}, {"expertise", telemetry::to_string(e)}});
    j["underpowered"] = up;
    return j;
}

std::vector<svg::Series> scatter_series(const analysis::AgreementReport& rep) {
    const char* colors[3] = {"#1f77b4", "#ff7f0e", "#2ca02c"};
    const telemetry::Expertise order[3] = {telemetry::Expertise::resident,
                                           telemetry::Expertise::general,
                                           telemetry::Expertise::specialist};
    std::vector<svg::Series> series;
    for (int gi = 0; gi < 3; ++gi) {
        svg::Series s;
        s.label = telemetry::to_string(order[gi]);
        s.color = colors[gi];
        for (const auto& p : rep.points)
            if (p.expertise == order[gi])
                s.points.emplace_back(p.attn_agreement, p.grade_concordance);
        for (const auto& g : rep.groups)
            if (g.expertise == order[gi] && g.regression) s.fit = g.regression;
        if (!s.points.empty()) series.push_back(std::move(s));
    }
    return series;
}

const heatmap::MagBin& bin_for_label(const std::vector<heatmap::MagBin>& bins,
                                     const std::string& label) {
    for (const auto& b : bins)
        if (b.label == label) return b;
    throw DataError("InvalidConfig", "no magnification bin labelled '" + label + "'");
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_ingest(const Options& o, const fs::path& sessions_dir,
               const std::optional<fs::path>& out_dir) {
    auto sessions = config::load_sessions_dir(sessions_dir);
    telemetry::CohortSummary s = telemetry::validate_cohort(sessions);
    std::string text = summary_json(s).dump(2) + "\n";
    if (out_dir) {
        fs::create_directories(*out_dir);
        write_text(*out_dir / "cohort_summary.json", text);
        info(o, "wrote " + (*out_dir / "cohort_summary.json").string());
    } else {
        std::cout << text;
    }
    return 0;
}

int cmd_heatmap(const Options& o, const fs::path& session_file, const std::string& grid_arg,
                const std::string& mag_level, const std::string& norm_arg,
                std::optional<double> time_fraction, const fs::path& out_file) {
    // argument errors must not depend on what is on disk
    heatmap::SampleFilter filter;
    heatmap::GridSpec grid;
    if (!mag_level.empty()) {
        const heatmap::MagBin& b = heatmap::default_bin(mag_level);
        filter.mag_bin = {b.lo, b.hi};
        grid = b.grid();
    }
    if (!grid_arg.empty()) grid = parse_grid_arg(grid_arg, mag_level);
    if (grid.rows == 0) throw UsageError("MissingParam", "need --grid or --mag-level");
    if (time_fraction) filter.time_fraction = *time_fraction;
    telemetry::Session s = telemetry::read_session_file(session_file);
    heatmap::Heatmap m = heatmap::accumulate(s, grid, filter);
    heatmap::Norm norm = heatmap::norm_from_string(norm_arg);
    if (norm != heatmap::Norm::raw) m = heatmap::normalize(m, norm);
    if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
    telemetry::write_atnt_file(out_file, heatmap::to_atnt(m));
    info(o, "wrote " + out_file.string());
    return 0;
}

int cmd_metrics(const fs::path& pred_file, const fs::path& gt_file,
                const std::optional<fs::path>& fixations_file, const std::string& kld_dir_arg) {
    heatmap::Heatmap pred = heatmap::heatmap_from_atnt(telemetry::read_atnt_file(pred_file));
    heatmap::Heatmap gt = heatmap::heatmap_from_atnt(telemetry::read_atnt_file(gt_file));
    metrics::KldDirection dir = metrics::kld_direction_from_string(kld_dir_arg);
    double cc = metrics::cc(pred, gt);
    std::optional<double> nss;
    if (fixations_file) nss = metrics::nss(pred, parse_fixation_csv(*fixations_file));
    double kld = dir == metrics::KldDirection::gt_to_pred ? metrics::kld(gt, pred)
                                                          : metrics::kld(pred, gt);
    std::cout << "cc,nss,kld\n"
              << util::fmt_double(cc) << ',' << (nss ? util::fmt_double(*nss) : "") << ','
              << util::fmt_double(kld) << "\n";
    return 0;
}

int cmd_agree(const Options& o, const fs::path& sessions_dir, const std::string& grid_arg,
              const std::string& mag_level, const fs::path& out_dir, bool with_svg) {
    auto sessions = config::load_sessions_dir(sessions_dir);
    heatmap::GridSpec grid = heatmap::default_bin(mag_level).grid();
    if (!grid_arg.empty()) grid = parse_grid_arg(grid_arg, mag_level);
    analysis::AgreementReport rep = analysis::expertise_agreement_report(sessions, grid);
    fs::create_directories(out_dir);
    write_text(out_dir / report::kAgreementPoints, report::agreement_points_csv(rep));
    write_text(out_dir / report::kAgreementGroups, report::agreement_groups_csv(rep));
    info(o, "wrote " + (out_dir / report::kAgreementPoints).string() + " (" +
                std::to_string(rep.points.size()) + " points)");
    if (with_svg) {
        write_text(out_dir / "agreement_scatter.svg",
                   svg::render_scatter(scatter_series(rep),
                                       "attention agreement (mean pairwise CC)",
                                       "grade concordance",
                                       "Within-group agreement by expertise"));
        info(o, "wrote " + (out_dir / "agreement_scatter.svg").string());
    }
    return 0;
}

int cmd_simulate(const Options& o, const std::optional<fs::path>& config_file,
                 std::optional<std::uint64_t> seed, const fs::path& out_dir) {
    synth::CohortConfig cfg =
        config_file ? config::load_cohort_config(*config_file) : synth::CohortConfig{};
    if (seed) cfg.seed = *seed;
    synth::Cohort cohort = synth::generate_cohort(cfg);
    synth::write_cohort(out_dir, cohort);
    info(o, "wrote cohort: " + std::to_string(cohort.slides.size()) + " slides, " +
                std::to_string(cohort.sessions.size()) + " sessions -> " + out_dir.string());
    return 0;
}

json run_manifest(const Options& o, const config::ExperimentConfig& cfg,
                  const std::string& model_json, std::size_t n_samples) {
    json j;
    j["command"] = "train";
    j["task"] = config::to_string(cfg.task);
    j["seed"] = cfg.seed;
    j["k"] = cfg.k;
    j["model"] = json::parse(model_json);
    j["config_hash"] = models::config_hash(model_json);
    j["n_samples"] = n_samples;
    j["threads"] = util::worker_count();
    if (o.timestamp) j["generated_at"] = timestamp_utc();
    return j;
}

int cmd_train(const Options& o, const fs::path& config_file, std::optional<std::uint64_t> seed,
              const std::optional<fs::path>& out_override) {
    config::ExperimentConfig cfg = config::load_experiment(config_file);
    if (seed) {
        cfg.seed = *seed;
        cfg.hyper.seed = *seed;
    }
    if (out_override) cfg.output_dir = *out_override;
    fs::create_directories(cfg.output_dir);

    auto all_sessions = config::load_sessions_dir(cfg.sessions_dir);
    std::vector<telemetry::Session> sessions;
    for (auto& s : all_sessions)
        if (cfg.filter.keeps(s)) sessions.push_back(std::move(s));
    if (sessions.empty()) throw DataError("EmptyDataset", "no sessions after filtering");

    std::set<std::string> wsi_ids;
    for (const auto& s : sessions) wsi_ids.insert(s.wsi_id);

    if (cfg.task == config::Task::attention) {
        const std::string& label = cfg.attention_model.grid.mag_level;
        const heatmap::MagBin& bin = bin_for_label(cfg.bins, label);
        if (!bin.grid().same_dims(cfg.attention_model.grid))
            throw DataError("InvalidConfig", "model grid does not match bin '" + label + "'");
        std::vector<training::AttentionSample> samples;
        for (const auto& wsi : wsi_ids) {
            training::AttentionSample sample;
            try {
                sample.target = training::build_attention_targets(sessions, wsi, bin);
            } catch (const DataError& e) {
                if (e.code() == "NoSessions") {
                    info(o, "skipping " + wsi + ": no samples in bin " + label);
                    continue;
                }
                throw;
            }
            sample.features = config::load_features(cfg.features_dir, wsi, label);
            sample.wsi_id = wsi;
            heatmap::SampleFilter f;
            f.mag_bin = {bin.lo, bin.hi};
            for (const auto& s : sessions) {
                if (s.wsi_id != wsi) continue;
                metrics::Fixations fx = metrics::fixations_from_session(s, bin.grid(), f);
                sample.fixations.insert(sample.fixations.end(), fx.begin(), fx.end());
            }
            samples.push_back(std::move(sample));
        }
        if (samples.empty()) throw DataError("EmptyDataset", "no usable slides");
        std::string model_json = models::config_json(cfg.attention_model);
        auto specs = models::prostattformer_param_specs(cfg.attention_model);
        auto on_fold = [&](std::size_t f, const models::ModelParams& params) {
            fs::path dir = cfg.output_dir / "checkpoints" / ("fold" + std::to_string(f));
            models::save_checkpoint(dir, params, specs, model_json);
            info(o, "fold " + std::to_string(f) + " checkpoint -> " + dir.string());
        };
        training::FoldReport rep =
            training::run_attention_cv(cfg.attention_model, samples, cfg.hyper, cfg.k, on_fold);
        write_text(cfg.output_dir / report::kAttentionFolds, report::attention_folds_csv(rep));
        write_text(cfg.output_dir / report::kAttentionWsis, report::wsi_metrics_csv(rep.per_wsi));
        write_text(cfg.output_dir / report::kRunManifest,
                   run_manifest(o, cfg, model_json, samples.size()).dump(2) + "\n");
        info(o, "cc " + util::fmt_double(rep.summary.at("cc").mean, 4) + " over " +
                    std::to_string(rep.folds.size()) + " folds");
        return 0;
    }

    const std::string& label = cfg.expertise_model.grid.mag_level;
    std::map<std::string, telemetry::FeatureGrid> features;
    for (const auto& wsi : wsi_ids)
        features[wsi] = config::load_features(cfg.features_dir, wsi, label);
    std::vector<training::ExpertiseSample> samples;
    for (const auto& s : sessions)
        samples.push_back(
            training::make_expertise_sample(s, features.at(s.wsi_id), cfg.expertise_model,
                                            cfg.bins));
    std::vector<models::FusionMode> modes{cfg.expertise_model.fusion};
    if (cfg.ablation)
        for (auto m : {models::FusionMode::both, models::FusionMode::temporal_only,
                       models::FusionMode::magnification_only})
            if (m != cfg.expertise_model.fusion) modes.push_back(m);
    std::map<models::FusionMode, training::FoldReport> by_variant;
    std::string base_json;
    for (models::FusionMode mode : modes) {
        models::ExpertiseNetConfig variant = models::ablation_variant(cfg.expertise_model, mode);
        std::string model_json = models::config_json(variant);
        if (mode == cfg.expertise_model.fusion) base_json = model_json;
        auto specs = models::expertisenet_param_specs(variant);
        auto on_fold = [&](std::size_t f, const models::ModelParams& params) {
            fs::path dir = cfg.output_dir / "checkpoints" / models::to_string(mode) /
                           ("fold" + std::to_string(f));
            models::save_checkpoint(dir, params, specs, model_json);
        };
        by_variant[mode] =
            training::run_expertise_cv(variant, samples, cfg.hyper, cfg.k, on_fold);
        info(o, std::string(models::to_string(mode)) + ": accuracy " +
                    util::fmt_double(by_variant[mode].summary.at("accuracy").mean, 4));
    }
    write_text(cfg.output_dir / report::kExpertiseFolds, report::expertise_folds_csv(by_variant));
    write_text(cfg.output_dir / report::kRunManifest,
               run_manifest(o, cfg, base_json, samples.size()).dump(2) + "\n");
    return 0;
}

int cmd_eval(const Options& o, const fs::path& config_file, const fs::path& checkpoint_dir,
             const std::optional<fs::path>& out_override) {
    config::ExperimentConfig cfg = config::load_experiment(config_file);
    if (out_override) cfg.output_dir = *out_override;
    fs::create_directories(cfg.output_dir);
    models::Checkpoint ckpt = models::load_checkpoint(checkpoint_dir);
    std::string kind = models::model_kind_from_json(ckpt.config_json);

    auto all_sessions = config::load_sessions_dir(cfg.sessions_dir);
    std::vector<telemetry::Session> sessions;
    for (auto& s : all_sessions)
        if (cfg.filter.keeps(s)) sessions.push_back(std::move(s));
    if (sessions.empty()) throw DataError("EmptyDataset", "no sessions after filtering");
    std::set<std::string> wsi_ids;
    for (const auto& s : sessions) wsi_ids.insert(s.wsi_id);

    if (kind == "prostattformer") {
        models::ProstAttFormerConfig mc =
            models::prostattformer_config_from_json(ckpt.config_json);
        const heatmap::MagBin& bin = bin_for_label(cfg.bins, mc.grid.mag_level);
        std::vector<training::AttentionSample> samples;
        for (const auto& wsi : wsi_ids) {
            training::AttentionSample sample;
            try {
                sample.target = training::build_attention_targets(sessions, wsi, bin);
            } catch (const DataError& e) {
                if (e.code() == "NoSessions") continue;
                throw;
            }
            sample.features = config::load_features(cfg.features_dir, wsi, mc.grid.mag_level);
            sample.wsi_id = wsi;
            heatmap::SampleFilter f;
            f.mag_bin = {bin.lo, bin.hi};
            for (const auto& s : sessions) {
                if (s.wsi_id != wsi) continue;
                metrics::Fixations fx = metrics::fixations_from_session(s, bin.grid(), f);
                sample.fixations.insert(sample.fixations.end(), fx.begin(), fx.end());
            }
            samples.push_back(std::move(sample));
        }
        if (samples.empty()) throw DataError("EmptyDataset", "no usable slides");
        training::AttentionEval ev = training::evaluate_attention(ckpt.params, mc, samples);
        write_text(cfg.output_dir / report::kEvalWsis, report::wsi_metrics_csv(ev.per_wsi));
        info(o, "wrote " + (cfg.output_dir / report::kEvalWsis).string());

        if (!cfg.masks_dir.empty()) {
            std::ostringstream seg;
            seg << "wsi_id,cc_seg,nss_seg,kld_seg\n";
            for (const auto& sample : samples) {
                fs::path mask_file = cfg.masks_dir / (sample.wsi_id + ".atnt");
                if (!fs::exists(mask_file)) continue;
                heatmap::Heatmap mask = heatmap::heatmap_from_atnt(
                    telemetry::read_atnt_file(mask_file), mc.grid.mag_level);
                if (!mask.grid.same_dims(mc.grid))
                    mask = heatmap::resample(mask, mc.grid);
                models::AttentionPrediction pred =
                    models::prostattformer_forward(sample.features, ckpt.params, mc);
                metrics::SegScores sc = metrics::eval_against_mask(pred.map, mask);
                auto cell = [](const std::optional<double>& v) {
                    return v ? util::fmt_double(*v) : std::string();
                };
                seg << sample.wsi_id << ',' << cell(sc.cc_seg) << ',' << cell(sc.nss_seg) << ','
                    << cell(sc.kld_seg) << '\n';
            }
            write_text(cfg.output_dir / "eval_segmentation.csv", seg.str());
            info(o, "wrote " + (cfg.output_dir / "eval_segmentation.csv").string());
        }
        return 0;
    }

    models::ExpertiseNetConfig mc = models::expertisenet_config_from_json(ckpt.config_json);
    std::map<std::string, telemetry::FeatureGrid> features;
    for (const auto& wsi : wsi_ids)
        features[wsi] = config::load_features(cfg.features_dir, wsi, mc.grid.mag_level);
    std::vector<std::vector<double>> scores;
    std::vector<int> labels;
    std::ostringstream rows;
    rows << "session_id,label,predicted\n";
    for (const auto& s : sessions) {
        training::ExpertiseSample sample =
            training::make_expertise_sample(s, features.at(s.wsi_id), mc, cfg.bins);
        std::vector<double> logits = training::expertise_logits(mc, ckpt.params, sample);
        int pred = static_cast<int>(
            std::max_element(logits.begin(), logits.end()) - logits.begin());
        rows << s.session_id << ',' << sample.label << ',' << pred << '\n';
        scores.push_back(std::move(logits));
        labels.push_back(sample.label);
    }
    training::Classification c = training::classification_metrics(scores, labels);
    std::ostringstream top;
    top << "accuracy,macro_f1,auc\n"
        << util::fmt_double(c.accuracy) << ',' << util::fmt_double(c.macro_f1) << ','
        << util::fmt_double(c.auc) << '\n';
    write_text(cfg.output_dir / "eval_classification.csv", top.str());
    write_text(cfg.output_dir / "eval_predictions.csv", rows.str());
    info(o, "accuracy " + util::fmt_double(c.accuracy, 4));
    return 0;
}

int cmd_report(const Options& o, const fs::path& run_dir) {
    report::GeneratedReport rep = report::generate(run_dir);
    for (const auto& p : rep.written) info(o, "wrote " + (run_dir / p).string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attnscope: viewport scanpath analytics"};
    app.require_subcommand(1);
    Options opts;
    app.add_flag("--quiet", opts.quiet, "suppress progress output");
    app.add_flag("--timestamp", opts.timestamp,
                 "stamp generation time into manifests (breaks byte-identical reruns)");

    std::string sessions_dir, grid_arg, mag_level, norm_arg = "raw", kld_dir = "gt_to_pred";
    std::string session_file, pred_file, gt_file, config_file, checkpoint_dir, run_dir, out_arg;
    std::string fixations_file;
    std::optional<double> time_fraction;
    std::optional<std::uint64_t> seed;
    bool with_svg = false;

    CLI::App* ingest = app.add_subcommand("ingest", "validate and summarize a session directory");
    ingest->add_option("--sessions", sessions_dir, "directory of session .jsonl files")
        ->required();
    ingest->add_option("--out", out_arg, "write cohort_summary.json here instead of stdout");

    CLI::App* hm = app.add_subcommand("heatmap", "dwell-weighted heatmap for one session");
    hm->add_option("--session", session_file, "session .jsonl file")->required();
    hm->add_option("--grid", grid_arg, "grid as ROWSxCOLS, e.g. 50x50");
    hm->add_option("--mag-level", mag_level, "restrict to a default magnification bin");
    hm->add_option("--norm", norm_arg, "raw|unit_sum|minmax|zscore");
    hm->add_option("--time-fraction", time_fraction, "keep samples up to this time fraction");
    hm->add_option("--out", out_arg, "output .atnt file")->required();

    CLI::App* mt = app.add_subcommand("metrics", "cc/nss/kld between two maps");
    mt->add_option("--pred", pred_file, "predicted map .atnt")->required();
    mt->add_option("--gt", gt_file, "ground truth map .atnt")->required();
    mt->add_option("--fixations", fixations_file, "fixation csv with row,col lines");
    mt->add_option("--kld-direction", kld_dir, "gt_to_pred (default) or pred_to_gt");

    CLI::App* ag = app.add_subcommand("agree", "within-group agreement analysis");
    ag->add_option("--sessions", sessions_dir, "directory of session .jsonl files")->required();
    ag->add_option("--grid", grid_arg, "grid as ROWSxCOLS");
    ag->add_option("--mag-level", mag_level, "magnification bin for the maps")
        ->default_val("10x");
    ag->add_option("--out", out_arg, "output directory")->required();
    ag->add_flag("--svg", with_svg, "also render the scatter figure");

    CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic cohort");
    sim->add_option("--config", config_file, "cohort config json");
    sim->add_option("--seed", seed, "override the config seed");
    sim->add_option("--out", out_arg, "output directory")->required();

    CLI::App* tr = app.add_subcommand("train", "cross-validated training");
    tr->add_option("--config", config_file, "experiment config json")->required();
    tr->add_option("--seed", seed, "override the config seed");
    tr->add_option("--out", out_arg, "override the config output directory");

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--config", config_file, "experiment config json")->required();
    ev->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    ev->add_option("--out", out_arg, "override the config output directory");

    CLI::App* rp = app.add_subcommand("report", "render tables and figures for a run directory");
    rp->add_option("--run", run_dir, "run directory with agree/train/eval outputs")->required();

    for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", {{"code", "UsageError"}, {"detail", e.what()}}}}.dump()
                  << "\n";
        std::cerr << app.help();
        return 2;
    }

    auto opt_path = [](const std::string& s) -> std::optional<fs::path> {
        return s.empty() ? std::nullopt : std::optional<fs::path>(s);
    };
    auto opt_file = [&](const std::string& s) { return opt_path(s); };

    try {
        if (*ingest) return cmd_ingest(opts, sessions_dir, opt_path(out_arg));
        if (*hm)
            return cmd_heatmap(opts, session_file, grid_arg, mag_level, norm_arg, time_fraction,
                               out_arg);
        if (*mt) return cmd_metrics(pred_file, gt_file, opt_file(fixations_file), kld_dir);
        if (*ag) return cmd_agree(opts, sessions_dir, grid_arg, mag_level, out_arg, with_svg);
        if (*sim) return cmd_simulate(opts, opt_file(config_file), seed, out_arg);
        if (*tr) return cmd_train(opts, config_file, seed, opt_path(out_arg));
        if (*ev) return cmd_eval(opts, config_file, checkpoint_dir, opt_path(out_arg));
        if (*rp) return cmd_report(opts, run_dir);
    } catch (const UsageError& e) {
        std::cerr << json{{"error", {{"code", e.code()}, {"detail", e.detail()}}}}.dump() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << json{{"error", {{"code", e.code()}, {"detail", e.detail()}}}}.dump() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << json{{"error", {{"code", e.code()}, {"detail", e.detail()}}}}.dump() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"code", "Internal"}, {"detail", e.what()}}}}.dump() << "\n";
        return 1;
    }
    return 0;
}
