#include "attnscope/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "attnscope/error.hpp"
#include "attnscope/heatmap.hpp"
#include "attnscope/svg.hpp"
#include "attnscope/telemetry.hpp"
#include "attnscope/util.hpp"

namespace attnscope::report {

namespace fs = std::filesystem;
using util::fmt_double;

std::string agreement_points_csv(const analysis::AgreementReport& r) {
    std::ostringstream out;
    out << "wsi_id,expertise,n_readers,attn_agreement,grade_concordance\n";
    for (const auto& p : r.points)
        out << p.wsi_id << ',' << telemetry::to_string(p.expertise) << ',' << p.n_readers << ','
            << fmt_double(p.attn_agreement) << ',' << fmt_double(p.grade_concordance) << '\n';
    return out.str();
}

std::string agreement_groups_csv(const analysis::AgreementReport& r) {
    std::ostringstream out;
    out << "expertise,n_points,mean_agreement,mean_concordance,r,p,slope,intercept\n";
    for (const auto& g : r.groups) {
        out << telemetry::to_string(g.expertise) << ',' << g.n_points << ','
            << fmt_double(g.mean_agreement) << ',' << fmt_double(g.mean_concordance) << ',';
        if (g.regression)
            out << fmt_double(g.regression->r) << ',' << fmt_double(g.regression->p) << ','
                << fmt_double(g.regression->slope) << ','
                << fmt_double(g.regression->intercept);
        else
            out << ",,,";
        out << '\n';
    }
    return out.str();
}

std::string attention_folds_csv(const training::FoldReport& r) {
    std::ostringstream out;
    out << "fold,cc,nss,kld,n_test\n";
    for (std::size_t f = 0; f < r.folds.size(); ++f) {
        const auto& m = r.folds[f];
        out << f << ',' << fmt_double(m.at("cc")) << ',';
        if (m.count("nss")) out << fmt_double(m.at("nss"));
        out << ',' << fmt_double(m.at("kld")) << ',' << fmt_double(m.at("n_test")) << '\n';
    }
    return out.str();
}

std::string wsi_metrics_csv(const std::vector<training::WsiMetrics>& rows) {
    std::ostringstream out;
    out << "wsi_id,cc,nss,kld,nss_defined,degenerate\n";
    for (const auto& w : rows) {
        out << w.wsi_id << ',' << fmt_double(w.cc) << ',';
        if (w.nss_defined) out << fmt_double(w.nss);
        out << ',' << fmt_double(w.kld) << ',' << (w.nss_defined ? 1 : 0) << ','
            << (w.degenerate ? 1 : 0) << '\n';
    }
    return out.str();
}

std::string expertise_folds_csv(
    const std::map<models::FusionMode, training::FoldReport>& by_variant) {
    std::ostringstream out;
    out << "variant,fold,accuracy,macro_f1,auc,n_test\n";
    for (const auto& [mode, r] : by_variant)
        for (std::size_t f = 0; f < r.folds.size(); ++f) {
            const auto& m = r.folds[f];
            out << models::to_string(mode) << ',' << f << ',' << fmt_double(m.at("accuracy"))
                << ',' << fmt_double(m.at("macro_f1")) << ',' << fmt_double(m.at("auc")) << ','
                << fmt_double(m.at("n_test")) << '\n';
        }
    return out.str();
}

namespace {

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw DataError("MissingInputs", "column '" + name + "' missing");
    }
};

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::optional<Csv> read_csv(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    Csv csv;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            csv.header = split_line(line);
            first = false;
        } else {
            csv.rows.push_back(split_line(line));
        }
    }
    if (first) return std::nullopt;
    return csv;
}

std::optional<double> num(const std::vector<std::string>& row, int col) {
    if (col < 0 || col >= static_cast<int>(row.size()) || row[col].empty()) return std::nullopt;
    try {
        return std::stod(row[col]);
    } catch (...) {
        return std::nullopt;
    }
}

training::MetricStats stats_of(const std::vector<double>& xs) {
    training::MetricStats s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    double acc = 0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(xs.size()));
    return s;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("IoError", "cannot write " + p.string());
    out << text;
}

std::string pm(const training::MetricStats& s) {
    return fmt_double(s.mean, 3) + " \xc2\xb1 " + fmt_double(s.stddev, 3);
}

const char* kGroupColors[3] = {"#1f77b4", "#ff7f0e", "#2ca02c"};

}  // namespace

GeneratedReport generate(const fs::path& run_dir) {
    if (!fs::is_directory(run_dir))
        throw DataError("MissingInputs", run_dir.string() + " is not a directory");
    GeneratedReport out;
    std::ostringstream md;
    md << "# attnscope run report\n";
    bool any = false;

    // manifest is informational; a missing or malformed one never blocks
    std::string mag_label;
    if (std::ifstream mf(run_dir / kRunManifest, std::ios::binary); mf) {
        try {
            nlohmann::json j;
            mf >> j;
            if (j.contains("model") && j["model"].contains("grid"))
                mag_label = j["model"]["grid"].value("mag_level", "");
            md << "\nseed " << j.value("seed", 0ULL) << ", config hash `"
               << j.value("config_hash", std::string("?")) << "`\n";
        } catch (const nlohmann::json::exception&) {
        }
    }

    if (auto pts = read_csv(run_dir / kAgreementPoints)) {
        any = true;
        int c_exp = pts->col("expertise");
        int c_x = pts->col("attn_agreement");
        int c_y = pts->col("grade_concordance");
        auto groups = read_csv(run_dir / kAgreementGroups);
        std::vector<svg::Series> series;
        const telemetry::Expertise order[3] = {telemetry::Expertise::resident,
                                               telemetry::Expertise::general,
                                               telemetry::Expertise::specialist};
        for (int gi = 0; gi < 3; ++gi) {
            svg::Series s;
            s.label = telemetry::to_string(order[gi]);
            s.color = kGroupColors[gi];
            for (const auto& row : pts->rows) {
                if (row[c_exp] != s.label) continue;
                auto x = num(row, c_x), y = num(row, c_y);
                if (x && y) s.points.emplace_back(*x, *y);
            }
            if (groups) {
                int g_exp = groups->col("expertise");
                for (const auto& row : groups->rows) {
                    if (row[g_exp] != s.label) continue;
                    auto slope = num(row, groups->col("slope"));
                    auto intercept = num(row, groups->col("intercept"));
                    auto r = num(row, groups->col("r"));
                    auto p = num(row, groups->col("p"));
                    if (slope && intercept) {
                        analysis::Regression reg;
                        reg.slope = *slope;
                        reg.intercept = *intercept;
                        reg.r = r.value_or(0);
                        reg.p = p.value_or(1);
                        reg.n = static_cast<int>(s.points.size());
                        s.fit = reg;
                    }
                }
            }
            if (!s.points.empty()) series.push_back(std::move(s));
        }
        write_file(run_dir / "agreement_scatter.svg",
                   svg::render_scatter(series, "attention agreement (mean pairwise CC)",
                                       "grade concordance",
                                       "Within-group agreement by expertise"));
        out.written.push_back("agreement_scatter.svg");
        md << "\n## Expertise agreement\n\n![agreement scatter](agreement_scatter.svg)\n";
        if (groups) {
            md << "\n| expertise | points | mean agreement | mean concordance | r | p | slope "
                  "|\n|---|---|---|---|---|---|---|\n";
            int g_exp = groups->col("expertise");
            for (const auto& row : groups->rows) {
                md << "| " << row[g_exp] << " | " << row[groups->col("n_points")] << " | ";
                auto cell = [&](const char* name) {
                    auto v = num(row, groups->col(name));
                    return v ? fmt_double(*v, 3) : std::string("-");
                };
                md << cell("mean_agreement") << " | " << cell("mean_concordance") << " | "
                   << cell("r") << " | " << cell("p") << " | " << cell("slope") << " |\n";
            }
        }
    }

    auto folds = read_csv(run_dir / kAttentionFolds);
    auto wsis = read_csv(run_dir / kAttentionWsis);
    if (!wsis) wsis = read_csv(run_dir / kEvalWsis);
    if (folds || wsis) {
        any = true;
        const char* metric_names[3] = {"cc", "nss", "kld"};
        training::MetricStats fold_stats[3], wsi_stats[3];
        bool have_folds[3] = {false, false, false}, have_wsis[3] = {false, false, false};
        for (int mi = 0; mi < 3; ++mi) {
            if (folds) {
                std::vector<double> xs;
                int c = folds->col(metric_names[mi]);
                for (const auto& row : folds->rows)
                    if (auto v = num(row, c)) xs.push_back(*v);
                if (!xs.empty()) {
                    fold_stats[mi] = stats_of(xs);
                    have_folds[mi] = true;
                }
            }
            if (wsis) {
                std::vector<double> xs;
                int c = wsis->col(metric_names[mi]);
                for (const auto& row : wsis->rows)
                    if (auto v = num(row, c)) xs.push_back(*v);
                if (!xs.empty()) {
                    wsi_stats[mi] = stats_of(xs);
                    have_wsis[mi] = true;
                }
            }
        }
        // the paper-style table leaves open whether +/- spreads over folds or
        // over test slides, so both spreads are emitted side by side
        std::ostringstream t1;
        t1 << "model,mag";
        for (const char* m : metric_names)
            t1 << ',' << m << "_mean," << m << "_std_folds," << m << "_std_wsis";
        t1 << "\nProstAttFormer," << mag_label;
        for (int mi = 0; mi < 3; ++mi) {
            const training::MetricStats& primary = have_folds[mi] ? fold_stats[mi] : wsi_stats[mi];
            t1 << ',' << ((have_folds[mi] || have_wsis[mi]) ? fmt_double(primary.mean) : "");
            t1 << ',' << (have_folds[mi] ? fmt_double(fold_stats[mi].stddev) : "");
            t1 << ',' << (have_wsis[mi] ? fmt_double(wsi_stats[mi].stddev) : "");
        }
        t1 << '\n';
        write_file(run_dir / "table1.csv", t1.str());
        out.written.push_back("table1.csv");
        md << "\n## Attention prediction\n\n| model | mag | CC | NSS | KLD |\n|---|---|---|---|"
              "---|\n| ProstAttFormer | "
           << (mag_label.empty() ? "-" : mag_label) << " | ";
        for (int mi = 0; mi < 3; ++mi) {
            if (have_folds[mi])
                md << pm(fold_stats[mi]) << " (folds)";
            else if (have_wsis[mi])
                md << pm(wsi_stats[mi]) << " (wsis)";
            else
                md << "-";
            md << (mi == 2 ? " |\n" : " | ");
        }
    }

    if (auto ef = read_csv(run_dir / kExpertiseFolds)) {
        any = true;
        int c_var = ef->col("variant");
        std::vector<std::string> variants;
        for (const char* v : {"temporal_only", "magnification_only", "both"}) variants.push_back(v);
        for (const auto& row : ef->rows)
            if (std::find(variants.begin(), variants.end(), row[c_var]) == variants.end())
                variants.push_back(row[c_var]);
        std::ostringstream t3;
        t3 << "model,accuracy_mean,accuracy_std,f1_mean,f1_std,auc_mean,auc_std\n";
        md << "\n## Expertise classification\n\n| model | accuracy | F1 | AUC "
              "|\n|---|---|---|---|\n";
        const char* metric_names[3] = {"accuracy", "macro_f1", "auc"};
        for (const auto& variant : variants) {
            training::MetricStats s[3];
            bool present = false;
            for (int mi = 0; mi < 3; ++mi) {
                std::vector<double> xs;
                int c = ef->col(metric_names[mi]);
                for (const auto& row : ef->rows)
                    if (row[c_var] == variant)
                        if (auto v = num(row, c)) xs.push_back(*v);
                if (!xs.empty()) present = true;
                s[mi] = stats_of(xs);
            }
            if (!present) continue;
            std::string label = "ExpertiseNet (" + variant + ")";
            t3 << label;
            for (int mi = 0; mi < 3; ++mi)
                t3 << ',' << fmt_double(s[mi].mean) << ',' << fmt_double(s[mi].stddev);
            t3 << '\n';
            md << "| " << label << " | " << pm(s[0]) << " | " << pm(s[1]) << " | " << pm(s[2])
               << " |\n";
        }
        write_file(run_dir / "table3.csv", t3.str());
        out.written.push_back("table3.csv");
    }

    std::vector<fs::path> maps;
    for (const auto& entry : fs::directory_iterator(run_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".atnt")
            maps.push_back(entry.path());
    std::sort(maps.begin(), maps.end());
    std::vector<std::string> rendered;
    for (const auto& p : maps) {
        telemetry::TensorFile tf = telemetry::read_atnt_file(p);
        if (tf.dims.size() != 2) continue;  // only plain maps render
        heatmap::Heatmap m = heatmap::heatmap_from_atnt(tf);
        std::string name = p.stem().string() + ".svg";
        write_file(run_dir / name, svg::render_heatmap(m));
        out.written.push_back(name);
        rendered.push_back(name);
    }
    if (!rendered.empty()) {
        any = true;
        md << "\n## Heatmaps\n\n";
        for (const auto& name : rendered)
            md << "- ![" << name << "](" << name << ")\n";
    }

    if (!any)
        throw DataError("MissingInputs", "no agree/eval/train outputs in " + run_dir.string());
    write_file(run_dir / "report.md", md.str());
    out.written.push_back("report.md");
    return out;
}

}  // namespace attnscope::report
