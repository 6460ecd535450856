#include "attnscope/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "attnscope/error.hpp"
#include "attnscope/rng.hpp"

namespace attnscope::training {

using models::ModelParams;
using tensor::Graph;
using tensor::Tensor;

const char* to_string(Optimizer o) {
    return o == Optimizer::adam_decoupled ? "adam_decoupled" : "sgd";
}

Optimizer optimizer_from_string(std::string_view s) {
    if (s == "adam_decoupled") return Optimizer::adam_decoupled;
    if (s == "sgd") return Optimizer::sgd;
    throw DataError("InvalidConfig", "unknown optimizer '" + std::string(s) + "'");
}

void validate(const HyperParams& h) {
    if (h.batch_size < 1 || h.epochs < 1 || !(h.lr >= 0) || !(h.weight_decay >= 0))
        throw DataError("InvalidConfig", "hyperparameters must be positive");
}

AdamW::AdamW(double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

void AdamW::step(std::map<std::string, Tensor>& params,
                 const std::map<std::string, Tensor>& grads) {
    ++step_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(step_));
    for (auto& [name, theta] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw DataError("MissingParam", "no gradient for " + name);
        const Tensor& grad = git->second;
        if (grad.dims != theta.dims)
            throw DataError("ShapeMismatch", "gradient shape for " + name);
        Tensor& m = m_.try_emplace(name, Tensor(theta.dims)).first->second;
        Tensor& v = v_.try_emplace(name, Tensor(theta.dims)).first->second;
        for (std::size_t i = 0; i < theta.data.size(); ++i) {
            double gi = grad.data[i];
            m.data[i] = b1_ * m.data[i] + (1.0 - b1_) * gi;
            v.data[i] = b2_ * v.data[i] + (1.0 - b2_) * gi * gi;
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            theta.data[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * theta.data[i]);
        }
    }
}

void Sgd::step(std::map<std::string, Tensor>& params,
               const std::map<std::string, Tensor>& grads) {
    for (auto& [name, theta] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw DataError("MissingParam", "no gradient for " + name);
        const Tensor& grad = git->second;
        if (grad.dims != theta.dims)
            throw DataError("ShapeMismatch", "gradient shape for " + name);
        for (std::size_t i = 0; i < theta.data.size(); ++i)
            theta.data[i] -= lr_ * (grad.data[i] + wd_ * theta.data[i]);
    }
}

std::vector<std::vector<std::size_t>> kfold_split(const std::vector<std::string>& group_keys,
                                                  int k, std::uint64_t seed) {
    std::set<std::string> distinct(group_keys.begin(), group_keys.end());
    if (k < 2 || static_cast<int>(distinct.size()) < k)
        throw DataError("TooFewGroups", std::to_string(distinct.size()) + " groups for k=" +
                                            std::to_string(k));
    std::vector<std::string> groups(distinct.begin(), distinct.end());
    rng::Rng r(seed);
    r.shuffle(groups);
    std::map<std::string, int> fold_of;
    for (std::size_t i = 0; i < groups.size(); ++i)
        fold_of[groups[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < group_keys.size(); ++i)
        folds[static_cast<std::size_t>(fold_of.at(group_keys[i]))].push_back(i);
    return folds;
}

namespace {

std::map<std::string, Tensor> zero_like(const std::map<std::string, Tensor>& params) {
    std::map<std::string, Tensor> out;
    for (const auto& [name, t] : params) out.emplace(name, Tensor(t.dims));
    return out;
}

void accumulate_grads(std::map<std::string, Tensor>& acc, const Graph& g,
                      const models::ParamNodes& p, double weight) {
    for (auto& [name, t] : acc) {
        const Tensor& gr = g.grad(p.at(name));
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += weight * gr.data[i];
    }
}

void scale_grads(std::map<std::string, Tensor>& acc, double s) {
    for (auto& [name, t] : acc)
        for (double& v : t.data) v *= s;
}

struct Stepper {
    Optimizer kind;
    AdamW adam;
    Sgd sgd;

    Stepper(const HyperParams& h)
        : kind(h.optimizer), adam(h.lr, h.weight_decay), sgd(h.lr, h.weight_decay) {}
    void step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& grads) {
        if (kind == Optimizer::adam_decoupled)
            adam.step(params, grads);
        else
            sgd.step(params, grads);
    }
};

double population_std(const std::vector<double>& xs, double mean) {
    if (xs.empty()) return 0;
    double s = 0;
    for (double x : xs) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(xs.size()));
}

MetricStats stats_of(const std::vector<double>& xs) {
    MetricStats st;
    if (xs.empty()) return st;
    for (double x : xs) st.mean += x;
    st.mean /= static_cast<double>(xs.size());
    st.stddev = population_std(xs, st.mean);
    return st;
}

}  // namespace

AttentionTrainResult train_attention(const models::ProstAttFormerConfig& cfg,
                                     const std::vector<AttentionSample>& train,
                                     const std::vector<AttentionSample>& val,
                                     const HyperParams& hyper) {
    models::validate(cfg);
    validate(hyper);
    if (train.empty()) throw DataError("EmptyDataset", "no attention training samples");
    auto check = [&](const AttentionSample& s) {
        if (s.features.grid_h != cfg.grid.rows || s.features.grid_w != cfg.grid.cols ||
            s.features.dim != cfg.embed_dim || !s.target.grid.same_dims(cfg.grid))
            throw DataError("ShapeMismatch", "sample does not match model config");
    };
    for (const auto& s : train) check(s);
    for (const auto& s : val) check(s);

    AttentionTrainResult res;
    ModelParams params = models::init_params(cfg, hyper.seed);
    ModelParams best = params;
    double best_cc = -2.0;
    Stepper opt(hyper);
    rng::Rng shuffle_rng(rng::derive_seed(hyper.seed, 0x7368756666ULL, 0));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const int n_cells = cfg.grid.cells();

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(hyper.batch_size)) {
            std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
            auto gacc = zero_like(params.tensors);
            for (std::size_t bi = start; bi < stop; ++bi) {
                const AttentionSample& s = train[order[bi]];
                Graph g;
                models::ParamNodes p = models::register_params(g, params, true);
                Graph::NodeId scores =
                    models::prostattformer_graph(g, cfg, p, g.value(models::tokens_from_features(s.features)));
                Tensor tgt({n_cells, 1});
                tgt.data = s.target.values;
                Graph::NodeId loss = g.cc_loss(scores, g.value(std::move(tgt)));
                g.backward(loss);
                loss_sum += g.val(loss).data[0];
                res.degenerate_predictions += g.degenerate_predictions();
                accumulate_grads(gacc, g, p, 1.0);
            }
            scale_grads(gacc, 1.0 / static_cast<double>(stop - start));
            opt.step(params.tensors, gacc);
        }
        res.curve.epoch_loss.push_back(loss_sum / static_cast<double>(train.size()));
        if (!val.empty()) {
            double cc_sum = 0;
            for (const auto& s : val) {
                models::AttentionPrediction pred = models::prostattformer_forward(s.features, params, cfg);
                if (!pred.degenerate) {
                    try {
                        cc_sum += metrics::cc(pred.map, s.target);
                    } catch (const NumericError&) {
                        // constant target or map: counts as zero correlation
                    }
                }
            }
            double cc_mean = cc_sum / static_cast<double>(val.size());
            res.curve.val_metric.push_back(cc_mean);
            if (cc_mean > best_cc) {
                best_cc = cc_mean;
                best = params;
            }
        }
    }
    if (val.empty()) {
        res.params = std::move(params);
    } else {
        res.params = std::move(best);
        res.best_val_cc = best_cc;
    }
    return res;
}

heatmap::Heatmap build_attention_targets(
    const std::vector<telemetry::Session>& sessions, std::string_view wsi_id,
    const heatmap::MagBin& bin, const std::optional<std::vector<telemetry::Expertise>>& cohort) {
    heatmap::GridSpec grid = bin.grid();
    heatmap::Heatmap mean = heatmap::Heatmap::zeros(grid);
    std::size_t kept = 0;
    heatmap::SampleFilter filter;
    filter.mag_bin = std::make_pair(bin.lo, bin.hi);
    for (const auto& s : sessions) {
        if (s.wsi_id != wsi_id) continue;
        if (cohort && std::find(cohort->begin(), cohort->end(), s.expertise) == cohort->end())
            continue;
        try {
            heatmap::Heatmap m =
                heatmap::normalize(heatmap::accumulate(s, grid, filter), heatmap::Norm::unit_sum);
            for (std::size_t i = 0; i < mean.values.size(); ++i) mean.values[i] += m.values[i];
            ++kept;
        } catch (const NumericError&) {
            // session has no samples in this bin
        }
    }
    if (kept == 0)
        throw DataError("NoSessions", "no sessions of " + std::string(wsi_id) + " in bin " +
                                          bin.label);
    for (double& v : mean.values) v /= static_cast<double>(kept);
    return heatmap::normalize(mean, heatmap::Norm::minmax);
}

ExpertiseSample make_expertise_sample(const telemetry::Session& s,
                                      const telemetry::FeatureGrid& features,
                                      const models::ExpertiseNetConfig& cfg,
                                      const std::vector<heatmap::MagBin>& bins) {
    models::validate(cfg);
    if (features.grid_h != cfg.grid.rows || features.grid_w != cfg.grid.cols ||
        features.dim != cfg.feature_dim)
        throw DataError("ShapeMismatch", "feature grid does not match model config");
    if (bins.size() != 4)
        throw DataError("ShapeMismatch", "need exactly 4 magnification bins");

    ExpertiseSample out;
    out.features_chw = models::chw_from_features(features);
    out.label = static_cast<int>(s.expertise);
    out.wsi_id = s.wsi_id;

    std::vector<heatmap::Heatmap> temporal = heatmap::temporal_stack(s, cfg.grid);
    double final_mass = temporal.back().total();
    if (final_mass > 0)
        for (auto& m : temporal)
            for (double& v : m.values) v /= final_mass;
    out.temporal = models::stack_from_maps(temporal);

    heatmap::MagnificationStack ms = heatmap::magnification_stack(s, bins);
    std::vector<heatmap::Heatmap> mag;
    double mass = 0;
    for (const auto& e : ms.entries) {
        heatmap::Heatmap m = e.map;
        if (!m.grid.same_dims(cfg.grid)) m = heatmap::resample(m, cfg.grid);
        mass += m.total();
        mag.push_back(std::move(m));
    }
    if (mass > 0)
        for (auto& m : mag)
            for (double& v : m.values) v /= mass;
    out.magnification = models::stack_from_maps(mag);
    return out;
}

std::vector<double> auto_class_weights(const std::vector<int>& labels, int n_classes) {
    if (n_classes < 1) throw DataError("InvalidConfig", "n_classes must be positive");
    if (labels.empty()) throw DataError("EmptyDataset", "no labels");
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
    for (int y : labels) {
        if (y < 0 || y >= n_classes)
            throw DataError("LabelOutOfRange", "label " + std::to_string(y));
        ++counts[static_cast<std::size_t>(y)];
    }
    std::vector<double> w(static_cast<std::size_t>(n_classes), 1.0);
    double inv_sum = 0;
    int present = 0;
    for (std::size_t j = 0; j < counts.size(); ++j)
        if (counts[j] > 0) {
            inv_sum += 1.0 / static_cast<double>(counts[j]);
            ++present;
        }
    for (std::size_t j = 0; j < counts.size(); ++j)
        if (counts[j] > 0)
            w[j] = (1.0 / static_cast<double>(counts[j])) * static_cast<double>(present) / inv_sum;
    return w;
}

namespace {

std::vector<double> expertise_logits_impl(const models::ExpertiseNetConfig& cfg,
                                          const ModelParams& params, const ExpertiseSample& s) {
    Graph g;
    models::ParamNodes p = models::register_params(g, params, false);
    std::optional<Graph::NodeId> t, m;
    if (cfg.has_temporal()) t = g.value(s.temporal);
    if (cfg.has_magnification()) m = g.value(s.magnification);
    return g.val(models::expertisenet_graph(g, cfg, p, g.value(s.features_chw), t, m)).data;
}

std::vector<double> softmax_row(const std::vector<double>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

}  // namespace

std::vector<double> expertise_logits(const models::ExpertiseNetConfig& cfg,
                                     const ModelParams& params, const ExpertiseSample& s) {
    return expertise_logits_impl(cfg, params, s);
}

ExpertiseTrainResult train_expertise(const models::ExpertiseNetConfig& cfg,
                                     const std::vector<ExpertiseSample>& train,
                                     const std::vector<ExpertiseSample>& val,
                                     const HyperParams& hyper,
                                     std::optional<std::vector<double>> class_weights) {
    models::validate(cfg);
    validate(hyper);
    if (train.empty()) throw DataError("EmptyDataset", "no expertise training samples");
    std::vector<int> labels;
    for (const auto& s : train) {
        if (s.label < 0 || s.label >= cfg.n_classes)
            throw DataError("LabelOutOfRange", "label " + std::to_string(s.label));
        labels.push_back(s.label);
    }
    if (std::set<int>(labels.begin(), labels.end()).size() < 2)
        throw DataError("SingleClass", "training set has one class");
    std::vector<double> weights =
        class_weights ? *class_weights : auto_class_weights(labels, cfg.n_classes);
    if (static_cast<int>(weights.size()) != cfg.n_classes)
        throw DataError("ShapeMismatch", "class weight count");
    for (double w : weights)
        if (!(w > 0)) throw DataError("BadClassWeights", "class weights must be positive");

    ExpertiseTrainResult res;
    ModelParams params = models::init_params(cfg, hyper.seed);
    ModelParams best = params;
    double best_acc = -1.0;
    Stepper opt(hyper);
    rng::Rng shuffle_rng(rng::derive_seed(hyper.seed, 0x7368756666ULL, 1));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const std::vector<double> unit(static_cast<std::size_t>(cfg.n_classes), 1.0);

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_num = 0, loss_den = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(hyper.batch_size)) {
            std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
            auto gacc = zero_like(params.tensors);
            double batch_wsum = 0;
            for (std::size_t bi = start; bi < stop; ++bi) {
                const ExpertiseSample& s = train[order[bi]];
                Graph g;
                models::ParamNodes p = models::register_params(g, params, true);
                std::optional<Graph::NodeId> t, m;
                if (cfg.has_temporal()) t = g.value(s.temporal);
                if (cfg.has_magnification()) m = g.value(s.magnification);
                Graph::NodeId logits =
                    models::expertisenet_graph(g, cfg, p, g.value(s.features_chw), t, m);
                Graph::NodeId ce = g.weighted_ce_loss(logits, {s.label}, unit);
                g.backward(ce);
                double wy = weights[static_cast<std::size_t>(s.label)];
                loss_num += wy * g.val(ce).data[0];
                loss_den += wy;
                batch_wsum += wy;
                accumulate_grads(gacc, g, p, wy);
            }
            scale_grads(gacc, 1.0 / batch_wsum);
            opt.step(params.tensors, gacc);
        }
        res.curve.epoch_loss.push_back(loss_num / loss_den);
        if (!val.empty()) {
            std::size_t hits = 0;
            for (const auto& s : val) {
                std::vector<double> lg = expertise_logits_impl(cfg, params, s);
                std::size_t arg = 0;
                for (std::size_t j = 1; j < lg.size(); ++j)
                    if (lg[j] > lg[arg]) arg = j;
                if (static_cast<int>(arg) == s.label) ++hits;
            }
            double acc = static_cast<double>(hits) / static_cast<double>(val.size());
            res.curve.val_metric.push_back(acc);
            if (acc > best_acc) {
                best_acc = acc;
                best = params;
            }
        }
    }
    if (val.empty()) {
        res.params = std::move(params);
    } else {
        res.params = std::move(best);
        res.best_val_accuracy = best_acc;
    }
    return res;
}

namespace {

// Midrank ROC-AUC for one score column against a positive-class mask.
double binary_auc(const std::vector<double>& score, const std::vector<char>& pos) {
    const std::size_t n = score.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && score[idx[j + 1]] == score[idx[i]]) ++j;
        double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[idx[t]] = mid;
        i = j + 1;
    }
    double rsum = 0;
    std::size_t npos = 0;
    for (std::size_t t = 0; t < n; ++t)
        if (pos[t]) {
            rsum += rank[t];
            ++npos;
        }
    std::size_t nneg = n - npos;
    if (npos == 0 || nneg == 0)
        throw NumericError("SingleClass", "ROC-AUC needs both classes");
    return (rsum - static_cast<double>(npos) * (static_cast<double>(npos) + 1.0) / 2.0) /
           (static_cast<double>(npos) * static_cast<double>(nneg));
}

}  // namespace

Classification classification_metrics(const std::vector<std::vector<double>>& scores,
                                      const std::vector<int>& labels) {
    const std::size_t n = labels.size();
    if (n == 0 || scores.size() != n)
        throw DataError("ShapeMismatch", std::to_string(scores.size()) + " score rows for " +
                                             std::to_string(n) + " labels");
    const std::size_t k = scores[0].size();
    if (k < 2) throw DataError("ShapeMismatch", "need at least 2 score columns");
    for (const auto& row : scores) {
        if (row.size() != k) throw DataError("ShapeMismatch", "ragged score rows");
        for (double v : row)
            if (!std::isfinite(v)) throw DataError("NonFiniteValue", "non-finite score");
    }
    for (int y : labels)
        if (y < 0 || y >= static_cast<int>(k))
            throw DataError("LabelOutOfRange", "label " + std::to_string(y));

    Classification out;
    std::vector<int> pred(n);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (scores[i][j] > scores[i][arg]) arg = j;  // ties keep the lowest index
        pred[i] = static_cast<int>(arg);
        if (pred[i] == labels[i]) ++hits;
    }
    out.accuracy = static_cast<double>(hits) / static_cast<double>(n);

    double f1_sum = 0;
    for (std::size_t j = 0; j < k; ++j) {
        std::size_t tp = 0, fp = 0, fn = 0, support = 0;
        for (std::size_t i = 0; i < n; ++i) {
            bool is_true = labels[i] == static_cast<int>(j);
            bool is_pred = pred[i] == static_cast<int>(j);
            support += is_true ? 1 : 0;
            if (is_true && is_pred) ++tp;
            if (!is_true && is_pred) ++fp;
            if (is_true && !is_pred) ++fn;
        }
        if (support == 0) out.has_absent_class = true;
        double prec = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        double rec = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        f1_sum += prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    out.macro_f1 = f1_sum / static_cast<double>(k);

    if (k == 2) {
        std::vector<double> col(n);
        std::vector<char> pos(n);
        for (std::size_t i = 0; i < n; ++i) {
            col[i] = scores[i][1];
            pos[i] = labels[i] == 1 ? 1 : 0;
        }
        out.auc = binary_auc(col, pos);
    } else {
        double auc_sum = 0;
        int defined = 0;
        for (std::size_t j = 0; j < k; ++j) {
            std::vector<double> col(n);
            std::vector<char> pos(n);
            for (std::size_t i = 0; i < n; ++i) {
                col[i] = scores[i][j];
                pos[i] = labels[i] == static_cast<int>(j) ? 1 : 0;
            }
            try {
                auc_sum += binary_auc(col, pos);
                ++defined;
            } catch (const NumericError&) {
                // class absent in this set, skipped from the macro mean
            }
        }
        if (defined == 0) throw NumericError("SingleClass", "no class has both members");
        out.auc = auc_sum / static_cast<double>(defined);
    }
    return out;
}

AttentionEval evaluate_attention(const ModelParams& params,
                                 const models::ProstAttFormerConfig& cfg,
                                 const std::vector<AttentionSample>& test) {
    AttentionEval out;
    std::vector<double> ccs, nsss, klds;
    for (const auto& s : test) {
        models::AttentionPrediction pred = models::prostattformer_forward(s.features, params, cfg);
        WsiMetrics row;
        row.wsi_id = s.wsi_id;
        if (pred.degenerate) {
            row.degenerate = true;
            heatmap::Heatmap uniform = heatmap::Heatmap::zeros(cfg.grid);
            std::fill(uniform.values.begin(), uniform.values.end(),
                      1.0 / static_cast<double>(cfg.grid.cells()));
            row.kld = metrics::kld(s.target, uniform);
        } else {
            row.cc = metrics::cc(pred.map, s.target);
            row.kld = metrics::kld(s.target, pred.map);
            if (!s.fixations.empty()) {
                row.nss = metrics::nss(pred.map, s.fixations);
                row.nss_defined = true;
            }
        }
        ccs.push_back(row.cc);
        klds.push_back(row.kld);
        if (row.nss_defined) nsss.push_back(row.nss);
        out.per_wsi.push_back(std::move(row));
    }
    out.summary["cc"] = stats_of(ccs);
    out.summary["kld"] = stats_of(klds);
    if (!nsss.empty()) out.summary["nss"] = stats_of(nsss);
    return out;
}

FoldReport summarize_folds(std::vector<std::map<std::string, double>> folds) {
    FoldReport report;
    report.folds = std::move(folds);
    if (report.folds.empty()) return report;
    for (const auto& [key, first_val] : report.folds.front()) {
        std::vector<double> xs;
        bool everywhere = true;
        for (const auto& f : report.folds) {
            auto it = f.find(key);
            if (it == f.end()) {
                everywhere = false;
                break;
            }
            xs.push_back(it->second);
        }
        if (everywhere) report.summary[key] = stats_of(xs);
    }
    return report;
}

FoldReport run_attention_cv(const models::ProstAttFormerConfig& cfg,
                            const std::vector<AttentionSample>& samples,
                            const HyperParams& hyper, int k, const FoldCallback& on_fold) {
    std::vector<std::string> keys;
    for (const auto& s : samples) keys.push_back(s.wsi_id);
    auto folds = kfold_split(keys, k, hyper.seed);
    std::vector<std::map<std::string, double>> fold_metrics;
    std::vector<WsiMetrics> per_wsi;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<char> held(samples.size(), 0);
        for (std::size_t i : folds[f]) held[i] = 1;
        std::vector<AttentionSample> train_set, test_set;
        for (std::size_t i = 0; i < samples.size(); ++i)
            (held[i] ? test_set : train_set).push_back(samples[i]);
        HyperParams h = hyper;
        h.seed = rng::derive_seed(hyper.seed, 0xa77e, f);
        AttentionTrainResult tr = train_attention(cfg, train_set, {}, h);
        AttentionEval ev = evaluate_attention(tr.params, cfg, test_set);
        if (on_fold) on_fold(f, tr.params);
        std::map<std::string, double> m;
        m["cc"] = ev.summary.at("cc").mean;
        m["kld"] = ev.summary.at("kld").mean;
        if (ev.summary.count("nss")) m["nss"] = ev.summary.at("nss").mean;
        m["n_test"] = static_cast<double>(test_set.size());
        fold_metrics.push_back(std::move(m));
        per_wsi.insert(per_wsi.end(), ev.per_wsi.begin(), ev.per_wsi.end());
    }
    FoldReport report = summarize_folds(std::move(fold_metrics));
    report.per_wsi = std::move(per_wsi);
    return report;
}

FoldReport run_expertise_cv(const models::ExpertiseNetConfig& cfg,
                            const std::vector<ExpertiseSample>& samples,
                            const HyperParams& hyper, int k, const FoldCallback& on_fold) {
    std::vector<std::string> keys;
    for (const auto& s : samples) keys.push_back(s.wsi_id);
    auto folds = kfold_split(keys, k, hyper.seed);
    std::vector<std::map<std::string, double>> fold_metrics;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<char> held(samples.size(), 0);
        for (std::size_t i : folds[f]) held[i] = 1;
        std::vector<ExpertiseSample> train_set, test_set;
        for (std::size_t i = 0; i < samples.size(); ++i)
            (held[i] ? test_set : train_set).push_back(samples[i]);
        HyperParams h = hyper;
        h.seed = rng::derive_seed(hyper.seed, 0xe45e, f);
        ExpertiseTrainResult tr = train_expertise(cfg, train_set, {}, h);
        if (on_fold) on_fold(f, tr.params);
        std::vector<std::vector<double>> probs;
        std::vector<int> labels;
        for (const auto& s : test_set) {
            probs.push_back(softmax_row(expertise_logits_impl(cfg, tr.params, s)));
            labels.push_back(s.label);
        }
        std::map<std::string, double> m;
        Classification c = classification_metrics(probs, labels);
        m["accuracy"] = c.accuracy;
        m["macro_f1"] = c.macro_f1;
        m["auc"] = c.auc;
        m["n_test"] = static_cast<double>(test_set.size());
        fold_metrics.push_back(std::move(m));
    }
    return summarize_folds(std::move(fold_metrics));
}

}  // namespace attnscope::training
