#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attnscope/heatmap.hpp"
#include "attnscope/metrics.hpp"
#include "attnscope/models.hpp"
#include "attnscope/telemetry.hpp"
#include "attnscope/tensor.hpp"

// Optimizers, WSI-grouped cross-validation, the two training loops, and
// evaluation reports. Everything here is deterministic given the seed.

namespace attnscope::training {

enum class Optimizer { adam_decoupled, sgd };
const char* to_string(Optimizer o);
Optimizer optimizer_from_string(std::string_view s);

struct HyperParams {
    int batch_size = 8;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    int epochs = 1;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::adam_decoupled;
};
void validate(const HyperParams& h);

// Adam with decoupled weight decay:
//   theta -= lr * (mhat / (sqrt(vhat) + eps) + wd * theta)
// so lr = 0 leaves parameters untouched regardless of wd.
class AdamW {
  public:
    AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8);
    void step(std::map<std::string, tensor::Tensor>& params,
              const std::map<std::string, tensor::Tensor>& grads);

  private:
    double lr_, wd_, b1_, b2_, eps_;
    long step_ = 0;
    std::map<std::string, tensor::Tensor> m_, v_;
};

// Plain SGD with the same decoupled decay convention.
class Sgd {
  public:
    Sgd(double lr, double weight_decay) : lr_(lr), wd_(weight_decay) {}
    void step(std::map<std::string, tensor::Tensor>& params,
              const std::map<std::string, tensor::Tensor>& grads);

  private:
    double lr_, wd_;
};

// Partition item indices into k folds so that no group (wsi_id) spans two
// folds. Groups are shuffled deterministically and dealt round-robin, so
// fold sizes differ by at most one group.
std::vector<std::vector<std::size_t>> kfold_split(const std::vector<std::string>& group_keys,
                                                  int k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Attention model

struct AttentionSample {
    telemetry::FeatureGrid features;
    heatmap::Heatmap target;  // minmax-normalized, same grid as the model
    std::string wsi_id;
    metrics::Fixations fixations;  // optional, for NSS evaluation
};

struct TrainCurve {
    std::vector<double> epoch_loss;
    std::vector<double> val_metric;  // CC or accuracy; empty without a val set
};

struct AttentionTrainResult {
    models::ModelParams params;  // best-validation params, final when val is empty
    TrainCurve curve;
    int degenerate_predictions = 0;
    double best_val_cc = 0;
};

// Mini-batch loop with 1 - CC loss on raw decoder scores. CC is invariant
// under the positive affine minmax map, so skipping normalization here
// changes neither the loss nor its gradient.
AttentionTrainResult train_attention(const models::ProstAttFormerConfig& cfg,
                                     const std::vector<AttentionSample>& train,
                                     const std::vector<AttentionSample>& val,
                                     const HyperParams& hyper);

// Cohort target: unit_sum mean of per-session magnification-bin maps,
// minmax-normalized for training. Sessions without samples in the bin are
// skipped; none left -> DataError("NoSessions").
heatmap::Heatmap build_attention_targets(
    const std::vector<telemetry::Session>& sessions, std::string_view wsi_id,
    const heatmap::MagBin& bin,
    const std::optional<std::vector<telemetry::Expertise>>& cohort = {});

// ---------------------------------------------------------------------------
// Expertise model

struct ExpertiseSample {
    tensor::Tensor features_chw;   // [D,h,w]
    tensor::Tensor temporal;       // [4,h,w], cumulative, scaled by final total mass
    tensor::Tensor magnification;  // [4,h,w], scaled by the all-bin total mass
    int label = 0;
    std::string wsi_id;
};

// Packs one session into model inputs on the config grid. Temporal maps are
// divided by the final map's mass (preserves cumulative ordering);
// magnification maps are resampled to the common grid and divided by their
// joint mass (preserves bin proportions).
ExpertiseSample make_expertise_sample(
    const telemetry::Session& s, const telemetry::FeatureGrid& features,
    const models::ExpertiseNetConfig& cfg,
    const std::vector<heatmap::MagBin>& bins = heatmap::default_mag_bins());

// Inverse class frequency, normalized to mean 1 over the classes present.
// Absent classes get weight 1; they contribute nothing to the loss.
std::vector<double> auto_class_weights(const std::vector<int>& labels, int n_classes);

// Single-sample inference used by evaluation and the CLI.
std::vector<double> expertise_logits(const models::ExpertiseNetConfig& cfg,
                                     const models::ModelParams& params,
                                     const ExpertiseSample& s);

struct ExpertiseTrainResult {
    models::ModelParams params;
    TrainCurve curve;
    double best_val_accuracy = 0;
};

ExpertiseTrainResult train_expertise(const models::ExpertiseNetConfig& cfg,
                                     const std::vector<ExpertiseSample>& train,
                                     const std::vector<ExpertiseSample>& val,
                                     const HyperParams& hyper,
                                     std::optional<std::vector<double>> class_weights = {});

// ---------------------------------------------------------------------------
// Evaluation

struct Classification {
    double accuracy = 0;
    double macro_f1 = 0;
    double auc = 0;
    bool has_absent_class = false;  // some class had no true labels
};

// accuracy: argmax with ties to the lowest index; macro_f1: unweighted mean
// over all classes, absent classes contribute 0; auc: midrank ROC-AUC for
// two classes, macro one-vs-rest otherwise.
Classification classification_metrics(const std::vector<std::vector<double>>& scores,
                                      const std::vector<int>& labels);

struct MetricStats {
    double mean = 0;
    double stddev = 0;  // population
};

struct WsiMetrics {
    std::string wsi_id;
    double cc = 0;
    double nss = 0;
    double kld = 0;
    bool nss_defined = false;
    bool degenerate = false;  // prediction was flat; cc/nss 0, kld vs uniform
};

struct AttentionEval {
    std::vector<WsiMetrics> per_wsi;
    std::map<std::string, MetricStats> summary;  // cc, nss, kld over rows
};

AttentionEval evaluate_attention(const models::ModelParams& params,
                                 const models::ProstAttFormerConfig& cfg,
                                 const std::vector<AttentionSample>& test);

struct FoldReport {
    std::vector<std::map<std::string, double>> folds;
    std::map<std::string, MetricStats> summary;  // over folds, population std
    // Pooled held-out rows (attention runs only). Grouped CV tests each WSI
    // exactly once, so stats over these give the per-WSI spread.
    std::vector<WsiMetrics> per_wsi;
};

FoldReport summarize_folds(std::vector<std::map<std::string, double>> folds);

// Called after each fold with the trained parameters, before they are freed.
using FoldCallback = std::function<void(std::size_t fold, const models::ModelParams& params)>;

// Train on k-1 folds, evaluate the held-out fold, no validation-based
// selection. Per-fold seeds derive from hyper.seed.
FoldReport run_attention_cv(const models::ProstAttFormerConfig& cfg,
                            const std::vector<AttentionSample>& samples,
                            const HyperParams& hyper, int k, const FoldCallback& on_fold = {});
FoldReport run_expertise_cv(const models::ExpertiseNetConfig& cfg,
                            const std::vector<ExpertiseSample>& samples,
                            const HyperParams& hyper, int k, const FoldCallback& on_fold = {});

}  // namespace attnscope::training
