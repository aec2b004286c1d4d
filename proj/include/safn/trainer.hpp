#pragma once

#include "safn/dataset.hpp"
#include "safn/folds.hpp"
#include "safn/loss.hpp"
#include "safn/metrics.hpp"
#include "safn/model.hpp"
#include "safn/optim.hpp"
#include "safn/preprocess.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace safn {

/// Architectural and objective ablations. `modalities` lists the streams
/// kept active; removed streams shrink the gate input and fused vector.
struct AblationSpec {
  std::set<Modality> modalities = {Modality::MriCt, Modality::Clinical, Modality::MriVol,
                                   Modality::Demographic};
  bool disable_cross_attention = false;
  bool disable_gates = false;
  bool disable_class_weighting = false;
  // With class weighting disabled the default objective is plain BCE
  // (gamma = 0); this keeps the focal exponent instead.
  bool keep_focal_when_unweighted = false;

  void validate() const;
  static AblationSpec full() { return AblationSpec{}; }
};

/// Applies the ablation to the loss settings (the structural part is
/// handled by ModelStructure::make).
LossConfig apply_ablation_to_loss(const LossConfig& loss, const AblationSpec& spec);

struct CompositeMetric {
  double value = 0.0;
  bool auroc_defined = true;
  double auroc = 0.0;  // NaN when undefined
  double balanced_accuracy = 0.0;
  double f1 = 0.0;
};

/// Mean of AUROC, balanced accuracy, and F1 at the threshold. A single-class
/// validation set leaves AUROC undefined; the mean then covers the two
/// defined terms and the flag is cleared.
CompositeMetric composite_metric(const std::vector<double>& probs,
                                 const std::vector<int>& labels, double threshold = 0.5);

struct EpochLogRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_composite = 0.0;
  double val_auroc = 0.0;
  double val_balacc = 0.0;
  double val_f1 = 0.0;
  double lr = 0.0;
  bool stopped = false;
};

struct StepLossRow {
  int epoch = 0;
  long step = 0;
  double focal = 0.0;
  double sparsity = 0.0;
  double total = 0.0;
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  long n0 = 0;
  long n1 = 0;
};

struct TrainSettings {
  SafnConfig model;
  LossConfig loss;
  OptimConfig optim;
  AblationSpec ablation;
};

struct FoldOutcome {
  FoldReport report;
  SafnConfig model_config;
  ModelStructure structure;
  std::vector<double> best_params;  // EMA weights of the best epoch
  int best_epoch = -1;
  std::vector<EpochLogRow> epoch_log;
  std::vector<StepLossRow> loss_log;
  std::vector<double> val_probs;
  std::vector<int> val_labels;
  std::vector<Vec> val_gates;  // per validation sample, one value per stream
};

/// Full training loop for one fold: seeded shuffled mini-batches, CB-Focal
/// plus sparsity objective, gradient clipping, AdamW with warmup-cosine,
/// EMA tracking, early stopping on the composite metric evaluated with the
/// EMA weights.
FoldOutcome train_one_fold(const std::vector<ModalityBundle>& train_set,
                           const std::vector<ModalityBundle>& val_set,
                           const TrainSettings& settings, uint64_t fold_seed);

struct FoldData {
  int fold = 0;
  std::vector<ModalityBundle> train;
  std::vector<ModalityBundle> val;
  FittedPreprocessor preprocessor;
};

/// Fold materialisation with fold-local preprocessor fitting (training rows
/// only, then frozen for the validation rows).
std::vector<FoldData> materialize_folds(const RawTable& table, const DatasetSchema& schema,
                                        const FoldPlan& plan);

struct CvOutcome {
  FoldPlan plan;
  std::vector<FoldOutcome> folds;
  std::vector<FoldReport> fold_reports;
  AggregateReport aggregate;
  CurveData mean_roc;
  CurveData mean_pr;
  std::vector<FittedPreprocessor> preprocessors;
};

/// k-fold cross validation; folds may train concurrently (jobs threads,
/// 0 = hardware concurrency) with results identical to serial execution.
CvOutcome run_cv(const RawTable& table, const DatasetSchema& schema, int k,
                 const TrainSettings& settings, uint64_t seed, int jobs = 0);

std::array<int, kNumModalities> bundle_widths(const std::vector<ModalityBundle>& bundles);

}  // namespace safn
