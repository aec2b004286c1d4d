#pragma once

#include <array>
#include <string>
#include <vector>

namespace safn {

struct ConfusionMatrix {
  long tp = 0;
  long tn = 0;
  long fp = 0;
  long fn = 0;

  long total() const { return tp + tn + fp + fn; }
};

/// Tie rule: a probability equal to the threshold predicts positive.
ConfusionMatrix confusion(const std::vector<double>& probs, const std::vector<int>& labels,
                          double threshold);

struct ThresholdedMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double balanced_accuracy = 0.0;
  bool degenerate = false;  // some denominator was zero; affected metrics are 0
};

ThresholdedMetrics thresholded_metrics(const ConfusionMatrix& cm);

/// Ordered curve with its scalar area. ROC curves run over (FPR, TPR) from
/// (0,0) to (1,1); PR curves over (recall, precision).
struct CurveData {
  std::vector<double> x;
  std::vector<double> y;
  double auc = 0.0;
};

struct AucResult {
  double auc = 0.0;
  CurveData curve;
};

/// Tie-corrected pair-counting AUC: (#(pos>neg) + 0.5*#(pos==neg)) / (n1*n0).
AucResult roc_auc(const std::vector<double>& probs, const std::vector<int>& labels);

/// Average precision: sum over threshold steps of (R_i - R_{i-1}) * P_i.
AucResult pr_auc(const std::vector<double>& probs, const std::vector<int>& labels);

struct BestF1 {
  double threshold = 0.5;
  double f1 = 0.0;
};

/// Sweeps t = 0.05, 0.06, ..., 0.95 and returns the smallest threshold
/// attaining the maximal F1.
BestF1 best_f1_threshold(const std::vector<double>& probs, const std::vector<int>& labels);

/// Interpolates each curve onto a uniform x grid and averages pointwise.
/// The reported auc is the mean of the fold aucs, not the area of the mean
/// curve.
CurveData mean_curve(const std::vector<CurveData>& curves, int grid_size = 101);

/// Per-fold evaluation record.
struct FoldReport {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ConfusionMatrix confusion;
  double best_f1_threshold = 0.5;
  double best_f1 = 0.0;
  CurveData roc_curve;
  CurveData pr_curve;
  std::array<double, 4> gate_means = {0.0, 0.0, 0.0, 0.0};
};

/// Builds a FoldReport from validation probabilities at the fixed threshold.
FoldReport evaluate_fold(const std::vector<double>& probs, const std::vector<int>& labels,
                         double threshold = 0.5);

/// Scalar metric columns of a FoldReport, used for CSV export and
/// aggregation. Order matches metric_names().
std::vector<double> metric_values(const FoldReport& report);
const std::vector<std::string>& metric_names();

struct AggregateReport {
  std::vector<double> mean;
  std::vector<double> sd;  // sample standard deviation (n-1); 0 for a single fold
  // Averaged confusion matrix entries (tp, tn, fp, fn).
  std::array<double, 4> mean_confusion = {0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> mean_gates = {0.0, 0.0, 0.0, 0.0};
};

AggregateReport aggregate_folds(const std::vector<FoldReport>& folds);

}  // namespace safn
