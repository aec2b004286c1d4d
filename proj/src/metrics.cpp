#include "safn/metrics.hpp"

#include "safn/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace safn {

ConfusionMatrix confusion(const std::vector<double>& probs, const std::vector<int>& labels,
                          double threshold) {
  if (probs.empty()) throw DataError("confusion: empty input");
  if (probs.size() != labels.size()) throw DataError("confusion: length mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool pred = probs[i] >= threshold;
    if (labels[i] == 1) {
      pred ? ++cm.tp : ++cm.fn;
    } else {
      pred ? ++cm.fp : ++cm.tn;
    }
  }
  return cm;
}

ThresholdedMetrics thresholded_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DataError("thresholded_metrics: empty confusion matrix");
  ThresholdedMetrics m;
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());

  auto ratio = [&m](long num, long den) {
    if (den == 0) {
      m.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.recall = ratio(cm.tp, cm.tp + cm.fn);
  const double pr_sum = m.precision + m.recall;
  if (pr_sum > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / pr_sum;
  } else {
    m.f1 = 0.0;
    m.degenerate = true;
  }
  const double recall_neg = ratio(cm.tn, cm.tn + cm.fp);
  m.balanced_accuracy = 0.5 * (m.recall + recall_neg);
  return m;
}

namespace {

// Midranks of the pooled scores; drives the tie-corrected AUC.
std::vector<double> midranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based midrank
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

struct ScoreGroup {
  double score;
  long pos;
  long neg;
};

// Distinct scores in descending order with per-score class counts.
std::vector<ScoreGroup> score_groups(const std::vector<double>& probs,
                                     const std::vector<int>& labels) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<ScoreGroup> groups;
  for (std::size_t idx : order) {
    if (groups.empty() || groups.back().score != probs[idx]) {
      groups.push_back({probs[idx], 0, 0});
    }
    if (labels[idx] == 1) ++groups.back().pos;
    else ++groups.back().neg;
  }
  return groups;
}

}  // namespace

AucResult roc_auc(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw DataError("roc_auc: bad input lengths");
  }
  const long n_pos = std::count(labels.begin(), labels.end(), 1);
  const long n_neg = static_cast<long>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("roc_auc: both classes required");

  // Rank-sum form of the tie-corrected pair count.
  const std::vector<double> ranks = midranks(probs);
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) rank_sum_pos += ranks[i];
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  AucResult result;
  result.auc = u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));

  // Staircase over descending distinct thresholds.
  result.curve.x.push_back(0.0);
  result.curve.y.push_back(0.0);
  long tp = 0;
  long fp = 0;
  for (const ScoreGroup& g : score_groups(probs, labels)) {
    tp += g.pos;
    fp += g.neg;
    result.curve.x.push_back(static_cast<double>(fp) / n_neg);
    result.curve.y.push_back(static_cast<double>(tp) / n_pos);
  }
  result.curve.auc = result.auc;
  return result;
}

AucResult pr_auc(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw DataError("pr_auc: bad input lengths");
  }
  const long n_pos = std::count(labels.begin(), labels.end(), 1);
  if (n_pos == 0) throw DataError("pr_auc: at least one positive required");

  AucResult result;
  result.curve.x.push_back(0.0);
  result.curve.y.push_back(1.0);
  long tp = 0;
  long fp = 0;
  double prev_recall = 0.0;
  double ap = 0.0;
  for (const ScoreGroup& g : score_groups(probs, labels)) {
    tp += g.pos;
    fp += g.neg;
    const double recall = static_cast<double>(tp) / n_pos;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    result.curve.x.push_back(recall);
    result.curve.y.push_back(precision);
  }
  result.auc = ap;
  result.curve.auc = ap;
  return result;
}

BestF1 best_f1_threshold(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.empty()) throw DataError("best_f1_threshold: empty input");
  BestF1 best;
  best.f1 = -1.0;
  for (int i = 0; i <= 90; ++i) {
    const double t = static_cast<double>(5 + i) / 100.0;
    const ThresholdedMetrics m = thresholded_metrics(confusion(probs, labels, t));
    if (m.f1 > best.f1 + 1e-12) {
      best.f1 = m.f1;
      best.threshold = t;
    }
  }
  return best;
}

CurveData mean_curve(const std::vector<CurveData>& curves, int grid_size) {
  if (curves.empty()) throw DataError("mean_curve: no curves");
  if (grid_size < 2) throw DataError("mean_curve: grid too small");

  CurveData out;
  out.x.resize(grid_size);
  out.y.assign(grid_size, 0.0);
  for (int i = 0; i < grid_size; ++i) {
    out.x[i] = static_cast<double>(i) / (grid_size - 1);
  }

  for (const CurveData& c : curves) {
    if (c.x.empty()) throw DataError("mean_curve: empty curve");
    // Compress duplicate x values, keeping the last point (the post-jump
    // value on staircase curves).
    std::vector<double> cx;
    std::vector<double> cy;
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      if (!cx.empty() && c.x[i] == cx.back()) {
        cy.back() = c.y[i];
      } else {
        cx.push_back(c.x[i]);
        cy.push_back(c.y[i]);
      }
    }
    for (int i = 0; i < grid_size; ++i) {
      const double x = out.x[i];
      double y;
      if (x <= cx.front()) {
        y = cy.front();
      } else if (x >= cx.back()) {
        y = cy.back();
      } else {
        const auto it = std::upper_bound(cx.begin(), cx.end(), x);
        const std::size_t hi = static_cast<std::size_t>(it - cx.begin());
        const std::size_t lo = hi - 1;
        const double w = (x - cx[lo]) / (cx[hi] - cx[lo]);
        y = cy[lo] + w * (cy[hi] - cy[lo]);
      }
      out.y[i] += y / static_cast<double>(curves.size());
    }
    out.auc += c.auc / static_cast<double>(curves.size());
  }
  return out;
}

FoldReport evaluate_fold(const std::vector<double>& probs, const std::vector<int>& labels,
                         double threshold) {
  FoldReport report;
  report.confusion = confusion(probs, labels, threshold);
  const ThresholdedMetrics m = thresholded_metrics(report.confusion);
  report.accuracy = m.accuracy;
  report.precision = m.precision;
  report.recall = m.recall;
  report.f1 = m.f1;
  report.balanced_accuracy = m.balanced_accuracy;
  const AucResult roc = roc_auc(probs, labels);
  report.roc_auc = roc.auc;
  report.roc_curve = roc.curve;
  const AucResult pr = pr_auc(probs, labels);
  report.pr_auc = pr.auc;
  report.pr_curve = pr.curve;
  const BestF1 best = best_f1_threshold(probs, labels);
  report.best_f1_threshold = best.threshold;
  report.best_f1 = best.f1;
  return report;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "accuracy", "balanced_accuracy", "roc_auc", "pr_auc",
      "precision", "recall", "f1", "best_f1_threshold", "best_f1"};
  return names;
}

std::vector<double> metric_values(const FoldReport& r) {
  return {r.accuracy, r.balanced_accuracy, r.roc_auc, r.pr_auc,
          r.precision, r.recall, r.f1, r.best_f1_threshold, r.best_f1};
}

AggregateReport aggregate_folds(const std::vector<FoldReport>& folds) {
  if (folds.empty()) throw DataError("aggregate_folds: no folds");
  const std::size_t n_metrics = metric_names().size();
  const double k = static_cast<double>(folds.size());
  AggregateReport agg;
  agg.mean.assign(n_metrics, 0.0);
  agg.sd.assign(n_metrics, 0.0);
  std::vector<std::vector<double>> values;
  for (const FoldReport& f : folds) {
    values.push_back(metric_values(f));
    agg.mean_confusion[0] += f.confusion.tp / k;
    agg.mean_confusion[1] += f.confusion.tn / k;
    agg.mean_confusion[2] += f.confusion.fp / k;
    agg.mean_confusion[3] += f.confusion.fn / k;
    for (int j = 0; j < 4; ++j) agg.mean_gates[j] += f.gate_means[j] / k;
  }
  for (std::size_t m = 0; m < n_metrics; ++m) {
    for (const auto& v : values) agg.mean[m] += v[m] / k;
    if (folds.size() > 1) {
      double sq = 0.0;
      for (const auto& v : values) sq += (v[m] - agg.mean[m]) * (v[m] - agg.mean[m]);
      agg.sd[m] = std::sqrt(sq / (k - 1.0));
    }
  }
  return agg;
}

}  // namespace safn
