#include "safn/reports.hpp"

#include "safn/common.hpp"

#include <algorithm>
#include <array>
#include <fstream>

namespace safn {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report file: " + path);
  return out;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<FoldReport>& folds,
                       const AggregateReport& aggregate) {
  std::ofstream out = open_out(path);
  out << "row";
  for (const std::string& name : metric_names()) out << ',' << name;
  out << '\n';
  for (std::size_t f = 0; f < folds.size(); ++f) {
    out << "fold_" << (f + 1);
    for (double v : metric_values(folds[f])) out << ',' << format_number(v);
    out << '\n';
  }
  out << "mean";
  for (double v : aggregate.mean) out << ',' << format_number(v);
  out << '\n';
}

void write_metrics_summary_csv(const std::string& path, const AggregateReport& aggregate) {
  std::ofstream out = open_out(path);
  out << "metric,mean,sd,summary\n";
  const auto& names = metric_names();
  for (std::size_t m = 0; m < names.size(); ++m) {
    out << names[m] << ',' << format_number(aggregate.mean[m]) << ','
        << format_number(aggregate.sd[m]) << ',' << format_number(aggregate.mean[m]) << " +/- "
        << format_number(aggregate.sd[m]) << '\n';
  }
}

void write_curve_csv(const std::string& path, const CurveData& curve, const std::string& x_name,
                     const std::string& y_name) {
  std::ofstream out = open_out(path);
  out << x_name << ',' << y_name << '\n';
  for (std::size_t i = 0; i < curve.x.size(); ++i) {
    out << format_number(curve.x[i]) << ',' << format_number(curve.y[i]) << '\n';
  }
  out << "# auc," << format_number(curve.auc) << '\n';
}

void write_confusion_csv(const std::string& path, const std::array<double, 4>& mean_confusion) {
  std::ofstream out = open_out(path);
  out << "cell,count\n";
  out << "tp," << format_number(mean_confusion[0]) << '\n';
  out << "tn," << format_number(mean_confusion[1]) << '\n';
  out << "fp," << format_number(mean_confusion[2]) << '\n';
  out << "fn," << format_number(mean_confusion[3]) << '\n';
}

void write_gate_report_csv(const std::string& path, const GateReport& report) {
  std::ofstream out = open_out(path);
  out << "modality,mean_gate_weight,contribution_pct\n";
  // Sorted by raw weight, largest first, matching the published layout.
  std::vector<std::size_t> order(report.modalities.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return report.raw_mean[a] > report.raw_mean[b];
  });
  for (std::size_t i : order) {
    out << modality_name(report.modalities[i]) << ',' << format_number(report.raw_mean[i]) << ','
        << format_number(100.0 * report.share[i]) << '\n';
  }
}

void write_attribution_csv(const std::string& path, const AttributionReport& report) {
  std::ofstream out = open_out(path);
  out << "feature,modality,raw,percent,rank\n";
  for (const AttributionEntry& e : report.entries) {
    out << e.feature << ',' << modality_name(e.modality) << ',' << format_number(e.raw) << ','
        << format_number(e.percent) << ',' << e.rank << '\n';
  }
}

void write_top_k_csv(const std::string& path, const std::vector<AttributionEntry>& entries) {
  std::ofstream out = open_out(path);
  out << "rank,feature,modality,percent\n";
  for (const AttributionEntry& e : entries) {
    out << e.rank << ',' << e.feature << ',' << modality_name(e.modality) << ','
        << format_number(e.percent) << '\n';
  }
}

void write_stats_csv(const std::string& path, const std::vector<TestResult>& results) {
  std::ofstream out = open_out(path);
  out << "variable,test,statistic,p_raw,p_fdr,effect_family,effect,"
         "hc_summary,pd_summary,sparse_fallback\n";
  for (const TestResult& r : results) {
    out << r.variable << ',' << test_kind_name(r.kind) << ',' << format_number(r.statistic) << ','
        << format_number(r.p_raw) << ',' << format_number(r.p_adjusted) << ','
        << effect_family_name(r.effect_family) << ',' << format_number(r.effect) << ",\""
        << r.group0_summary << "\",\"" << r.group1_summary << "\","
        << (r.sparse_fallback ? 1 : 0) << '\n';
  }
}

void write_epoch_log_csv(const std::string& path, const std::vector<EpochLogRow>& log) {
  std::ofstream out = open_out(path);
  out << "epoch,train_loss,val_composite,val_auroc,val_balacc,val_f1,lr,stopped\n";
  for (const EpochLogRow& row : log) {
    out << row.epoch << ',' << format_number(row.train_loss) << ','
        << format_number(row.val_composite) << ',' << format_number(row.val_auroc) << ','
        << format_number(row.val_balacc) << ',' << format_number(row.val_f1) << ','
        << format_number(row.lr) << ',' << (row.stopped ? 1 : 0) << '\n';
  }
}

void write_loss_log_csv(const std::string& path, const std::vector<StepLossRow>& log) {
  std::ofstream out = open_out(path);
  out << "epoch,step,focal,sparsity,total,alpha0,alpha1,n0,n1\n";
  for (const StepLossRow& row : log) {
    out << row.epoch << ',' << row.step << ',' << format_number(row.focal) << ','
        << format_number(row.sparsity) << ',' << format_number(row.total) << ','
        << format_number(row.alpha0) << ',' << format_number(row.alpha1) << ',' << row.n0 << ','
        << row.n1 << '\n';
  }
}

void write_ablation_csv(const std::string& path, const std::vector<AblationResultRow>& rows) {
  std::ofstream out = open_out(path);
  out << "model";
  for (const std::string& name : metric_names()) out << ',' << name << ',' << name << "_sd";
  out << ",status\n";
  for (const AblationResultRow& row : rows) {
    out << row.name;
    if (row.failed) {
      for (std::size_t m = 0; m < metric_names().size(); ++m) out << ",,";
      out << ",failed: " << row.error << '\n';
      continue;
    }
    for (std::size_t m = 0; m < metric_names().size(); ++m) {
      out << ',' << format_number(row.aggregate.mean[m]) << ','
          << format_number(row.aggregate.sd[m]);
    }
    out << ",ok\n";
  }
}

}  // namespace safn
