#pragma once

#include "safn/attribution.hpp"
#include "safn/group_stats.hpp"
#include "safn/metrics.hpp"
#include "safn/trainer.hpp"

#include <string>
#include <vector>

namespace safn {

/// metrics.csv: one row per fold plus a "mean" aggregate row.
void write_metrics_csv(const std::string& path, const std::vector<FoldReport>& folds,
                       const AggregateReport& aggregate);

/// metrics_summary.csv: single row of "mean +/- sd" cells.
void write_metrics_summary_csv(const std::string& path, const AggregateReport& aggregate);

/// Two-column curve CSV (x,y) with the AUC in a trailing comment line.
void write_curve_csv(const std::string& path, const CurveData& curve, const std::string& x_name,
                     const std::string& y_name);

void write_confusion_csv(const std::string& path, const std::array<double, 4>& mean_confusion);

void write_gate_report_csv(const std::string& path, const GateReport& report);

void write_attribution_csv(const std::string& path, const AttributionReport& report);
void write_top_k_csv(const std::string& path, const std::vector<AttributionEntry>& entries);

void write_stats_csv(const std::string& path, const std::vector<TestResult>& results);

void write_epoch_log_csv(const std::string& path, const std::vector<EpochLogRow>& log);
void write_loss_log_csv(const std::string& path, const std::vector<StepLossRow>& log);

struct AblationResultRow {
  std::string name;
  bool failed = false;
  std::string error;
  AggregateReport aggregate;
};

void write_ablation_csv(const std::string& path, const std::vector<AblationResultRow>& rows);

}  // namespace safn
