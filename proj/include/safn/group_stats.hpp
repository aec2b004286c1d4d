#pragma once

#include "safn/dataset.hpp"

#include <string>
#include <vector>

namespace safn {

/// Upper regularized incomplete gamma Q(a, x); the chi-square survival
/// function is Q(dof/2, x/2).
double regularized_gamma_q(double a, double x);

/// Standard normal survival function P(Z > z).
double normal_sf(double z);

struct MannWhitneyResult {
  double u = 0.0;        // U statistic of the first sample
  double p = 1.0;        // two-sided
  bool exact = false;    // exact enumeration vs tie-corrected normal approx
};

/// Midrank U with exact enumeration when n_x * n_y <= 20, otherwise the
/// tie-corrected normal approximation with continuity correction.
MannWhitneyResult mann_whitney_u(const std::vector<double>& x, const std::vector<double>& y);

/// (#(x_i > y_j) - #(x_i < y_j)) / (n_x * n_y). Pass the HC group first to
/// match the sign convention where negative values mean larger PD values.
double cliffs_delta(const std::vector<double>& x, const std::vector<double>& y);

struct ChiSquareResult {
  double chi2 = 0.0;
  double p = 1.0;
  double cramers_v = 0.0;
  long dof = 0;
};

/// Pearson chi-square test of independence on an r x c count table.
ChiSquareResult chi_square_cramers_v(const std::vector<std::vector<long>>& table);

/// Two-sided Fisher exact p for a 2x2 table: sum of hypergeometric
/// probabilities no larger than the observed table's (1e-12 slack).
double fisher_exact_2x2(long a, long b, long c, long d);

/// Benjamini-Hochberg step-up adjustment; output order matches input order.
std::vector<double> bh_fdr(const std::vector<double>& pvalues);

enum class TestKind { MannWhitney, ChiSquare, FisherExact };
enum class EffectFamily { CliffsDelta, CramersV };

struct TestResult {
  std::string variable;
  TestKind kind = TestKind::MannWhitney;
  double statistic = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  double effect = 0.0;
  EffectFamily effect_family = EffectFamily::CliffsDelta;
  std::string group0_summary;  // HC: median [IQR] or counts
  std::string group1_summary;  // PD
  bool sparse_fallback = false;  // chi-square used on a sparse table wider than 2x2
};

std::string test_kind_name(TestKind kind);
std::string effect_family_name(EffectFamily family);

/// Runs the per-variable PD-vs-HC comparison over every feature column:
/// Mann-Whitney + Cliff's delta for numeric columns (missing excluded
/// pairwise), chi-square or Fisher (2x2 with any expected count < 5) for
/// categorical columns with missing kept as its own level. Raw p values are
/// BH-adjusted jointly; results are sorted by adjusted p.
std::vector<TestResult> run_group_analysis(const RawTable& table, const DatasetSchema& schema);

}  // namespace safn
