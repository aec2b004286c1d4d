#include "safn/group_stats.hpp"

#include "safn/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace safn {

namespace {

// Lower regularized incomplete gamma by series expansion; valid for x < a+1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized incomplete gamma by Lentz continued fraction; x >= a+1.
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-15) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double regularized_gamma_q(double a, double x) {
  if (a <= 0.0) throw NumericError("regularized_gamma_q: a must be positive");
  if (x < 0.0) throw NumericError("regularized_gamma_q: x must be nonnegative");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double normal_sf(double z) {
  return 0.5 * std::erfc(z * M_SQRT1_2);
}

namespace {

std::vector<double> pooled_midranks(const std::vector<double>& pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

double u_from_ranks(const std::vector<double>& ranks, const std::vector<std::size_t>& subset,
                    std::size_t n_x) {
  double rank_sum = 0.0;
  for (std::size_t idx : subset) rank_sum += ranks[idx];
  return rank_sum - 0.5 * static_cast<double>(n_x) * static_cast<double>(n_x + 1);
}

// Exact two-sided p by enumerating every assignment of the pooled values to
// the first group.
double exact_two_sided_p(const std::vector<double>& ranks, std::size_t n_x, double u_obs) {
  const std::size_t n = ranks.size();
  const double mu = 0.5 * static_cast<double>(n_x) * static_cast<double>(n - n_x);
  const double dev_obs = std::fabs(u_obs - mu);

  std::vector<std::size_t> subset(n_x);
  std::iota(subset.begin(), subset.end(), std::size_t{0});
  long total = 0;
  long extreme = 0;
  while (true) {
    ++total;
    const double u = u_from_ranks(ranks, subset, n_x);
    if (std::fabs(u - mu) >= dev_obs - 1e-12) ++extreme;
    // next combination
    long pos = static_cast<long>(n_x) - 1;
    while (pos >= 0 && subset[pos] == n - n_x + pos) --pos;
    if (pos < 0) break;
    ++subset[pos];
    for (std::size_t t = pos + 1; t < n_x; ++t) subset[t] = subset[t - 1] + 1;
  }
  return static_cast<double>(extreme) / static_cast<double>(total);
}

}  // namespace

MannWhitneyResult mann_whitney_u(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty() || y.empty()) throw DataError("mann_whitney_u: both samples must be nonempty");
  const std::size_t n_x = x.size();
  const std::size_t n_y = y.size();
  std::vector<double> pooled = x;
  pooled.insert(pooled.end(), y.begin(), y.end());
  const std::vector<double> ranks = pooled_midranks(pooled);

  double rank_sum_x = 0.0;
  for (std::size_t i = 0; i < n_x; ++i) rank_sum_x += ranks[i];
  MannWhitneyResult result;
  result.u = rank_sum_x - 0.5 * static_cast<double>(n_x) * static_cast<double>(n_x + 1);

  if (n_x * n_y <= 20) {
    result.exact = true;
    result.p = exact_two_sided_p(ranks, n_x, result.u);
    return result;
  }

  const double n = static_cast<double>(n_x + n_y);
  const double mu = 0.5 * static_cast<double>(n_x) * static_cast<double>(n_y);
  // Tie correction over the pooled value multiset.
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const double var = (static_cast<double>(n_x) * static_cast<double>(n_y) / 12.0) *
                     ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (var <= 0.0) {
    result.p = 1.0;  // all pooled values tied
    return result;
  }
  const double z = (std::fabs(result.u - mu) - 0.5) / std::sqrt(var);
  result.p = z <= 0.0 ? 1.0 : std::min(1.0, 2.0 * normal_sf(z));
  return result;
}

double cliffs_delta(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty() || y.empty()) throw DataError("cliffs_delta: both samples must be nonempty");
  long greater = 0;
  long less = 0;
  for (double xv : x) {
    for (double yv : y) {
      if (xv > yv) ++greater;
      else if (xv < yv) ++less;
    }
  }
  return static_cast<double>(greater - less) /
         (static_cast<double>(x.size()) * static_cast<double>(y.size()));
}

ChiSquareResult chi_square_cramers_v(const std::vector<std::vector<long>>& table) {
  const std::size_t r = table.size();
  if (r < 2) throw DataError("chi_square: need at least 2 rows");
  const std::size_t c = table[0].size();
  if (c < 2) throw DataError("chi_square: need at least 2 columns");
  for (const auto& row : table) {
    if (row.size() != c) throw DataError("chi_square: ragged table");
  }

  std::vector<double> row_sums(r, 0.0);
  std::vector<double> col_sums(c, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      if (table[i][j] < 0) throw DataError("chi_square: negative count");
      row_sums[i] += table[i][j];
      col_sums[j] += table[i][j];
      total += table[i][j];
    }
  }
  if (total <= 0.0) throw DataError("chi_square: empty table");
  for (double s : row_sums) {
    if (s == 0.0) throw DataError("chi_square: zero row marginal");
  }
  for (double s : col_sums) {
    if (s == 0.0) throw DataError("chi_square: zero column marginal");
  }

  ChiSquareResult result;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double expected = row_sums[i] * col_sums[j] / total;
      const double diff = table[i][j] - expected;
      result.chi2 += diff * diff / expected;
    }
  }
  result.dof = static_cast<long>((r - 1) * (c - 1));
  result.p = regularized_gamma_q(0.5 * result.dof, 0.5 * result.chi2);
  result.cramers_v =
      std::sqrt(result.chi2 / (total * (static_cast<double>(std::min(r, c)) - 1.0)));
  return result;
}

double fisher_exact_2x2(long a, long b, long c, long d) {
  if (a < 0 || b < 0 || c < 0 || d < 0) throw DataError("fisher_exact: negative count");
  const long row1 = a + b;
  const long col1 = a + c;
  const long n = a + b + c + d;
  if (n == 0) throw DataError("fisher_exact: empty table");

  auto log_choose = [](long m, long k) {
    return std::lgamma(m + 1.0) - std::lgamma(k + 1.0) - std::lgamma(m - k + 1.0);
  };
  // log P(A = k) for the hypergeometric with these margins
  auto log_pmf = [&](long k) {
    return log_choose(col1, k) + log_choose(n - col1, row1 - k) - log_choose(n, row1);
  };

  const long k_min = std::max(0L, row1 - (n - col1));
  const long k_max = std::min(row1, col1);
  const double log_p_obs = log_pmf(a);
  double p = 0.0;
  for (long k = k_min; k <= k_max; ++k) {
    const double lp = log_pmf(k);
    if (lp <= log_p_obs + 1e-12) p += std::exp(lp);
  }
  return std::min(1.0, p);
}

std::vector<double> bh_fdr(const std::vector<double>& pvalues) {
  const std::size_t m = pvalues.size();
  for (double p : pvalues) {
    if (p < 0.0 || p > 1.0) throw DataError("bh_fdr: p-value outside [0,1]");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
  std::vector<double> adjusted(m, 0.0);
  double running_min = 1.0;
  for (std::size_t rank = m; rank >= 1; --rank) {
    const std::size_t idx = order[rank - 1];
    const double candidate = pvalues[idx] * static_cast<double>(m) / static_cast<double>(rank);
    running_min = std::min(running_min, candidate);
    adjusted[idx] = running_min;
  }
  return adjusted;
}

std::string test_kind_name(TestKind kind) {
  switch (kind) {
    case TestKind::MannWhitney: return "mann_whitney_u";
    case TestKind::ChiSquare: return "chi_square";
    case TestKind::FisherExact: return "fisher_exact";
  }
  return "unknown";
}

std::string effect_family_name(EffectFamily family) {
  return family == EffectFamily::CliffsDelta ? "cliffs_delta" : "cramers_v";
}

namespace {

std::string quantile_summary(std::vector<double> values) {
  if (values.empty()) return "n=0";
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * (static_cast<double>(values.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return values[lo] + w * (values[hi] - values[lo]);
  };
  std::ostringstream out;
  out << format_number(quantile(0.5)) << " [" << format_number(quantile(0.25)) << ", "
      << format_number(quantile(0.75)) << "]";
  return out.str();
}

std::string count_summary(const std::map<std::string, long>& counts, long total) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [level, count] : counts) {
    if (!first) out << "; ";
    first = false;
    const double pct = total > 0 ? 100.0 * static_cast<double>(count) / total : 0.0;
    out << level << ": " << count << " (" << format_number(pct) << "%)";
  }
  return out.str();
}

}  // namespace

std::vector<TestResult> run_group_analysis(const RawTable& table, const DatasetSchema& schema) {
  const std::size_t n = table.n_rows();
  long n_hc = 0;
  long n_pd = 0;
  for (int label : table.labels) (label == 1 ? n_pd : n_hc) += 1;
  if (n_hc < 2 || n_pd < 2) {
    throw DataError("run_group_analysis: need at least 2 samples per group");
  }

  std::vector<TestResult> results;
  for (const auto& col : table.columns) {
    if (!schema.modality_assignment.count(col.name)) continue;
    TestResult res;
    res.variable = col.name;

    if (col.categorical) {
      // Levels x group contingency; missing kept as its own "nan" level.
      std::map<std::string, std::array<long, 2>> level_counts;
      for (std::size_t r = 0; r < n; ++r) {
        const std::string level = col.missing[r] ? "nan" : col.category[r];
        level_counts[level][table.labels[r]] += 1;
      }
      if (level_counts.size() < 2) {
        // Single observed level: no association to test.
        res.kind = TestKind::ChiSquare;
        res.statistic = 0.0;
        res.p_raw = 1.0;
        res.effect = 0.0;
        res.effect_family = EffectFamily::CramersV;
      } else {
        std::vector<std::vector<long>> counts;
        for (const auto& [level, row] : level_counts) {
          (void)level;
          counts.push_back({row[0], row[1]});
        }
        const ChiSquareResult chi = chi_square_cramers_v(counts);
        bool any_small_expected = false;
        {
          const double total = static_cast<double>(n_hc + n_pd);
          std::vector<double> row_sums;
          for (const auto& row : counts) row_sums.push_back(row[0] + row[1]);
          for (std::size_t i = 0; i < counts.size(); ++i) {
            for (int g = 0; g < 2; ++g) {
              const double expected =
                  row_sums[i] * static_cast<double>(g == 0 ? n_hc : n_pd) / total;
              if (expected < 5.0) any_small_expected = true;
            }
          }
        }
        if (any_small_expected && counts.size() == 2) {
          res.kind = TestKind::FisherExact;
          res.p_raw = fisher_exact_2x2(counts[0][0], counts[0][1], counts[1][0], counts[1][1]);
          const double ad = static_cast<double>(counts[0][0]) * counts[1][1];
          const double bc = static_cast<double>(counts[0][1]) * counts[1][0];
          res.statistic = bc > 0.0 ? ad / bc : std::numeric_limits<double>::infinity();
        } else {
          res.kind = TestKind::ChiSquare;
          res.statistic = chi.chi2;
          res.p_raw = chi.p;
          res.sparse_fallback = any_small_expected;
        }
        res.effect = chi.cramers_v;
        res.effect_family = EffectFamily::CramersV;
      }
      std::map<std::string, long> hc_counts;
      std::map<std::string, long> pd_counts;
      for (const auto& [level, row] : level_counts) {
        if (row[0] > 0) hc_counts[level] = row[0];
        if (row[1] > 0) pd_counts[level] = row[1];
      }
      res.group0_summary = count_summary(hc_counts, n_hc);
      res.group1_summary = count_summary(pd_counts, n_pd);
    } else {
      // Missing excluded pairwise.
      std::vector<double> hc;
      std::vector<double> pd;
      for (std::size_t r = 0; r < n; ++r) {
        if (col.missing[r]) continue;
        (table.labels[r] == 1 ? pd : hc).push_back(col.numeric[r]);
      }
      res.kind = TestKind::MannWhitney;
      res.effect_family = EffectFamily::CliffsDelta;
      if (hc.empty() || pd.empty()) {
        res.p_raw = 1.0;
        res.effect = 0.0;
      } else {
        const MannWhitneyResult mw = mann_whitney_u(hc, pd);
        res.statistic = mw.u;
        res.p_raw = mw.p;
        res.effect = cliffs_delta(hc, pd);
      }
      res.group0_summary = quantile_summary(hc);
      res.group1_summary = quantile_summary(pd);
    }
    results.push_back(std::move(res));
  }

  std::vector<double> raw;
  raw.reserve(results.size());
  for (const auto& r : results) raw.push_back(r.p_raw);
  const std::vector<double> adjusted = bh_fdr(raw);
  for (std::size_t i = 0; i < results.size(); ++i) results[i].p_adjusted = adjusted[i];

  std::sort(results.begin(), results.end(), [](const TestResult& a, const TestResult& b) {
    if (a.p_adjusted != b.p_adjusted) return a.p_adjusted < b.p_adjusted;
    return a.variable < b.variable;
  });
  return results;
}

}  // namespace safn
