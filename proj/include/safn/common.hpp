#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace safn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Malformed input: missing files, schema violations, unmappable values,
/// shape mismatches between data and fitted objects.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numeric failure: non-finite gradients, solver non-convergence.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// splitmix64 step; used to derive independent RNG streams from one master
/// seed so that per-fold / per-epoch / per-sample randomness stays stable
/// when other parts of the run change.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

/// Numerically stable logistic function.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double sigmoid_derivative(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

/// Exact GELU, x * Phi(x) with the Gaussian CDF.
inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

inline double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

/// Compact decimal formatting for CSV output; deterministic for a given
/// build so repeated runs produce byte-identical files.
std::string format_number(double v);

/// Raises the allocator's mmap threshold so the attention matrices are
/// served from the reusable heap instead of fresh mappings every sample.
/// Idempotent; no-op on non-glibc platforms.
void tune_allocator_for_training();

}  // namespace safn
