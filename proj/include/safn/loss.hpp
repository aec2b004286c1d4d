#pragma once

#include "safn/common.hpp"

#include <utility>
#include <vector>

namespace safn {

struct LossConfig {
  double beta = 0.999;          // effective-number hyperparameter
  double gamma = 1.5;           // focal focusing parameter
  double lambda_sparse = 1e-3;  // gate sparsity weight
  double epsilon = 1e-7;        // probability clamp
  bool use_class_weights = true;

  void validate() const;
};

/// Per-batch effective-number class weights: (1-beta)/(1-beta^n_c), with
/// weight 0 for a class absent from the batch. No normalisation is applied.
std::pair<double, double> effective_number_weights(long n0, long n1, double beta);

/// Class-balanced focal loss for one sample. The probability is clamped to
/// [epsilon, 1-epsilon] before the logs.
double cb_focal(double p, int y, double alpha0, double alpha1, double gamma, double epsilon);

/// d(cb_focal)/dp of the raw probability; zero where the clamp binds.
double cb_focal_grad_p(double p, int y, double alpha0, double alpha1, double gamma,
                       double epsilon);

/// d(cb_focal)/dlogit with p = sigmoid(logit).
double cb_focal_grad_logit(double p, int y, double alpha0, double alpha1, double gamma,
                           double epsilon);

/// Mean over the batch of the per-sample gate l1 norms.
double sparsity_penalty(const std::vector<Vec>& gates);

struct BatchLossBreakdown {
  double focal_term = 0.0;
  double sparsity_term = 0.0;  // unweighted mean gate l1 norm
  double total = 0.0;          // focal_term + lambda_sparse * sparsity_term
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  long n0 = 0;
  long n1 = 0;
};

/// Batch objective: mean CB-Focal with batch-level effective-number weights
/// plus the weighted sparsity penalty. `gates` may be empty when gating is
/// ablated; the sparsity term is then zero.
BatchLossBreakdown total_loss(const std::vector<double>& probs, const std::vector<int>& labels,
                              const std::vector<Vec>& gates, const LossConfig& config);

}  // namespace safn
