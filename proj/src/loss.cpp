#include "safn/loss.hpp"

#include <algorithm>
#include <cmath>

namespace safn {

void LossConfig::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) throw DataError("LossConfig: beta outside (0,1)");
  if (gamma < 0.0) throw DataError("LossConfig: gamma must be nonnegative");
  if (lambda_sparse < 0.0) throw DataError("LossConfig: lambda_sparse must be nonnegative");
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw DataError("LossConfig: epsilon outside (0,0.5)");
}

std::pair<double, double> effective_number_weights(long n0, long n1, double beta) {
  if (n0 + n1 < 1) throw DataError("effective_number_weights: empty batch");
  auto weight = [beta](long n) {
    if (n == 0) return 0.0;
    return (1.0 - beta) / (1.0 - std::pow(beta, static_cast<double>(n)));
  };
  return {weight(n0), weight(n1)};
}

namespace {

double clamp_prob(double p, double epsilon) {
  return std::min(std::max(p, epsilon), 1.0 - epsilon);
}

}  // namespace

double cb_focal(double p, int y, double alpha0, double alpha1, double gamma, double epsilon) {
  if (!std::isfinite(p)) throw NumericError("cb_focal: non-finite probability");
  const double pc = clamp_prob(p, epsilon);
  if (y == 1) return -alpha1 * std::pow(1.0 - pc, gamma) * std::log(pc);
  return -alpha0 * std::pow(pc, gamma) * std::log(1.0 - pc);
}

double cb_focal_grad_p(double p, int y, double alpha0, double alpha1, double gamma,
                       double epsilon) {
  if (!std::isfinite(p)) throw NumericError("cb_focal_grad_p: non-finite probability");
  if (p < epsilon || p > 1.0 - epsilon) return 0.0;  // clamp region
  const double pc = clamp_prob(p, epsilon);
  if (y == 1) {
    const double focal = std::pow(1.0 - pc, gamma);
    const double d_focal = gamma > 0.0 ? -gamma * std::pow(1.0 - pc, gamma - 1.0) : 0.0;
    // L = -alpha1 * focal * log(pc)
    return -alpha1 * (d_focal * std::log(pc) + focal / pc);
  }
  const double focal = std::pow(pc, gamma);
  const double d_focal = gamma > 0.0 ? gamma * std::pow(pc, gamma - 1.0) : 0.0;
  // L = -alpha0 * focal * log(1 - pc)
  return -alpha0 * (d_focal * std::log(1.0 - pc) - focal / (1.0 - pc));
}

double cb_focal_grad_logit(double p, int y, double alpha0, double alpha1, double gamma,
                           double epsilon) {
  return cb_focal_grad_p(p, y, alpha0, alpha1, gamma, epsilon) * p * (1.0 - p);
}

double sparsity_penalty(const std::vector<Vec>& gates) {
  if (gates.empty()) throw DataError("sparsity_penalty: empty batch");
  double sum = 0.0;
  for (const Vec& g : gates) sum += g.array().abs().sum();
  return sum / static_cast<double>(gates.size());
}

BatchLossBreakdown total_loss(const std::vector<double>& probs, const std::vector<int>& labels,
                              const std::vector<Vec>& gates, const LossConfig& config) {
  config.validate();
  if (probs.empty() || probs.size() != labels.size()) {
    throw DataError("total_loss: bad batch shapes");
  }
  if (!gates.empty() && gates.size() != probs.size()) {
    throw DataError("total_loss: gate batch size mismatch");
  }

  BatchLossBreakdown out;
  for (int y : labels) (y == 1 ? out.n1 : out.n0) += 1;
  if (config.use_class_weights) {
    std::tie(out.alpha0, out.alpha1) = effective_number_weights(out.n0, out.n1, config.beta);
  } else {
    out.alpha0 = 1.0;
    out.alpha1 = 1.0;
  }

  double focal_sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    focal_sum +=
        cb_focal(probs[i], labels[i], out.alpha0, out.alpha1, config.gamma, config.epsilon);
  }
  out.focal_term = focal_sum / static_cast<double>(probs.size());
  out.sparsity_term = gates.empty() ? 0.0 : sparsity_penalty(gates);
  out.total = out.focal_term + config.lambda_sparse * out.sparsity_term;
  return out;
}

}  // namespace safn
