#pragma once

#include "safn/metrics.hpp"
#include "safn/param_store.hpp"
#include "safn/preprocess.hpp"

#include <cstdint>
#include <vector>

namespace safn {

// ---- logistic regression -----------------------------------------------------

struct LogRegParams {
  Vec weights;
  double bias = 0.0;
  double c = 1.0;  // inverse regularisation strength
  bool converged = false;
  double final_grad_norm = 0.0;
  int iterations = 0;
};

/// L2-regularised logistic regression with balanced class weights
/// (w_c = n / (2 n_c)), minimised by full-batch gradient descent with
/// backtracking line search until the gradient norm drops below 1e-6.
/// Throws NumericError when 5000 iterations do not reach the tolerance.
LogRegParams train_logreg(const Mat& features, const std::vector<int>& labels, double c,
                          bool class_weighted, uint64_t seed);

std::vector<double> logreg_predict(const LogRegParams& params, const Mat& features);

/// The objective value train_logreg minimises; exposed for convexity checks.
double logreg_objective(const Vec& weights, double bias, const Mat& features,
                        const std::vector<int>& labels, double c, bool class_weighted);

// ---- MLP baseline --------------------------------------------------------------

struct MlpBaselineConfig {
  std::vector<int> hidden = {128, 64};
  double dropout = 0.4;
  double lr = 1e-3;
  int batch_size = 64;
  int epochs = 50;
  int patience = 8;
  double threshold = 0.5;
};

/// Fully connected ReLU classifier over the concatenated features.
class MlpBaselineNet {
 public:
  MlpBaselineNet(int input_dim, const std::vector<int>& hidden, double dropout);

  const ParamLayout& layout() const { return layout_; }
  std::size_t param_count() const { return layout_.total(); }
  ParamBuffer make_params(uint64_t seed) const;
  ParamBuffer make_zero_buffer() const { return ParamBuffer(layout_); }

  struct Trace {
    Vec input;
    std::vector<Vec> pre;      // pre-activation per hidden layer
    std::vector<Vec> post;     // post-ReLU, post-dropout per hidden layer
    std::vector<Mat> dropout_masks;  // empty matrix when inactive
    double logit = 0.0;
    double prob = 0.0;
  };

  Trace forward(const Vec& x, const ParamBuffer& params, bool train_mode,
                uint64_t dropout_seed) const;
  void backward(const Trace& trace, const ParamBuffer& params, double d_logit,
                ParamBuffer& grads, Vec* d_input) const;

 private:
  int input_dim_;
  std::vector<int> hidden_;
  double dropout_;
  ParamLayout layout_;
  std::vector<int> w_ids_;
  std::vector<int> b_ids_;
};

struct MlpBaselineOutcome {
  FoldReport report;
  std::vector<double> best_params;
  int best_epoch = -1;
  std::vector<double> val_probs;
  std::vector<int> val_labels;
  std::vector<double> epoch_val_loss;
};

/// Trains the plain concatenation MLP: pos-weighted BCE (pos_weight =
/// n_neg/n_pos), Adam at 1e-3, early stopping on validation loss.
MlpBaselineOutcome train_mlp_baseline(const std::vector<ModalityBundle>& train_set,
                                      const std::vector<ModalityBundle>& val_set,
                                      const MlpBaselineConfig& config, uint64_t seed);

}  // namespace safn
