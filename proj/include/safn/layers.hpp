#pragma once

#include "safn/common.hpp"

#include <random>
#include <vector>

namespace safn {

using MatRef = Eigen::Ref<const Mat>;
using VecRef = Eigen::Ref<const Vec>;

constexpr double kLayerNormEps = 1e-5;

/// Feature tokenizer: row f of the output is x_f * w_f + b_f.
Mat tokenize(VecRef x, MatRef token_w, MatRef token_b);
void tokenize_backward(MatRef d_tokens, VecRef x, MatRef token_w, Eigen::Ref<Vec> d_x,
                       Eigen::Ref<Mat> d_token_w, Eigen::Ref<Mat> d_token_b);

// ---- row-wise layer normalisation --------------------------------------

struct LayerNormCache {
  Mat xhat;
  Vec inv_std;  // per row
};

Mat layer_norm_forward(MatRef x, VecRef gamma, VecRef beta, LayerNormCache& cache);
void layer_norm_backward(MatRef d_out, VecRef gamma, const LayerNormCache& cache,
                         Eigen::Ref<Mat> d_x, Eigen::Ref<Vec> d_gamma, Eigen::Ref<Vec> d_beta);

// ---- dropout -------------------------------------------------------------

/// Inverted dropout; the cached mask holds the applied multipliers so the
/// backward pass replays the exact forward realisation.
struct DropoutCache {
  bool active = false;
  Mat mask;
};

Mat dropout_forward(MatRef x, double rate, bool train_mode, std::mt19937_64& rng,
                    DropoutCache& cache);
Mat dropout_backward(MatRef d_out, const DropoutCache& cache);

// ---- multi-head attention -------------------------------------------------

struct AttentionCache {
  Mat q, k, v;             // F x D projections, heads side by side
  std::vector<Mat> probs;  // per head, F_q x F_kv softmax rows
  Mat heads_concat;        // F_q x D
};

/// Scaled dot-product multi-head attention with output projection.
/// Self-attention passes the same matrix for queries and key/values.
Mat attention_forward(MatRef x_q, MatRef x_kv, MatRef wq, VecRef bq, MatRef wk, VecRef bk,
                      MatRef wv, VecRef bv, MatRef wo, VecRef bo, int n_heads,
                      AttentionCache& cache);

struct AttentionGrads {
  Eigen::Ref<Mat> wq;
  Eigen::Ref<Vec> bq;
  Eigen::Ref<Mat> wk;
  Eigen::Ref<Vec> bk;
  Eigen::Ref<Mat> wv;
  Eigen::Ref<Vec> bv;
  Eigen::Ref<Mat> wo;
  Eigen::Ref<Vec> bo;
};

void attention_backward(MatRef d_out, MatRef x_q, MatRef x_kv, MatRef wq, MatRef wk, MatRef wv,
                        MatRef wo, int n_heads, const AttentionCache& cache,
                        Eigen::Ref<Mat> d_x_q, Eigen::Ref<Mat> d_x_kv, AttentionGrads grads);

// ---- attention pooling -----------------------------------------------------

struct PoolCache {
  Vec weights;
};

/// weights = softmax(seq * query / sqrt(D)); output = weighted row sum.
Vec attention_pool(MatRef seq, VecRef query, PoolCache& cache);
void attention_pool_backward(VecRef d_out, MatRef seq, VecRef query, const PoolCache& cache,
                             Eigen::Ref<Mat> d_seq, Eigen::Ref<Vec> d_query);

// ---- softmax helpers --------------------------------------------------------

Vec softmax(VecRef scores);
/// d_scores from d_probs for one softmax row.
Vec softmax_backward(VecRef probs, VecRef d_probs);

}  // namespace safn
