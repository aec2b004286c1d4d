#include "safn/layers.hpp"

namespace safn {

Mat tokenize(VecRef x, MatRef token_w, MatRef token_b) {
  if (x.size() != token_w.rows() || token_w.rows() != token_b.rows() ||
      token_w.cols() != token_b.cols()) {
    throw DataError("tokenize: embedding shapes do not match the input length");
  }
  return x.asDiagonal() * token_w + token_b;
}

void tokenize_backward(MatRef d_tokens, VecRef x, MatRef token_w, Eigen::Ref<Vec> d_x,
                       Eigen::Ref<Mat> d_token_w, Eigen::Ref<Mat> d_token_b) {
  d_token_w += x.asDiagonal() * d_tokens;
  d_token_b += d_tokens;
  d_x += (d_tokens.cwiseProduct(token_w)).rowwise().sum();
}

Mat layer_norm_forward(MatRef x, VecRef gamma, VecRef beta, LayerNormCache& cache) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  cache.xhat.resize(rows, cols);
  cache.inv_std.resize(rows);
  Mat out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[r] = inv;
    cache.xhat.row(r) = (x.row(r).array() - mean) * inv;
    out.row(r) = cache.xhat.row(r).cwiseProduct(gamma.transpose()) + beta.transpose();
  }
  return out;
}

void layer_norm_backward(MatRef d_out, VecRef gamma, const LayerNormCache& cache,
                         Eigen::Ref<Mat> d_x, Eigen::Ref<Vec> d_gamma, Eigen::Ref<Vec> d_beta) {
  for (Eigen::Index r = 0; r < d_out.rows(); ++r) {
    d_gamma += d_out.row(r).cwiseProduct(cache.xhat.row(r)).transpose();
    d_beta += d_out.row(r).transpose();
    const Eigen::RowVectorXd d_xhat = d_out.row(r).cwiseProduct(gamma.transpose());
    const double mean_d = d_xhat.mean();
    const double mean_dx = d_xhat.cwiseProduct(cache.xhat.row(r)).mean();
    d_x.row(r) += cache.inv_std[r] *
                  (d_xhat.array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
  }
}

Mat dropout_forward(MatRef x, double rate, bool train_mode, std::mt19937_64& rng,
                    DropoutCache& cache) {
  if (!train_mode || rate <= 0.0) {
    cache.active = false;
    return x;
  }
  cache.active = true;
  cache.mask.resize(x.rows(), x.cols());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      cache.mask(r, c) = unif(rng) < rate ? 0.0 : keep_scale;
    }
  }
  return x.cwiseProduct(cache.mask);
}

Mat dropout_backward(MatRef d_out, const DropoutCache& cache) {
  if (!cache.active) return d_out;
  return d_out.cwiseProduct(cache.mask);
}

Vec softmax(VecRef scores) {
  const double m = scores.maxCoeff();
  Vec e = (scores.array() - m).exp();
  return e / e.sum();
}

Vec softmax_backward(VecRef probs, VecRef d_probs) {
  const double dot = probs.dot(d_probs);
  const Vec centred = d_probs - Vec::Constant(probs.size(), dot);
  return probs.cwiseProduct(centred);
}

namespace {

// Row-wise softmax, vectorised over the whole score matrix (the attention
// matrices are the hot path).
void softmax_rows_inplace(Mat& scores) {
  const Vec row_max = scores.rowwise().maxCoeff();
  scores = (scores.colwise() - row_max).array().exp();
  const Vec row_sum = scores.rowwise().sum();
  scores.array().colwise() /= row_sum.array();
}

Mat softmax_rows_backward(const Mat& probs, const Mat& d_probs) {
  const Vec row_dot = probs.cwiseProduct(d_probs).rowwise().sum();
  return probs.cwiseProduct(d_probs.colwise() - row_dot);
}

}  // namespace

Mat attention_forward(MatRef x_q, MatRef x_kv, MatRef wq, VecRef bq, MatRef wk, VecRef bk,
                      MatRef wv, VecRef bv, MatRef wo, VecRef bo, int n_heads,
                      AttentionCache& cache) {
  const Eigen::Index d_model = wq.cols();
  if (d_model % n_heads != 0) throw DataError("attention: d_model not divisible by heads");
  const Eigen::Index d_head = d_model / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));

  cache.q = (x_q * wq).rowwise() + bq.transpose();
  cache.k = (x_kv * wk).rowwise() + bk.transpose();
  cache.v = (x_kv * wv).rowwise() + bv.transpose();
  // resize(), not assign(): keeps existing head buffers when a trace is reused
  cache.probs.resize(n_heads);
  cache.heads_concat.resize(x_q.rows(), d_model);

  for (int h = 0; h < n_heads; ++h) {
    const auto q_h = cache.q.middleCols(h * d_head, d_head);
    const auto k_h = cache.k.middleCols(h * d_head, d_head);
    const auto v_h = cache.v.middleCols(h * d_head, d_head);
    cache.probs[h].noalias() = scale * (q_h * k_h.transpose());
    softmax_rows_inplace(cache.probs[h]);
    cache.heads_concat.middleCols(h * d_head, d_head).noalias() = cache.probs[h] * v_h;
  }
  return (cache.heads_concat * wo).rowwise() + bo.transpose();
}

void attention_backward(MatRef d_out, MatRef x_q, MatRef x_kv, MatRef wq, MatRef wk, MatRef wv,
                        MatRef wo, int n_heads, const AttentionCache& cache,
                        Eigen::Ref<Mat> d_x_q, Eigen::Ref<Mat> d_x_kv, AttentionGrads grads) {
  const Eigen::Index d_model = wq.cols();
  const Eigen::Index d_head = d_model / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));

  grads.wo += cache.heads_concat.transpose() * d_out;
  grads.bo += d_out.colwise().sum().transpose();
  const Mat d_concat = d_out * wo.transpose();

  Mat d_q(cache.q.rows(), d_model);
  Mat d_k(cache.k.rows(), d_model);
  Mat d_v(cache.v.rows(), d_model);
  for (int h = 0; h < n_heads; ++h) {
    const auto q_h = cache.q.middleCols(h * d_head, d_head);
    const auto k_h = cache.k.middleCols(h * d_head, d_head);
    const auto v_h = cache.v.middleCols(h * d_head, d_head);
    const auto d_o_h = d_concat.middleCols(h * d_head, d_head);
    const Mat& probs = cache.probs[h];

    const Mat d_probs = d_o_h * v_h.transpose();
    d_v.middleCols(h * d_head, d_head) = probs.transpose() * d_o_h;
    const Mat d_scores = softmax_rows_backward(probs, d_probs);
    d_q.middleCols(h * d_head, d_head) = scale * (d_scores * k_h);
    d_k.middleCols(h * d_head, d_head) = scale * (d_scores.transpose() * q_h);
  }

  grads.wq += x_q.transpose() * d_q;
  grads.bq += d_q.colwise().sum().transpose();
  grads.wk += x_kv.transpose() * d_k;
  grads.bk += d_k.colwise().sum().transpose();
  grads.wv += x_kv.transpose() * d_v;
  grads.bv += d_v.colwise().sum().transpose();
  d_x_q += d_q * wq.transpose();
  d_x_kv += d_k * wk.transpose() + d_v * wv.transpose();
}

Vec attention_pool(MatRef seq, VecRef query, PoolCache& cache) {
  if (seq.rows() < 1) throw DataError("attention_pool: empty sequence");
  const double scale = 1.0 / std::sqrt(static_cast<double>(seq.cols()));
  cache.weights = softmax(scale * (seq * query));
  return seq.transpose() * cache.weights;
}

void attention_pool_backward(VecRef d_out, MatRef seq, VecRef query, const PoolCache& cache,
                             Eigen::Ref<Mat> d_seq, Eigen::Ref<Vec> d_query) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(seq.cols()));
  // output = seq^T * w
  const Vec d_weights = seq * d_out;
  d_seq += cache.weights * d_out.transpose();
  const Vec d_scores = softmax_backward(cache.weights, d_weights);
  d_query += scale * (seq.transpose() * d_scores);
  d_seq += scale * (d_scores * query.transpose());
}

}  // namespace safn
