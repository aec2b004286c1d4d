#include "safn/baselines.hpp"

#include "safn/layers.hpp"
#include "safn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace safn {

namespace {

std::pair<double, double> class_weights(const std::vector<int>& labels, bool balanced) {
  const double n = static_cast<double>(labels.size());
  const double n1 = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double n0 = n - n1;
  if (n0 == 0.0 || n1 == 0.0) throw DataError("both classes required");
  if (!balanced) return {1.0, 1.0};
  return {n / (2.0 * n0), n / (2.0 * n1)};
}

}  // namespace

double logreg_objective(const Vec& weights, double bias, const Mat& features,
                        const std::vector<int>& labels, double c, bool class_weighted) {
  const auto [w0, w1] = class_weights(labels, class_weighted);
  const double n = static_cast<double>(features.rows());
  const Vec scores = features * weights + Vec::Constant(features.rows(), bias);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    // log(1 + exp(-z)) computed stably
    const double z = labels[i] == 1 ? scores[i] : -scores[i];
    const double nll = z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
    loss += (labels[i] == 1 ? w1 : w0) * nll;
  }
  loss /= n;
  loss += weights.squaredNorm() / (2.0 * c * n);
  return loss;
}

LogRegParams train_logreg(const Mat& features, const std::vector<int>& labels, double c,
                          bool class_weighted, uint64_t seed) {
  (void)seed;  // the problem is convex; the start point is the origin
  if (features.rows() != static_cast<Eigen::Index>(labels.size()) || features.rows() == 0) {
    throw DataError("train_logreg: features/labels mismatch");
  }
  const auto [w0, w1] = class_weights(labels, class_weighted);
  const double n = static_cast<double>(features.rows());

  LogRegParams params;
  params.c = c;
  params.weights = Vec::Zero(features.cols());
  params.bias = 0.0;

  Vec sample_weight(features.rows());
  Vec target(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    sample_weight[i] = labels[i] == 1 ? w1 : w0;
    target[i] = labels[i];
  }

  double objective = logreg_objective(params.weights, params.bias, features, labels, c,
                                      class_weighted);
  double step = 1.0;
  constexpr int kMaxIterations = 5000;
  constexpr double kTolerance = 1e-6;

  for (int iter = 0; iter < kMaxIterations; ++iter) {
    const Vec scores = features * params.weights + Vec::Constant(features.rows(), params.bias);
    const Vec probs = scores.unaryExpr([](double s) { return sigmoid(s); });
    const Vec residual = sample_weight.cwiseProduct(probs - target);
    Vec grad_w = (features.transpose() * residual) / n + params.weights / (c * n);
    const double grad_b = residual.sum() / n;
    const double grad_norm = std::sqrt(grad_w.squaredNorm() + grad_b * grad_b);
    params.final_grad_norm = grad_norm;
    params.iterations = iter;
    if (grad_norm < kTolerance) {
      params.converged = true;
      return params;
    }

    // Backtracking line search with Armijo condition.
    step = std::min(step * 2.0, 1e6);
    while (step > 1e-15) {
      const Vec w_try = params.weights - step * grad_w;
      const double b_try = params.bias - step * grad_b;
      const double obj_try = logreg_objective(w_try, b_try, features, labels, c, class_weighted);
      if (obj_try <= objective - 0.5 * step * grad_norm * grad_norm) {
        params.weights = w_try;
        params.bias = b_try;
        objective = obj_try;
        break;
      }
      step *= 0.5;
    }
  }
  throw NumericError("train_logreg: no convergence after 5000 iterations, gradient norm " +
                     std::to_string(params.final_grad_norm));
}

std::vector<double> logreg_predict(const LogRegParams& params, const Mat& features) {
  const Vec scores = features * params.weights + Vec::Constant(features.rows(), params.bias);
  std::vector<double> probs(scores.size());
  for (Eigen::Index i = 0; i < scores.size(); ++i) probs[i] = sigmoid(scores[i]);
  return probs;
}

// ---- MLP baseline ----------------------------------------------------------------

MlpBaselineNet::MlpBaselineNet(int input_dim, const std::vector<int>& hidden, double dropout)
    : input_dim_(input_dim), hidden_(hidden), dropout_(dropout) {
  if (input_dim <= 0) throw DataError("MlpBaselineNet: bad input dim");
  for (int h : hidden_) {
    if (h <= 0) throw DataError("MlpBaselineNet: hidden widths must be positive");
  }
  int in = input_dim_;
  for (std::size_t l = 0; l <= hidden_.size(); ++l) {
    const int out = l < hidden_.size() ? hidden_[l] : 1;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    w_ids_.push_back(layout_.add("mlp.w" + std::to_string(l), in, out, InitKind::Uniform, bound));
    b_ids_.push_back(layout_.add("mlp.b" + std::to_string(l), out, 1, InitKind::Uniform, bound));
    in = out;
  }
}

ParamBuffer MlpBaselineNet::make_params(uint64_t seed) const {
  ParamBuffer buffer(layout_);
  init_param_buffer(buffer, seed);
  return buffer;
}

MlpBaselineNet::Trace MlpBaselineNet::forward(const Vec& x, const ParamBuffer& params,
                                              bool train_mode, uint64_t dropout_seed) const {
  if (x.size() != input_dim_) throw DataError("MlpBaselineNet: input width mismatch");
  Trace trace;
  trace.input = x;
  std::mt19937_64 rng(dropout_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Vec current = x;
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    Vec pre = params.mat(w_ids_[l]).transpose() * current + params.vec(b_ids_[l]);
    Vec post = pre.cwiseMax(0.0);
    Mat mask;
    if (train_mode && dropout_ > 0.0) {
      mask.resize(post.size(), 1);
      const double keep_scale = 1.0 / (1.0 - dropout_);
      for (Eigen::Index i = 0; i < post.size(); ++i) {
        mask(i, 0) = unif(rng) < dropout_ ? 0.0 : keep_scale;
      }
      post = post.cwiseProduct(mask.col(0));
    }
    trace.pre.push_back(std::move(pre));
    trace.post.push_back(post);
    trace.dropout_masks.push_back(std::move(mask));
    current = trace.post.back();
  }
  trace.logit =
      (params.mat(w_ids_.back()).transpose() * current + params.vec(b_ids_.back()))(0);
  trace.prob = sigmoid(trace.logit);
  return trace;
}

void MlpBaselineNet::backward(const Trace& trace, const ParamBuffer& params, double d_logit,
                              ParamBuffer& grads, Vec* d_input) const {
  const std::size_t n_hidden = hidden_.size();
  const Vec& last_post = n_hidden > 0 ? trace.post.back() : trace.input;
  grads.mat(w_ids_.back()) += last_post * Eigen::RowVectorXd::Constant(1, d_logit);
  grads.vec(b_ids_.back())[0] += d_logit;
  Vec d_current = params.mat(w_ids_.back()) * Vec::Constant(1, d_logit);

  for (int l = static_cast<int>(n_hidden) - 1; l >= 0; --l) {
    if (trace.dropout_masks[l].size() > 0) {
      d_current = d_current.cwiseProduct(trace.dropout_masks[l].col(0));
    }
    const Vec relu_grad =
        trace.pre[l].unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    d_current = d_current.cwiseProduct(relu_grad);
    const Vec& prev = l > 0 ? trace.post[l - 1] : trace.input;
    grads.mat(w_ids_[l]) += prev * d_current.transpose();
    grads.vec(b_ids_[l]) += d_current;
    d_current = params.mat(w_ids_[l]) * d_current;
  }
  if (d_input) *d_input = d_current;
}

MlpBaselineOutcome train_mlp_baseline(const std::vector<ModalityBundle>& train_set,
                                      const std::vector<ModalityBundle>& val_set,
                                      const MlpBaselineConfig& config, uint64_t seed) {
  if (train_set.empty() || val_set.empty()) {
    throw DataError("train_mlp_baseline: empty train or validation set");
  }
  std::vector<Vec> x_train;
  std::vector<int> y_train;
  for (const auto& b : train_set) {
    x_train.push_back(concat_bundle(b));
    y_train.push_back(b.label);
  }
  std::vector<Vec> x_val;
  std::vector<int> y_val;
  for (const auto& b : val_set) {
    x_val.push_back(concat_bundle(b));
    y_val.push_back(b.label);
  }

  const long n_pos = std::count(y_train.begin(), y_train.end(), 1);
  const long n_neg = static_cast<long>(y_train.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("train_mlp_baseline: both classes required");
  const double pos_weight = static_cast<double>(n_neg) / static_cast<double>(n_pos);

  const MlpBaselineNet net(static_cast<int>(x_train.front().size()), config.hidden,
                           config.dropout);
  ParamBuffer params = net.make_params(mix_seed(seed, 0x31a9));
  ParamBuffer grads = net.make_zero_buffer();
  OptimConfig opt;  // Adam: no decoupled decay, fixed rate
  opt.lr = config.lr;
  opt.weight_decay = 0.0;
  OptimState state = OptimState::init(params.flat());

  auto val_loss = [&](const ParamBuffer& p) {
    double loss = 0.0;
    for (std::size_t i = 0; i < x_val.size(); ++i) {
      const double prob = net.forward(x_val[i], p, false, 0).prob;
      const double pc = std::min(std::max(prob, 1e-12), 1.0 - 1e-12);
      loss += y_val[i] == 1 ? -pos_weight * std::log(pc) : -std::log(1.0 - pc);
    }
    return loss / static_cast<double>(x_val.size());
  };

  MlpBaselineOutcome out;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_improvement = 0;
  uint64_t dropout_counter = 0;

  std::vector<std::size_t> order(x_train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix_seed(mix_seed(seed, 0x3471), epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double batch_n = static_cast<double>(stop - start);
      grads.set_zero();
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t idx = order[i];
        const auto trace = net.forward(x_train[idx], params, true,
                                       mix_seed(mix_seed(seed, 0xd407), dropout_counter++));
        const double p = trace.prob;
        const int y = y_train[idx];
        // d/ds of pos-weighted BCE with p = sigmoid(s)
        const double d_logit = (y == 1 ? -pos_weight * (1.0 - p) : p) / batch_n;
        net.backward(trace, params, d_logit, grads, nullptr);
      }
      adamw_step(params.flat(), grads.flat(), state, config.lr, opt);
    }
    const double loss = val_loss(params);
    out.epoch_val_loss.push_back(loss);
    if (loss < best_loss - 1e-12) {
      best_loss = loss;
      out.best_params = params.flat();
      out.best_epoch = epoch;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    if (since_improvement >= config.patience) break;
  }

  ParamBuffer best = net.make_zero_buffer();
  best.flat() = out.best_params;
  out.val_probs.reserve(x_val.size());
  for (const Vec& x : x_val) out.val_probs.push_back(net.forward(x, best, false, 0).prob);
  out.val_labels = y_val;
  out.report = evaluate_fold(out.val_probs, out.val_labels, config.threshold);
  return out;
}

}  // namespace safn
