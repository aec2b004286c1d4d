#include <doctest.h>

#include "safn/baselines.hpp"
#include "safn/common.hpp"
#include "safn/metrics.hpp"
#include "safn/synthetic.hpp"
#include "safn/trainer.hpp"

#include <cmath>
#include <random>

using namespace safn;

TEST_CASE("logistic regression separates a linear toy and verifies its gradient") {
  Mat x(8, 2);
  std::vector<int> y;
  std::mt19937_64 rng(0);
  std::normal_distribution<double> gauss(0.0, 0.3);
  for (int i = 0; i < 8; ++i) {
    const int label = i % 2;
    x(i, 0) = (label == 1 ? 2.0 : -2.0) + gauss(rng);
    x(i, 1) = gauss(rng);
    y.push_back(label);
  }
  const LogRegParams params = train_logreg(x, y, 1.0, true, 0);
  CHECK(params.converged);
  CHECK(params.final_grad_norm < 1e-6);

  const std::vector<double> probs = logreg_predict(params, x);
  const ThresholdedMetrics m = thresholded_metrics(confusion(probs, y, 0.5));
  CHECK(m.accuracy == doctest::Approx(1.0));

  // Post-hoc analytic gradient recomputation at the optimum.
  const double n = 8.0;
  const double w1 = n / (2.0 * 4.0);
  Vec grad = params.weights / (1.0 * n);
  double grad_b = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double score = x.row(i).dot(params.weights.transpose()) + params.bias;
    const double p = sigmoid(score);
    const double r = w1 * (p - y[i]);
    grad += r * x.row(i).transpose() / n;
    grad_b += r / n;
  }
  CHECK(std::sqrt(grad.squaredNorm() + grad_b * grad_b) < 1e-6);
}

TEST_CASE("logistic regression requires both classes") {
  Mat x = Mat::Random(4, 2);
  CHECK_THROWS_AS(train_logreg(x, {1, 1, 1, 1}, 1.0, true, 0), DataError);
}

TEST_CASE("convexity: random restarts reach the same objective") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat x(30, 3);
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = gauss(rng);
    y.push_back(i % 3 == 0 ? 1 : 0);
  }
  const LogRegParams a = train_logreg(x, y, 1.0, true, 1);
  const LogRegParams b = train_logreg(x, y, 1.0, true, 2);
  const double ja = logreg_objective(a.weights, a.bias, x, y, 1.0, true);
  const double jb = logreg_objective(b.weights, b.bias, x, y, 1.0, true);
  CHECK(std::fabs(ja - jb) < 1e-6);
}

TEST_CASE("mlp baseline gradient check (dropout off)") {
  const MlpBaselineNet net(5, {7, 4}, 0.0);
  ParamBuffer params = net.make_params(3);
  ParamBuffer grads = net.make_zero_buffer();

  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec x(5);
  for (int i = 0; i < 5; ++i) x[i] = gauss(rng);
  const int y = 1;
  const double pos_weight = 2.0;

  auto loss_at = [&](const ParamBuffer& p) {
    const double prob = net.forward(x, p, false, 0).prob;
    return y == 1 ? -pos_weight * std::log(prob) : -std::log(1.0 - prob);
  };
  const auto trace = net.forward(x, params, false, 0);
  const double d_logit = y == 1 ? -pos_weight * (1.0 - trace.prob) : trace.prob;
  net.backward(trace, params, d_logit, grads, nullptr);

  const double h = 1e-4;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params.flat()[i];
    params.flat()[i] = saved + h;
    const double up = loss_at(params);
    params.flat()[i] = saved - h;
    const double down = loss_at(params);
    params.flat()[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double rel = std::fabs(fd - grads.flat()[i]) /
                       std::max({std::fabs(fd), std::fabs(grads.flat()[i]), 1e-8});
    max_rel = std::max(max_rel, rel);
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("zeroed mlp starts at the closed-form initial loss") {
  // With all weights zero the prediction is 0.5 everywhere, so the
  // pos-weighted BCE equals log(2) times the mean class weight.
  const MlpBaselineNet net(3, {4}, 0.0);
  ParamBuffer params = net.make_zero_buffer();
  std::vector<Vec> xs = {Vec::Ones(3), -Vec::Ones(3), 2 * Vec::Ones(3)};
  std::vector<int> ys = {1, 0, 0};
  const double pos_weight = 2.0 / 1.0;  // n_neg / n_pos
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double p = net.forward(xs[i], params, false, 0).prob;
    CHECK(p == doctest::Approx(0.5));
    loss += ys[i] == 1 ? -pos_weight * std::log(p) : -std::log(1.0 - p);
  }
  loss /= 3.0;
  const double mean_weight = (pos_weight * 1.0 + 1.0 * 2.0) / 3.0;
  CHECK(loss == doctest::Approx(std::log(2.0) * mean_weight));
}

TEST_CASE("mlp baseline learns separable synthetic data deterministically") {
  GeneratorConfig gen;
  gen.n_pd = 60;
  gen.n_hc = 30;
  gen.widths = {3, 6, 2, 2};
  gen.set_effect(Modality::Clinical, 3.0);
  gen.set_fraction(Modality::Clinical, 0.5);
  const SyntheticDataset data = generate_synthetic(gen, 21);
  const FoldPlan plan = make_folds(data.table.labels, data.table.subject_ids, 3, 2);
  const std::vector<FoldData> folds = materialize_folds(data.table, data.schema, plan);

  MlpBaselineConfig cfg;
  cfg.hidden = {16, 8};
  cfg.batch_size = 8;
  cfg.epochs = 30;
  cfg.patience = 10;
  const MlpBaselineOutcome a = train_mlp_baseline(folds[0].train, folds[0].val, cfg, 5);
  CHECK(a.report.roc_auc > 0.95);

  const MlpBaselineOutcome b = train_mlp_baseline(folds[0].train, folds[0].val, cfg, 5);
  CHECK(a.val_probs == b.val_probs);
  CHECK(a.best_epoch == b.best_epoch);

  // Logistic-regression cross-check on the same fold.
  Mat x_train(folds[0].train.size(), concat_bundle(folds[0].train[0]).size());
  std::vector<int> y_train;
  for (std::size_t i = 0; i < folds[0].train.size(); ++i) {
    x_train.row(i) = concat_bundle(folds[0].train[i]).transpose();
    y_train.push_back(folds[0].train[i].label);
  }
  Mat x_val(folds[0].val.size(), x_train.cols());
  std::vector<int> y_val;
  for (std::size_t i = 0; i < folds[0].val.size(); ++i) {
    x_val.row(i) = concat_bundle(folds[0].val[i]).transpose();
    y_val.push_back(folds[0].val[i].label);
  }
  const LogRegParams lr = train_logreg(x_train, y_train, 1.0, true, 0);
  CHECK(roc_auc(logreg_predict(lr, x_val), y_val).auc > 0.95);
}
