#include <doctest.h>

#include "safn/common.hpp"
#include "safn/synthetic.hpp"
#include "safn/trainer.hpp"

#include <cmath>

using namespace safn;

namespace {

TrainSettings tiny_settings(int epochs = 4) {
  TrainSettings s;
  s.model.d_model = 8;
  s.model.n_heads = 2;
  s.model.n_layers = 1;
  s.model.dropout = 0.0;
  s.model.head_hidden = 8;
  s.optim.epochs = epochs;
  s.optim.patience = std::max(1, epochs);
  s.optim.batch_size = 8;
  // Desk-scale settings: with tens of steps the default EMA decay would pin
  // the shadow at its initialisation, so track faster and learn faster.
  s.optim.lr = 1e-3;
  s.optim.ema_decay = 0.9;
  return s;
}

SyntheticDataset small_dataset(uint64_t seed, int n_pd = 60, int n_hc = 30) {
  GeneratorConfig gen;
  gen.n_pd = n_pd;
  gen.n_hc = n_hc;
  gen.widths = {4, 8, 3, 3};
  gen.set_effect(Modality::Clinical, 2.5);
  gen.set_fraction(Modality::Clinical, 0.5);
  gen.demo_categorical_columns = 1;
  gen.repeat_rate = 0.1;
  return generate_synthetic(gen, seed);
}

}  // namespace

TEST_CASE("composite metric composition and single-class fallback") {
  // Perfect classifier scores 1 on all three terms.
  const CompositeMetric perfect = composite_metric({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0});
  CHECK(perfect.value == doctest::Approx(1.0));
  CHECK(perfect.auroc_defined);

  // The definitional mean of the three components.
  const std::vector<double> probs = {0.9, 0.6, 0.4, 0.3};
  const std::vector<int> labels = {1, 0, 1, 0};
  const CompositeMetric c = composite_metric(probs, labels);
  const ThresholdedMetrics m = thresholded_metrics(confusion(probs, labels, 0.5));
  const double auc = roc_auc(probs, labels).auc;
  CHECK(c.value == doctest::Approx((auc + m.balanced_accuracy + m.f1) / 3.0));

  // Single-class validation: AUROC undefined, mean over the two defined terms.
  const CompositeMetric single = composite_metric({0.8, 0.7}, {1, 1});
  CHECK_FALSE(single.auroc_defined);
  CHECK(std::isnan(single.auroc));
  const ThresholdedMetrics sm = thresholded_metrics(confusion({0.8, 0.7}, {1, 1}, 0.5));
  CHECK(single.value == doctest::Approx(0.5 * (sm.balanced_accuracy + sm.f1)));
}

TEST_CASE("ablation wiring of the loss") {
  LossConfig base;
  base.gamma = 1.5;
  AblationSpec spec;
  spec.disable_class_weighting = true;
  const LossConfig plain = apply_ablation_to_loss(base, spec);
  CHECK_FALSE(plain.use_class_weights);
  CHECK(plain.gamma == 0.0);  // plain BCE

  spec.keep_focal_when_unweighted = true;
  const LossConfig focal_kept = apply_ablation_to_loss(base, spec);
  CHECK(focal_kept.gamma == doctest::Approx(1.5));

  AblationSpec gates_off;
  gates_off.disable_gates = true;
  CHECK(apply_ablation_to_loss(base, gates_off).lambda_sparse == 0.0);

  AblationSpec empty;
  empty.modalities.clear();
  CHECK_THROWS_AS(empty.validate(), DataError);
}

TEST_CASE("training reduces the loss on a learnable dataset") {
  const SyntheticDataset data = small_dataset(1);
  const FoldPlan plan = make_folds(data.table.labels, data.table.subject_ids, 3, 5);
  const std::vector<FoldData> folds = materialize_folds(data.table, data.schema, plan);

  TrainSettings settings = tiny_settings(10);
  const FoldOutcome outcome = train_one_fold(folds[0].train, folds[0].val, settings, 7);

  REQUIRE(!outcome.loss_log.empty());
  // Mean loss over the first epoch vs the last epoch.
  const int first_epoch = outcome.loss_log.front().epoch;
  const int last_epoch = outcome.loss_log.back().epoch;
  auto epoch_mean = [&](int epoch) {
    double sum = 0.0;
    int count = 0;
    for (const StepLossRow& row : outcome.loss_log) {
      if (row.epoch == epoch) {
        sum += row.total;
        ++count;
      }
    }
    return sum / count;
  };
  CHECK(epoch_mean(last_epoch) < epoch_mean(first_epoch));
  CHECK(outcome.best_epoch >= 0);
  CHECK(outcome.report.roc_auc > 0.8);  // strong signal, easy fold
  CHECK(!outcome.best_params.empty());
}

TEST_CASE("identical seeds give bit-identical epoch logs") {
  const SyntheticDataset data = small_dataset(2, 40, 20);
  const FoldPlan plan = make_folds(data.table.labels, data.table.subject_ids, 2, 5);
  const std::vector<FoldData> folds = materialize_folds(data.table, data.schema, plan);
  TrainSettings settings = tiny_settings(3);
  settings.model.dropout = 0.2;  // exercise the seeded dropout path

  const FoldOutcome a = train_one_fold(folds[0].train, folds[0].val, settings, 11);
  const FoldOutcome b = train_one_fold(folds[0].train, folds[0].val, settings, 11);
  REQUIRE(a.epoch_log.size() == b.epoch_log.size());
  for (std::size_t i = 0; i < a.epoch_log.size(); ++i) {
    CHECK(a.epoch_log[i].train_loss == b.epoch_log[i].train_loss);
    CHECK(a.epoch_log[i].val_composite == b.epoch_log[i].val_composite);
  }
  CHECK(a.best_params == b.best_params);

  const FoldOutcome c = train_one_fold(folds[0].train, folds[0].val, settings, 12);
  CHECK(a.epoch_log.front().train_loss != c.epoch_log.front().train_loss);
}

TEST_CASE("early stopping keeps the best composite checkpoint") {
  const SyntheticDataset data = small_dataset(3, 40, 20);
  const FoldPlan plan = make_folds(data.table.labels, data.table.subject_ids, 2, 1);
  const std::vector<FoldData> folds = materialize_folds(data.table, data.schema, plan);
  TrainSettings settings = tiny_settings(8);
  settings.optim.patience = 2;

  const FoldOutcome outcome = train_one_fold(folds[0].train, folds[0].val, settings, 4);
  double best = -1.0;
  for (const EpochLogRow& row : outcome.epoch_log) best = std::max(best, row.val_composite);
  CHECK(outcome.epoch_log[outcome.best_epoch].val_composite == doctest::Approx(best));
  // Stopping happens exactly `patience` epochs after the best one (when it
  // fires before the epoch budget).
  if (outcome.epoch_log.back().stopped) {
    CHECK(static_cast<int>(outcome.epoch_log.size()) - 1 - outcome.best_epoch ==
          settings.optim.patience);
  }
}

TEST_CASE("modality masking changes the fused width and gate report slots") {
  const SyntheticDataset data = small_dataset(4, 40, 20);
  const FoldPlan plan = make_folds(data.table.labels, data.table.subject_ids, 2, 2);
  const std::vector<FoldData> folds = materialize_folds(data.table, data.schema, plan);
  TrainSettings settings = tiny_settings(2);
  settings.ablation.modalities = {Modality::Clinical};

  const FoldOutcome outcome = train_one_fold(folds[0].train, folds[0].val, settings, 3);
  CHECK(outcome.structure.n_streams() == 1);
  CHECK(outcome.val_gates.front().size() == 1);
  // Inactive modalities hold zero in the canonical gate-means slots.
  CHECK(outcome.report.gate_means[static_cast<int>(Modality::MriCt)] == 0.0);
  CHECK(outcome.report.gate_means[static_cast<int>(Modality::Clinical)] > 0.0);
}

TEST_CASE("run_cv aggregates fold reports and is parallel-invariant") {
  const SyntheticDataset data = small_dataset(5, 50, 25);
  TrainSettings settings = tiny_settings(2);

  const CvOutcome serial = run_cv(data.table, data.schema, 3, settings, 99, 1);
  const CvOutcome parallel = run_cv(data.table, data.schema, 3, settings, 99, 2);

  REQUIRE(serial.fold_reports.size() == 3);
  for (std::size_t m = 0; m < serial.aggregate.mean.size(); ++m) {
    double mean = 0.0;
    for (const FoldReport& r : serial.fold_reports) mean += metric_values(r)[m] / 3.0;
    CHECK(serial.aggregate.mean[m] == doctest::Approx(mean));
    CHECK(serial.aggregate.mean[m] == doctest::Approx(parallel.aggregate.mean[m]));
  }
  for (std::size_t f = 0; f < 3; ++f) {
    CHECK(serial.fold_reports[f].roc_auc == parallel.fold_reports[f].roc_auc);
  }
}

TEST_CASE("fold sizes differ by at most one on unique-subject data") {
  GeneratorConfig gen;
  gen.n_pd = 570;
  gen.n_hc = 133;
  gen.widths = {2, 2, 2, 2};
  gen.repeat_rate = 0.0;
  const SyntheticDataset data = generate_synthetic(gen, 10);
  const FoldPlan plan = make_folds(data.table.labels, data.table.subject_ids, 5, 3);
  std::vector<std::size_t> sizes;
  for (int f = 0; f < 5; ++f) sizes.push_back(plan.fold_rows(f).size());
  const auto [min_it, max_it] = std::minmax_element(sizes.begin(), sizes.end());
  CHECK(*max_it - *min_it <= 1);
}
