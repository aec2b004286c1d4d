#include "safn/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

namespace safn {

void AblationSpec::validate() const {
  if (modalities.empty()) throw DataError("AblationSpec: modality mask must be nonempty");
}

LossConfig apply_ablation_to_loss(const LossConfig& loss, const AblationSpec& spec) {
  LossConfig out = loss;
  if (spec.disable_class_weighting) {
    out.use_class_weights = false;
    if (!spec.keep_focal_when_unweighted) out.gamma = 0.0;
  }
  if (spec.disable_gates) out.lambda_sparse = 0.0;
  return out;
}

CompositeMetric composite_metric(const std::vector<double>& probs,
                                 const std::vector<int>& labels, double threshold) {
  if (probs.empty()) throw DataError("composite_metric: empty input");
  CompositeMetric out;
  const ThresholdedMetrics m = thresholded_metrics(confusion(probs, labels, threshold));
  out.balanced_accuracy = m.balanced_accuracy;
  out.f1 = m.f1;
  const bool single_class =
      std::all_of(labels.begin(), labels.end(), [&](int y) { return y == labels.front(); });
  if (single_class) {
    out.auroc_defined = false;
    out.auroc = std::numeric_limits<double>::quiet_NaN();
    out.value = 0.5 * (m.balanced_accuracy + m.f1);
  } else {
    out.auroc = roc_auc(probs, labels).auc;
    out.value = (out.auroc + m.balanced_accuracy + m.f1) / 3.0;
  }
  return out;
}

std::array<int, kNumModalities> bundle_widths(const std::vector<ModalityBundle>& bundles) {
  if (bundles.empty()) throw DataError("bundle_widths: empty set");
  std::array<int, kNumModalities> widths{};
  for (Modality m : all_modalities()) {
    widths[static_cast<int>(m)] = static_cast<int>(bundles.front().block(m).size());
  }
  return widths;
}

namespace {

// Seed stream tags, so every consumer of the fold seed draws independently.
constexpr uint64_t kTagInit = 0x1a17;
constexpr uint64_t kTagShuffle = 0x5afe;
constexpr uint64_t kTagDropout = 0xd401;
constexpr uint64_t kTagFoldPlan = 0xf01d;

std::vector<double> eval_probs(const SafnModel& model, const ParamBuffer& params,
                               const std::vector<ModalityBundle>& samples, ForwardTrace& trace) {
  std::vector<double> probs;
  probs.reserve(samples.size());
  for (const ModalityBundle& b : samples) {
    model.forward_into(b, params, false, 0, trace);
    probs.push_back(trace.prob);
  }
  return probs;
}

}  // namespace

FoldOutcome train_one_fold(const std::vector<ModalityBundle>& train_set,
                           const std::vector<ModalityBundle>& val_set,
                           const TrainSettings& settings, uint64_t fold_seed) {
  if (train_set.empty() || val_set.empty()) {
    throw DataError("train_one_fold: empty train or validation set");
  }
  tune_allocator_for_training();
  settings.ablation.validate();
  settings.optim.validate();
  const LossConfig loss_cfg = apply_ablation_to_loss(settings.loss, settings.ablation);
  loss_cfg.validate();

  const ModelStructure structure =
      ModelStructure::make(bundle_widths(train_set), settings.ablation.modalities,
                           settings.ablation.disable_cross_attention,
                           settings.ablation.disable_gates);
  const SafnModel model(settings.model, structure);

  ParamBuffer params = model.make_params(mix_seed(fold_seed, kTagInit));
  OptimState state = OptimState::init(params.flat());
  ParamBuffer grads = model.make_zero_buffer();
  ParamBuffer ema_params = model.make_zero_buffer();

  const OptimConfig& opt = settings.optim;
  const long n_train = static_cast<long>(train_set.size());
  const long steps_per_epoch = (n_train + opt.batch_size - 1) / opt.batch_size;
  const long total_steps = static_cast<long>(opt.epochs) * steps_per_epoch;
  const int m_streams = structure.n_streams();
  const bool sparsity_active = structure.gates && loss_cfg.lambda_sparse > 0.0;

  std::vector<int> val_labels;
  val_labels.reserve(val_set.size());
  for (const auto& b : val_set) val_labels.push_back(b.label);

  FoldOutcome out;
  out.model_config = settings.model;
  out.structure = structure;

  double best_composite = -std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  long global_step = 0;
  uint64_t dropout_counter = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  ForwardTrace trace;  // reused across samples and epochs

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix_seed(mix_seed(fold_seed, kTagShuffle), epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss_sum = 0.0;
    double last_lr = 0.0;
    for (long start = 0; start < n_train; start += opt.batch_size) {
      const long stop = std::min(n_train, start + opt.batch_size);
      const long batch_n = stop - start;

      // Batch-level class weights depend only on the labels, so the
      // per-sample backward can run right after its forward.
      std::vector<int> labels;
      labels.reserve(batch_n);
      for (long i = start; i < stop; ++i) labels.push_back(train_set[order[i]].label);
      long n1 = 0;
      for (int y : labels) n1 += y;
      double alpha0 = 1.0;
      double alpha1 = 1.0;
      if (loss_cfg.use_class_weights) {
        std::tie(alpha0, alpha1) =
            effective_number_weights(batch_n - n1, n1, loss_cfg.beta);
      }

      grads.set_zero();
      const Vec d_gates_direct =
          sparsity_active
              ? Vec::Constant(m_streams, loss_cfg.lambda_sparse / static_cast<double>(batch_n))
              : Vec();
      std::vector<double> probs;
      std::vector<Vec> gates;
      probs.reserve(batch_n);
      for (long i = start; i < stop; ++i) {
        const ModalityBundle& sample = train_set[order[i]];
        const uint64_t dropout_seed =
            mix_seed(mix_seed(fold_seed, kTagDropout), dropout_counter++);
        model.forward_into(sample, params, true, dropout_seed, trace);
        probs.push_back(trace.prob);
        if (sparsity_active) gates.push_back(trace.gates);
        const double d_logit = cb_focal_grad_logit(trace.prob, sample.label, alpha0, alpha1,
                                                   loss_cfg.gamma, loss_cfg.epsilon) /
                               static_cast<double>(batch_n);
        model.backward(trace, params, d_logit, d_gates_direct, grads, nullptr);
      }
      const BatchLossBreakdown breakdown = total_loss(probs, labels, gates, loss_cfg);
      clip_gradients(grads.flat(), opt.clip_norm);
      last_lr = lr_at(global_step, total_steps, opt);
      adamw_step(params.flat(), grads.flat(), state, last_lr, opt);
      ema_update(state.ema, params.flat(), opt.ema_decay);

      out.loss_log.push_back({epoch, global_step, breakdown.focal_term, breakdown.sparsity_term,
                              breakdown.total, breakdown.alpha0, breakdown.alpha1, breakdown.n0,
                              breakdown.n1});
      epoch_loss_sum += breakdown.total * static_cast<double>(batch_n);
      ++global_step;
    }

    // Validation and early stopping use the EMA weights.
    ema_params.flat() = state.ema;
    const std::vector<double> val_probs = eval_probs(model, ema_params, val_set, trace);
    const CompositeMetric comp = composite_metric(val_probs, val_labels, opt.threshold);

    EpochLogRow row;
    row.epoch = epoch;
    row.train_loss = epoch_loss_sum / static_cast<double>(n_train);
    row.val_composite = comp.value;
    row.val_auroc = comp.auroc;
    row.val_balacc = comp.balanced_accuracy;
    row.val_f1 = comp.f1;
    row.lr = last_lr;

    if (comp.value > best_composite + 1e-12) {
      best_composite = comp.value;
      out.best_params = state.ema;
      out.best_epoch = epoch;
      epochs_since_improvement = 0;
    } else {
      ++epochs_since_improvement;
    }
    const bool stop = epochs_since_improvement >= opt.patience;
    row.stopped = stop;
    out.epoch_log.push_back(row);
    if (stop) break;
  }

  // Final report from the best checkpoint.
  ema_params.flat() = out.best_params;
  out.val_probs.reserve(val_set.size());
  out.val_gates.reserve(val_set.size());
  for (const ModalityBundle& b : val_set) {
    model.forward_into(b, ema_params, false, 0, trace);
    out.val_probs.push_back(trace.prob);
    out.val_gates.push_back(trace.gates);
  }
  out.val_labels = val_labels;
  out.report = evaluate_fold(out.val_probs, out.val_labels, opt.threshold);
  for (int si = 0; si < structure.n_streams(); ++si) {
    double mean = 0.0;
    for (const Vec& g : out.val_gates) mean += g[si];
    mean /= static_cast<double>(out.val_gates.size());
    out.report.gate_means[static_cast<int>(structure.streams[si].modality)] = mean;
  }
  return out;
}

std::vector<FoldData> materialize_folds(const RawTable& table, const DatasetSchema& schema,
                                        const FoldPlan& plan) {
  std::vector<FoldData> folds;
  for (int f = 0; f < plan.k; ++f) {
    FoldData data;
    data.fold = f;
    const RawTable train_table = table.select_rows(plan.train_rows(f));
    const RawTable val_table = table.select_rows(plan.fold_rows(f));
    data.preprocessor = FittedPreprocessor::fit(train_table, schema);
    data.train = data.preprocessor.apply(train_table, schema);
    data.val = data.preprocessor.apply(val_table, schema);
    folds.push_back(std::move(data));
  }
  return folds;
}

CvOutcome run_cv(const RawTable& table, const DatasetSchema& schema, int k,
                 const TrainSettings& settings, uint64_t seed, int jobs) {
  const FoldPlan plan = make_folds(table.labels, table.subject_ids, k, mix_seed(seed, kTagFoldPlan));
  std::vector<FoldData> fold_data = materialize_folds(table, schema, plan);

  CvOutcome out;
  out.plan = plan;
  out.folds.resize(k);
  for (auto& data : fold_data) out.preprocessors.push_back(data.preprocessor);

  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min(jobs, k));

  std::atomic<int> next_fold{0};
  std::vector<std::exception_ptr> errors(k);
  auto worker = [&]() {
    while (true) {
      const int f = next_fold.fetch_add(1);
      if (f >= k) return;
      try {
        out.folds[f] =
            train_one_fold(fold_data[f].train, fold_data[f].val, settings, mix_seed(seed, f));
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }

  std::vector<CurveData> roc_curves;
  std::vector<CurveData> pr_curves;
  for (const FoldOutcome& fold : out.folds) {
    out.fold_reports.push_back(fold.report);
    roc_curves.push_back(fold.report.roc_curve);
    pr_curves.push_back(fold.report.pr_curve);
  }
  out.aggregate = aggregate_folds(out.fold_reports);
  out.mean_roc = mean_curve(roc_curves);
  out.mean_pr = mean_curve(pr_curves);
  return out;
}

}  // namespace safn
