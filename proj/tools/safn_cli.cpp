// Command-line entry point: synthetic data generation, cross-validated
// training, ablation sweeps, attribution, and group statistics. Every run
// resolves its configuration from defaults + JSON config + flag overrides
// and writes the resolved snapshot next to its outputs.

#include "safn/attribution.hpp"
#include "safn/baselines.hpp"
#include "safn/dataset.hpp"
#include "safn/group_stats.hpp"
#include "safn/reports.hpp"
#include "safn/synthetic.hpp"
#include "safn/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace safn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct RunConfig {
  uint64_t seed = 42;
  int jobs = 0;
  int k_folds = 5;
  std::string out_dir;
  std::string data_csv;
  std::string manifest;
  double missingness_threshold = 0.20;
  GeneratorConfig generator = GeneratorConfig::reference_cohort();
  SafnConfig model;
  LossConfig loss;
  OptimConfig optim;
  AblationSpec ablation;
  int top_k = 20;
  std::string attribution_target = "probability";
};

Modality modality_from_key(const std::string& key) { return modality_from_name(key); }

void merge_generator(GeneratorConfig& gen, const json& j) {
  gen.n_pd = j.value("n_pd", gen.n_pd);
  gen.n_hc = j.value("n_hc", gen.n_hc);
  gen.missing_rate = j.value("missing_rate", gen.missing_rate);
  gen.repeat_rate = j.value("repeat_rate", gen.repeat_rate);
  gen.demo_categorical_columns = j.value("demo_categorical_columns", gen.demo_categorical_columns);
  if (j.contains("widths")) {
    for (const auto& [key, value] : j.at("widths").items()) {
      gen.set_width(modality_from_key(key), value.get<int>());
    }
  }
  if (j.contains("effect_size")) {
    for (const auto& [key, value] : j.at("effect_size").items()) {
      gen.set_effect(modality_from_key(key), value.get<double>());
    }
  }
  if (j.contains("effect_fraction")) {
    for (const auto& [key, value] : j.at("effect_fraction").items()) {
      gen.set_fraction(modality_from_key(key), value.get<double>());
    }
  }
}

void merge_config(RunConfig& cfg, const json& j) {
  cfg.seed = j.value("seed", cfg.seed);
  cfg.jobs = j.value("jobs", cfg.jobs);
  cfg.k_folds = j.value("k_folds", cfg.k_folds);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.data_csv = j.value("data_csv", cfg.data_csv);
  cfg.manifest = j.value("manifest", cfg.manifest);
  cfg.missingness_threshold = j.value("missingness_threshold", cfg.missingness_threshold);
  cfg.top_k = j.value("top_k", cfg.top_k);
  cfg.attribution_target = j.value("attribution_target", cfg.attribution_target);
  if (j.contains("generator")) merge_generator(cfg.generator, j.at("generator"));
  if (j.contains("model")) {
    const json& m = j.at("model");
    cfg.model.d_model = m.value("d_model", cfg.model.d_model);
    cfg.model.n_heads = m.value("n_heads", cfg.model.n_heads);
    cfg.model.n_layers = m.value("n_layers", cfg.model.n_layers);
    cfg.model.dropout = m.value("dropout", cfg.model.dropout);
    cfg.model.ffn_multiplier = m.value("ffn_multiplier", cfg.model.ffn_multiplier);
    cfg.model.head_hidden = m.value("head_hidden", cfg.model.head_hidden);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    cfg.loss.beta = l.value("beta", cfg.loss.beta);
    cfg.loss.gamma = l.value("gamma", cfg.loss.gamma);
    cfg.loss.lambda_sparse = l.value("lambda_sparse", cfg.loss.lambda_sparse);
    cfg.loss.epsilon = l.value("epsilon", cfg.loss.epsilon);
    cfg.loss.use_class_weights = l.value("use_class_weights", cfg.loss.use_class_weights);
  }
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    cfg.optim.lr = o.value("lr", cfg.optim.lr);
    cfg.optim.weight_decay = o.value("weight_decay", cfg.optim.weight_decay);
    cfg.optim.beta1 = o.value("beta1", cfg.optim.beta1);
    cfg.optim.beta2 = o.value("beta2", cfg.optim.beta2);
    cfg.optim.adam_eps = o.value("adam_eps", cfg.optim.adam_eps);
    cfg.optim.clip_norm = o.value("clip_norm", cfg.optim.clip_norm);
    cfg.optim.ema_decay = o.value("ema_decay", cfg.optim.ema_decay);
    cfg.optim.epochs = o.value("epochs", cfg.optim.epochs);
    cfg.optim.patience = o.value("patience", cfg.optim.patience);
    cfg.optim.batch_size = o.value("batch_size", cfg.optim.batch_size);
    cfg.optim.warmup_fraction = o.value("warmup_fraction", cfg.optim.warmup_fraction);
    cfg.optim.threshold = o.value("threshold", cfg.optim.threshold);
  }
  if (j.contains("ablation")) {
    const json& a = j.at("ablation");
    if (a.contains("modalities")) {
      cfg.ablation.modalities.clear();
      for (const auto& m : a.at("modalities")) {
        cfg.ablation.modalities.insert(modality_from_key(m.get<std::string>()));
      }
    }
    cfg.ablation.disable_cross_attention =
        a.value("disable_cross_attention", cfg.ablation.disable_cross_attention);
    cfg.ablation.disable_gates = a.value("disable_gates", cfg.ablation.disable_gates);
    cfg.ablation.disable_class_weighting =
        a.value("disable_class_weighting", cfg.ablation.disable_class_weighting);
    cfg.ablation.keep_focal_when_unweighted =
        a.value("keep_focal_when_unweighted", cfg.ablation.keep_focal_when_unweighted);
  }
}

json generator_to_json(const GeneratorConfig& gen) {
  json widths, effects, fractions;
  for (Modality m : all_modalities()) {
    widths[modality_name(m)] = gen.width(m);
    effects[modality_name(m)] = gen.effect(m);
    fractions[modality_name(m)] = gen.fraction(m);
  }
  return json{{"n_pd", gen.n_pd},
              {"n_hc", gen.n_hc},
              {"widths", widths},
              {"effect_size", effects},
              {"effect_fraction", fractions},
              {"missing_rate", gen.missing_rate},
              {"repeat_rate", gen.repeat_rate},
              {"demo_categorical_columns", gen.demo_categorical_columns}};
}

json ablation_to_json(const AblationSpec& spec) {
  json mods = json::array();
  for (Modality m : all_modalities()) {
    if (spec.modalities.count(m)) mods.push_back(modality_name(m));
  }
  return json{{"modalities", mods},
              {"disable_cross_attention", spec.disable_cross_attention},
              {"disable_gates", spec.disable_gates},
              {"disable_class_weighting", spec.disable_class_weighting},
              {"keep_focal_when_unweighted", spec.keep_focal_when_unweighted}};
}

json config_to_json(const RunConfig& cfg) {
  return json{
      {"seed", cfg.seed},
      {"jobs", cfg.jobs},
      {"k_folds", cfg.k_folds},
      {"out_dir", cfg.out_dir},
      {"data_csv", cfg.data_csv},
      {"manifest", cfg.manifest},
      {"missingness_threshold", cfg.missingness_threshold},
      {"top_k", cfg.top_k},
      {"attribution_target", cfg.attribution_target},
      {"generator", generator_to_json(cfg.generator)},
      {"model",
       {{"d_model", cfg.model.d_model},
        {"n_heads", cfg.model.n_heads},
        {"n_layers", cfg.model.n_layers},
        {"dropout", cfg.model.dropout},
        {"ffn_multiplier", cfg.model.ffn_multiplier},
        {"head_hidden", cfg.model.head_hidden}}},
      {"loss",
       {{"beta", cfg.loss.beta},
        {"gamma", cfg.loss.gamma},
        {"lambda_sparse", cfg.loss.lambda_sparse},
        {"epsilon", cfg.loss.epsilon},
        {"use_class_weights", cfg.loss.use_class_weights}}},
      {"optim",
       {{"lr", cfg.optim.lr},
        {"weight_decay", cfg.optim.weight_decay},
        {"beta1", cfg.optim.beta1},
        {"beta2", cfg.optim.beta2},
        {"adam_eps", cfg.optim.adam_eps},
        {"clip_norm", cfg.optim.clip_norm},
        {"ema_decay", cfg.optim.ema_decay},
        {"epochs", cfg.optim.epochs},
        {"patience", cfg.optim.patience},
        {"batch_size", cfg.optim.batch_size},
        {"warmup_fraction", cfg.optim.warmup_fraction},
        {"threshold", cfg.optim.threshold}}},
      {"ablation", ablation_to_json(cfg.ablation)}};
}

RunConfig load_run_config(const std::string& config_path) {
  RunConfig cfg;
  const char* env_out = std::getenv("SAFN_OUT_DIR");
  cfg.out_dir = env_out ? env_out : "safn_out";
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw DataError("cannot open config file: " + config_path);
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw DataError("config parse error in " + config_path + ": " + e.what());
    }
    merge_config(cfg, doc);
  }
  return cfg;
}

void write_resolved_config(const RunConfig& cfg, const std::string& command) {
  fs::create_directories(cfg.out_dir);
  json doc = config_to_json(cfg);
  doc["command"] = command;
  std::ofstream out(fs::path(cfg.out_dir) / "resolved_config.json");
  if (!out) throw DataError("cannot write resolved config in " + cfg.out_dir);
  out << doc.dump(2) << '\n';
}

struct LoadedData {
  RawTable table;
  DatasetSchema schema;
  std::vector<std::string> dropped_columns;
};

LoadedData load_dataset(const RunConfig& cfg) {
  if (cfg.data_csv.empty() || cfg.manifest.empty()) {
    throw DataError("data_csv and manifest are required (flags or config file)");
  }
  LoadedData data;
  data.schema = load_manifest(cfg.manifest);
  data.table = load_csv(cfg.data_csv, data.schema);
  auto filtered = drop_high_missingness(data.table, cfg.missingness_threshold);
  data.table = std::move(filtered.table);
  data.dropped_columns = std::move(filtered.dropped_columns);
  return data;
}

TrainSettings settings_from_config(const RunConfig& cfg) {
  TrainSettings settings;
  settings.model = cfg.model;
  settings.loss = cfg.loss;
  settings.optim = cfg.optim;
  settings.optim.seed = cfg.seed;
  settings.ablation = cfg.ablation;
  return settings;
}

void save_fold_checkpoint(const std::string& path, const FoldOutcome& fold,
                          const FittedPreprocessor& prep) {
  Checkpoint cp;
  cp.config = fold.model_config;
  cp.structure = fold.structure;
  cp.params = fold.best_params;
  cp.preprocessor_json = prep.to_json();
  save_checkpoint(path, cp);
}

void write_cv_outputs(const RunConfig& cfg, const CvOutcome& cv) {
  const fs::path out(cfg.out_dir);
  write_metrics_csv(out / "metrics.csv", cv.fold_reports, cv.aggregate);
  write_metrics_summary_csv(out / "metrics_summary.csv", cv.aggregate);
  write_curve_csv(out / "roc_mean.csv", cv.mean_roc, "fpr", "tpr");
  write_curve_csv(out / "pr_mean.csv", cv.mean_pr, "recall", "precision");
  write_confusion_csv(out / "confusion_avg.csv", cv.aggregate.mean_confusion);
  for (std::size_t f = 0; f < cv.folds.size(); ++f) {
    const std::string tag = "fold" + std::to_string(f + 1);
    write_curve_csv(out / ("roc_" + tag + ".csv"), cv.folds[f].report.roc_curve, "fpr", "tpr");
    write_curve_csv(out / ("pr_" + tag + ".csv"), cv.folds[f].report.pr_curve, "recall",
                    "precision");
    write_epoch_log_csv(out / ("epoch_log_" + tag + ".csv"), cv.folds[f].epoch_log);
    write_loss_log_csv(out / ("loss_log_" + tag + ".csv"), cv.folds[f].loss_log);
    save_fold_checkpoint(out / ("checkpoint_" + tag + ".json"), cv.folds[f],
                         cv.preprocessors[f]);
  }

  // Gate report over all validation samples of all folds.
  std::vector<Vec> all_gates;
  std::vector<Modality> gate_modalities;
  for (const StreamSpec& s : cv.folds.front().structure.streams) {
    gate_modalities.push_back(s.modality);
  }
  for (const FoldOutcome& fold : cv.folds) {
    all_gates.insert(all_gates.end(), fold.val_gates.begin(), fold.val_gates.end());
  }
  write_gate_report_csv(out / "gate_report.csv",
                        gate_contributions(all_gates, gate_modalities));
}

int cmd_gen_data(const RunConfig& cfg) {
  write_resolved_config(cfg, "gen-data");
  const SyntheticDataset data = generate_synthetic(cfg.generator, cfg.seed);
  const fs::path out(cfg.out_dir);
  save_csv(out / "data.csv", data.table, data.schema);
  save_manifest(out / "manifest.json", data.schema);
  std::cout << "wrote " << (out / "data.csv").string() << " (" << data.table.n_rows()
            << " rows, " << data.table.columns.size() << " feature columns)\n";
  return kExitOk;
}

int cmd_cv(const RunConfig& cfg) {
  write_resolved_config(cfg, "cv");
  const LoadedData data = load_dataset(cfg);
  const CvOutcome cv =
      run_cv(data.table, data.schema, cfg.k_folds, settings_from_config(cfg), cfg.seed, cfg.jobs);
  write_cv_outputs(cfg, cv);
  std::cout << "cv complete: mean roc_auc=" << format_number(cv.aggregate.mean[2])
            << " balanced_accuracy=" << format_number(cv.aggregate.mean[1]) << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  write_resolved_config(cfg, "train");
  const LoadedData data = load_dataset(cfg);
  const FoldPlan plan =
      make_folds(data.table.labels, data.table.subject_ids, cfg.k_folds, mix_seed(cfg.seed, 0xf01d));
  const std::vector<FoldData> folds = materialize_folds(data.table, data.schema, plan);
  const FoldData& fold = folds.front();
  const FoldOutcome outcome =
      train_one_fold(fold.train, fold.val, settings_from_config(cfg), mix_seed(cfg.seed, 0));
  const fs::path out(cfg.out_dir);
  save_fold_checkpoint(out / "checkpoint.json", outcome, fold.preprocessor);
  write_epoch_log_csv(out / "epoch_log.csv", outcome.epoch_log);
  write_loss_log_csv(out / "loss_log.csv", outcome.loss_log);
  write_metrics_csv(out / "metrics.csv", {outcome.report}, aggregate_folds({outcome.report}));
  std::cout << "train complete: best epoch " << outcome.best_epoch << ", val composite written to "
            << (out / "metrics.csv").string() << '\n';
  return kExitOk;
}

struct NamedAblation {
  std::string name;
  bool is_plain_mlp = false;
  AblationSpec spec;
};

// Optional config override: "ablation_grid": [{"name": ..., "modalities":
// [...], "disable_cross_attention": ..., ...}] replaces the default grid;
// an entry with "plain_mlp": true runs the concatenation baseline instead.
std::vector<NamedAblation> grid_from_config(const std::string& config_path) {
  std::vector<NamedAblation> grid;
  if (config_path.empty()) return grid;
  std::ifstream in(config_path);
  if (!in) return grid;
  json doc;
  try {
    in >> doc;
  } catch (const json::exception&) {
    return grid;
  }
  if (!doc.contains("ablation_grid")) return grid;
  for (const json& entry : doc.at("ablation_grid")) {
    NamedAblation named;
    named.name = entry.at("name").get<std::string>();
    named.is_plain_mlp = entry.value("plain_mlp", false);
    if (entry.contains("modalities")) {
      named.spec.modalities.clear();
      for (const auto& m : entry.at("modalities")) {
        named.spec.modalities.insert(modality_from_key(m.get<std::string>()));
      }
    }
    named.spec.disable_cross_attention = entry.value("disable_cross_attention", false);
    named.spec.disable_gates = entry.value("disable_gates", false);
    named.spec.disable_class_weighting = entry.value("disable_class_weighting", false);
    named.spec.keep_focal_when_unweighted = entry.value("keep_focal_when_unweighted", false);
    grid.push_back(std::move(named));
  }
  return grid;
}

std::vector<NamedAblation> default_ablation_grid() {
  using M = Modality;
  std::vector<NamedAblation> grid;
  grid.push_back({"plain_mlp_concat", true, {}});
  NamedAblation clinical_only{"clinical_only_safn", false, {}};
  clinical_only.spec.modalities = {M::Clinical};
  grid.push_back(clinical_only);
  NamedAblation ct_only{"mri_ct_only_safn", false, {}};
  ct_only.spec.modalities = {M::MriCt};
  grid.push_back(ct_only);
  NamedAblation wo_clinical{"safn_wo_clinical", false, {}};
  wo_clinical.spec.modalities = {M::MriCt, M::MriVol, M::Demographic};
  grid.push_back(wo_clinical);
  NamedAblation wo_ct{"safn_wo_mri_ct", false, {}};
  wo_ct.spec.modalities = {M::Clinical, M::MriVol, M::Demographic};
  grid.push_back(wo_ct);
  NamedAblation wo_cross{"safn_wo_cross_attention", false, {}};
  wo_cross.spec.disable_cross_attention = true;
  grid.push_back(wo_cross);
  NamedAblation wo_gates{"safn_wo_modality_gates", false, {}};
  wo_gates.spec.disable_gates = true;
  grid.push_back(wo_gates);
  NamedAblation no_cw{"safn_no_class_weighting", false, {}};
  no_cw.spec.disable_class_weighting = true;
  grid.push_back(no_cw);
  grid.push_back({"full_safn", false, {}});
  return grid;
}

int cmd_ablate(const RunConfig& cfg, const std::string& config_path) {
  write_resolved_config(cfg, "ablate");
  const LoadedData data = load_dataset(cfg);
  std::vector<NamedAblation> grid = grid_from_config(config_path);
  if (grid.empty()) grid = default_ablation_grid();
  std::vector<AblationResultRow> rows;
  for (const NamedAblation& entry : grid) {
    AblationResultRow row;
    row.name = entry.name;
    try {
      if (entry.is_plain_mlp) {
        const FoldPlan plan = make_folds(data.table.labels, data.table.subject_ids, cfg.k_folds,
                                         mix_seed(cfg.seed, 0xf01d));
        const std::vector<FoldData> folds = materialize_folds(data.table, data.schema, plan);
        MlpBaselineConfig mlp_cfg;
        mlp_cfg.threshold = cfg.optim.threshold;
        std::vector<FoldReport> reports;
        for (const FoldData& fold : folds) {
          reports.push_back(
              train_mlp_baseline(fold.train, fold.val, mlp_cfg, mix_seed(cfg.seed, fold.fold))
                  .report);
        }
        row.aggregate = aggregate_folds(reports);
      } else {
        TrainSettings settings = settings_from_config(cfg);
        settings.ablation = entry.spec;
        const CvOutcome cv =
            run_cv(data.table, data.schema, cfg.k_folds, settings, cfg.seed, cfg.jobs);
        row.aggregate = cv.aggregate;
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
    std::cout << "ablation row done: " << entry.name << (rows.back().failed ? " (failed)" : "")
              << '\n';
  }
  write_ablation_csv(fs::path(cfg.out_dir) / "ablation.csv", rows);
  return kExitOk;
}

int cmd_attribute(const RunConfig& cfg, const std::string& checkpoint_path) {
  write_resolved_config(cfg, "attribute");
  if (checkpoint_path.empty()) throw DataError("attribute: --checkpoint is required");
  const Checkpoint cp = load_checkpoint(checkpoint_path);
  if (!cp.preprocessor_json) {
    throw DataError("attribute: checkpoint carries no preprocessor");
  }
  const FittedPreprocessor prep = FittedPreprocessor::from_json(*cp.preprocessor_json);
  const LoadedData data = load_dataset(cfg);
  const std::vector<ModalityBundle> bundles = prep.apply(data.table, data.schema);

  const SafnModel model(cp.config, cp.structure);
  ParamBuffer params = model.make_zero_buffer();
  params.flat() = cp.params;

  const AttributionTarget target = cfg.attribution_target == "logit"
                                       ? AttributionTarget::Logit
                                       : AttributionTarget::Probability;
  const AttributionReport report = grad_x_input(model, params, bundles, prep, target);
  const fs::path out(cfg.out_dir);
  write_attribution_csv(out / "attribution.csv", report);
  write_top_k_csv(out / "attribution_topk.csv",
                  top_k_features(report, std::min<int>(cfg.top_k, report.entries.size())));

  std::vector<Vec> gates;
  std::vector<Modality> gate_modalities;
  for (const StreamSpec& s : model.structure().streams) gate_modalities.push_back(s.modality);
  for (const ModalityBundle& b : bundles) {
    gates.push_back(model.forward(b, params, false, 0).gates);
  }
  write_gate_report_csv(out / "gate_report.csv", gate_contributions(gates, gate_modalities));
  std::cout << "attribution written for " << report.entries.size() << " features\n";
  return kExitOk;
}

int cmd_stats(const RunConfig& cfg) {
  write_resolved_config(cfg, "stats");
  const LoadedData data = load_dataset(cfg);
  const std::vector<TestResult> results = run_group_analysis(data.table, data.schema);
  write_stats_csv(fs::path(cfg.out_dir) / "stats.csv", results);
  std::cout << "stats written for " << results.size() << " variables\n";
  return kExitOk;
}

int cmd_report(const RunConfig& cfg, const std::string& run_dir) {
  write_resolved_config(cfg, "report");
  const fs::path run(run_dir.empty() ? cfg.out_dir : run_dir);
  std::ofstream out(fs::path(cfg.out_dir) / "report.md");
  if (!out) throw DataError("cannot write report.md in " + cfg.out_dir);
  out << "# Run report\n\n";
  for (const char* name : {"metrics_summary.csv", "gate_report.csv", "attribution_topk.csv",
                           "ablation.csv", "stats.csv"}) {
    const fs::path file = run / name;
    if (!fs::exists(file)) continue;
    out << "## " << name << "\n\n```\n";
    std::ifstream in(file);
    std::string line;
    int count = 0;
    while (std::getline(in, line) && count++ < 25) out << line << '\n';
    out << "```\n\n";
  }
  std::cout << "report.md assembled from " << run.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator_for_training();
  CLI::App app{"Class-weighted sparse-attention fusion network workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::string data_csv;
  std::string manifest;
  std::string checkpoint;
  std::string run_dir;
  std::optional<uint64_t> seed;
  std::optional<int> jobs;
  std::optional<int> k_folds;
  std::optional<int> epochs;
  std::optional<int> d_model;
  std::optional<double> lambda_sparse;
  std::optional<double> dropout;

  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--out", out_dir, "output directory (default $SAFN_OUT_DIR or ./safn_out)");
  app.add_option("--data", data_csv, "dataset CSV");
  app.add_option("--manifest", manifest, "dataset manifest JSON");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--jobs", jobs, "fold-level parallelism (0 = cores)");
  app.add_option("--k", k_folds, "fold count");
  app.add_option("--epochs", epochs, "training epochs");
  app.add_option("--d-model", d_model, "embedding width");
  app.add_option("--lambda-sparse", lambda_sparse, "gate sparsity weight");
  app.add_option("--dropout", dropout, "dropout rate");

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  CLI::App* cv = app.add_subcommand("cv", "cross-validated training and evaluation");
  CLI::App* train = app.add_subcommand("train", "train a single fold and save a checkpoint");
  CLI::App* ablate = app.add_subcommand("ablate", "run the ablation grid");
  CLI::App* attribute = app.add_subcommand("attribute", "gradient-x-input attribution");
  CLI::App* stats = app.add_subcommand("stats", "group-difference statistics");
  CLI::App* report = app.add_subcommand("report", "assemble a summary report");
  attribute->add_option("--checkpoint", checkpoint, "model checkpoint JSON");
  report->add_option("--run", run_dir, "run directory to summarise");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig cfg = load_run_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!data_csv.empty()) cfg.data_csv = data_csv;
    if (!manifest.empty()) cfg.manifest = manifest;
    if (seed) cfg.seed = *seed;
    if (jobs) cfg.jobs = *jobs;
    if (k_folds) cfg.k_folds = *k_folds;
    if (epochs) cfg.optim.epochs = *epochs;
    if (d_model) cfg.model.d_model = *d_model;
    if (lambda_sparse) cfg.loss.lambda_sparse = *lambda_sparse;
    if (dropout) cfg.model.dropout = *dropout;

    if (gen->parsed()) return cmd_gen_data(cfg);
    if (cv->parsed()) return cmd_cv(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (ablate->parsed()) return cmd_ablate(cfg, config_path);
    if (attribute->parsed()) return cmd_attribute(cfg, checkpoint);
    if (stats->parsed()) return cmd_stats(cfg);
    if (report->parsed()) return cmd_report(cfg, run_dir);
    std::cerr << "no subcommand selected\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
}
