#include "safn/synthetic.hpp"

#include "safn/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

namespace safn {

namespace {

std::string padded_name(const std::string& prefix, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d", prefix.c_str(), index + 1);
  return buf;
}

}  // namespace

GeneratorConfig GeneratorConfig::reference_cohort() {
  GeneratorConfig cfg;
  cfg.set_effect(Modality::Clinical, 3.0);
  cfg.set_fraction(Modality::Clinical, 0.05);
  cfg.missing_rate = 0.02;
  cfg.repeat_rate = 0.10;
  return cfg;
}

SyntheticDataset generate_synthetic(const GeneratorConfig& config, uint64_t seed) {
  if (config.n_pd <= 0 || config.n_hc <= 0) {
    throw DataError("generate_synthetic: class counts must be positive");
  }
  for (Modality m : all_modalities()) {
    if (config.width(m) <= 0) throw DataError("generate_synthetic: widths must be positive");
    const double f = config.fraction(m);
    if (f < 0.0 || f > 1.0) throw DataError("generate_synthetic: effect fraction outside [0,1]");
  }
  if (config.missing_rate < 0.0 || config.missing_rate >= 1.0) {
    throw DataError("generate_synthetic: missing rate outside [0,1)");
  }
  if (config.repeat_rate < 0.0 || config.repeat_rate > 1.0) {
    throw DataError("generate_synthetic: repeat rate outside [0,1]");
  }
  const int demo_width = config.width(Modality::Demographic);
  if (config.demo_categorical_columns < 0 || config.demo_categorical_columns > demo_width) {
    throw DataError("generate_synthetic: demo categorical count exceeds demographic width");
  }

  SyntheticDataset out;
  DatasetSchema& schema = out.schema;
  schema.label_column = "group";
  schema.subject_id_column = "subject_id";

  struct ColumnSpec {
    std::string name;
    Modality modality;
    bool categorical;
    double shift;  // PD mean shift, numeric columns only
  };
  std::vector<ColumnSpec> specs;
  for (Modality m : all_modalities()) {
    const int width = config.width(m);
    const int n_cat = (m == Modality::Demographic) ? config.demo_categorical_columns : 0;
    const int n_num = width - n_cat;
    const int n_informative =
        std::min(n_num, static_cast<int>(std::ceil(config.fraction(m) * width)));
    for (int i = 0; i < n_num; ++i) {
      ColumnSpec spec;
      spec.name = padded_name(modality_name(m), i);
      spec.modality = m;
      spec.categorical = false;
      spec.shift = (i < n_informative) ? config.effect(m) : 0.0;
      specs.push_back(std::move(spec));
    }
    for (int i = 0; i < n_cat; ++i) {
      ColumnSpec spec;
      spec.name = padded_name(modality_name(m) + "_cat", i);
      spec.modality = m;
      spec.categorical = true;
      spec.shift = 0.0;
      schema.categorical_columns.insert(spec.name);
      specs.push_back(std::move(spec));
    }
  }
  for (const auto& spec : specs) schema.modality_assignment[spec.name] = spec.modality;

  RawTable& table = out.table;
  table.columns.resize(specs.size());
  for (std::size_t c = 0; c < specs.size(); ++c) {
    table.columns[c].name = specs[c].name;
    table.columns[c].categorical = specs[c].categorical;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  static const char* kLevels[2] = {"A", "B"};

  int subject_counter = 0;
  auto emit_class_rows = [&](int label, int n_rows) {
    int remaining = n_rows;
    while (remaining > 0) {
      const int subject = subject_counter++;
      int visits = 1;
      if (remaining >= 2 && unif(rng) < config.repeat_rate) visits = 2;
      char id[32];
      std::snprintf(id, sizeof(id), "subj_%05d", subject + 1);
      for (int v = 0; v < visits; ++v) {
        table.labels.push_back(label);
        table.subject_ids.push_back(id);
        for (std::size_t c = 0; c < specs.size(); ++c) {
          RawTable::Column& col = table.columns[c];
          const bool miss = config.missing_rate > 0.0 && unif(rng) < config.missing_rate;
          if (specs[c].categorical) {
            const std::string value = kLevels[unif(rng) < 0.5 ? 0 : 1];
            col.missing.push_back(miss ? 1 : 0);
            col.category.push_back(miss ? std::string() : value);
          } else {
            const double value = gauss(rng) + (label == 1 ? specs[c].shift : 0.0);
            col.missing.push_back(miss ? 1 : 0);
            col.numeric.push_back(value);
          }
        }
      }
      remaining -= visits;
    }
  };
  emit_class_rows(1, config.n_pd);
  emit_class_rows(0, config.n_hc);
  return out;
}

}  // namespace safn
