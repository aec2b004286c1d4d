#pragma once

#include "safn/dataset.hpp"

#include <array>
#include <cstdint>

namespace safn {

/// Settings for the synthetic cohort generator. Numeric feature columns are
/// independent standard Gaussians; in each modality the first
/// ceil(effect_fraction * width) columns get a +effect_size mean shift for
/// PD rows. Categorical demographic columns are uninformative draws.
struct GeneratorConfig {
  int n_pd = 570;
  int n_hc = 133;
  // Feature column counts per modality, canonical order
  // (mri_ct, clinical, mri_vol, demographic).
  std::array<int, kNumModalities> widths = {70, 409, 13, 7};
  std::array<double, kNumModalities> effect_size = {0.0, 0.0, 0.0, 0.0};
  std::array<double, kNumModalities> effect_fraction = {0.0, 0.0, 0.0, 0.0};
  double missing_rate = 0.0;
  double repeat_rate = 0.0;  // fraction of subjects contributing two rows
  int demo_categorical_columns = 2;

  int width(Modality m) const { return widths[static_cast<int>(m)]; }
  void set_width(Modality m, int w) { widths[static_cast<int>(m)] = w; }
  double effect(Modality m) const { return effect_size[static_cast<int>(m)]; }
  void set_effect(Modality m, double e) { effect_size[static_cast<int>(m)] = e; }
  double fraction(Modality m) const { return effect_fraction[static_cast<int>(m)]; }
  void set_fraction(Modality m, double f) { effect_fraction[static_cast<int>(m)] = f; }

  /// Reference-cohort defaults: 499 feature columns, 570:133 imbalance, strong
  /// separable signal confined to the clinical block.
  static GeneratorConfig reference_cohort();
};

struct SyntheticDataset {
  RawTable table;
  DatasetSchema schema;
};

/// Deterministic per seed.
SyntheticDataset generate_synthetic(const GeneratorConfig& config, uint64_t seed);

}  // namespace safn
