#pragma once

#include "safn/model.hpp"
#include "safn/preprocess.hpp"

#include <map>
#include <string>
#include <vector>

namespace safn {

enum class AttributionTarget { Probability, Logit };

struct AttributionEntry {
  std::string feature;
  Modality modality = Modality::Clinical;
  double raw = 0.0;      // accumulated |gradient * input|
  double percent = 0.0;  // normalised to sum to 100
  int rank = 0;          // 1-based, descending percent, ties by name
};

struct AttributionReport {
  std::vector<AttributionEntry> entries;  // rank order
};

/// Accumulates Gradient-x-Input magnitudes across samples (and across fold
/// checkpoints when add() is called once per fold).
class AttributionAccumulator {
 public:
  /// Feature names per active stream, in bundle-vector order; defaults to
  /// the preprocessor layout via the convenience overload below.
  void add(const SafnModel& model, const ParamBuffer& params,
           const std::vector<ModalityBundle>& samples,
           const std::vector<std::vector<std::string>>& stream_feature_names,
           AttributionTarget target = AttributionTarget::Probability);

  void add(const SafnModel& model, const ParamBuffer& params,
           const std::vector<ModalityBundle>& samples, const FittedPreprocessor& preprocessor,
           AttributionTarget target = AttributionTarget::Probability);

  AttributionReport finalize() const;

 private:
  std::map<std::string, std::pair<Modality, double>> accumulated_;
  long n_samples_ = 0;
};

/// Single-checkpoint convenience wrapper.
AttributionReport grad_x_input(const SafnModel& model, const ParamBuffer& params,
                               const std::vector<ModalityBundle>& samples,
                               const FittedPreprocessor& preprocessor,
                               AttributionTarget target = AttributionTarget::Probability);

std::vector<AttributionEntry> top_k_features(const AttributionReport& report, int k);

struct GateReport {
  std::vector<Modality> modalities;  // stream order of the gate vectors
  std::vector<double> raw_mean;
  std::vector<double> share;  // raw / sum(raw)
};

/// Raw mean gate per modality over all samples (and folds), normalised by
/// the sum of the four means.
GateReport gate_contributions(const std::vector<Vec>& per_sample_gates,
                              const std::vector<Modality>& modalities);

}  // namespace safn
