#include "safn/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace safn {

void AttributionAccumulator::add(const SafnModel& model, const ParamBuffer& params,
                                 const std::vector<ModalityBundle>& samples,
                                 const std::vector<std::vector<std::string>>& stream_feature_names,
                                 AttributionTarget target) {
  if (samples.empty()) throw DataError("grad_x_input: empty sample set");
  const ModelStructure& structure = model.structure();
  if (static_cast<int>(stream_feature_names.size()) != structure.n_streams()) {
    throw DataError("grad_x_input: feature-name streams do not match the model");
  }
  for (int si = 0; si < structure.n_streams(); ++si) {
    if (static_cast<int>(stream_feature_names[si].size()) != structure.streams[si].width) {
      throw DataError("grad_x_input: feature-name width mismatch for " +
                      modality_name(structure.streams[si].modality));
    }
  }

  ParamBuffer grads = model.make_zero_buffer();
  InputGradients input_grads;
  for (const ModalityBundle& sample : samples) {
    const ForwardTrace trace = model.forward(sample, params, false, 0);
    const double d_logit = target == AttributionTarget::Probability
                               ? trace.prob * (1.0 - trace.prob)
                               : 1.0;
    grads.set_zero();
    model.backward(trace, params, d_logit, Vec(), grads, &input_grads);
    for (int si = 0; si < structure.n_streams(); ++si) {
      const Vec& x = trace.inputs[si];
      const Vec& g = input_grads[si];
      const Modality m = structure.streams[si].modality;
      for (Eigen::Index f = 0; f < x.size(); ++f) {
        auto& slot = accumulated_[stream_feature_names[si][f]];
        slot.first = m;
        slot.second += std::fabs(g[f] * x[f]);
      }
    }
    ++n_samples_;
  }
}

void AttributionAccumulator::add(const SafnModel& model, const ParamBuffer& params,
                                 const std::vector<ModalityBundle>& samples,
                                 const FittedPreprocessor& preprocessor,
                                 AttributionTarget target) {
  std::vector<std::vector<std::string>> names;
  for (const StreamSpec& s : model.structure().streams) {
    std::vector<std::string> stream_names;
    for (const EncodedFeature& f : preprocessor.layout(s.modality)) {
      stream_names.push_back(f.name);
    }
    names.push_back(std::move(stream_names));
  }
  add(model, params, samples, names, target);
}

AttributionReport AttributionAccumulator::finalize() const {
  if (accumulated_.empty()) throw DataError("grad_x_input: nothing accumulated");
  double total = 0.0;
  for (const auto& [name, slot] : accumulated_) {
    (void)name;
    total += slot.second;
  }
  AttributionReport report;
  for (const auto& [name, slot] : accumulated_) {
    AttributionEntry entry;
    entry.feature = name;
    entry.modality = slot.first;
    entry.raw = slot.second;
    entry.percent = total > 0.0 ? 100.0 * slot.second / total : 0.0;
    report.entries.push_back(std::move(entry));
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const AttributionEntry& a, const AttributionEntry& b) {
              if (a.percent != b.percent) return a.percent > b.percent;
              return a.feature < b.feature;
            });
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    report.entries[i].rank = static_cast<int>(i) + 1;
  }
  return report;
}

AttributionReport grad_x_input(const SafnModel& model, const ParamBuffer& params,
                               const std::vector<ModalityBundle>& samples,
                               const FittedPreprocessor& preprocessor, AttributionTarget target) {
  AttributionAccumulator acc;
  acc.add(model, params, samples, preprocessor, target);
  return acc.finalize();
}

std::vector<AttributionEntry> top_k_features(const AttributionReport& report, int k) {
  if (k < 0 || k > static_cast<int>(report.entries.size())) {
    throw DataError("top_k_features: k exceeds the feature count");
  }
  return {report.entries.begin(), report.entries.begin() + k};
}

GateReport gate_contributions(const std::vector<Vec>& per_sample_gates,
                              const std::vector<Modality>& modalities) {
  if (per_sample_gates.empty()) throw DataError("gate_contributions: no samples");
  const Eigen::Index m = per_sample_gates.front().size();
  if (static_cast<Eigen::Index>(modalities.size()) != m) {
    throw DataError("gate_contributions: modality labels do not match gate width");
  }
  GateReport report;
  report.modalities = modalities;
  report.raw_mean.assign(m, 0.0);
  for (const Vec& g : per_sample_gates) {
    if (g.size() != m) throw DataError("gate_contributions: inconsistent gate widths");
    for (Eigen::Index j = 0; j < m; ++j) report.raw_mean[j] += g[j];
  }
  for (double& v : report.raw_mean) v /= static_cast<double>(per_sample_gates.size());
  const double total = std::accumulate(report.raw_mean.begin(), report.raw_mean.end(), 0.0);
  report.share.assign(m, 0.0);
  if (total > 0.0) {
    for (Eigen::Index j = 0; j < m; ++j) report.share[j] = report.raw_mean[j] / total;
  }
  return report;
}

}  // namespace safn
