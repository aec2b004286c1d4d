#pragma once

#include "safn/common.hpp"
#include "safn/dataset.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace safn {

/// One subject's preprocessed feature blocks in canonical modality order,
/// plus label and subject id. Vector lengths follow the preprocessor's
/// encoded layout (one-hot expansion included).
struct ModalityBundle {
  std::array<Vec, kNumModalities> blocks;
  int label = 0;
  std::string subject_id;

  const Vec& block(Modality m) const { return blocks[static_cast<int>(m)]; }
  Vec& block(Modality m) { return blocks[static_cast<int>(m)]; }
};

/// Name and modality of every encoded feature, in bundle-vector order.
/// One-hot expanded categorical levels are named "column=level".
struct EncodedFeature {
  std::string name;
  std::string source_column;
  Modality modality;
};

/// Frozen preprocessing statistics. Fitted on a training partition only and
/// applied unchanged to any partition.
class FittedPreprocessor {
 public:
  struct NumericStats {
    double median = 0.0;
    double mean = 0.0;
    double sd = 1.0;  // 1 when the training column was constant
  };
  struct CategoricalMap {
    std::vector<std::string> levels;  // first-appearance order
    int index_of(const std::string& level) const;  // levels.size() when unseen
  };

  static FittedPreprocessor fit(const RawTable& table, const DatasetSchema& schema);

  std::vector<ModalityBundle> apply(const RawTable& table, const DatasetSchema& schema) const;

  int encoded_width(Modality m) const { return widths_[static_cast<int>(m)]; }
  std::array<int, kNumModalities> encoded_widths() const { return widths_; }

  /// Encoded features of one modality, in bundle order.
  const std::vector<EncodedFeature>& layout(Modality m) const {
    return layout_[static_cast<int>(m)];
  }
  /// All encoded features, canonical modality order.
  std::vector<EncodedFeature> full_layout() const;

  const NumericStats& numeric_stats(const std::string& column) const;
  const CategoricalMap& categorical_map(const std::string& column) const;

  // Checkpoint serialisation.
  std::string to_json() const;
  static FittedPreprocessor from_json(const std::string& text);

 private:
  std::map<std::string, NumericStats> numeric_;
  std::map<std::string, CategoricalMap> categorical_;
  // Column order per modality as fitted; drives the encoded layout.
  std::array<std::vector<std::string>, kNumModalities> column_order_;
  std::array<std::vector<EncodedFeature>, kNumModalities> layout_;
  std::array<int, kNumModalities> widths_ = {0, 0, 0, 0};

  void rebuild_layout(const DatasetSchema& schema);
};

/// Concatenates a bundle's blocks (canonical order) into one flat vector,
/// as consumed by the baselines.
Vec concat_bundle(const ModalityBundle& bundle);

}  // namespace safn
