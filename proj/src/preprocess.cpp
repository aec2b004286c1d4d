#include "safn/preprocess.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace safn {

using nlohmann::json;

int FittedPreprocessor::CategoricalMap::index_of(const std::string& level) const {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == level) return static_cast<int>(i);
  }
  return static_cast<int>(levels.size());  // reserved index for unseen
}

namespace {

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

FittedPreprocessor FittedPreprocessor::fit(const RawTable& table, const DatasetSchema& schema) {
  schema.validate();
  if (table.n_rows() == 0) throw DataError("fit_preprocessor: empty table");

  FittedPreprocessor prep;
  const std::size_t n = table.n_rows();
  for (const auto& col : table.columns) {
    auto it = schema.modality_assignment.find(col.name);
    if (it == schema.modality_assignment.end()) continue;
    prep.column_order_[static_cast<int>(it->second)].push_back(col.name);

    if (col.categorical) {
      CategoricalMap map;
      for (std::size_t r = 0; r < n; ++r) {
        if (col.missing[r]) continue;
        if (map.index_of(col.category[r]) == static_cast<int>(map.levels.size())) {
          map.levels.push_back(col.category[r]);
        }
      }
      prep.categorical_[col.name] = std::move(map);
    } else {
      std::vector<double> observed;
      observed.reserve(n);
      for (std::size_t r = 0; r < n; ++r) {
        if (!col.missing[r]) observed.push_back(col.numeric[r]);
      }
      if (observed.empty()) {
        throw DataError("fit_preprocessor: column '" + col.name + "' has no observed values");
      }
      NumericStats stats;
      stats.median = median_of(observed);
      // Mean/SD over the imputed column (population SD; constant -> 1).
      double sum = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        sum += col.missing[r] ? stats.median : col.numeric[r];
      }
      stats.mean = sum / static_cast<double>(n);
      double sq = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double v = col.missing[r] ? stats.median : col.numeric[r];
        sq += (v - stats.mean) * (v - stats.mean);
      }
      const double var = sq / static_cast<double>(n);
      stats.sd = var > 0.0 ? std::sqrt(var) : 1.0;
      prep.numeric_[col.name] = stats;
    }
  }
  prep.rebuild_layout(schema);
  return prep;
}

void FittedPreprocessor::rebuild_layout(const DatasetSchema& schema) {
  for (Modality m : all_modalities()) {
    const int mi = static_cast<int>(m);
    layout_[mi].clear();
    for (const std::string& col : column_order_[mi]) {
      if (schema.is_categorical(col)) {
        const CategoricalMap& map = categorical_.at(col);
        for (const std::string& level : map.levels) {
          layout_[mi].push_back({col + "=" + level, col, m});
        }
      } else {
        layout_[mi].push_back({col, col, m});
      }
    }
    widths_[mi] = static_cast<int>(layout_[mi].size());
  }
}

std::vector<ModalityBundle> FittedPreprocessor::apply(const RawTable& table,
                                                      const DatasetSchema& schema) const {
  const std::size_t n = table.n_rows();
  std::vector<ModalityBundle> bundles(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (Modality m : all_modalities()) {
      bundles[r].block(m) = Vec::Zero(widths_[static_cast<int>(m)]);
    }
    bundles[r].label = table.labels[r];
    bundles[r].subject_id = table.subject_ids[r];
  }

  for (Modality m : all_modalities()) {
    const int mi = static_cast<int>(m);
    int offset = 0;
    for (const std::string& name : column_order_[mi]) {
      if (!table.has_column(name)) {
        throw DataError("apply_preprocessor: column '" + name + "' absent from table");
      }
      const RawTable::Column& col = table.column(name);
      if (schema.is_categorical(name)) {
        const CategoricalMap& map = categorical_.at(name);
        const int n_levels = static_cast<int>(map.levels.size());
        for (std::size_t r = 0; r < n; ++r) {
          if (col.missing[r]) continue;  // missing/unseen -> all-zeros row
          const int idx = map.index_of(col.category[r]);
          if (idx < n_levels) bundles[r].block(m)[offset + idx] = 1.0;
        }
        offset += n_levels;
      } else {
        const NumericStats& stats = numeric_.at(name);
        for (std::size_t r = 0; r < n; ++r) {
          const double v = col.missing[r] ? stats.median : col.numeric[r];
          bundles[r].block(m)[offset] = (v - stats.mean) / stats.sd;
        }
        offset += 1;
      }
    }
  }
  return bundles;
}

std::vector<EncodedFeature> FittedPreprocessor::full_layout() const {
  std::vector<EncodedFeature> all;
  for (Modality m : all_modalities()) {
    const auto& part = layout_[static_cast<int>(m)];
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

const FittedPreprocessor::NumericStats& FittedPreprocessor::numeric_stats(
    const std::string& column) const {
  auto it = numeric_.find(column);
  if (it == numeric_.end()) throw DataError("no numeric stats for column '" + column + "'");
  return it->second;
}

const FittedPreprocessor::CategoricalMap& FittedPreprocessor::categorical_map(
    const std::string& column) const {
  auto it = categorical_.find(column);
  if (it == categorical_.end()) throw DataError("no categorical map for column '" + column + "'");
  return it->second;
}

std::string FittedPreprocessor::to_json() const {
  json doc;
  json numeric = json::object();
  for (const auto& [name, stats] : numeric_) {
    numeric[name] = {{"median", stats.median}, {"mean", stats.mean}, {"sd", stats.sd}};
  }
  json categorical = json::object();
  for (const auto& [name, map] : categorical_) {
    categorical[name] = map.levels;
  }
  json order = json::object();
  for (Modality m : all_modalities()) {
    order[modality_name(m)] = column_order_[static_cast<int>(m)];
  }
  doc["numeric"] = std::move(numeric);
  doc["categorical"] = std::move(categorical);
  doc["column_order"] = std::move(order);
  return doc.dump();
}

FittedPreprocessor FittedPreprocessor::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("preprocessor parse error: ") + e.what());
  }
  FittedPreprocessor prep;
  DatasetSchema pseudo;  // reconstructed only to drive rebuild_layout
  pseudo.label_column = "__label__";
  pseudo.subject_id_column = "__subject__";
  for (const auto& [name, s] : doc.at("numeric").items()) {
    NumericStats stats;
    stats.median = s.at("median").get<double>();
    stats.mean = s.at("mean").get<double>();
    stats.sd = s.at("sd").get<double>();
    prep.numeric_[name] = stats;
  }
  for (const auto& [name, levels] : doc.at("categorical").items()) {
    CategoricalMap map;
    for (const auto& l : levels) map.levels.push_back(l.get<std::string>());
    prep.categorical_[name] = std::move(map);
    pseudo.categorical_columns.insert(name);
  }
  for (const auto& [mod_name, cols] : doc.at("column_order").items()) {
    const Modality m = modality_from_name(mod_name);
    for (const auto& c : cols) {
      const std::string name = c.get<std::string>();
      prep.column_order_[static_cast<int>(m)].push_back(name);
      pseudo.modality_assignment[name] = m;
    }
  }
  prep.rebuild_layout(pseudo);
  return prep;
}

Vec concat_bundle(const ModalityBundle& bundle) {
  int total = 0;
  for (Modality m : all_modalities()) total += static_cast<int>(bundle.block(m).size());
  Vec out(total);
  int offset = 0;
  for (Modality m : all_modalities()) {
    const Vec& b = bundle.block(m);
    out.segment(offset, b.size()) = b;
    offset += static_cast<int>(b.size());
  }
  return out;
}

}  // namespace safn
