#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace safn {

enum class Modality { MriCt = 0, Clinical = 1, MriVol = 2, Demographic = 3 };

constexpr int kNumModalities = 4;

/// Canonical order used everywhere a fixed modality ordering matters
/// (fusion concatenation, gate indices, reports).
const std::vector<Modality>& all_modalities();

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& name);

/// Column-to-modality assignment plus the label / subject-id columns.
struct DatasetSchema {
  std::map<std::string, Modality> modality_assignment;
  std::string label_column;
  std::string subject_id_column;
  std::set<std::string> categorical_columns;

  bool is_categorical(const std::string& column) const {
    return categorical_columns.count(column) > 0;
  }
  /// Throws DataError when a feature column collides with the label or
  /// subject-id column, or a categorical column is unassigned.
  void validate() const;
};

/// Column-oriented table as parsed from CSV. Numeric and categorical
/// columns share a missing mask; subject ids may repeat (longitudinal rows).
struct RawTable {
  struct Column {
    std::string name;
    bool categorical = false;
    std::vector<double> numeric;        // valid where !missing, numeric cols
    std::vector<std::string> category;  // valid where !missing, categorical cols
    std::vector<uint8_t> missing;
  };

  std::vector<Column> columns;  // file header order, features only
  std::vector<int> labels;      // 0 = HC, 1 = PD
  std::vector<std::string> subject_ids;

  std::size_t n_rows() const { return labels.size(); }
  const Column& column(const std::string& name) const;
  bool has_column(const std::string& name) const;

  /// Row subset in the given index order (fold materialisation).
  RawTable select_rows(const std::vector<std::size_t>& indices) const;
};

/// Parses a headered CSV per the schema. Empty cells become missing values;
/// label values "0"/"1"/"HC"/"PD" map onto {0,1}.
RawTable load_csv(const std::string& path, const DatasetSchema& schema);

/// Writes the table back out; missing cells are left empty.
void save_csv(const std::string& path, const RawTable& table, const DatasetSchema& schema);

/// JSON manifest carrying the schema (modalities, label/id columns,
/// categorical flags).
DatasetSchema load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetSchema& schema);

struct MissingnessFilterResult {
  RawTable table;
  std::vector<std::string> dropped_columns;
};

/// Removes feature columns whose missing fraction strictly exceeds the
/// threshold (default 0.20).
MissingnessFilterResult drop_high_missingness(const RawTable& table, double threshold = 0.20);

}  // namespace safn
