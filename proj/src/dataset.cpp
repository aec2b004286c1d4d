#include "safn/dataset.hpp"

#include "safn/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace safn {

using nlohmann::json;

const std::vector<Modality>& all_modalities() {
  static const std::vector<Modality> order = {Modality::MriCt, Modality::Clinical,
                                              Modality::MriVol, Modality::Demographic};
  return order;
}

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::MriCt: return "mri_ct";
    case Modality::Clinical: return "clinical";
    case Modality::MriVol: return "mri_vol";
    case Modality::Demographic: return "demographic";
  }
  throw DataError("unknown modality enum value");
}

Modality modality_from_name(const std::string& name) {
  for (Modality m : all_modalities()) {
    if (modality_name(m) == name) return m;
  }
  throw DataError("unknown modality name: " + name);
}

void DatasetSchema::validate() const {
  if (label_column.empty()) throw DataError("schema: label_column is empty");
  if (subject_id_column.empty()) throw DataError("schema: subject_id_column is empty");
  if (modality_assignment.count(label_column) || modality_assignment.count(subject_id_column)) {
    throw DataError("schema: label/subject-id column assigned to a modality");
  }
  for (const auto& col : categorical_columns) {
    if (!modality_assignment.count(col)) {
      throw DataError("schema: categorical column '" + col + "' has no modality");
    }
  }
}

const RawTable::Column& RawTable::column(const std::string& name) const {
  for (const auto& c : columns) {
    if (c.name == name) return c;
  }
  throw DataError("table: no column named '" + name + "'");
}

bool RawTable::has_column(const std::string& name) const {
  return std::any_of(columns.begin(), columns.end(),
                     [&](const Column& c) { return c.name == name; });
}

RawTable RawTable::select_rows(const std::vector<std::size_t>& indices) const {
  RawTable out;
  out.columns.reserve(columns.size());
  for (const auto& c : columns) {
    Column sub;
    sub.name = c.name;
    sub.categorical = c.categorical;
    sub.missing.reserve(indices.size());
    if (c.categorical) sub.category.reserve(indices.size());
    else sub.numeric.reserve(indices.size());
    for (std::size_t i : indices) {
      sub.missing.push_back(c.missing[i]);
      if (c.categorical) sub.category.push_back(c.category[i]);
      else sub.numeric.push_back(c.numeric[i]);
    }
    out.columns.push_back(std::move(sub));
  }
  for (std::size_t i : indices) {
    out.labels.push_back(labels[i]);
    out.subject_ids.push_back(subject_ids[i]);
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  const char* begin = s.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end != begin && *end == '\0';
}

int parse_label(const std::string& value, const std::string& path) {
  if (value == "1" || value == "PD") return 1;
  if (value == "0" || value == "HC") return 0;
  throw DataError(path + ": unmappable label value '" + value + "'");
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out += ch;
  }
  out += '"';
  return out;
}

}  // namespace

RawTable load_csv(const std::string& path, const DatasetSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);

  std::map<std::string, std::size_t> col_index;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (col_index.count(header[i])) {
      throw DataError(path + ": duplicate header column '" + header[i] + "'");
    }
    col_index[header[i]] = i;
  }
  auto require = [&](const std::string& name) {
    auto it = col_index.find(name);
    if (it == col_index.end()) throw DataError(path + ": missing column '" + name + "'");
    return it->second;
  };
  const std::size_t label_idx = require(schema.label_column);
  const std::size_t id_idx = require(schema.subject_id_column);
  for (const auto& [name, modality] : schema.modality_assignment) {
    (void)modality;
    require(name);
  }

  RawTable table;
  // Feature columns keep the file header order.
  std::vector<std::size_t> feature_src;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string& name = header[i];
    if (!schema.modality_assignment.count(name)) continue;
    RawTable::Column col;
    col.name = name;
    col.categorical = schema.is_categorical(name);
    table.columns.push_back(std::move(col));
    feature_src.push_back(i);
  }

  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError(path + ": row " + std::to_string(row_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    table.labels.push_back(parse_label(fields[label_idx], path));
    table.subject_ids.push_back(fields[id_idx]);
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      RawTable::Column& col = table.columns[c];
      const std::string& cell = fields[feature_src[c]];
      const bool miss = cell.empty();
      col.missing.push_back(miss ? 1 : 0);
      if (col.categorical) {
        col.category.push_back(miss ? std::string() : cell);
      } else {
        double v = 0.0;
        if (!miss && !parse_double(cell, v)) {
          throw DataError(path + ": row " + std::to_string(row_no) + ", column '" + col.name +
                          "': non-numeric value '" + cell + "'");
        }
        col.numeric.push_back(v);
      }
    }
  }
  return table;
}

void save_csv(const std::string& path, const RawTable& table, const DatasetSchema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write CSV file: " + path);
  out << csv_escape(schema.subject_id_column) << ',' << csv_escape(schema.label_column);
  for (const auto& col : table.columns) out << ',' << csv_escape(col.name);
  out << '\n';
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    out << csv_escape(table.subject_ids[r]) << ',' << (table.labels[r] == 1 ? "PD" : "HC");
    for (const auto& col : table.columns) {
      out << ',';
      if (col.missing[r]) continue;
      if (col.categorical) out << csv_escape(col.category[r]);
      else out << format_number(col.numeric[r]);
    }
    out << '\n';
  }
}

DatasetSchema load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("manifest parse error in " + path + ": " + e.what());
  }
  DatasetSchema schema;
  try {
    schema.label_column = doc.at("label_column").get<std::string>();
    schema.subject_id_column = doc.at("subject_id_column").get<std::string>();
    for (const auto& c : doc.value("categorical_columns", json::array())) {
      schema.categorical_columns.insert(c.get<std::string>());
    }
    for (const auto& [mod_name, cols] : doc.at("modalities").items()) {
      const Modality m = modality_from_name(mod_name);
      for (const auto& c : cols) {
        const std::string name = c.get<std::string>();
        if (schema.modality_assignment.count(name)) {
          throw DataError("manifest: column '" + name + "' assigned to two modalities");
        }
        schema.modality_assignment[name] = m;
      }
    }
  } catch (const json::exception& e) {
    throw DataError("manifest schema error in " + path + ": " + e.what());
  }
  schema.validate();
  return schema;
}

void save_manifest(const std::string& path, const DatasetSchema& schema) {
  json mods;
  for (Modality m : all_modalities()) mods[modality_name(m)] = json::array();
  for (const auto& [col, m] : schema.modality_assignment) {
    mods[modality_name(m)].push_back(col);
  }
  json doc;
  doc["label_column"] = schema.label_column;
  doc["subject_id_column"] = schema.subject_id_column;
  doc["categorical_columns"] = schema.categorical_columns;
  doc["modalities"] = mods;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path);
  out << doc.dump(2) << '\n';
}

MissingnessFilterResult drop_high_missingness(const RawTable& table, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw DataError("missingness threshold must lie in (0, 1)");
  }
  MissingnessFilterResult result;
  result.table.labels = table.labels;
  result.table.subject_ids = table.subject_ids;
  const double n = static_cast<double>(table.n_rows());
  for (const auto& col : table.columns) {
    const double miss = static_cast<double>(
        std::count(col.missing.begin(), col.missing.end(), uint8_t{1}));
    if (n > 0.0 && miss / n > threshold) {
      result.dropped_columns.push_back(col.name);
    } else {
      result.table.columns.push_back(col);
    }
  }
  return result;
}

}  // namespace safn
