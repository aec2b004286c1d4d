#include <doctest.h>

#include "safn/common.hpp"
#include "safn/dataset.hpp"

#include <filesystem>
#include <fstream>

using namespace safn;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "safn_tests";
  fs::create_directories(dir);
  return dir / name;
}

DatasetSchema toy_schema() {
  DatasetSchema schema;
  schema.label_column = "group";
  schema.subject_id_column = "subject_id";
  schema.modality_assignment["thick_a"] = Modality::MriCt;
  schema.modality_assignment["score_b"] = Modality::Clinical;
  schema.modality_assignment["hand"] = Modality::Demographic;
  schema.categorical_columns.insert("hand");
  return schema;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("load_csv parses rows, labels, and missing cells") {
  const fs::path path = temp_file("toy.csv");
  write_file(path,
             "subject_id,group,thick_a,score_b,hand\n"
             "s1,PD,1.5,2.0,L\n"
             "s2,HC,,3.5,R\n"
             "s3,1,0.25,,\n");
  const RawTable table = load_csv(path.string(), toy_schema());
  CHECK(table.n_rows() == 3);
  CHECK(table.labels == std::vector<int>{1, 0, 1});
  CHECK(table.subject_ids[1] == "s2");

  const auto& thick = table.column("thick_a");
  CHECK(thick.missing[0] == 0);
  CHECK(thick.missing[1] == 1);  // empty numeric cell marked missing
  CHECK(thick.numeric[2] == doctest::Approx(0.25));

  const auto& hand = table.column("hand");
  CHECK(hand.categorical);
  CHECK(hand.category[0] == "L");
  CHECK(hand.missing[2] == 1);
}

TEST_CASE("load_csv error paths") {
  DatasetSchema schema = toy_schema();

  const fs::path no_label = temp_file("no_label.csv");
  write_file(no_label, "subject_id,thick_a,score_b,hand\ns1,1,2,L\n");
  CHECK_THROWS_WITH_AS(load_csv(no_label.string(), schema),
                       doctest::Contains("missing column"), DataError);

  const fs::path bad_label = temp_file("bad_label.csv");
  write_file(bad_label, "subject_id,group,thick_a,score_b,hand\ns1,MAYBE,1,2,L\n");
  CHECK_THROWS_WITH_AS(load_csv(bad_label.string(), schema),
                       doctest::Contains("unmappable label"), DataError);

  const fs::path dup = temp_file("dup.csv");
  write_file(dup, "subject_id,group,thick_a,thick_a,score_b,hand\ns1,PD,1,1,2,L\n");
  CHECK_THROWS_WITH_AS(load_csv(dup.string(), schema), doctest::Contains("duplicate header"),
                       DataError);

  CHECK_THROWS_AS(load_csv("/nonexistent/none.csv", schema), DataError);
}

TEST_CASE("csv round trip preserves values and missing mask") {
  const fs::path path = temp_file("rt.csv");
  write_file(path,
             "subject_id,group,thick_a,score_b,hand\n"
             "s1,PD,1.5,,L\n"
             "s2,HC,-0.125,3.25,\n");
  const DatasetSchema schema = toy_schema();
  const RawTable table = load_csv(path.string(), schema);

  const fs::path out = temp_file("rt_out.csv");
  save_csv(out.string(), table, schema);
  const RawTable again = load_csv(out.string(), schema);
  CHECK(again.n_rows() == table.n_rows());
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    CHECK(again.columns[c].name == table.columns[c].name);
    CHECK(again.columns[c].missing == table.columns[c].missing);
    if (!table.columns[c].categorical) {
      for (std::size_t r = 0; r < table.n_rows(); ++r) {
        if (!table.columns[c].missing[r]) {
          CHECK(again.columns[c].numeric[r] == doctest::Approx(table.columns[c].numeric[r]));
        }
      }
    }
  }
}

TEST_CASE("manifest round trip") {
  const DatasetSchema schema = toy_schema();
  const fs::path path = temp_file("manifest.json");
  save_manifest(path.string(), schema);
  const DatasetSchema loaded = load_manifest(path.string());
  CHECK(loaded.label_column == schema.label_column);
  CHECK(loaded.subject_id_column == schema.subject_id_column);
  CHECK(loaded.modality_assignment == schema.modality_assignment);
  CHECK(loaded.categorical_columns == schema.categorical_columns);
}

TEST_CASE("drop_high_missingness uses a strict threshold") {
  RawTable table;
  table.labels.assign(10, 0);
  table.subject_ids.assign(10, "s");
  for (int c = 0; c < 3; ++c) {
    RawTable::Column col;
    col.name = "c" + std::to_string(c);
    col.numeric.assign(10, 1.0);
    col.missing.assign(10, 0);
    table.columns.push_back(col);
  }
  // c0: 3/10 missing -> dropped; c1: exactly 2/10 -> kept; c2: fully observed.
  table.columns[0].missing[0] = table.columns[0].missing[1] = table.columns[0].missing[2] = 1;
  table.columns[1].missing[0] = table.columns[1].missing[1] = 1;

  const MissingnessFilterResult res = drop_high_missingness(table, 0.20);
  CHECK(res.dropped_columns == std::vector<std::string>{"c0"});
  CHECK(res.table.columns.size() == 2);
  CHECK(res.table.columns[0].name == "c1");

  CHECK_THROWS_AS(drop_high_missingness(table, 0.0), DataError);
  CHECK_THROWS_AS(drop_high_missingness(table, 1.0), DataError);
}

TEST_CASE("select_rows keeps per-row alignment") {
  RawTable table;
  table.labels = {0, 1, 0, 1};
  table.subject_ids = {"a", "b", "c", "d"};
  RawTable::Column col;
  col.name = "v";
  col.numeric = {10, 20, 30, 40};
  col.missing = {0, 1, 0, 0};
  table.columns.push_back(col);

  const RawTable sub = table.select_rows({3, 1});
  CHECK(sub.n_rows() == 2);
  CHECK(sub.labels == std::vector<int>{1, 1});
  CHECK(sub.subject_ids == std::vector<std::string>{"d", "b"});
  CHECK(sub.columns[0].numeric[0] == doctest::Approx(40));
  CHECK(sub.columns[0].missing[1] == 1);
}
