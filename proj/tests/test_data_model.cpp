#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "data_model.hpp"
#include "errors.hpp"
#include "rng.hpp"

using namespace muze;
using namespace muze::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("muze_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

}  // namespace

TEST_CASE("attribute table iterates in case-insensitive alphabetical order") {
  AttributeTable t;
  t.set("materials", {"paper"});
  t.set("Categories", {"prints"});
  t.set("artist", {"x"});
  const auto names = t.attribute_names();
  CHECK(names == std::vector<std::string>{"artist", "Categories", "materials"});
  CHECK(t.known("materials"));
  t.set("empty", {});
  CHECK_FALSE(t.known("empty"));
  CHECK(t.known_attributes().size() == 3);
  CHECK_THROWS_AS(t.values("missing"), UnknownAttributeError);
  CHECK_THROWS_AS(t.set("bad", {""}), DataError);
}

TEST_CASE("vocabulary ids are dense and round-trip") {
  ValueVocabulary vocab("materials", {"paper", "ink", "bronze"});
  CHECK(vocab.size() == 3);
  for (int i = 0; i < vocab.size(); ++i) CHECK(vocab.id_of(vocab.value_of(i)) == i);
  CHECK(vocab.add("paper") == 0);
  CHECK(vocab.add("silk") == 3);
  CHECK_FALSE(vocab.id_of("velvet").has_value());
  CHECK_THROWS_AS(vocab.value_of(99), UnknownIdError);
  CHECK_THROWS_AS(vocab.value_of(-1), UnknownIdError);
}

TEST_CASE("classifiable means 200..10000 values") {
  auto vocab_of_size = [](int n) {
    std::vector<std::string> values;
    for (int i = 0; i < n; ++i) values.push_back("v" + std::to_string(i));
    return ValueVocabulary("a", values);
  };
  CHECK_FALSE(vocab_of_size(199).classifiable());
  CHECK(vocab_of_size(200).classifiable());
  CHECK(vocab_of_size(10000).classifiable());
  CHECK_FALSE(vocab_of_size(10001).classifiable());
}

TEST_CASE("build_caption orders attributes alphabetically and joins with spaces") {
  AttributeTable t;
  t.set("materials", {"paper"});
  t.set("categories", {"prints"});
  CHECK(build_caption(t, {"materials", "categories"}) == "prints paper");

  AttributeTable unknowns;
  unknowns.set("a", {});
  unknowns.set("b", {});
  CHECK(build_caption(unknowns, {"a", "b"}).empty());

  AttributeTable multi;
  multi.set("a", {"x", "y"});
  CHECK(build_caption(multi, {"a"}) == "x y");

  CHECK_THROWS_AS(build_caption(t, {"nope"}), UnknownAttributeError);
}

TEST_CASE("build_caption is invariant to the interest-list order") {
  Rng rng(7);
  AttributeTable t;
  t.set("delta", {"d1", "d2"});
  t.set("alpha", {"a1"});
  t.set("Echo", {"e1"});
  t.set("bravo", {});
  t.set("charlie", {"c1", "c2", "c3"});
  std::vector<std::string> interest = {"delta", "alpha", "Echo", "bravo", "charlie"};
  const std::string expected = build_caption(t, interest);
  for (int i = 0; i < 20; ++i) {
    rng.shuffle(interest);
    CHECK(build_caption(t, interest) == expected);
  }
  CHECK(expected == "a1 c1 c2 c3 d1 d2 e1");
}

TEST_CASE("partition_table splits query from known context") {
  AttributeTable t;
  for (const char* a : {"a", "b", "c", "d", "materials"}) t.set(a, {std::string(a) + "_v"});
  const TablePartition part = partition_table(t, {"materials"});
  CHECK(part.context.size() == 4);
  CHECK(part.query.size() == 1);
  CHECK(part.query.values("materials") == ValueList{"materials_v"});

  // query covering everything leaves no context
  const TablePartition all = partition_table(t, {"a", "b", "c", "d", "materials"});
  CHECK(all.context.empty());

  CHECK_THROWS_AS(partition_table(t, {"missing"}), UnknownAttributeError);

  AttributeTable with_unknown = t;
  with_unknown.set("materials", {});
  CHECK_NOTHROW(partition_table(with_unknown, {"materials"}, PartitionMode::Inference));
  CHECK_THROWS_AS(partition_table(with_unknown, {"materials"}, PartitionMode::Training),
                  QueryAttributeUnknownError);
}

TEST_CASE("partition covers exactly the known attributes") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    AttributeTable t;
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < n; ++i) {
      const std::string name = "attr" + std::to_string(i);
      t.set(name, rng.uniform() < 0.3 ? ValueList{} : ValueList{"v" + std::to_string(i)});
    }
    std::set<std::string> query;
    for (const auto& name : t.attribute_names()) {
      if (rng.uniform() < 0.4) query.insert(name);
    }
    if (query.empty()) query.insert(t.attribute_names().front());
    const TablePartition part = partition_table(t, query);
    std::set<std::string> seen;
    for (const auto& [attr, _] : part.query.entries()) {
      CHECK(part.context.has(attr) == false);
      seen.insert(attr);
    }
    for (const auto& [attr, values] : part.context.entries()) {
      CHECK(!values.empty());
      seen.insert(attr);
    }
    for (const auto& attr : t.known_attributes()) CHECK(seen.count(attr));
  }
}

namespace {

const char* kVocabJson = R"({
  "categories": {"prints": 0, "drawings": 1},
  "materials": {"vellum": 0, "silk": 1, "canvas": 2, "paper": 3, "oak": 4, "clay": 5, "iron": 6, "ink": 7, "gold": 8, "wax": 9}
})";

}  // namespace

TEST_CASE("load_dataset resolves ids against the vocabulary") {
  const auto dir = temp_dir("load");
  spit(dir / "mini.vocab.json", kVocabJson);
  spit(dir / "mini.train.csv",
       "object_id,image_path,caption,categories,materials\n"
       "obj1,img/1.png,a caption,\"[0]\",\"[3,7]\"\n"
       "obj2,img/2.png,,\"[]\",\"[]\"\n");
  LoadReport report;
  const DatasetSplit split = load_dataset(dir / "mini.train.csv", dir / "mini.vocab.json", &report);
  CHECK(split.name == "train");
  REQUIRE(split.records.size() == 2);
  CHECK(split.records[0].table.values("materials") == ValueList{"paper", "ink"});
  CHECK(split.records[0].table.values("categories") == ValueList{"prints"});
  CHECK(split.records[1].table.values("materials").empty());
  CHECK_FALSE(split.records[1].table.known("materials"));
  CHECK(report.records == 2);
  CHECK(report.duplicate_value_ids_dropped == 0);
  CHECK(split.vocabularies.at("materials").size() == 10);
}

TEST_CASE("load_dataset rejects out-of-range ids, duplicates, malformed cells") {
  const auto dir = temp_dir("load_errors");
  spit(dir / "d.vocab.json", kVocabJson);

  spit(dir / "d.train.csv",
       "object_id,image_path,caption,categories,materials\n"
       "obj1,img/1.png,,\"[0]\",\"[99]\"\n");
  CHECK_THROWS_AS(load_dataset(dir / "d.train.csv", dir / "d.vocab.json"), UnknownIdError);

  spit(dir / "d.train.csv",
       "object_id,image_path,caption,categories,materials\n"
       "obj1,img/1.png,,\"[0]\",\"[1]\"\n"
       "obj1,img/2.png,,\"[0]\",\"[1]\"\n");
  CHECK_THROWS_AS(load_dataset(dir / "d.train.csv", dir / "d.vocab.json"), DuplicateObjectIdError);

  spit(dir / "d.train.csv",
       "object_id,image_path,caption,categories,materials\n"
       "obj1,img/1.png,,\"[0]\",\"3,7\"\n");
  CHECK_THROWS_AS(load_dataset(dir / "d.train.csv", dir / "d.vocab.json"), MalformedCellError);

  // duplicate ids inside one cell collapse and are reported
  spit(dir / "d.train.csv",
       "object_id,image_path,caption,categories,materials\n"
       "obj1,img/1.png,,\"[0]\",\"[3,3,7]\"\n");
  LoadReport report;
  const DatasetSplit split = load_dataset(dir / "d.train.csv", dir / "d.vocab.json", &report);
  CHECK(split.records[0].table.values("materials") == ValueList{"paper", "ink"});
  CHECK(report.duplicate_value_ids_dropped == 1);
}

TEST_CASE("save/load round-trips records, vocabularies and split name") {
  const auto dir = temp_dir("roundtrip");
  DatasetSplit split;
  split.name = "val";
  split.vocabularies.emplace("materials",
                             ValueVocabulary("materials", {"paper", "ink", "comma, value"}));
  split.vocabularies.emplace("categories", ValueVocabulary("categories", {"prints"}));
  ExhibitRecord r1{"obj1", "img/1.png", "caption with, comma", {}};
  r1.table.set("materials", {"ink", "paper"});
  r1.table.set("categories", {});
  ExhibitRecord r2{"obj2", "img/2.png", "", {}};
  r2.table.set("materials", {"comma, value"});
  r2.table.set("categories", {"prints"});
  split.records = {r1, r2};

  save_dataset(split, dir / "rt.val.csv", dir / "rt.vocab.json");
  const DatasetSplit loaded = load_dataset(dir / "rt.val.csv", dir / "rt.vocab.json");
  CHECK(loaded == split);

  // second save of the loaded data is byte-identical
  save_dataset(loaded, dir / "rt2.val.csv", dir / "rt2.vocab.json");
  CHECK(slurp(dir / "rt.val.csv") == slurp(dir / "rt2.val.csv"));
  CHECK(slurp(dir / "rt.vocab.json") == slurp(dir / "rt2.vocab.json"));
}

TEST_CASE("save_dataset extends the vocabulary for unseen values") {
  const auto dir = temp_dir("extend");
  DatasetSplit split;
  split.name = "train";
  split.vocabularies.emplace("materials", ValueVocabulary("materials", {"paper"}));
  ExhibitRecord rec{"obj1", "img/1.png", "", {}};
  rec.table.set("materials", {"paper", "bronze"});
  split.records = {rec};
  save_dataset(split, dir / "e.train.csv", dir / "e.vocab.json");

  const auto doc = nlohmann::json::parse(slurp(dir / "e.vocab.json"));
  CHECK(doc.at("materials").size() == 2);  // grew by one id
  CHECK(doc.at("materials").at("bronze").get<int>() == 1);
}

TEST_CASE("empty split saves a header-only CSV") {
  const auto dir = temp_dir("empty");
  DatasetSplit split;
  split.name = "test";
  split.vocabularies.emplace("materials", ValueVocabulary("materials", {"paper"}));
  save_dataset(split, dir / "e.test.csv", dir / "e.vocab.json");
  CHECK(slurp(dir / "e.test.csv") == "object_id,image_path,caption,materials\n");
  const DatasetSplit loaded = load_dataset(dir / "e.test.csv", dir / "e.vocab.json");
  CHECK(loaded.records.empty());
  CHECK(loaded.name == "test");
}

TEST_CASE("randomized datasets round-trip through save/load byte-exactly") {
  const auto dir = temp_dir("fuzz_roundtrip");
  Rng rng(1234);
  for (int trial = 0; trial < 5; ++trial) {
    DatasetSplit split;
    split.name = "train";
    const int n_attrs = 1 + static_cast<int>(rng.below(4));
    std::vector<std::string> attrs;
    for (int a = 0; a < n_attrs; ++a) {
      const std::string name = "attr" + std::to_string(a);
      attrs.push_back(name);
      std::vector<std::string> values;
      const int n_values = 2 + static_cast<int>(rng.below(5));
      for (int v = 0; v < n_values; ++v) {
        values.push_back("value_" + std::to_string(trial) + "_" + std::to_string(a) + "_" +
                         std::to_string(v));
      }
      split.vocabularies.emplace(name, ValueVocabulary(name, values));
    }
    const int n_records = static_cast<int>(rng.below(8));
    for (int r = 0; r < n_records; ++r) {
      ExhibitRecord rec{"obj" + std::to_string(r), "img/" + std::to_string(r) + ".png", "", {}};
      for (const auto& attr : attrs) {
        const auto& vocab = split.vocabularies.at(attr);
        ValueList values;
        const int k = static_cast<int>(rng.below(3));
        for (int i = 0; i < k; ++i) {
          const std::string v = vocab.value_of(static_cast<int>(rng.below(vocab.size())));
          if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
        }
        rec.table.set(attr, values);
      }
      split.records.push_back(std::move(rec));
    }
    save_dataset(split, dir / "f.train.csv", dir / "f.vocab.json");
    const DatasetSplit loaded = load_dataset(dir / "f.train.csv", dir / "f.vocab.json");
    CHECK(loaded == split);
    save_dataset(loaded, dir / "f2.train.csv", dir / "f2.vocab.json");
    CHECK(slurp(dir / "f.train.csv") == slurp(dir / "f2.train.csv"));
    CHECK(slurp(dir / "f.vocab.json") == slurp(dir / "f2.vocab.json"));
  }
}

TEST_CASE("dataset naming conventions") {
  CHECK(vocab_path_for("data/muse.train.csv") == fs::path("data/muse.vocab.json"));
  CHECK(vocab_path_for("data/muse.test.csv") == fs::path("data/muse.vocab.json"));
  CHECK(vocab_path_for("data/odd.csv") == fs::path("data/odd.vocab.json"));
  CHECK(split_name_for("muse.val.csv") == "val");
  CHECK(split_name_for("muse.csv") == "train");
}
