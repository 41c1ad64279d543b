#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace muze::data {

// Canonical attribute ordering: case-insensitive alphabetical, byte-wise
// tie-break. This single order drives caption construction, model input
// layout, and CSV column order, so outputs stay deterministic.
struct AttributeNameLess {
  bool operator()(const std::string& a, const std::string& b) const;
};

using ValueList = std::vector<std::string>;

// One record's attribute table. An empty value list means the attribute is
// unknown for this record; an empty string is not a valid value.
class AttributeTable {
public:
  using Map = std::map<std::string, ValueList, AttributeNameLess>;

  AttributeTable() = default;
  AttributeTable(std::initializer_list<std::pair<std::string, ValueList>> init);

  void set(const std::string& attr, ValueList values);
  void erase(const std::string& attr) { entries_.erase(attr); }
  bool has(const std::string& attr) const { return entries_.count(attr) != 0; }
  bool known(const std::string& attr) const;
  // Throws UnknownAttributeError for names not present in the table.
  const ValueList& values(const std::string& attr) const;

  std::vector<std::string> attribute_names() const;
  std::vector<std::string> known_attributes() const;
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Map& entries() const { return entries_; }

  bool operator==(const AttributeTable&) const = default;

private:
  Map entries_;
};

struct ExhibitRecord {
  std::string object_id;
  std::string image_ref;
  std::string caption;
  AttributeTable table;

  bool operator==(const ExhibitRecord&) const = default;
};

// Per-attribute value set with stable numeric ids 0..size()-1.
class ValueVocabulary {
public:
  ValueVocabulary() = default;
  ValueVocabulary(std::string attribute, std::vector<std::string> values);

  // Returns the existing id or appends the value with the next id.
  int add(const std::string& value);
  std::optional<int> id_of(const std::string& value) const;
  const std::string& value_of(int id) const;  // throws UnknownIdError
  int size() const { return static_cast<int>(values_.size()); }
  // Treated as a closed-set retrieval target when the value set is mid-sized.
  bool classifiable() const { return size() >= 200 && size() <= 10000; }
  const std::string& attribute() const { return attribute_; }
  const std::vector<std::string>& values() const { return values_; }

  bool operator==(const ValueVocabulary& o) const {
    return attribute_ == o.attribute_ && values_ == o.values_;
  }

private:
  std::string attribute_;
  std::vector<std::string> values_;
  std::unordered_map<std::string, int> ids_;
};

using VocabularyMap = std::map<std::string, ValueVocabulary, AttributeNameLess>;

struct DatasetSplit {
  std::string name;  // train | val | test
  std::vector<ExhibitRecord> records;
  VocabularyMap vocabularies;

  bool operator==(const DatasetSplit&) const = default;
};

struct TablePartition {
  AttributeTable query;    // attributes whose values are to be predicted
  AttributeTable context;  // known attribute-value pairs fed to the model
};

struct LoadReport {
  size_t records = 0;
  // Duplicate ids inside a cell are collapsed on load.
  size_t duplicate_value_ids_dropped = 0;
};

// CSV layout: header `object_id,image_path,caption,<attr_1>,...,<attr_k>`,
// attribute cells are JSON integer arrays resolved through the vocabulary
// JSON ({attribute: {value: id}}).
DatasetSplit load_dataset(const std::filesystem::path& csv_path,
                          const std::filesystem::path& vocab_json_path,
                          LoadReport* report = nullptr);

// Inverse of load_dataset; vocabularies are extended (in the written JSON)
// with any record values they do not already cover.
void save_dataset(const DatasetSplit& split, const std::filesystem::path& csv_path,
                  const std::filesystem::path& vocab_json_path);

// Values of the selected attributes, alphabetically ordered, joined by single
// spaces. Unknown attributes contribute nothing.
std::string build_caption(const AttributeTable& table,
                          const std::vector<std::string>& attributes_of_interest);

enum class PartitionMode {
  Inference,  // query attributes may be unknown
  Training,   // every query attribute needs at least one value
};

// Splits a table into disjoint query/context parts. Context keeps only
// attributes with known values.
TablePartition partition_table(const AttributeTable& table,
                               const std::set<std::string>& query_attrs,
                               PartitionMode mode = PartitionMode::Inference);

// `<dataset>.<split>.csv` -> `<dataset>.vocab.json`; falls back to
// `<stem>.vocab.json` when the name does not follow the split convention.
std::filesystem::path vocab_path_for(const std::filesystem::path& csv_path);
// Split name from `<dataset>.<split>.csv`, or "train" when unrecognizable.
std::string split_name_for(const std::filesystem::path& csv_path);

}  // namespace muze::data
