#include "data_model.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "csv.hpp"
#include "errors.hpp"

namespace muze::data {

using nlohmann::json;

bool AttributeNameLess::operator()(const std::string& a, const std::string& b) const {
  const size_t n = std::min(a.size(), b.size());
  for (size_t i = 0; i < n; ++i) {
    const int ca = std::tolower(static_cast<unsigned char>(a[i]));
    const int cb = std::tolower(static_cast<unsigned char>(b[i]));
    if (ca != cb) return ca < cb;
  }
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

AttributeTable::AttributeTable(std::initializer_list<std::pair<std::string, ValueList>> init) {
  for (const auto& [attr, values] : init) set(attr, values);
}

void AttributeTable::set(const std::string& attr, ValueList values) {
  if (attr.empty()) throw DataError("attribute name must be non-empty");
  for (const auto& v : values) {
    if (v.empty()) throw DataError("empty string is not a valid value (attribute '" + attr + "')");
  }
  entries_[attr] = std::move(values);
}

bool AttributeTable::known(const std::string& attr) const {
  auto it = entries_.find(attr);
  return it != entries_.end() && !it->second.empty();
}

const ValueList& AttributeTable::values(const std::string& attr) const {
  auto it = entries_.find(attr);
  if (it == entries_.end()) throw UnknownAttributeError("unknown attribute: " + attr);
  return it->second;
}

std::vector<std::string> AttributeTable::attribute_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& [attr, _] : entries_) names.push_back(attr);
  return names;
}

std::vector<std::string> AttributeTable::known_attributes() const {
  std::vector<std::string> names;
  for (const auto& [attr, values] : entries_) {
    if (!values.empty()) names.push_back(attr);
  }
  return names;
}

ValueVocabulary::ValueVocabulary(std::string attribute, std::vector<std::string> values)
    : attribute_(std::move(attribute)) {
  values_.reserve(values.size());
  for (auto& v : values) add(v);
}

int ValueVocabulary::add(const std::string& value) {
  if (value.empty()) throw DataError("empty string is not a valid vocabulary value ('" + attribute_ + "')");
  auto it = ids_.find(value);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(values_.size());
  values_.push_back(value);
  ids_.emplace(value, id);
  return id;
}

std::optional<int> ValueVocabulary::id_of(const std::string& value) const {
  auto it = ids_.find(value);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& ValueVocabulary::value_of(int id) const {
  if (id < 0 || id >= size()) {
    throw UnknownIdError("id " + std::to_string(id) + " not in vocabulary of '" + attribute_ + "'");
  }
  return values_[static_cast<size_t>(id)];
}

namespace {

VocabularyMap load_vocabularies(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary JSON: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("invalid vocabulary JSON (" + path.string() + "): " + e.what());
  }
  if (!doc.is_object()) throw DataError("vocabulary JSON must be an object: " + path.string());

  VocabularyMap vocabs;
  for (auto& [attr, mapping] : doc.items()) {
    if (!mapping.is_object()) {
      throw DataError("vocabulary entry for '" + attr + "' must map value -> id");
    }
    std::vector<std::string> values(mapping.size());
    std::vector<bool> seen(mapping.size(), false);
    for (auto& [value, id_json] : mapping.items()) {
      if (!id_json.is_number_integer()) {
        throw DataError("non-integer id for value '" + value + "' of '" + attr + "'");
      }
      const long long id = id_json.get<long long>();
      if (id < 0 || id >= static_cast<long long>(mapping.size()) || seen[static_cast<size_t>(id)]) {
        throw DataError("vocabulary ids of '" + attr + "' must be a bijection onto 0.." +
                        std::to_string(mapping.size() ? mapping.size() - 1 : 0));
      }
      if (value.empty()) throw DataError("empty string value in vocabulary of '" + attr + "'");
      seen[static_cast<size_t>(id)] = true;
      values[static_cast<size_t>(id)] = value;
    }
    vocabs.emplace(attr, ValueVocabulary(attr, std::move(values)));
  }
  return vocabs;
}

ValueList resolve_cell(const std::string& cell, const ValueVocabulary& vocab,
                       const std::string& attr, size_t row, LoadReport& report) {
  json arr;
  try {
    arr = json::parse(cell);
  } catch (const json::exception&) {
    throw MalformedCellError("row " + std::to_string(row) + ", attribute '" + attr +
                             "': cell is not a JSON array: " + cell);
  }
  if (!arr.is_array()) {
    throw MalformedCellError("row " + std::to_string(row) + ", attribute '" + attr +
                             "': cell is not a JSON array: " + cell);
  }
  ValueList values;
  std::unordered_set<int> used;
  for (const auto& item : arr) {
    if (!item.is_number_integer()) {
      throw MalformedCellError("row " + std::to_string(row) + ", attribute '" + attr +
                               "': non-integer id in cell: " + cell);
    }
    const int id = item.get<int>();
    if (id < 0 || id >= vocab.size()) {
      throw UnknownIdError("row " + std::to_string(row) + ", attribute '" + attr + "': id " +
                           std::to_string(id) + " not in vocabulary");
    }
    if (!used.insert(id).second) {
      ++report.duplicate_value_ids_dropped;
      continue;
    }
    values.push_back(vocab.value_of(id));
  }
  return values;
}

}  // namespace

DatasetSplit load_dataset(const std::filesystem::path& csv_path,
                          const std::filesystem::path& vocab_json_path, LoadReport* report) {
  LoadReport local;
  VocabularyMap vocabs = load_vocabularies(vocab_json_path);
  auto rows = csvio::read_file(csv_path);
  if (rows.empty()) throw DataError("dataset CSV has no header: " + csv_path.string());

  const auto& header = rows[0];
  if (header.size() < 3 || header[0] != "object_id" || header[1] != "image_path" ||
      header[2] != "caption") {
    throw DataError("dataset CSV header must start with object_id,image_path,caption: " +
                    csv_path.string());
  }
  std::vector<std::string> attr_cols(header.begin() + 3, header.end());
  for (const auto& attr : attr_cols) {
    if (!vocabs.count(attr)) {
      throw DataError("attribute column '" + attr + "' has no vocabulary entry");
    }
  }

  DatasetSplit split;
  split.name = split_name_for(csv_path);
  std::unordered_set<std::string> seen_ids;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;  // trailing blank line
    if (row.size() != header.size()) {
      throw MalformedCellError("row " + std::to_string(r) + ": expected " +
                               std::to_string(header.size()) + " cells, got " +
                               std::to_string(row.size()));
    }
    ExhibitRecord rec;
    rec.object_id = row[0];
    rec.image_ref = row[1];
    rec.caption = row[2];
    if (rec.object_id.empty()) throw DataError("row " + std::to_string(r) + ": empty object_id");
    if (rec.image_ref.empty()) throw DataError("row " + std::to_string(r) + ": empty image_path");
    if (!seen_ids.insert(rec.object_id).second) {
      throw DuplicateObjectIdError("duplicate object_id: " + rec.object_id);
    }
    for (size_t c = 0; c < attr_cols.size(); ++c) {
      const auto& attr = attr_cols[c];
      rec.table.set(attr, resolve_cell(row[3 + c], vocabs.at(attr), attr, r, local));
    }
    split.records.push_back(std::move(rec));
  }
  local.records = split.records.size();
  split.vocabularies = std::move(vocabs);
  if (report) *report = local;
  return split;
}

void save_dataset(const DatasetSplit& split, const std::filesystem::path& csv_path,
                  const std::filesystem::path& vocab_json_path) {
  // Extend a copy of the vocabularies with any values they do not cover yet,
  // and collect the full attribute column set.
  VocabularyMap vocabs = split.vocabularies;
  for (const auto& rec : split.records) {
    for (const auto& [attr, values] : rec.table.entries()) {
      auto it = vocabs.find(attr);
      if (it == vocabs.end()) it = vocabs.emplace(attr, ValueVocabulary(attr, {})).first;
      for (const auto& v : values) it->second.add(v);
    }
  }

  std::vector<std::string> attr_cols;
  for (const auto& [attr, _] : vocabs) attr_cols.push_back(attr);

  std::vector<csvio::Row> rows;
  csvio::Row header = {"object_id", "image_path", "caption"};
  header.insert(header.end(), attr_cols.begin(), attr_cols.end());
  rows.push_back(std::move(header));

  for (const auto& rec : split.records) {
    csvio::Row row = {rec.object_id, rec.image_ref, rec.caption};
    for (const auto& attr : attr_cols) {
      json ids = json::array();
      if (rec.table.has(attr)) {
        for (const auto& v : rec.table.values(attr)) ids.push_back(*vocabs.at(attr).id_of(v));
      }
      row.push_back(ids.dump());
    }
    rows.push_back(std::move(row));
  }
  csvio::write_file(csv_path, rows);

  json doc = json::object();
  for (const auto& [attr, vocab] : vocabs) {
    json mapping = json::object();
    for (int id = 0; id < vocab.size(); ++id) mapping[vocab.value_of(id)] = id;
    doc[attr] = std::move(mapping);
  }
  std::ofstream out(vocab_json_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary JSON: " + vocab_json_path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + vocab_json_path.string());
}

std::string build_caption(const AttributeTable& table,
                          const std::vector<std::string>& attributes_of_interest) {
  std::set<std::string, AttributeNameLess> selected;
  for (const auto& attr : attributes_of_interest) {
    if (!table.has(attr)) throw UnknownAttributeError("unknown attribute: " + attr);
    selected.insert(attr);
  }
  std::string caption;
  for (const auto& attr : selected) {
    for (const auto& v : table.values(attr)) {
      if (!caption.empty()) caption.push_back(' ');
      caption += v;
    }
  }
  return caption;
}

TablePartition partition_table(const AttributeTable& table,
                               const std::set<std::string>& query_attrs, PartitionMode mode) {
  TablePartition part;
  for (const auto& attr : query_attrs) {
    if (!table.has(attr)) throw UnknownAttributeError("unknown attribute: " + attr);
    const auto& values = table.values(attr);
    if (mode == PartitionMode::Training && values.empty()) {
      throw QueryAttributeUnknownError("query attribute '" + attr + "' has no value");
    }
    part.query.set(attr, values);
  }
  for (const auto& [attr, values] : table.entries()) {
    if (query_attrs.count(attr) || values.empty()) continue;
    part.context.set(attr, values);
  }
  return part;
}

std::filesystem::path vocab_path_for(const std::filesystem::path& csv_path) {
  const std::string name = csv_path.filename().string();
  for (const char* split : {".train.csv", ".val.csv", ".test.csv"}) {
    const std::string suffix = split;
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      return csv_path.parent_path() / (name.substr(0, name.size() - suffix.size()) + ".vocab.json");
    }
  }
  std::filesystem::path p = csv_path;
  p.replace_extension();
  return p.concat(".vocab.json");
}

std::string split_name_for(const std::filesystem::path& csv_path) {
  const std::string name = csv_path.filename().string();
  for (const char* split : {"train", "val", "test"}) {
    const std::string suffix = std::string(".") + split + ".csv";
    if (name.size() > suffix.size() && name.ends_with(suffix)) return split;
  }
  return "train";
}

}  // namespace muze::data
