#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "data_model.hpp"

namespace muze::synth {

enum class Dependency {
  Independent,       // uniform over the vocabulary
  ImageDetermined,   // value words are baked into the image key
  ContextDetermined, // seeded function of another attribute's value
};

struct AttributeSpec {
  std::string name;
  int vocab_size = 2;
  Dependency dependency = Dependency::Independent;
  std::string source_attr;   // ContextDetermined only
  uint64_t mapping_seed = 0; // ContextDetermined only
};

struct SyntheticSpec {
  int n_records = 0;
  std::vector<AttributeSpec> attributes;
  double missing_rate = 0.0;
  uint64_t seed = 0;

  void validate() const;  // acyclic dependencies, vocab sizes >= 2
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
  static SyntheticSpec from_json_file(const std::filesystem::path& path);
};

// Generated records plus the ground truth the generator used, so tests can
// check predictions against the true dependency functions.
struct GeneratedDataset {
  std::vector<data::ExhibitRecord> records;
  data::VocabularyMap vocabularies;
  // per attribute: the value id assigned to each record before hiding
  std::map<std::string, std::vector<int>> assigned_ids;
  // per ContextDetermined attribute: source value id -> this attribute's id
  std::map<std::string, std::vector<int>> context_mappings;
};

// Deterministic in the spec. Value strings come from a fixed word list so the
// stub encoder's token geometry keeps them apart; image keys carry the words
// of every ImageDetermined value. Each attribute value is hidden
// independently with probability missing_rate after all dependencies are
// resolved.
GeneratedDataset generate(const SyntheticSpec& spec);

// Top-1 accuracy of uninformed guessing; uniform vocabularies in v1.
double chance_level(const SyntheticSpec& spec, const std::string& attr);

// Contiguous deterministic split with disjoint ids: train | val | test.
std::array<data::DatasetSplit, 3> split_benchmark(const GeneratedDataset& dataset,
                                                  double train_frac, double val_frac);

// Writes `<base>.{train,val,test}.csv` and `<base>.vocab.json` next to the
// given path ("<base>.csv" or "<base>").
void write_benchmark(const GeneratedDataset& dataset, const std::filesystem::path& out_csv,
                     double train_frac = 0.8, double val_frac = 0.1);

}  // namespace muze::synth
