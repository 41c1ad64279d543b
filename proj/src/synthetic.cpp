#include "synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <unordered_set>

#include "errors.hpp"
#include "rng.hpp"

namespace muze::synth {

using nlohmann::json;

namespace {

const std::vector<std::string>& adjectives() {
  static const std::vector<std::string> words = {
      "crimson", "azure",   "golden",  "ivory",   "obsidian", "amber",   "scarlet", "violet",
      "bronze",  "silver",  "emerald", "cobalt",  "umber",    "ochre",   "pale",    "dark",
      "gilded",  "carved",  "woven",   "painted", "glazed",   "etched",  "cast",    "forged",
      "ancient", "ornate",  "rustic",  "polished", "fluted",  "ribbed",  "hollow",  "solid",
      "curved",  "angular", "slender", "broad",   "tall",     "small",   "heavy",   "light",
      "northern", "eastern", "coastal", "alpine",  "desert",  "island",  "river",   "forest"};
  return words;
}

const std::vector<std::string>& nouns() {
  static const std::vector<std::string> words = {
      "falcon",  "vase",    "amphora", "tapestry", "goblet",  "helmet",  "brooch",  "lantern",
      "chalice", "figurine", "mask",   "scroll",   "dagger",  "mirror",  "pendant", "shield",
      "basin",   "urn",      "coin",   "medallion", "statue", "plaque",  "censer",  "flask",
      "beaker",  "casket",   "comb",   "spindle",  "loom",    "anvil",   "chisel",  "quill",
      "drum",    "flute",    "lyre",   "bell",     "banner",  "saddle",  "stirrup", "buckle",
      "anchor",  "compass",  "sextant", "astrolabe", "sundial", "orrery", "globe",  "prism",
      "tile",    "fresco",   "mosaic", "icon",     "relief",  "bust",    "torso",   "column"};
  return words;
}

std::vector<std::string> make_vocabulary_values(const std::string& attr, int vocab_size,
                                                uint64_t seed) {
  Rng rng(hash_str("vocab:" + attr, seed));
  std::vector<std::string> values;
  std::unordered_set<std::string> used;
  const auto& adj = adjectives();
  const auto& nn = nouns();
  const size_t max_unique = adj.size() * nn.size();
  if (static_cast<size_t>(vocab_size) > max_unique) {
    throw ConfigError("synthetic vocabulary for '" + attr + "' larger than the word-pair space");
  }
  while (values.size() < static_cast<size_t>(vocab_size)) {
    const std::string v = adj[static_cast<size_t>(rng.below(adj.size()))] + " " +
                          nn[static_cast<size_t>(rng.below(nn.size()))];
    if (used.insert(v).second) values.push_back(v);
  }
  return values;
}

std::vector<size_t> topological_order(const SyntheticSpec& spec) {
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < spec.attributes.size(); ++i) {
    if (!index.emplace(spec.attributes[i].name, i).second) {
      throw ConfigError("duplicate synthetic attribute '" + spec.attributes[i].name + "'");
    }
  }
  std::vector<size_t> order;
  std::vector<int> state(spec.attributes.size(), 0);  // 0 new, 1 visiting, 2 done
  std::function<void(size_t)> visit = [&](size_t i) {
    if (state[i] == 2) return;
    if (state[i] == 1) {
      throw CyclicDependencyError("cycle through synthetic attribute '" +
                                  spec.attributes[i].name + "'");
    }
    state[i] = 1;
    const auto& a = spec.attributes[i];
    if (a.dependency == Dependency::ContextDetermined) {
      auto it = index.find(a.source_attr);
      if (it == index.end()) {
        throw ConfigError("synthetic attribute '" + a.name + "' depends on unknown '" +
                          a.source_attr + "'");
      }
      visit(it->second);
    }
    state[i] = 2;
    order.push_back(i);
  };
  for (size_t i = 0; i < spec.attributes.size(); ++i) visit(i);
  return order;
}

std::string word_suffix(const std::string& value) {
  std::string out;
  for (char c : value) out.push_back(c == ' ' ? '_' : c);
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_records < 1) throw ConfigError("synthetic: n_records must be >= 1");
  if (missing_rate < 0.0 || missing_rate >= 1.0) {
    throw ConfigError("synthetic: missing_rate must be in [0, 1)");
  }
  if (attributes.empty()) throw ConfigError("synthetic: at least one attribute");
  for (const auto& a : attributes) {
    if (a.name.empty()) throw ConfigError("synthetic: attribute name must be non-empty");
    if (a.vocab_size < 2) throw ConfigError("synthetic: vocabulary sizes must be >= 2");
  }
  topological_order(*this);  // throws on cycles / unknown sources
}

json SyntheticSpec::to_json() const {
  json attrs = json::array();
  for (const auto& a : attributes) {
    json ja{{"name", a.name}, {"vocab_size", a.vocab_size}};
    switch (a.dependency) {
      case Dependency::Independent: ja["dependency"] = "independent"; break;
      case Dependency::ImageDetermined: ja["dependency"] = "image"; break;
      case Dependency::ContextDetermined:
        ja["dependency"] = "context";
        ja["source_attr"] = a.source_attr;
        ja["mapping_seed"] = a.mapping_seed;
        break;
    }
    attrs.push_back(std::move(ja));
  }
  return {{"n_records", n_records},
          {"attributes", attrs},
          {"missing_rate", missing_rate},
          {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
  SyntheticSpec spec;
  spec.n_records = j.at("n_records").get<int>();
  spec.missing_rate = j.value("missing_rate", 0.0);
  spec.seed = j.value("seed", uint64_t{0});
  for (const auto& ja : j.at("attributes")) {
    AttributeSpec a;
    a.name = ja.at("name").get<std::string>();
    a.vocab_size = ja.at("vocab_size").get<int>();
    const std::string dep = ja.value("dependency", "independent");
    if (dep == "independent") {
      a.dependency = Dependency::Independent;
    } else if (dep == "image") {
      a.dependency = Dependency::ImageDetermined;
    } else if (dep == "context") {
      a.dependency = Dependency::ContextDetermined;
      a.source_attr = ja.at("source_attr").get<std::string>();
      a.mapping_seed = ja.value("mapping_seed", uint64_t{0});
    } else {
      throw ConfigError("synthetic: unknown dependency '" + dep + "'");
    }
    spec.attributes.push_back(std::move(a));
  }
  spec.validate();
  return spec;
}

SyntheticSpec SyntheticSpec::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open synthetic spec: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("invalid synthetic spec JSON (" + path.string() + "): " + e.what());
  }
  return from_json(doc);
}

GeneratedDataset generate(const SyntheticSpec& spec) {
  spec.validate();
  GeneratedDataset out;

  std::map<std::string, const AttributeSpec*> by_name;
  for (const auto& a : spec.attributes) by_name[a.name] = &a;

  for (const auto& a : spec.attributes) {
    out.vocabularies.emplace(
        a.name, data::ValueVocabulary(a.name, make_vocabulary_values(a.name, a.vocab_size, spec.seed)));
    out.assigned_ids[a.name].resize(static_cast<size_t>(spec.n_records));
    if (a.dependency == Dependency::ContextDetermined) {
      const int src_size = by_name.at(a.source_attr)->vocab_size;
      std::vector<int> perm(static_cast<size_t>(a.vocab_size));
      for (int i = 0; i < a.vocab_size; ++i) perm[static_cast<size_t>(i)] = i;
      Rng perm_rng(hash_str("mapping:" + a.name, spec.seed ^ a.mapping_seed));
      perm_rng.shuffle(perm);
      std::vector<int>& mapping = out.context_mappings[a.name];
      mapping.resize(static_cast<size_t>(src_size));
      for (int s = 0; s < src_size; ++s) mapping[static_cast<size_t>(s)] = perm[static_cast<size_t>(s % a.vocab_size)];
    }
  }

  const auto order = topological_order(spec);
  std::map<std::string, Rng> draw_rngs;
  for (const auto& a : spec.attributes) {
    draw_rngs.emplace(a.name, Rng(hash_str("draw:" + a.name, spec.seed)));
  }
  Rng missing_rng(hash_str("missing", spec.seed));

  out.records.reserve(static_cast<size_t>(spec.n_records));
  for (int r = 0; r < spec.n_records; ++r) {
    data::ExhibitRecord rec;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "syn_%06d", r);
    rec.object_id = idbuf;

    for (size_t oi : order) {
      const auto& a = spec.attributes[oi];
      int id = 0;
      switch (a.dependency) {
        case Dependency::Independent:
        case Dependency::ImageDetermined:
          id = static_cast<int>(draw_rngs.at(a.name).below(static_cast<uint64_t>(a.vocab_size)));
          break;
        case Dependency::ContextDetermined: {
          const int src_id = out.assigned_ids.at(a.source_attr)[static_cast<size_t>(r)];
          id = out.context_mappings.at(a.name)[static_cast<size_t>(src_id)];
          break;
        }
      }
      out.assigned_ids.at(a.name)[static_cast<size_t>(r)] = id;
    }

    // image key carries the words of every image-determined value
    std::string image_ref = std::string("img/") + idbuf;
    for (const auto& [attr, vocab] : out.vocabularies) {
      if (by_name.at(attr)->dependency != Dependency::ImageDetermined) continue;
      const int id = out.assigned_ids.at(attr)[static_cast<size_t>(r)];
      image_ref += "_" + word_suffix(vocab.value_of(id));
    }
    rec.image_ref = image_ref + ".png";

    for (const auto& [attr, vocab] : out.vocabularies) {
      const int id = out.assigned_ids.at(attr)[static_cast<size_t>(r)];
      if (spec.missing_rate > 0.0 && missing_rng.uniform() < spec.missing_rate) {
        rec.table.set(attr, {});
      } else {
        rec.table.set(attr, {vocab.value_of(id)});
      }
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

double chance_level(const SyntheticSpec& spec, const std::string& attr) {
  for (const auto& a : spec.attributes) {
    if (a.name == attr) return 1.0 / static_cast<double>(a.vocab_size);
  }
  throw UnknownAttributeError("synthetic spec has no attribute '" + attr + "'");
}

std::array<data::DatasetSplit, 3> split_benchmark(const GeneratedDataset& dataset,
                                                  double train_frac, double val_frac) {
  if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0) {
    throw ConfigError("invalid split fractions");
  }
  const size_t n = dataset.records.size();
  const size_t n_train = static_cast<size_t>(train_frac * static_cast<double>(n));
  const size_t n_val = static_cast<size_t>(val_frac * static_cast<double>(n));
  std::array<data::DatasetSplit, 3> splits;
  splits[0].name = "train";
  splits[1].name = "val";
  splits[2].name = "test";
  for (auto& s : splits) s.vocabularies = dataset.vocabularies;
  for (size_t i = 0; i < n; ++i) {
    const size_t which = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
    splits[which].records.push_back(dataset.records[i]);
  }
  return splits;
}

void write_benchmark(const GeneratedDataset& dataset, const std::filesystem::path& out_csv,
                     double train_frac, double val_frac) {
  std::string base = out_csv.string();
  if (base.ends_with(".csv")) base.resize(base.size() - 4);
  const auto splits = split_benchmark(dataset, train_frac, val_frac);
  for (const auto& split : splits) {
    data::save_dataset(split, base + "." + split.name + ".csv", base + ".vocab.json");
  }
}

}  // namespace muze::synth
