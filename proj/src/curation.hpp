#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "data_model.hpp"

namespace muze::curation {

// Text cleanup rules. Term sets hold lowercase whole words or phrases
// ("made in"); matching against the input is case-insensitive on word
// boundaries.
struct CurationRules {
  std::set<std::string> uncertainty_terms;
  std::set<std::string> redundant_terms;
  bool strip_non_latin = true;
  std::string punctuation;  // characters replaced by spaces

  static const CurationRules& defaults();
};

// Full curation configuration as carried by a rules file.
struct CurationConfig {
  CurationRules rules;
  std::set<std::string> temporal_attributes;
  int long_text_threshold = 120;

  static CurationConfig defaults();
  static CurationConfig from_json_file(const std::filesystem::path& path);
  void to_json_file(const std::filesystem::path& path) const;
};

// Removes listed punctuation and non-Latin letters, strips uncertainty and
// redundant terms, collapses whitespace. Total and idempotent.
std::string clean_text(const std::string& raw, const CurationRules& rules = CurationRules::defaults());

// Splits the paragraph into phrases at sentence punctuation and extracts up
// to k keywords per phrase (n-grams up to max_ngram tokens). Candidates are
// scored by term frequency plus a position bonus: score = freq + 1/(1+pos),
// where pos is the candidate's first token index in the phrase. Candidates
// never start or end with a stop word. Deterministic for fixed input.
std::vector<std::string> shorten_text(const std::string& paragraph, int k = 10, int max_ngram = 3);

struct CenturyRef {
  int century = 1;  // >= 1
  enum class Era { AC, BC } era = Era::AC;

  // Position on a BC-before-AC axis, for chronological comparisons.
  int chronological_key() const { return era == Era::BC ? -century : century; }
  std::string render() const;  // "17th AC", "5th BC"
  bool operator==(const CenturyRef&) const = default;
};

struct CenturyInterval {
  CenturyRef start;
  std::optional<CenturyRef> end;  // absent: a single century

  std::string render() const;  // "5th BC-4th AC"
};

// Year y AD belongs to century ceil(y/100) AC; likewise for BC.
CenturyRef century_of_year(int year, CenturyRef::Era era);

// Maps year tokens (optionally marked BC/BCE/AD/AC/CE) to the century
// rendering; two temporal tokens joined by '-' become an interval. Already
// rendered centuries ("17th AC") parse back to themselves. Returns "" when no
// temporal token is found.
std::string normalize_temporal(const std::string& raw,
                               const CurationRules& rules = CurationRules::defaults());

// Applies clean_text to every value, shortens values longer than the
// threshold, and normalizes values of temporal attributes. Values that curate
// to the empty string are dropped; duplicates collapse. Pure function.
data::ExhibitRecord curate_record(const data::ExhibitRecord& record, const CurationConfig& config);

}  // namespace muze::curation
