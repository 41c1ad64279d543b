#include "curation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "errors.hpp"

namespace muze::curation {

using nlohmann::json;

namespace {

bool is_latin_letter(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_word_char(unsigned char c) { return is_latin_letter(c) || std::isdigit(c) || c == '\''; }

std::string to_lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string collapse_spaces(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

// Removes whole-word, case-insensitive occurrences of every term. Terms may
// be multi-word phrases; matches must sit on word boundaries.
std::string strip_terms(const std::string& text, const std::set<std::string>& terms) {
  if (terms.empty() || text.empty()) return text;
  const std::string lower = to_lower(text);
  std::vector<bool> removed(text.size(), false);
  for (const auto& term : terms) {
    if (term.empty()) continue;
    size_t pos = 0;
    while ((pos = lower.find(term, pos)) != std::string::npos) {
      const size_t end = pos + term.size();
      const bool left_ok = pos == 0 || !is_word_char(static_cast<unsigned char>(lower[pos - 1]));
      const bool right_ok = end >= lower.size() || !is_word_char(static_cast<unsigned char>(lower[end]));
      if (left_ok && right_ok) {
        for (size_t i = pos; i < end; ++i) removed[i] = true;
        pos = end;
      } else {
        ++pos;
      }
    }
  }
  std::string out;
  out.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    if (!removed[i]) out.push_back(text[i]);
  }
  return out;
}

std::string clean_once(const std::string& raw, const CurationRules& rules) {
  std::string buf;
  buf.reserve(raw.size());
  for (unsigned char c : raw) {
    if (rules.punctuation.find(static_cast<char>(c)) != std::string::npos) {
      buf.push_back(' ');
    } else if (c >= 0x80) {
      if (!rules.strip_non_latin) buf.push_back(static_cast<char>(c));
      // multi-byte sequences are outside the Latin alphabet: dropped
    } else if (is_latin_letter(c) || std::isdigit(c) || std::isspace(c) || c == '-' || c == '\'') {
      buf.push_back(static_cast<char>(c));
    }
    // remaining ASCII symbols are dropped
  }
  buf = strip_terms(buf, rules.uncertainty_terms);
  buf = strip_terms(buf, rules.redundant_terms);
  return collapse_spaces(buf);
}

const std::set<std::string>& stop_words() {
  static const std::set<std::string> words = {
      "a",      "about",  "after",  "again",   "all",   "an",     "and",   "any",    "are",
      "as",     "at",     "be",     "been",    "before", "between", "both", "but",    "by",
      "can",    "could",  "did",    "do",      "does",  "down",   "during", "each",  "few",
      "for",    "from",   "further", "had",    "has",   "have",   "he",    "her",    "here",
      "his",    "how",    "i",      "if",      "in",    "into",   "is",    "it",     "its",
      "may",    "might",  "more",   "most",    "must",  "no",     "not",   "now",    "of",
      "off",    "on",     "once",   "only",    "or",    "other",  "our",   "out",    "over",
      "own",    "same",   "shall",  "she",     "should", "so",    "some",  "such",   "than",
      "that",   "the",    "their",  "them",    "then",  "there",  "these", "they",   "this",
      "those",  "through", "to",    "too",     "under", "until",  "up",    "very",   "was",
      "we",     "were",   "when",   "where",   "which", "while",  "who",   "will",   "with",
      "would",  "you",    "your"};
  return words;
}

std::vector<std::string> phrase_tokens(const std::string& phrase) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : phrase) {
    if (is_latin_letter(c) || std::isdigit(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

struct Candidate {
  std::string text;
  double score;
  int first_pos;
};

std::vector<Candidate> phrase_candidates(const std::vector<std::string>& tokens, int max_ngram) {
  // frequency of each exact n-gram + first occurrence position
  std::map<std::string, std::pair<int, int>> stats;  // text -> (count, first_pos)
  for (int n = 1; n <= max_ngram; ++n) {
    for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
      if (stop_words().count(tokens[i]) || stop_words().count(tokens[i + static_cast<size_t>(n) - 1])) {
        continue;  // no stop word at either edge
      }
      std::string text = tokens[i];
      for (int j = 1; j < n; ++j) {
        text.push_back(' ');
        text += tokens[i + static_cast<size_t>(j)];
      }
      auto [it, inserted] = stats.emplace(text, std::make_pair(1, static_cast<int>(i)));
      if (!inserted) ++it->second.first;
    }
  }
  std::vector<Candidate> out;
  out.reserve(stats.size());
  for (const auto& [text, cs] : stats) {
    out.push_back({text, static_cast<double>(cs.first) + 1.0 / (1.0 + cs.second), cs.second});
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.first_pos != b.first_pos) return a.first_pos < b.first_pos;
    return a.text < b.text;
  });
  return out;
}

}  // namespace

const CurationRules& CurationRules::defaults() {
  static const CurationRules rules = [] {
    CurationRules r;
    r.uncertainty_terms = {"probably", "possibly", "about",         "around", "perhaps",
                           "ca",       "circa",    "approximately", "maybe",  "likely"};
    r.redundant_terms = {"representation", "made in", "note", "translation"};
    r.strip_non_latin = true;
    r.punctuation = ",.;:!?\"()[]{}<>/\\|_*+=~`@#$%^&";
    return r;
  }();
  return rules;
}

CurationConfig CurationConfig::defaults() {
  CurationConfig cfg;
  cfg.rules = CurationRules::defaults();
  cfg.temporal_attributes = {"productionDates", "Production date"};
  cfg.long_text_threshold = 120;
  return cfg;
}

CurationConfig CurationConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open rules file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("invalid rules JSON (" + path.string() + "): " + e.what());
  }
  CurationConfig cfg = defaults();
  auto read_terms = [&](const char* key, std::set<std::string>& target) {
    if (!doc.contains(key)) return;
    target.clear();
    for (const auto& term : doc.at(key)) target.insert(to_lower(term.get<std::string>()));
  };
  read_terms("uncertainty_terms", cfg.rules.uncertainty_terms);
  read_terms("redundant_terms", cfg.rules.redundant_terms);
  if (doc.contains("punctuation")) cfg.rules.punctuation = doc.at("punctuation").get<std::string>();
  if (doc.contains("strip_non_latin")) cfg.rules.strip_non_latin = doc.at("strip_non_latin").get<bool>();
  if (doc.contains("temporal_attributes")) {
    cfg.temporal_attributes.clear();
    for (const auto& attr : doc.at("temporal_attributes")) {
      cfg.temporal_attributes.insert(attr.get<std::string>());
    }
  }
  if (doc.contains("long_text_threshold")) {
    cfg.long_text_threshold = doc.at("long_text_threshold").get<int>();
    if (cfg.long_text_threshold < 1) throw ConfigError("long_text_threshold must be >= 1");
  }
  return cfg;
}

void CurationConfig::to_json_file(const std::filesystem::path& path) const {
  json doc;
  doc["version"] = 1;
  doc["uncertainty_terms"] = rules.uncertainty_terms;
  doc["redundant_terms"] = rules.redundant_terms;
  doc["punctuation"] = rules.punctuation;
  doc["strip_non_latin"] = rules.strip_non_latin;
  doc["temporal_attributes"] = temporal_attributes;
  doc["long_text_threshold"] = long_text_threshold;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write rules file: " + path.string());
  out << doc.dump(2) << '\n';
}

std::string clean_text(const std::string& raw, const CurationRules& rules) {
  // Term removal can splice word fragments into a new term occurrence;
  // iterate to the fixed point so the function is idempotent.
  std::string cur = clean_once(raw, rules);
  for (int guard = 0; guard < 64; ++guard) {
    std::string next = clean_once(cur, rules);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

std::vector<std::string> shorten_text(const std::string& paragraph, int k, int max_ngram) {
  if (k < 1 || max_ngram < 1) throw Error("shorten_text: k and max_ngram must be >= 1");
  std::vector<std::string> phrases;
  std::string cur;
  for (char c : paragraph) {
    if (c == '.' || c == ';' || c == '!' || c == '?') {
      phrases.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  phrases.push_back(cur);

  std::vector<std::string> keywords;
  std::unordered_set<std::string> seen;
  for (const auto& phrase : phrases) {
    auto tokens = phrase_tokens(phrase);
    if (tokens.empty()) continue;
    auto candidates = phrase_candidates(tokens, max_ngram);
    int taken = 0;
    for (const auto& cand : candidates) {
      if (taken >= k) break;
      if (seen.insert(cand.text).second) {
        keywords.push_back(cand.text);
        ++taken;
      }
    }
  }
  return keywords;
}

std::string CenturyRef::render() const {
  const int n = century;
  const int mod100 = n % 100;
  const int mod10 = n % 10;
  const char* suffix = "th";
  if (mod100 < 11 || mod100 > 13) {
    if (mod10 == 1) suffix = "st";
    else if (mod10 == 2) suffix = "nd";
    else if (mod10 == 3) suffix = "rd";
  }
  return std::to_string(n) + suffix + (era == Era::BC ? " BC" : " AC");
}

std::string CenturyInterval::render() const {
  if (!end || *end == start) return start.render();
  return start.render() + "-" + end->render();
}

CenturyRef century_of_year(int year, CenturyRef::Era era) {
  if (year < 1) throw Error("century_of_year: year must be >= 1");
  return CenturyRef{(year + 99) / 100, era};
}

namespace {

struct TemporalToken {
  CenturyRef ref;
  size_t token_index;
};

bool parse_era_word(const std::string& lower, CenturyRef::Era& era) {
  if (lower == "bc" || lower == "bce") {
    era = CenturyRef::Era::BC;
    return true;
  }
  if (lower == "ad" || lower == "ac" || lower == "ce") {
    era = CenturyRef::Era::AC;
    return true;
  }
  return false;
}

// "1650", "1650s", "450bc", "17th" -> (number, is_century, trailing era)
bool parse_numeric_token(const std::string& tok, long& number, bool& is_century,
                         bool& has_era, CenturyRef::Era& era) {
  size_t i = 0;
  std::string digits;
  while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) {
    digits.push_back(tok[i]);
    ++i;
  }
  if (digits.empty() || digits.size() > 4) return false;
  std::string rest = to_lower(tok.substr(i));
  is_century = false;
  has_era = false;
  if (rest == "st" || rest == "nd" || rest == "rd" || rest == "th") {
    is_century = true;
    rest.clear();
  } else if (rest == "s") {
    rest.clear();  // decade form, handled as the bare year
  }
  if (!rest.empty()) {
    CenturyRef::Era e;
    if (!parse_era_word(rest, e)) return false;
    has_era = true;
    era = e;
  }
  number = std::stol(digits);
  return number >= 1;
}

}  // namespace

std::string normalize_temporal(const std::string& raw, const CurationRules& rules) {
  const std::string cleaned = clean_text(raw, rules);
  if (cleaned.empty()) return "";

  // split on whitespace, breaking hyphenated ranges into parts
  std::vector<std::string> tokens;
  std::istringstream in(cleaned);
  std::string word;
  std::vector<bool> separator_before;  // '-' seen since the previous token
  bool pending_separator = false;
  while (in >> word) {
    size_t start = 0;
    for (size_t i = 0; i <= word.size(); ++i) {
      if (i == word.size() || word[i] == '-') {
        if (i > start) {
          tokens.push_back(word.substr(start, i - start));
          separator_before.push_back(pending_separator);
          pending_separator = false;
        }
        if (i < word.size()) pending_separator = true;
        start = i + 1;
      }
    }
  }

  std::vector<TemporalToken> found;
  std::vector<bool> consumed(tokens.size(), false);
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (consumed[i]) continue;
    long number = 0;
    bool is_century = false, has_era = false;
    CenturyRef::Era era = CenturyRef::Era::AC;
    if (!parse_numeric_token(tokens[i], number, is_century, has_era, era)) continue;
    if (!has_era && i + 1 < tokens.size() && !separator_before[i + 1]) {
      CenturyRef::Era next_era;
      if (parse_era_word(to_lower(tokens[i + 1]), next_era)) {
        era = next_era;
        has_era = true;
        consumed[i + 1] = true;
      }
    }
    CenturyRef ref = is_century ? CenturyRef{static_cast<int>(number), era}
                                : century_of_year(static_cast<int>(number), era);
    found.push_back({ref, i});
  }

  if (found.empty()) return "";
  if (found.size() >= 2) {
    // range if a '-' separates the first two temporal tokens
    bool separated = false;
    for (size_t i = found[0].token_index + 1; i <= found[1].token_index && i < tokens.size(); ++i) {
      if (separator_before[i]) separated = true;
    }
    if (separated) {
      CenturyRef a = found[0].ref;
      CenturyRef b = found[1].ref;
      if (b.chronological_key() < a.chronological_key()) std::swap(a, b);
      CenturyInterval interval{a, a == b ? std::nullopt : std::optional<CenturyRef>(b)};
      return interval.render();
    }
  }
  return CenturyInterval{found[0].ref, std::nullopt}.render();
}

data::ExhibitRecord curate_record(const data::ExhibitRecord& record, const CurationConfig& config) {
  data::ExhibitRecord out = record;
  data::AttributeTable table;
  for (const auto& [attr, values] : record.table.entries()) {
    const bool temporal = config.temporal_attributes.count(attr) != 0;
    std::vector<std::string> curated;
    std::unordered_set<std::string> seen;
    for (const auto& value : values) {
      std::string v;
      if (temporal) {
        v = normalize_temporal(value, config.rules);
      } else {
        v = clean_text(value, config.rules);
        if (static_cast<int>(v.size()) > config.long_text_threshold) {
          // replace with ranked keywords; keep the joined text within the
          // threshold so curation is a fixed point
          std::string joined;
          for (const auto& kw : shorten_text(value)) {
            const std::string cleaned_kw = clean_text(kw, config.rules);
            if (cleaned_kw.empty()) continue;
            std::string next = joined.empty() ? cleaned_kw : joined + " " + cleaned_kw;
            if (static_cast<int>(next.size()) > config.long_text_threshold) break;
            joined = std::move(next);
          }
          v = joined;
        }
      }
      if (v.empty()) continue;
      if (seen.insert(v).second) curated.push_back(v);
    }
    table.set(attr, curated);
  }
  out.table = std::move(table);
  return out;
}

}  // namespace muze::curation
