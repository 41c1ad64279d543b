#include <doctest.h>

#include <algorithm>
#include <cctype>

#include "curation.hpp"
#include "errors.hpp"
#include "rng.hpp"

using namespace muze;
using namespace muze::curation;

namespace {

// fuzz corpus mixing clean words, removable terms, punctuation, and non-Latin
// bytes; shared with the acceptance suite's idempotence check
std::vector<std::string> fuzz_corpus(size_t n, uint64_t seed) {
  static const std::vector<std::string> pieces = {
      "probably", "made",   "in",     "Delft",  "1650",   "possibly", "vase",  "ceramic",
      "about",    "note",   "around", "perhaps", "blue",  "glaze",    "17th",  "AC",
      "translation", "representation", "alpha", "beta",  "obj",      "450",   "BC",
  };
  static const std::vector<std::string> glue = {" ", ", ", ". ", "; ", " - ", "\t", "  ",
                                                "\xce\xb1\xce\xb2 ", "(", ")", "\"", "!"};
  Rng rng(seed);
  std::vector<std::string> corpus;
  for (size_t i = 0; i < n; ++i) {
    std::string s;
    const int parts = 1 + static_cast<int>(rng.below(12));
    for (int p = 0; p < parts; ++p) {
      s += pieces[static_cast<size_t>(rng.below(pieces.size()))];
      s += glue[static_cast<size_t>(rng.below(glue.size()))];
    }
    corpus.push_back(s);
  }
  return corpus;
}

}  // namespace

TEST_CASE("clean_text removes terms, punctuation, and non-Latin letters") {
  CHECK(clean_text("probably made in Delft, possibly 1650") == "Delft 1650");
  CHECK(clean_text("") == "");
  CHECK(clean_text("\xce\xb1\xce\xb2\xce\xb3 vase") == "vase");  // greek letters dropped
  CHECK(clean_text("  spaced   out  ") == "spaced out");
  CHECK(clean_text("Note: translation of a representation") == "of a");
  CHECK(clean_text("aboutness is kept") == "aboutness is kept");  // whole-word matching only
}

TEST_CASE("clean_text is idempotent on a fuzz corpus") {
  for (const auto& s : fuzz_corpus(200, 99)) {
    const std::string once = clean_text(s);
    CHECK(clean_text(once) == once);
  }
  // term removal that splices a new term still reaches a fixed point
  const std::string tricky = clean_text("made probably in Delft");
  CHECK(clean_text(tricky) == tricky);
  CHECK(tricky == "Delft");
}

TEST_CASE("clean_text output stays within the Latin closure") {
  for (const auto& s : fuzz_corpus(200, 123)) {
    for (unsigned char c : clean_text(s)) {
      const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == ' ' || c == '-' || c == '\'';
      CHECK(ok);
    }
  }
}

TEST_CASE("century rendering uses correct ordinal suffixes") {
  CHECK(CenturyRef{1, CenturyRef::Era::AC}.render() == "1st AC");
  CHECK(CenturyRef{2, CenturyRef::Era::AC}.render() == "2nd AC");
  CHECK(CenturyRef{3, CenturyRef::Era::BC}.render() == "3rd BC");
  CHECK(CenturyRef{4, CenturyRef::Era::AC}.render() == "4th AC");
  CHECK(CenturyRef{11, CenturyRef::Era::AC}.render() == "11th AC");
  CHECK(CenturyRef{12, CenturyRef::Era::AC}.render() == "12th AC");
  CHECK(CenturyRef{13, CenturyRef::Era::AC}.render() == "13th AC");
  CHECK(CenturyRef{21, CenturyRef::Era::AC}.render() == "21st AC");
  CHECK(CenturyRef{22, CenturyRef::Era::BC}.render() == "22nd BC");
  CHECK(CenturyRef{23, CenturyRef::Era::AC}.render() == "23rd AC");
  CHECK(CenturyRef{101, CenturyRef::Era::AC}.render() == "101st AC");
  CHECK(CenturyRef{111, CenturyRef::Era::AC}.render() == "111th AC");
}

TEST_CASE("year-to-century follows the ceil convention over 1..4000") {
  for (int y = 1; y <= 4000; ++y) {
    const CenturyRef ref = century_of_year(y, CenturyRef::Era::AC);
    CHECK(ref.century == (y + 99) / 100);
  }
  for (int c = 1; c <= 40; ++c) {
    CHECK(century_of_year(100 * c, CenturyRef::Era::AC).century == c);
    CHECK(century_of_year(100 * c - 99, CenturyRef::Era::AC).century == c);
  }
  CHECK_THROWS_AS(century_of_year(0, CenturyRef::Era::AC), Error);
}

TEST_CASE("normalize_temporal maps years and ranges to century form") {
  CHECK(normalize_temporal("ca. 1650") == "17th AC");
  CHECK(normalize_temporal("100 AD") == "1st AC");
  CHECK(normalize_temporal("450 BC - 320 AD") == "5th BC-4th AC");
  CHECK(normalize_temporal("450BC-320AD") == "5th BC-4th AC");
  CHECK(normalize_temporal("probably around 1650") == "17th AC");
  CHECK(normalize_temporal("1650s") == "17th AC");
  CHECK(normalize_temporal("no dates here") == "");
  CHECK(normalize_temporal("") == "");
  CHECK(normalize_temporal("made in 1650, glazed") == "17th AC");
}

TEST_CASE("normalize_temporal parses its own renderings back") {
  CHECK(normalize_temporal("17th AC") == "17th AC");
  CHECK(normalize_temporal("5th BC-4th AC") == "5th BC-4th AC");
  CHECK(normalize_temporal("1st AC") == "1st AC");
}

TEST_CASE("intervals list the chronologically earlier century first") {
  CHECK(normalize_temporal("320 AD - 450 BC") == "5th BC-4th AC");
  CHECK(normalize_temporal("1700 - 1650") == "17th AC");  // same century collapses
  CHECK(normalize_temporal("1650-1780") == "17th AC-18th AC");
  CHECK(normalize_temporal("200 BC-100 BC") == "2nd BC-1st BC");
  CHECK(normalize_temporal("100 BC-200 BC") == "2nd BC-1st BC");
}

TEST_CASE("shorten_text ranks by frequency then position") {
  // 30 words, 'alpha' five times but never first: frequency must dominate
  const std::string phrase =
      "beta gamma delta epsilon zeta alpha eta theta alpha iota kappa alpha "
      "lambda mu alpha nu xi alpha omicron pi rho sigma tau upsilon phi chi "
      "psi omega beta gamma";
  const auto keywords = shorten_text(phrase);
  REQUIRE_FALSE(keywords.empty());
  CHECK(keywords.front() == "alpha");
  CHECK(keywords.size() == 10);

  // fewer candidates than k: all come back
  const auto small = shorten_text("bronze vase", 10, 1);
  CHECK(small == std::vector<std::string>{"bronze", "vase"});

  CHECK(shorten_text("").empty());
  CHECK(shorten_text("...").empty());

  // n-gram bound and determinism
  for (const auto& kw : shorten_text(phrase, 10, 3)) {
    CHECK(std::count(kw.begin(), kw.end(), ' ') <= 2);
  }
  CHECK(shorten_text(phrase) == shorten_text(phrase));
}

TEST_CASE("shorten_text splits phrases at sentence punctuation") {
  const auto keywords = shorten_text("bronze vase. silver bowl; golden cup", 2, 1);
  // two keywords per phrase, deduplicated across phrases
  CHECK(keywords == std::vector<std::string>{"bronze", "vase", "silver", "bowl", "golden", "cup"});
}

TEST_CASE("curate_record cleans values and normalizes temporal attributes") {
  CurationConfig config = CurationConfig::defaults();
  config.temporal_attributes = {"productionDates"};

  data::ExhibitRecord rec{"obj1", "img/1.png", "", {}};
  rec.table.set("materials", {"probably ceramic"});
  rec.table.set("productionDates", {"probably around 1650"});
  rec.table.set("categories", {"prints"});

  const data::ExhibitRecord curated = curate_record(rec, config);
  CHECK(curated.table.values("materials") == data::ValueList{"ceramic"});
  CHECK(curated.table.values("productionDates") == data::ValueList{"17th AC"});
  CHECK(curated.table.values("categories") == data::ValueList{"prints"});
  CHECK(curated.object_id == rec.object_id);
  // source record untouched
  CHECK(rec.table.values("materials") == data::ValueList{"probably ceramic"});
}

TEST_CASE("curate_record is a fixed point on already-clean records") {
  CurationConfig config = CurationConfig::defaults();
  data::ExhibitRecord rec{"obj1", "img/1.png", "", {}};
  rec.table.set("materials", {"ceramic", "blue glaze"});
  const auto once = curate_record(rec, config);
  CHECK(once == rec);
}

TEST_CASE("curate_record shortens long values to ranked keywords") {
  CurationConfig config = CurationConfig::defaults();
  config.long_text_threshold = 120;
  std::string description;
  for (int i = 0; i < 40; ++i) {
    description += "the glazed ceramic vessel shows a painted hunting scene with riders. ";
  }
  REQUIRE(description.size() > 1000);
  data::ExhibitRecord rec{"obj1", "img/1.png", "", {}};
  rec.table.set("description", {description});
  const auto curated = curate_record(rec, config);
  REQUIRE(curated.table.known("description"));
  const std::string& v = curated.table.values("description")[0];
  CHECK(static_cast<int>(v.size()) <= config.long_text_threshold);
  // keyword list: at most 10 per phrase by construction
  CHECK(std::count(v.begin(), v.end(), ' ') < 30);
}

TEST_CASE("curate_record drops values that curate to nothing and deduplicates") {
  CurationConfig config = CurationConfig::defaults();
  data::ExhibitRecord rec{"obj1", "img/1.png", "", {}};
  rec.table.set("materials", {"probably", "ceramic", "Ceramic", "ceramic"});
  const auto curated = curate_record(rec, config);
  CHECK(curated.table.values("materials") == data::ValueList{"ceramic", "Ceramic"});
}

TEST_CASE("curate_record is idempotent on the fuzz corpus") {
  CurationConfig config = CurationConfig::defaults();
  config.temporal_attributes = {"dates"};
  config.long_text_threshold = 40;
  const auto corpus = fuzz_corpus(200, 2024);
  for (size_t i = 0; i < corpus.size(); i += 2) {
    data::ExhibitRecord rec{"obj", "img.png", "", {}};
    rec.table.set("text", {corpus[i]});
    rec.table.set("dates", {corpus[(i + 1) % corpus.size()]});
    const auto once = curate_record(rec, config);
    const auto twice = curate_record(once, config);
    CHECK(once == twice);
  }
}

TEST_CASE("rules files round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "muze_test_rules";
  std::filesystem::create_directories(dir);
  CurationConfig config = CurationConfig::defaults();
  config.long_text_threshold = 77;
  config.temporal_attributes = {"when"};
  config.to_json_file(dir / "rules.json");
  const CurationConfig loaded = CurationConfig::from_json_file(dir / "rules.json");
  CHECK(loaded.long_text_threshold == 77);
  CHECK(loaded.temporal_attributes == config.temporal_attributes);
  CHECK(loaded.rules.uncertainty_terms == config.rules.uncertainty_terms);
  CHECK(loaded.rules.punctuation == config.rules.punctuation);
}
