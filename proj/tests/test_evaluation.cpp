#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "errors.hpp"
#include "evaluation.hpp"
#include "metric_oracles.hpp"
#include "rng.hpp"

using namespace muze;
using namespace muze::eval;
using oracles::random_benchmark;

namespace {

RankedPrediction pred_of(std::vector<int> ranked, std::vector<int> gt) {
  RankedPrediction p;
  p.query_attr = "attr";
  p.ranked_value_ids = std::move(ranked);
  p.gt_value_ids = std::move(gt);
  std::sort(p.gt_value_ids.begin(), p.gt_value_ids.end());
  return p;
}

}  // namespace

TEST_CASE("acc_at_1 counts samples whose top prediction is correct") {
  CHECK(acc_at_1({pred_of({0, 1, 2}, {0}), pred_of({1, 0, 2}, {1})}) == doctest::Approx(1.0));
  // 3 samples, exactly 2 correct
  CHECK(acc_at_1({pred_of({0, 1, 2}, {0}), pred_of({1, 0, 2}, {1}), pred_of({2, 0, 1}, {0})}) ==
        doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(acc_at_1({}), EmptyInputError);
}

TEST_CASE("hit_rate_at_5 boundaries") {
  // gt at rank 5 counts, rank 6 does not
  CHECK(hit_rate_at_5({pred_of({0, 1, 2, 3, 4, 5}, {4})}) == doctest::Approx(1.0));
  CHECK(hit_rate_at_5({pred_of({0, 1, 2, 3, 4, 5}, {5})}) == doctest::Approx(0.0));
  // vocabulary smaller than 5 truncates
  CHECK(hit_rate_at_5({pred_of({0, 1, 2}, {2})}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(hit_rate_at_5({}), EmptyInputError);
}

TEST_CASE("mean_avg_accuracy takes top-|gt| predictions") {
  // |gt| = 2, both in the top 2
  CHECK(mean_avg_accuracy({pred_of({0, 1, 2, 3}, {0, 1})}) == doctest::Approx(1.0));
  // |gt| = 2, one in the top 2
  CHECK(mean_avg_accuracy({pred_of({0, 2, 1, 3}, {0, 1})}) == doctest::Approx(0.5));
  // mean of 1.0 and 0.5
  CHECK(mean_avg_accuracy({pred_of({0, 1, 2, 3}, {0, 1}), pred_of({0, 2, 1, 3}, {0, 1})}) ==
        doctest::Approx(0.75));
}

TEST_CASE("mean average precision across classes") {
  std::vector<ScoredSample> two_class(4);
  for (size_t i = 0; i < 4; ++i) {
    two_class[i].sample_id = "s" + std::to_string(i);
    two_class[i].scores = {static_cast<double>(4 - i), static_cast<double>(i)};
    two_class[i].gt = i == 0 ? std::vector<int>{0} : std::vector<int>{1};
  }
  // class 0: positive is sample 0 ranked first -> AP 1.0
  // class 1: positives are samples 1,2,3 with class-1 scores 1,2,3; ranking by
  // class-1 score descending: s3,s2,s1,s0 -> precisions 1/1, 2/2, 3/3 -> AP 1.0
  CHECK(mean_avg_precision_classes(two_class, 2) == doctest::Approx(1.0));

  // single positive ranked 2nd of 3 -> AP = 1/2
  std::vector<ScoredSample> mid(3);
  for (size_t i = 0; i < 3; ++i) {
    mid[i].sample_id = "m" + std::to_string(i);
    mid[i].scores = {0.0, 0.0};
    mid[i].gt = {1};
  }
  mid[0].scores = {0.9, 0.1};
  mid[1].scores = {0.1, 0.9};
  mid[2].scores = {0.2, 0.5};
  mid[0].gt = {0};
  mid[2].gt = {0};
  // class 0: positives s0 (0.9), s2 (0.2); ranking: s0, s2, s1 -> AP = (1/1 + 2/2)/2 = 1
  // class 1: positive s1 (0.9) ranked first -> 1.0? s1 score 0.9 highest -> AP 1
  CHECK(mean_avg_precision_classes(mid, 2) == doctest::Approx(1.0));

  mid[1].scores = {0.15, 0.3};  // now class-1 positive s1 ranks 2nd behind s2 (0.5)
  CHECK(mean_avg_precision_classes(mid, 2) == doctest::Approx((1.0 + 0.5) / 2.0));

  // zero-positive classes are excluded; all-zero positives raise
  std::vector<ScoredSample> none(1);
  none[0].sample_id = "n";
  none[0].scores = {0.1, 0.2};
  none[0].gt = {};
  CHECK_THROWS_AS(mean_avg_precision_classes(none, 2), NoPositiveClassError);
}

TEST_CASE("classification margins") {
  ScoredSample s;
  s.sample_id = "a";
  s.scores = {0.9, 0.7, 0.1};
  s.gt = {0};
  const auto margins = classification_margins({s});
  REQUIRE(margins.size() == 1);
  CHECK(margins[0].margin == doctest::Approx(0.2));

  s.gt = {1};
  CHECK(classification_margins({s})[0].margin == doctest::Approx(-0.2));

  // all candidates correct is degenerate
  ScoredSample bad;
  bad.sample_id = "b";
  bad.scores = {0.5, 0.6};
  bad.gt = {0, 1};
  CHECK_THROWS_AS(classification_margins({bad}), DegenerateCandidateSetError);
}

TEST_CASE("margin sign agrees with top-1 correctness sample by sample") {
  Rng rng(808);
  for (int trial = 0; trial < 50; ++trial) {
    const auto samples = random_benchmark(rng, 40, 10);
    const auto preds = to_ranked_predictions(samples, "attr");
    const auto margins = classification_margins(samples);
    double margin_acc = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
      const bool correct = oracles::contains(preds[i].gt_value_ids, preds[i].ranked_value_ids[0]);
      CHECK((margins[i].margin > 0) == correct);
      if (margins[i].margin > 0) margin_acc += 1;
    }
    CHECK(acc_at_1(preds) == margin_acc / static_cast<double>(samples.size()));
  }
}

TEST_CASE("metrics equal the brute-force oracle within 1e-9") {
  Rng rng(31337);
  for (int trial = 0; trial < 50; ++trial) {
    const auto samples = random_benchmark(rng);
    const int n_classes = static_cast<int>(samples[0].scores.size());
    const auto preds = to_ranked_predictions(samples, "attr");
    CHECK(std::abs(acc_at_1(preds) - oracles::acc_at_1(samples)) <= 1e-9);
    CHECK(std::abs(hit_rate_at_5(preds) - oracles::hit_rate_at_5(samples)) <= 1e-9);
    CHECK(std::abs(mean_avg_accuracy(preds) - oracles::mean_avg_accuracy(samples)) <= 1e-9);
    CHECK(std::abs(mean_avg_precision_classes(samples, n_classes) -
                   oracles::map_classes(samples, n_classes)) <= 1e-9);
  }
}

TEST_CASE("metric ranges and hit-rate dominance") {
  Rng rng(2718);
  for (int trial = 0; trial < 30; ++trial) {
    const auto samples = random_benchmark(rng, 30, 8);
    const auto preds = to_ranked_predictions(samples, "attr");
    const auto report = compute_report("attr", samples, static_cast<int>(samples[0].scores.size()));
    for (double m : {report.map_classes, report.mean_avg_accuracy, report.acc_at_1,
                     report.hit_rate_at_5}) {
      CHECK(m >= 0.0);
      CHECK(m <= 1.0);
    }
    CHECK(report.hit_rate_at_5 >= report.acc_at_1);
    CHECK(report.n_samples == static_cast<int>(samples.size()));
  }
}

TEST_CASE("ranking helper is deterministic under ties") {
  const std::vector<double> scores = {0.5, 0.5, 0.5};
  CHECK(rank_ids_by_score(scores) == std::vector<int>{0, 1, 2});
}

TEST_CASE("gt_ids_for collects sorted unique ids") {
  data::ValueVocabulary vocab("materials", {"paper", "ink", "bronze"});
  data::ExhibitRecord rec{"o", "i.png", "", {}};
  rec.table.set("materials", {"bronze", "paper", "bronze"});
  CHECK(gt_ids_for(rec, "materials", vocab) == std::vector<int>{0, 2});
  rec.table.set("materials", {});
  CHECK(gt_ids_for(rec, "materials", vocab).empty());
}
