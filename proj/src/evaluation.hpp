#pragma once

#include <string>
#include <vector>

#include "data_model.hpp"
#include "encoders.hpp"
#include "parsenet.hpp"

namespace muze::eval {

// One scored query: the full vocabulary ranking plus the ground-truth id set.
struct RankedPrediction {
  std::string query_attr;
  std::vector<int> ranked_value_ids;  // permutation of 0..|vocab|-1
  std::vector<int> gt_value_ids;      // non-empty, sorted, unique
};

// Raw per-class scores for one sample; richer than RankedPrediction, needed
// by class-level average precision and margins.
struct ScoredSample {
  std::string sample_id;
  std::vector<double> scores;  // indexed by value id
  std::vector<int> gt;         // sorted, unique
};

struct MetricReport {
  std::string attribute;
  double map_classes = 0.0;
  double mean_avg_accuracy = 0.0;  // reported as "Mean Avg Recall" in some tables
  double acc_at_1 = 0.0;
  double hit_rate_at_5 = 0.0;
  int n_samples = 0;
};

struct MarginRecord {
  std::string sample_id;
  // best correct score minus best incorrect score; > 0 iff top-1 is correct
  double margin = 0.0;
};

// Descending score with ascending-id tie-break: the shared ordering rule for
// every ranking-derived quantity.
std::vector<int> rank_ids_by_score(const std::vector<double>& scores);

RankedPrediction to_ranked_prediction(const ScoredSample& sample, const std::string& attr);
std::vector<RankedPrediction> to_ranked_predictions(const std::vector<ScoredSample>& samples,
                                                    const std::string& attr);

// Fraction of samples whose top-ranked value is a correct answer.
double acc_at_1(const std::vector<RankedPrediction>& preds);

// Fraction of samples with a correct answer in the top five (top |vocab| for
// smaller vocabularies).
double hit_rate_at_5(const std::vector<RankedPrediction>& preds);

// Per sample, precision of the top-k predictions with k = |gt set|, averaged
// over samples.
double mean_avg_accuracy(const std::vector<RankedPrediction>& preds);

// Average precision per class over the sample ranking for that class's
// scores, averaged across classes with at least one positive sample.
double mean_avg_precision_classes(const std::vector<ScoredSample>& samples, int num_classes);

// Requires every sample to have both correct and incorrect candidates.
std::vector<MarginRecord> classification_margins(const std::vector<ScoredSample>& samples);

MetricReport compute_report(const std::string& attribute,
                            const std::vector<ScoredSample>& samples, int num_classes);

// Ground-truth value ids of a record for one attribute; empty when unknown.
std::vector<int> gt_ids_for(const data::ExhibitRecord& record, const std::string& attr,
                            const data::ValueVocabulary& vocab);

// Scores a record with the parsing network, querying target_attr with an
// explicit context attribute subset.
std::vector<double> parsenet_scores(const net::ParseNetModel& model,
                                    const enc::EncoderBundle& bundle,
                                    const data::ExhibitRecord& record,
                                    const std::string& target_attr,
                                    const std::vector<std::string>& context_attrs,
                                    const data::ValueVocabulary& vocab, bool use_image,
                                    enc::EmbeddingStore* store);

struct AblationPoint {
  int context_size = 0;
  double acc_with_image = 0.0;
  double acc_without_image = 0.0;
  int evaluated = 0;
  int skipped = 0;  // records with fewer context pairs than requested
};

struct AblationCurve {
  std::vector<AblationPoint> points;
  double clip_zero_shot_acc = 0.0;  // image-only baseline, no context
};

// Accuracy of the two models at each context size: per record and trial,
// sample `size` context pairs uniformly without replacement and rank the
// vocabulary. Records without enough known context for a size are skipped
// and counted.
AblationCurve context_ablation(const net::ParseNetModel& with_image,
                               const net::ParseNetModel& without_image,
                               const enc::EncoderBundle& bundle,
                               const std::vector<data::ExhibitRecord>& records,
                               const std::string& target_attr,
                               const data::ValueVocabulary& vocab,
                               const std::vector<int>& context_sizes, int trials, uint64_t seed,
                               enc::EmbeddingStore* store);

}  // namespace muze::eval
