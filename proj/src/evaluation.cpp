#include "evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "errors.hpp"

namespace muze::eval {

std::vector<int> rank_ids_by_score(const std::vector<double>& scores) {
  std::vector<int> ids(scores.size());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)]) {
      return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    }
    return a < b;
  });
  return ids;
}

RankedPrediction to_ranked_prediction(const ScoredSample& sample, const std::string& attr) {
  RankedPrediction pred;
  pred.query_attr = attr;
  pred.ranked_value_ids = rank_ids_by_score(sample.scores);
  pred.gt_value_ids = sample.gt;
  return pred;
}

std::vector<RankedPrediction> to_ranked_predictions(const std::vector<ScoredSample>& samples,
                                                    const std::string& attr) {
  std::vector<RankedPrediction> preds;
  preds.reserve(samples.size());
  for (const auto& s : samples) preds.push_back(to_ranked_prediction(s, attr));
  return preds;
}

namespace {

void require_nonempty(const std::vector<RankedPrediction>& preds, const char* what) {
  if (preds.empty()) throw EmptyInputError(std::string(what) + ": no predictions");
  for (const auto& p : preds) {
    if (p.gt_value_ids.empty()) throw EmptyInputError(std::string(what) + ": sample without ground truth");
  }
}

bool contains(const std::vector<int>& sorted_ids, int id) {
  return std::binary_search(sorted_ids.begin(), sorted_ids.end(), id);
}

}  // namespace

double acc_at_1(const std::vector<RankedPrediction>& preds) {
  require_nonempty(preds, "acc_at_1");
  size_t hits = 0;
  for (const auto& p : preds) {
    if (contains(p.gt_value_ids, p.ranked_value_ids.front())) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double hit_rate_at_5(const std::vector<RankedPrediction>& preds) {
  require_nonempty(preds, "hit_rate_at_5");
  size_t hits = 0;
  for (const auto& p : preds) {
    const size_t k = std::min<size_t>(5, p.ranked_value_ids.size());
    for (size_t i = 0; i < k; ++i) {
      if (contains(p.gt_value_ids, p.ranked_value_ids[i])) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double mean_avg_accuracy(const std::vector<RankedPrediction>& preds) {
  require_nonempty(preds, "mean_avg_accuracy");
  double total = 0;
  for (const auto& p : preds) {
    const size_t k = std::min(p.gt_value_ids.size(), p.ranked_value_ids.size());
    size_t hits = 0;
    for (size_t i = 0; i < k; ++i) {
      if (contains(p.gt_value_ids, p.ranked_value_ids[i])) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(k);
  }
  return total / static_cast<double>(preds.size());
}

double mean_avg_precision_classes(const std::vector<ScoredSample>& samples, int num_classes) {
  if (samples.empty()) throw EmptyInputError("mean_avg_precision_classes: no samples");
  double ap_sum = 0;
  int classes_with_positives = 0;
  std::vector<double> class_scores(samples.size());
  for (int c = 0; c < num_classes; ++c) {
    bool any_positive = false;
    for (const auto& s : samples) {
      if (contains(s.gt, c)) {
        any_positive = true;
        break;
      }
    }
    if (!any_positive) continue;  // zero-support classes are excluded
    for (size_t i = 0; i < samples.size(); ++i) class_scores[i] = samples[i].scores[static_cast<size_t>(c)];
    const std::vector<int> order = rank_ids_by_score(class_scores);
    double ap = 0;
    int positives_seen = 0;
    for (size_t rank = 0; rank < order.size(); ++rank) {
      if (contains(samples[static_cast<size_t>(order[rank])].gt, c)) {
        ++positives_seen;
        ap += static_cast<double>(positives_seen) / static_cast<double>(rank + 1);
      }
    }
    ap /= positives_seen;
    ap_sum += ap;
    ++classes_with_positives;
  }
  if (classes_with_positives == 0) {
    throw NoPositiveClassError("mean_avg_precision_classes: no class has a positive sample");
  }
  return ap_sum / classes_with_positives;
}

std::vector<MarginRecord> classification_margins(const std::vector<ScoredSample>& samples) {
  std::vector<MarginRecord> margins;
  margins.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.gt.empty() || s.gt.size() >= s.scores.size()) {
      throw DegenerateCandidateSetError("sample '" + s.sample_id +
                                        "' lacks both correct and incorrect candidates");
    }
    double best_correct = -2.0, best_incorrect = -2.0;
    bool any_correct = false, any_incorrect = false;
    for (size_t id = 0; id < s.scores.size(); ++id) {
      if (contains(s.gt, static_cast<int>(id))) {
        best_correct = any_correct ? std::max(best_correct, s.scores[id]) : s.scores[id];
        any_correct = true;
      } else {
        best_incorrect = any_incorrect ? std::max(best_incorrect, s.scores[id]) : s.scores[id];
        any_incorrect = true;
      }
    }
    margins.push_back({s.sample_id, best_correct - best_incorrect});
  }
  return margins;
}

MetricReport compute_report(const std::string& attribute,
                            const std::vector<ScoredSample>& samples, int num_classes) {
  MetricReport report;
  report.attribute = attribute;
  report.n_samples = static_cast<int>(samples.size());
  const auto preds = to_ranked_predictions(samples, attribute);
  report.acc_at_1 = acc_at_1(preds);
  report.hit_rate_at_5 = hit_rate_at_5(preds);
  report.mean_avg_accuracy = mean_avg_accuracy(preds);
  report.map_classes = mean_avg_precision_classes(samples, num_classes);
  return report;
}

std::vector<int> gt_ids_for(const data::ExhibitRecord& record, const std::string& attr,
                            const data::ValueVocabulary& vocab) {
  std::vector<int> ids;
  if (!record.table.has(attr)) return ids;
  for (const auto& v : record.table.values(attr)) {
    if (auto id = vocab.id_of(v)) ids.push_back(*id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<double> parsenet_scores(const net::ParseNetModel& model,
                                    const enc::EncoderBundle& bundle,
                                    const data::ExhibitRecord& record,
                                    const std::string& target_attr,
                                    const std::vector<std::string>& context_attrs,
                                    const data::ValueVocabulary& vocab, bool use_image,
                                    enc::EmbeddingStore* store) {
  data::TablePartition part;
  if (record.table.has(target_attr)) {
    part.query.set(target_attr, record.table.values(target_attr));
  } else {
    part.query.set(target_attr, {});
  }
  for (const auto& attr : context_attrs) {
    if (attr == target_attr || !record.table.known(attr)) continue;
    part.context.set(attr, record.table.values(attr));
  }
  const enc::TableEmbeddings emb = enc::embed_table(bundle, part, store);
  net::ParseNetInput input;
  if (use_image) input.image_embedding = enc::embed_image(bundle, record.image_ref, store);
  input.context = emb.context;
  input.query_attr_embeddings = emb.query_attr_embeddings;
  const auto outputs = net::forward(model, net::build_sequence(model, input));
  return net::score_candidates(outputs[0], vocab, bundle, store);
}

AblationCurve context_ablation(const net::ParseNetModel& with_image,
                               const net::ParseNetModel& without_image,
                               const enc::EncoderBundle& bundle,
                               const std::vector<data::ExhibitRecord>& records,
                               const std::string& target_attr,
                               const data::ValueVocabulary& vocab,
                               const std::vector<int>& context_sizes, int trials, uint64_t seed,
                               enc::EmbeddingStore* store) {
  if (trials < 1) throw ConfigError("context_ablation: trials must be >= 1");
  AblationCurve curve;

  // image-only zero-shot baseline: cosine of the image embedding to each value
  {
    size_t hits = 0, n = 0;
    for (const auto& rec : records) {
      const auto gt = gt_ids_for(rec, target_attr, vocab);
      if (gt.empty()) continue;
      const auto image = enc::embed_image(bundle, rec.image_ref, store);
      const auto scores = net::score_candidates(image, vocab, bundle, store);
      if (contains(gt, rank_ids_by_score(scores).front())) ++hits;
      ++n;
    }
    curve.clip_zero_shot_acc = n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
  }

  for (int size : context_sizes) {
    Rng rng(hash_str("ablation-size-" + std::to_string(size), seed));
    AblationPoint point;
    point.context_size = size;
    size_t hits_with = 0, hits_without = 0, n = 0;
    for (const auto& rec : records) {
      const auto gt = gt_ids_for(rec, target_attr, vocab);
      if (gt.empty()) continue;
      std::vector<std::string> available;
      for (const auto& attr : rec.table.known_attributes()) {
        if (attr != target_attr) available.push_back(attr);
      }
      if (static_cast<int>(available.size()) < size) {
        ++point.skipped;
        continue;
      }
      for (int t = 0; t < trials; ++t) {
        std::vector<std::string> chosen = available;
        rng.shuffle(chosen);
        chosen.resize(static_cast<size_t>(size));
        std::sort(chosen.begin(), chosen.end());
        const auto s_with = parsenet_scores(with_image, bundle, rec, target_attr, chosen, vocab,
                                            true, store);
        const auto s_without = parsenet_scores(without_image, bundle, rec, target_attr, chosen,
                                               vocab, false, store);
        if (contains(gt, rank_ids_by_score(s_with).front())) ++hits_with;
        if (contains(gt, rank_ids_by_score(s_without).front())) ++hits_without;
        ++n;
      }
    }
    point.evaluated = static_cast<int>(n);
    if (n) {
      point.acc_with_image = static_cast<double>(hits_with) / static_cast<double>(n);
      point.acc_without_image = static_cast<double>(hits_without) / static_cast<double>(n);
    }
    curve.points.push_back(point);
  }
  return curve;
}

}  // namespace muze::eval
