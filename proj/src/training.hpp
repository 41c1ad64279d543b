#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "data_model.hpp"
#include "encoders.hpp"
#include "parsenet.hpp"

namespace muze::train {

struct TrainConfig {
  int iterations = 100;
  int batch_size = 1024;
  double learning_rate = 1e-4;
  double weight_decay = 0.1;
  int warmup_steps = 100;
  uint64_t seed = 0;
  double context_keep_prob = 1.0;  // < 1 enables random context dropping
  std::optional<double> grad_clip;
  bool use_image = true;

  // Fine-tuning warms up over 100 steps; the parsing network starts from a
  // random init and uses none.
  static TrainConfig finetune_defaults();
  static TrainConfig parsenet_defaults();

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

enum class BaselineKind {
  Clip,
  ClipFC,
  ClipFA,
  ClipCtx,
  ClipFPhrase,
  ClipFText,
  MuzeC,
  MuzeCFC,
  MuzeCFA,
};

std::string to_string(BaselineKind kind);
BaselineKind baseline_from_string(const std::string& name);
// MUZE-CFC / MUZE-CFA sit on a fine-tuned encoder checkpoint.
bool baseline_needs_backbone(BaselineKind kind);
bool baseline_is_muze(BaselineKind kind);
bool baseline_trains_encoder(BaselineKind kind);

struct StepStat {
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
};
using LossCurve = std::vector<StepStat>;

void write_loss_curve_csv(const std::filesystem::path& path, const LossCurve& curve);

// Linear warmup from 0 to the peak rate over warmup_steps, then cosine decay
// to 0 at cfg.iterations. Step is the 1-based optimizer step.
double schedule_lr(int step, const TrainConfig& cfg);

// One keep/drop coin per context pair; exposed so the dropout distribution is
// testable against the training loop's own sampling.
std::vector<bool> sample_context_keep(Rng& rng, size_t n_pairs, double keep_prob);

// Trains the parsing network (and whatever the bundle's freeze policy leaves
// unlocked in the image tower) to predict target_attr from image + remaining
// context. Per record the query is {target_attr}; each other known attribute
// is kept in the context with probability cfg.context_keep_prob. The loss per
// record is the cosine loss against the sum of the target value embeddings;
// the curve logs the batch mean.
LossCurve train_parsenet(net::ParseNetModel& model, enc::EncoderBundle& bundle,
                         const data::DatasetSplit& split, const std::string& target_attr,
                         const TrainConfig& cfg, enc::EmbeddingStore* store);

enum class FinetuneMode {
  FullCaption,   // caption from all attribute values
  PerAttribute,  // values of one attribute
  Phrase,        // "the {key} of the object are ..." template
  TextTower,     // full caption, text tower unlocked
};

// Symmetric batch-contrastive fine-tuning of the bundle: cross-entropy over
// cosine-similarity logits with the learned temperature, both directions
// averaged. Freeze policy comes from the bundle, except TextTower mode which
// unlocks the text tower.
LossCurve finetune_contrastive(enc::EncoderBundle& bundle, const data::DatasetSplit& split,
                               const TrainConfig& cfg, FinetuneMode mode,
                               const std::string& attr = "", enc::EmbeddingStore* store = nullptr);

// Contrastive text for one record under a fine-tuning mode; empty when the
// record is not usable for that mode.
std::string finetune_text(const data::ExhibitRecord& record, FinetuneMode mode,
                          const std::string& attr);

// Zero-shot ranking with the context appended to each candidate: score is
// cosine(e_image, text("context, candidate")). Empty context degenerates to
// plain zero-shot ranking over candidates.
std::vector<net::RankedValue> clip_ctx_rank(const enc::EncoderBundle& bundle,
                                            const data::ExhibitRecord& record,
                                            const std::string& query_attr,
                                            const data::ValueVocabulary& vocab,
                                            enc::EmbeddingStore* store);

}  // namespace muze::train
