#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include "errors.hpp"

namespace muze::train {

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig cfg;
  cfg.warmup_steps = 100;
  return cfg;
}

TrainConfig TrainConfig::parsenet_defaults() {
  TrainConfig cfg;
  cfg.warmup_steps = 0;
  return cfg;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("train: iterations must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (learning_rate <= 0) throw ConfigError("train: learning_rate must be > 0");
  if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
  if (warmup_steps < 0) throw ConfigError("train: warmup_steps must be >= 0");
  if (context_keep_prob < 0.0 || context_keep_prob > 1.0) {
    throw ConfigError("train: context_keep_prob must be in [0, 1]");
  }
  if (grad_clip && *grad_clip <= 0) throw ConfigError("train: grad_clip must be > 0");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j{{"iterations", iterations},
                   {"batch_size", batch_size},
                   {"learning_rate", learning_rate},
                   {"weight_decay", weight_decay},
                   {"warmup_steps", warmup_steps},
                   {"seed", seed},
                   {"context_keep_prob", context_keep_prob},
                   {"use_image", use_image}};
  if (grad_clip) j["grad_clip"] = *grad_clip;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  if (j.contains("iterations")) cfg.iterations = j.at("iterations").get<int>();
  if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
  if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("weight_decay")) cfg.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("warmup_steps")) cfg.warmup_steps = j.at("warmup_steps").get<int>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  if (j.contains("context_keep_prob")) {
    cfg.context_keep_prob = j.at("context_keep_prob").get<double>();
  }
  if (j.contains("grad_clip") && !j.at("grad_clip").is_null()) {
    cfg.grad_clip = j.at("grad_clip").get<double>();
  }
  if (j.contains("use_image")) cfg.use_image = j.at("use_image").get<bool>();
  cfg.validate();
  return cfg;
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::Clip: return "CLIP";
    case BaselineKind::ClipFC: return "CLIP_FC";
    case BaselineKind::ClipFA: return "CLIP_FA";
    case BaselineKind::ClipCtx: return "CLIP_CTX";
    case BaselineKind::ClipFPhrase: return "CLIP_FPHRASE";
    case BaselineKind::ClipFText: return "CLIP_FTEXT";
    case BaselineKind::MuzeC: return "MUZE_C";
    case BaselineKind::MuzeCFC: return "MUZE_CFC";
    case BaselineKind::MuzeCFA: return "MUZE_CFA";
  }
  return "CLIP";
}

BaselineKind baseline_from_string(const std::string& name) {
  for (BaselineKind kind :
       {BaselineKind::Clip, BaselineKind::ClipFC, BaselineKind::ClipFA, BaselineKind::ClipCtx,
        BaselineKind::ClipFPhrase, BaselineKind::ClipFText, BaselineKind::MuzeC,
        BaselineKind::MuzeCFC, BaselineKind::MuzeCFA}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown baseline '" + name + "'");
}

bool baseline_needs_backbone(BaselineKind kind) {
  return kind == BaselineKind::MuzeCFC || kind == BaselineKind::MuzeCFA;
}

bool baseline_is_muze(BaselineKind kind) {
  return kind == BaselineKind::MuzeC || kind == BaselineKind::MuzeCFC ||
         kind == BaselineKind::MuzeCFA;
}

bool baseline_trains_encoder(BaselineKind kind) {
  return kind == BaselineKind::ClipFC || kind == BaselineKind::ClipFA ||
         kind == BaselineKind::ClipFPhrase || kind == BaselineKind::ClipFText;
}

void write_loss_curve_csv(const std::filesystem::path& path, const LossCurve& curve) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write loss curve: " + path.string());
  out << "step,lr,loss\n";
  char buf[128];
  for (const auto& s : curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", s.step, s.lr, s.loss);
    out << buf;
  }
}

double schedule_lr(int step, const TrainConfig& cfg) {
  const double peak = cfg.learning_rate;
  const int n = cfg.iterations;
  const int w = cfg.warmup_steps;
  if (step <= 0) return w > 0 ? 0.0 : peak;
  if (step >= n) return 0.0;
  if (w > 0 && step <= w) return peak * static_cast<double>(step) / w;
  const double t = static_cast<double>(step - w) / static_cast<double>(n - w);
  return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

std::vector<bool> sample_context_keep(Rng& rng, size_t n_pairs, double keep_prob) {
  std::vector<bool> keep(n_pairs, true);
  if (keep_prob >= 1.0) return keep;
  for (size_t i = 0; i < n_pairs; ++i) keep[i] = rng.uniform() < keep_prob;
  return keep;
}

namespace {

// Endless shuffled pass over a fixed index set.
class IndexStream {
public:
  IndexStream(std::vector<size_t> indices, Rng& rng) : order_(std::move(indices)) {
    rng.shuffle(order_);
  }
  size_t next(Rng& rng) {
    if (pos_ == order_.size()) {
      rng.shuffle(order_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

private:
  std::vector<size_t> order_;
  size_t pos_ = 0;
};

std::unordered_set<std::string> name_set(const nn::ParamRefs& refs) {
  std::unordered_set<std::string> names;
  for (const auto& r : refs) names.insert(r.name);
  return names;
}

void check_finite_loss(double loss, int step) {
  if (!std::isfinite(loss)) {
    throw DivergedLossError("non-finite loss at step " + std::to_string(step));
  }
}

}  // namespace

LossCurve train_parsenet(net::ParseNetModel& model, enc::EncoderBundle& bundle,
                         const data::DatasetSplit& split, const std::string& target_attr,
                         const TrainConfig& cfg, enc::EmbeddingStore* store) {
  cfg.validate();
  if (model.width() != bundle.dim()) {
    throw ShapeError("model width " + std::to_string(model.width()) + " != encoder dim " +
                     std::to_string(bundle.dim()));
  }
  std::vector<size_t> eligible;
  for (size_t i = 0; i < split.records.size(); ++i) {
    if (split.records[i].table.has(target_attr) && split.records[i].table.known(target_attr)) {
      eligible.push_back(i);
    }
  }
  if (eligible.empty()) {
    throw NoTrainableRecordsError("no record has a value for '" + target_attr + "'");
  }
  LossCurve curve;
  if (cfg.iterations == 0) return curve;

  const enc::FreezePolicy policy = bundle.policy();
  // The text encoder stays frozen here; targets and context come from it.
  const bool image_on_tape = cfg.use_image && bundle.image_tower_trainable(policy);

  nn::ParamRefs params = model.named_params();
  for (auto& ref : bundle.trainable_params(policy)) {
    if (ref.name == "logit_scale") continue;  // contrastive-only parameter
    if (ref.name.starts_with("text.")) continue;
    params.push_back(ref);
  }
  const auto trainable = name_set(params);

  nn::AdamW optimizer(cfg.learning_rate, cfg.weight_decay);
  Rng batch_rng(hash_str("batch", cfg.seed));
  Rng drop_rng(hash_str("context-drop", cfg.seed));
  Rng dropout_rng(hash_str("dropout", cfg.seed));
  IndexStream stream(eligible, batch_rng);

  const int batch = static_cast<int>(std::min<size_t>(static_cast<size_t>(cfg.batch_size),
                                                      eligible.size()));
  curve.reserve(static_cast<size_t>(cfg.iterations));
  for (int step = 1; step <= cfg.iterations; ++step) {
    nn::Graph graph;
    enc::GraphParams gp(graph, [&](const std::string& n) { return trainable.count(n) != 0; });
    std::vector<int> losses;
    losses.reserve(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      const auto& rec = split.records[stream.next(batch_rng)];
      data::TablePartition part =
          data::partition_table(rec.table, {target_attr}, data::PartitionMode::Training);
      const auto ctx_attrs = part.context.attribute_names();
      const auto keep = sample_context_keep(drop_rng, ctx_attrs.size(), cfg.context_keep_prob);
      for (size_t i = 0; i < ctx_attrs.size(); ++i) {
        if (!keep[i]) part.context.erase(ctx_attrs[i]);
      }
      const enc::TableEmbeddings emb = enc::embed_table(bundle, part, store);

      net::ParseNetInput input;
      std::optional<int> image_node;
      if (cfg.use_image) {
        if (image_on_tape) {
          image_node = bundle.image_tower().forward_tape(graph, gp, rec.image_ref);
          input.image_embedding = std::vector<float>(static_cast<size_t>(bundle.dim()), 0.0f);
        } else {
          input.image_embedding = enc::embed_image(bundle, rec.image_ref, store);
        }
      }
      input.context = emb.context;
      input.query_attr_embeddings = emb.query_attr_embeddings;

      const int pred = net::forward_tape(graph, gp, model, input, image_node,
                                         model.config().dropout > 0 ? &dropout_rng : nullptr);
      losses.push_back(graph.cosine_loss(pred, nn::Matrix::from_row(*emb.targets[0])));
    }
    const int batch_loss = graph.scale(graph.sum_scalars(losses), 1.0f / static_cast<float>(batch));
    graph.backward(batch_loss);
    nn::GradMap grads = gp.collect_grads();
    if (cfg.grad_clip) nn::clip_grad_norm(grads, *cfg.grad_clip);
    const double lr = schedule_lr(step, cfg);
    optimizer.set_learning_rate(lr);
    optimizer.step(params, grads);
    bundle.invalidate_fingerprint();
    const double loss = graph.val(batch_loss)(0, 0);
    check_finite_loss(loss, step);
    curve.push_back({step, lr, loss});
  }
  return curve;
}

std::string finetune_text(const data::ExhibitRecord& record, FinetuneMode mode,
                          const std::string& attr) {
  switch (mode) {
    case FinetuneMode::FullCaption:
    case FinetuneMode::TextTower:
      return data::build_caption(record.table, record.table.attribute_names());
    case FinetuneMode::PerAttribute: {
      if (!record.table.has(attr) || !record.table.known(attr)) return "";
      std::string text;
      for (const auto& v : record.table.values(attr)) {
        if (!text.empty()) text.push_back(' ');
        text += v;
      }
      return text;
    }
    case FinetuneMode::Phrase: {
      if (!record.table.has(attr) || !record.table.known(attr)) return "";
      std::string text = "the " + attr + " of the object are";
      for (const auto& v : record.table.values(attr)) {
        text.push_back(' ');
        text += v;
      }
      return text;
    }
  }
  return "";
}

LossCurve finetune_contrastive(enc::EncoderBundle& bundle, const data::DatasetSplit& split,
                               const TrainConfig& cfg, FinetuneMode mode, const std::string& attr,
                               enc::EmbeddingStore* store) {
  cfg.validate();
  if ((mode == FinetuneMode::PerAttribute || mode == FinetuneMode::Phrase) && attr.empty()) {
    throw ConfigError("per-attribute fine-tuning needs a target attribute");
  }
  struct Pair {
    std::string image_key;
    std::string text;
  };
  std::vector<Pair> pairs;
  for (const auto& rec : split.records) {
    std::string text = finetune_text(rec, mode, attr);
    if (text.empty()) continue;
    pairs.push_back({rec.image_ref, std::move(text)});
  }
  if (pairs.empty()) throw NoTrainableRecordsError("no usable image-text pairs for fine-tuning");

  LossCurve curve;
  if (cfg.iterations == 0) return curve;

  enc::FreezePolicy policy = bundle.policy();
  if (mode == FinetuneMode::TextTower) policy.freeze_text = false;
  nn::ParamRefs params = bundle.trainable_params(policy);
  const auto trainable = name_set(params);
  const bool text_on_tape = !policy.freeze_text;

  nn::AdamW optimizer(cfg.learning_rate, cfg.weight_decay);
  Rng batch_rng(hash_str("finetune-batch", cfg.seed));
  std::vector<size_t> indices(pairs.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  IndexStream stream(indices, batch_rng);

  const int batch = static_cast<int>(std::min<size_t>(static_cast<size_t>(cfg.batch_size),
                                                      pairs.size()));
  curve.reserve(static_cast<size_t>(cfg.iterations));
  for (int step = 1; step <= cfg.iterations; ++step) {
    nn::Graph graph;
    enc::GraphParams gp(graph, [&](const std::string& n) { return trainable.count(n) != 0; });
    std::vector<int> image_rows, text_rows;
    image_rows.reserve(static_cast<size_t>(batch));
    text_rows.reserve(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      const Pair& pair = pairs[stream.next(batch_rng)];
      image_rows.push_back(bundle.image_tower().forward_tape(graph, gp, pair.image_key));
      if (text_on_tape) {
        text_rows.push_back(bundle.text_tower().forward_tape(graph, gp, pair.text));
      } else {
        text_rows.push_back(graph.input(nn::Matrix::from_row(enc::embed_text(bundle, pair.text, store))));
      }
    }
    // tower outputs are unit rows; cosine logits scale by the learned temperature
    const int img = graph.stack_rows(image_rows);
    const int txt = graph.stack_rows(text_rows);
    const int temp = graph.exp_op(gp.node_for("logit_scale", bundle.logit_scale()));
    const int logits = graph.mul_scalar_node(graph.matmul_nt(img, txt), temp);
    const int loss_i2t = graph.cross_entropy_diag(logits);
    const int loss_t2i = graph.cross_entropy_diag(graph.transpose(logits));
    const int total = graph.scale(graph.sum_scalars({loss_i2t, loss_t2i}), 0.5f);
    graph.backward(total);
    nn::GradMap grads = gp.collect_grads();
    if (cfg.grad_clip) nn::clip_grad_norm(grads, *cfg.grad_clip);
    const double lr = schedule_lr(step, cfg);
    optimizer.set_learning_rate(lr);
    optimizer.step(params, grads);
    bundle.invalidate_fingerprint();
    const double loss = graph.val(total)(0, 0);
    check_finite_loss(loss, step);
    curve.push_back({step, lr, loss});
  }
  return curve;
}

std::vector<net::RankedValue> clip_ctx_rank(const enc::EncoderBundle& bundle,
                                            const data::ExhibitRecord& record,
                                            const std::string& query_attr,
                                            const data::ValueVocabulary& vocab,
                                            enc::EmbeddingStore* store) {
  std::string context;
  for (const auto& [attr, values] : record.table.entries()) {
    if (attr == query_attr || values.empty()) continue;
    for (const auto& v : values) {
      if (!context.empty()) context += ", ";
      context += v;
    }
  }
  const auto image = enc::embed_image(bundle, record.image_ref, store);
  std::vector<double> scores(static_cast<size_t>(vocab.size()));
  for (int id = 0; id < vocab.size(); ++id) {
    const std::string text =
        context.empty() ? vocab.value_of(id) : context + ", " + vocab.value_of(id);
    scores[static_cast<size_t>(id)] = nn::cosine_similarity(image, enc::embed_text(bundle, text, store));
  }
  return net::rank_by_score(scores);
}

}  // namespace muze::train
