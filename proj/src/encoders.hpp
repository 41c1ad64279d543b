#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "data_model.hpp"
#include "embedding_store.hpp"
#include "nn/graph.hpp"
#include "nn/optimizer.hpp"
#include "nn/tensor.hpp"

namespace muze::enc {

// Which encoder parameters stay fixed during training.
struct FreezePolicy {
  int frozen_image_blocks = 0;  // prefix of image tower blocks
  bool freeze_text = true;
  bool freeze_image_all = false;  // blocks and projection
};

// Resolves a parameter name to a graph node: a shared trainable node for
// unfrozen parameters, a cached constant otherwise. One instance per graph.
class GraphParams {
public:
  GraphParams(nn::Graph& graph, std::function<bool(const std::string&)> is_trainable)
      : graph_(graph), is_trainable_(std::move(is_trainable)) {}

  int node_for(const std::string& name, const nn::Matrix& value);
  // Gradients of every trainable parameter touched by this graph.
  nn::GradMap collect_grads() const;

private:
  nn::Graph& graph_;
  std::function<bool(const std::string&)> is_trainable_;
  std::unordered_map<std::string, int> nodes_;
  std::vector<std::pair<std::string, int>> trainable_nodes_;
};

// Residual MLP tower over a fixed token-hash featurizer:
//   x = featurize(input); per block: x = x + tanh(x W1) W2; out = norm(x P).
// W2 starts at zero and P at identity, so a fresh tower is the featurizer
// itself. The block structure mirrors the depth of the real backbone so
// freeze policies are exercisable without it.
class StubTower {
public:
  StubTower() = default;
  StubTower(std::string name, int dim, int blocks, uint64_t featurizer_seed, uint64_t init_seed);

  int dim() const { return dim_; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  const std::string& name() const { return name_; }

  // Unit-norm bag of seeded token-hash vectors. Inputs sharing tokens get
  // similar features.
  std::vector<float> featurize(const std::string& input) const;
  std::vector<float> forward(const std::string& input) const;
  // Same computation on the tape; parameters resolve through `params` so the
  // caller decides what is trainable. Returns a 1 x dim node.
  int forward_tape(nn::Graph& graph, GraphParams& params, const std::string& input) const;

  // Parameter names: "<name>.block<i>.w1|w2" and "<name>.proj".
  void for_each_param(const std::function<void(const std::string&, nn::Matrix&)>& fn);
  void for_each_param(const std::function<void(const std::string&, const nn::Matrix&)>& fn) const;
  std::string block_param_prefix(int block) const;

private:
  struct Block {
    nn::Matrix w1, w2;
  };

  std::string name_;
  int dim_ = 0;
  uint64_t featurizer_seed_ = 0;
  std::vector<Block> blocks_;
  nn::Matrix proj_;
};

// Image encoder + text encoder pair behind one trainable surface. The stub
// construction is fully deterministic in (dim, seed); a real backbone adapter
// would implement the same surface.
class EncoderBundle {
public:
  static constexpr int kImageBlocks = 12;
  static constexpr int kTextBlocks = 4;

  EncoderBundle() = default;

  int dim() const { return dim_; }
  uint64_t seed() const { return seed_; }
  const std::string& kind() const { return kind_; }

  FreezePolicy& policy() { return policy_; }
  const FreezePolicy& policy() const { return policy_; }

  // Missing image files are only an error when a bundle requires real files
  // (the stub hashes the path string; tests may opt in to the check).
  bool image_files_required() const { return image_files_required_; }
  void set_image_files_required(bool v) { image_files_required_ = v; }

  std::vector<float> encode_text(const std::string& text) const { return text_tower_.forward(text); }
  std::vector<float> encode_image_key(const std::string& key) const { return image_tower_.forward(key); }

  StubTower& text_tower() { return text_tower_; }
  StubTower& image_tower() { return image_tower_; }
  const StubTower& text_tower() const { return text_tower_; }
  const StubTower& image_tower() const { return image_tower_; }
  nn::Matrix& logit_scale() { return logit_scale_; }
  const nn::Matrix& logit_scale() const { return logit_scale_; }

  // Parameters left unfrozen by the policy (plus the contrastive logit
  // scale, which no policy freezes).
  nn::ParamRefs trainable_params(const FreezePolicy& policy);
  nn::ParamRefs trainable_params() { return trainable_params(policy_); }
  std::vector<std::string> trainable_param_names(const FreezePolicy& policy) const;
  bool image_tower_trainable(const FreezePolicy& policy) const;
  void for_each_param(const std::function<void(const std::string&, const nn::Matrix&)>& fn) const;

  // Identity string for cache keys, per modality ('T' or 'I'); changes
  // whenever that tower's parameters change.
  std::string encoder_id(char modality) const;
  void invalidate_fingerprint() { text_fp_valid_ = image_fp_valid_ = false; }

  void save(const std::filesystem::path& path) const;
  static EncoderBundle load(const std::filesystem::path& path);

  friend EncoderBundle make_stub_bundle(int dim, uint64_t seed);

private:
  std::string kind_ = "stub";
  int dim_ = 0;
  uint64_t seed_ = 0;
  StubTower text_tower_;
  StubTower image_tower_;
  nn::Matrix logit_scale_;  // 1x1, log of the contrastive temperature inverse
  FreezePolicy policy_;
  bool image_files_required_ = false;
  mutable bool text_fp_valid_ = false, image_fp_valid_ = false;
  mutable uint64_t text_fp_ = 0, image_fp_ = 0;
};

// Deterministic desk-scale bundle. Both towers share the featurizer token
// space, so matching words in image keys and value texts start out aligned.
// Default policy freezes the text tower and every image block; the image
// projection and logit scale remain trainable.
EncoderBundle make_stub_bundle(int dim, uint64_t seed);

// Named encoder factory ("stub" today; other kinds are plug-ins).
EncoderBundle make_bundle(const std::string& kind, int dim, uint64_t seed);

// Cache-aware single encodes. Cached entries are bit-identical to fresh ones
// for frozen encoders; training with trainable image parts must bypass the
// store (the training loop does).
std::vector<float> embed_text(const EncoderBundle& bundle, const std::string& text,
                              EmbeddingStore* store);
std::vector<float> embed_image(const EncoderBundle& bundle, const std::string& image_ref,
                               EmbeddingStore* store);

struct EmbeddedPair {
  std::vector<float> attr;
  std::vector<float> value;
};

struct EmbeddedTable {
  std::vector<EmbeddedPair> pairs;  // canonical attribute order
};

struct TableEmbeddings {
  EmbeddedTable context;
  std::vector<std::string> query_attrs;  // canonical order
  std::vector<std::vector<float>> query_attr_embeddings;
  // Sum of the value embeddings per query attribute; empty optional at
  // inference when the value is unknown.
  std::vector<std::optional<std::vector<float>>> targets;
};

// Embeds a partitioned table. Multi-value attributes contribute the vector
// sum of their value embeddings, both as context pair values and as targets;
// normalize_before_sum normalizes each part first.
TableEmbeddings embed_table(const EncoderBundle& bundle, const data::TablePartition& partition,
                            EmbeddingStore* store, bool normalize_before_sum = false);

}  // namespace muze::enc
