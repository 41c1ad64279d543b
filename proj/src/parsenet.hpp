#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "data_model.hpp"
#include "encoders.hpp"
#include "nn/graph.hpp"
#include "nn/optimizer.hpp"
#include "rng.hpp"

namespace muze::net {

struct ParseNetConfig {
  int layers = 2;
  int width = 512;
  int heads = 8;
  int max_sequence_length = 128;
  float dropout = 0.0f;

  void validate() const;
  nlohmann::json to_json() const;
  static ParseNetConfig from_json(const nlohmann::json& j);
};

// Masked-value parsing transformer. The input sequence is
//   [image?] (attr, value) context pairs | (attr, MASK) query pairs
// in canonical attribute order; every token is content + token-type +
// positional embedding. Attention is bidirectional, and hidden states at the
// MASK positions pass a final layer norm and linear head to become the
// predicted value embeddings.
class ParseNetModel {
public:
  ParseNetModel() = default;
  ParseNetModel(const ParseNetConfig& config, uint64_t seed);

  const ParseNetConfig& config() const { return config_; }
  int width() const { return config_.width; }

  nn::ParamRefs named_params();
  void for_each_param(const std::function<void(const std::string&, const nn::Matrix&)>& fn) const;

  void save(const std::filesystem::path& path) const;
  static ParseNetModel load(const std::filesystem::path& path);

  struct Layer {
    nn::Matrix ln1_g, ln1_b;
    nn::Matrix wq, bq, wk, bk, wv, bv, wo, bo;
    nn::Matrix ln2_g, ln2_b;
    nn::Matrix w1, b1, w2, b2;
  };

  nn::Matrix mask_token;  // 1 x width, trained jointly with the transformer
  nn::Matrix type_table;  // 4 x width: IMAGE, ATTR, VALUE, MASK
  nn::Matrix pos_table;   // max_sequence_length x width
  std::vector<Layer> layers;
  nn::Matrix final_g, final_b;
  nn::Matrix proj_w, proj_b;  // output head width -> width

private:
  ParseNetConfig config_;
};

enum class TokenType { Image = 0, Attr = 1, Value = 2, Mask = 3 };

struct ParseNetInput {
  // Absent image runs the context-only variant.
  std::optional<std::vector<float>> image_embedding;
  enc::EmbeddedTable context;  // canonical attribute order
  std::vector<std::vector<float>> query_attr_embeddings;
};

struct SequenceBatch {
  nn::Matrix tokens;  // L x width, content + type + position
  std::vector<int> mask_positions;
  std::vector<TokenType> types;
};

// Lays out and embeds the token sequence. Requires at least one query;
// throws SequenceTooLongError past config.max_sequence_length.
SequenceBatch build_sequence(const ParseNetModel& model, const ParseNetInput& input);

// Evaluation-mode forward pass: one predicted value embedding per mask
// position, in query order. Deterministic.
std::vector<std::vector<float>> forward(const ParseNetModel& model, const SequenceBatch& batch);

// Training-mode forward on the tape. Content for the image token may be a
// graph node (trainable image tower); text embeddings enter as constants.
// Returns the node holding the |queries| x width prediction matrix.
int forward_tape(nn::Graph& graph, enc::GraphParams& params, const ParseNetModel& model,
                 const ParseNetInput& input, std::optional<int> image_node = std::nullopt,
                 Rng* dropout_rng = nullptr);

// Sum over queries of (1 - cosine similarity). Range [0, 2 * |queries|].
double cosine_loss(const std::vector<std::vector<float>>& predicted,
                   const std::vector<std::vector<float>>& targets);

// Closed-form gradient of cosine_loss with respect to each predicted vector,
// evaluated in double precision.
std::vector<std::vector<double>> cosine_loss_gradient(
    const std::vector<std::vector<double>>& predicted,
    const std::vector<std::vector<double>>& targets);

struct RankedValue {
  int id = 0;
  double score = 0.0;
};

// Cosine scores of a predicted embedding against every vocabulary value.
std::vector<double> score_candidates(const std::vector<float>& predicted,
                                     const data::ValueVocabulary& vocab,
                                     const enc::EncoderBundle& bundle, enc::EmbeddingStore* store);

// Descending score, ascending id on ties.
std::vector<RankedValue> rank_by_score(const std::vector<double>& scores);

// Full retrieval path for one record: embed, run the model, rank each query
// attribute's vocabulary by cosine similarity to the predicted embedding.
std::map<std::string, std::vector<RankedValue>> predict_values(
    const ParseNetModel& model, const enc::EncoderBundle& bundle, const data::ExhibitRecord& record,
    const std::vector<std::string>& query_attrs, const data::VocabularyMap& vocabularies,
    enc::EmbeddingStore* store, bool use_image = true);

}  // namespace muze::net
