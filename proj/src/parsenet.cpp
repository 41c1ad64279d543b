#include "parsenet.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "errors.hpp"
#include "nn/checkpoint.hpp"

namespace muze::net {

void ParseNetConfig::validate() const {
  if (layers < 1) throw ConfigError("parsenet: layers must be >= 1");
  if (width < 1 || heads < 1 || width % heads != 0) {
    throw ConfigError("parsenet: width must be a positive multiple of heads");
  }
  if (max_sequence_length < 2) throw ConfigError("parsenet: max_sequence_length must be >= 2");
  if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("parsenet: dropout must be in [0, 1)");
}

nlohmann::json ParseNetConfig::to_json() const {
  return {{"layers", layers},
          {"width", width},
          {"heads", heads},
          {"max_sequence_length", max_sequence_length},
          {"dropout", dropout}};
}

ParseNetConfig ParseNetConfig::from_json(const nlohmann::json& j) {
  ParseNetConfig c;
  if (j.contains("layers")) c.layers = j.at("layers").get<int>();
  if (j.contains("width")) c.width = j.at("width").get<int>();
  if (j.contains("heads")) c.heads = j.at("heads").get<int>();
  if (j.contains("max_sequence_length")) {
    c.max_sequence_length = j.at("max_sequence_length").get<int>();
  }
  if (j.contains("dropout")) c.dropout = j.at("dropout").get<float>();
  c.validate();
  return c;
}

ParseNetModel::ParseNetModel(const ParseNetConfig& config, uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const int w = config_.width;
  const float std = 0.02f;
  auto ones_row = [&](int n) {
    nn::Matrix m(1, n);
    m.fill(1.0f);
    return m;
  };
  mask_token = nn::Matrix::randn(1, w, rng, std);
  type_table = nn::Matrix::randn(4, w, rng, std);
  pos_table = nn::Matrix::randn(config_.max_sequence_length, w, rng, std);
  layers.resize(static_cast<size_t>(config_.layers));
  for (auto& layer : layers) {
    layer.ln1_g = ones_row(w);
    layer.ln1_b = nn::Matrix(1, w);
    layer.wq = nn::Matrix::randn(w, w, rng, std);
    layer.bq = nn::Matrix(1, w);
    layer.wk = nn::Matrix::randn(w, w, rng, std);
    layer.bk = nn::Matrix(1, w);
    layer.wv = nn::Matrix::randn(w, w, rng, std);
    layer.bv = nn::Matrix(1, w);
    layer.wo = nn::Matrix::randn(w, w, rng, std);
    layer.bo = nn::Matrix(1, w);
    layer.ln2_g = ones_row(w);
    layer.ln2_b = nn::Matrix(1, w);
    layer.w1 = nn::Matrix::randn(w, 4 * w, rng, std);
    layer.b1 = nn::Matrix(1, 4 * w);
    layer.w2 = nn::Matrix::randn(4 * w, w, rng, std);
    layer.b2 = nn::Matrix(1, w);
  }
  final_g = ones_row(w);
  final_b = nn::Matrix(1, w);
  proj_w = nn::Matrix::randn(w, w, rng, std);
  proj_b = nn::Matrix(1, w);
}

nn::ParamRefs ParseNetModel::named_params() {
  nn::ParamRefs refs;
  refs.push_back({"mask_token", &mask_token});
  refs.push_back({"type_table", &type_table});
  refs.push_back({"pos_table", &pos_table});
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer& layer = layers[l];
    refs.push_back({p + "ln1.g", &layer.ln1_g});
    refs.push_back({p + "ln1.b", &layer.ln1_b});
    refs.push_back({p + "attn.wq", &layer.wq});
    refs.push_back({p + "attn.bq", &layer.bq});
    refs.push_back({p + "attn.wk", &layer.wk});
    refs.push_back({p + "attn.bk", &layer.bk});
    refs.push_back({p + "attn.wv", &layer.wv});
    refs.push_back({p + "attn.bv", &layer.bv});
    refs.push_back({p + "attn.wo", &layer.wo});
    refs.push_back({p + "attn.bo", &layer.bo});
    refs.push_back({p + "ln2.g", &layer.ln2_g});
    refs.push_back({p + "ln2.b", &layer.ln2_b});
    refs.push_back({p + "mlp.w1", &layer.w1});
    refs.push_back({p + "mlp.b1", &layer.b1});
    refs.push_back({p + "mlp.w2", &layer.w2});
    refs.push_back({p + "mlp.b2", &layer.b2});
  }
  refs.push_back({"final.g", &final_g});
  refs.push_back({"final.b", &final_b});
  refs.push_back({"proj.w", &proj_w});
  refs.push_back({"proj.b", &proj_b});
  return refs;
}

void ParseNetModel::for_each_param(
    const std::function<void(const std::string&, const nn::Matrix&)>& fn) const {
  auto refs = const_cast<ParseNetModel*>(this)->named_params();
  for (const auto& r : refs) fn(r.name, *r.value);
}

void ParseNetModel::save(const std::filesystem::path& path) const {
  nn::TensorArchive ar;
  ar.kind = "parsenet";
  ar.meta = config_.to_json();
  for_each_param([&](const std::string& name, const nn::Matrix& m) { ar.add(name, m); });
  ar.save(path);
}

ParseNetModel ParseNetModel::load(const std::filesystem::path& path) {
  nn::TensorArchive ar = nn::TensorArchive::load(path);
  if (ar.kind != "parsenet") throw IoError("not a parsenet checkpoint: " + path.string());
  ParseNetModel model(ParseNetConfig::from_json(ar.meta), 0);
  for (auto& ref : model.named_params()) {
    const nn::Matrix& stored = ar.get(ref.name);
    if (!stored.same_shape(*ref.value)) {
      throw IoError("checkpoint tensor '" + ref.name + "' has unexpected shape");
    }
    *ref.value = stored;
  }
  return model;
}

namespace {

struct SequencePlan {
  int length = 0;
  bool has_image = false;
  std::vector<TokenType> types;
  std::vector<int> mask_positions;
};

SequencePlan plan_sequence(const ParseNetModel& model, const ParseNetInput& input) {
  if (input.query_attr_embeddings.empty()) {
    throw Error("build_sequence requires at least one query attribute");
  }
  SequencePlan plan;
  plan.has_image = input.image_embedding.has_value();
  plan.length = (plan.has_image ? 1 : 0) + 2 * static_cast<int>(input.context.pairs.size()) +
                2 * static_cast<int>(input.query_attr_embeddings.size());
  if (plan.length > model.config().max_sequence_length) {
    throw SequenceTooLongError("sequence length " + std::to_string(plan.length) + " exceeds " +
                               std::to_string(model.config().max_sequence_length));
  }
  if (plan.has_image) plan.types.push_back(TokenType::Image);
  for (size_t i = 0; i < input.context.pairs.size(); ++i) {
    plan.types.push_back(TokenType::Attr);
    plan.types.push_back(TokenType::Value);
  }
  for (size_t i = 0; i < input.query_attr_embeddings.size(); ++i) {
    plan.types.push_back(TokenType::Attr);
    plan.mask_positions.push_back(static_cast<int>(plan.types.size()));
    plan.types.push_back(TokenType::Mask);
  }
  return plan;
}

void check_width(const std::vector<float>& v, int width, const char* what) {
  if (static_cast<int>(v.size()) != width) {
    throw ShapeError(std::string(what) + " embedding has dim " + std::to_string(v.size()) +
                     ", model width is " + std::to_string(width));
  }
}

// Content vectors in sequence order (mask slots get the mask token).
std::vector<const std::vector<float>*> content_rows(const ParseNetModel& model,
                                                    const ParseNetInput& input) {
  std::vector<const std::vector<float>*> rows;
  const int w = model.width();
  if (input.image_embedding) {
    check_width(*input.image_embedding, w, "image");
    rows.push_back(&*input.image_embedding);
  }
  for (const auto& pair : input.context.pairs) {
    check_width(pair.attr, w, "context attribute");
    check_width(pair.value, w, "context value");
    rows.push_back(&pair.attr);
    rows.push_back(&pair.value);
  }
  for (const auto& attr : input.query_attr_embeddings) {
    check_width(attr, w, "query attribute");
    rows.push_back(&attr);
    rows.push_back(nullptr);  // mask slot
  }
  return rows;
}

}  // namespace

SequenceBatch build_sequence(const ParseNetModel& model, const ParseNetInput& input) {
  const SequencePlan plan = plan_sequence(model, input);
  const auto rows = content_rows(model, input);
  const int w = model.width();
  SequenceBatch batch;
  batch.tokens = nn::Matrix(plan.length, w);
  batch.mask_positions = plan.mask_positions;
  batch.types = plan.types;
  for (int i = 0; i < plan.length; ++i) {
    const float* content = rows[static_cast<size_t>(i)]
                               ? rows[static_cast<size_t>(i)]->data()
                               : model.mask_token.row(0);
    const float* type_row = model.type_table.row(static_cast<int>(plan.types[static_cast<size_t>(i)]));
    const float* pos_row = model.pos_table.row(i);
    float* out = batch.tokens.row(i);
    for (int j = 0; j < w; ++j) out[j] = content[j] + type_row[j] + pos_row[j];
  }
  return batch;
}

namespace {

nn::Matrix attention_eval(const ParseNetModel::Layer& layer, const nn::Matrix& h, int heads) {
  const int w = h.cols;
  const int dh = w / heads;
  auto project = [&](const nn::Matrix& wm, const nn::Matrix& bm) {
    nn::Matrix p = nn::matmul(h, wm);
    for (int i = 0; i < p.rows; ++i) {
      for (int j = 0; j < w; ++j) p(i, j) += bm(0, j);
    }
    return p;
  };
  const nn::Matrix q = project(layer.wq, layer.bq);
  const nn::Matrix k = project(layer.wk, layer.bk);
  const nn::Matrix v = project(layer.wv, layer.bv);
  nn::Matrix ctx(h.rows, w);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  for (int head = 0; head < heads; ++head) {
    const int c0 = head * dh;
    nn::Matrix scores(h.rows, h.rows);
    for (int i = 0; i < h.rows; ++i) {
      for (int j = 0; j < h.rows; ++j) {
        double acc = 0;
        for (int d = 0; d < dh; ++d) acc += static_cast<double>(q(i, c0 + d)) * k(j, c0 + d);
        scores(i, j) = static_cast<float>(acc) * scale;
      }
    }
    nn::softmax_rows_inplace(scores);
    for (int i = 0; i < h.rows; ++i) {
      for (int j = 0; j < h.rows; ++j) {
        const float a = scores(i, j);
        if (a == 0.0f) continue;
        for (int d = 0; d < dh; ++d) ctx(i, c0 + d) += a * v(j, c0 + d);
      }
    }
  }
  nn::Matrix out = nn::matmul(ctx, layer.wo);
  for (int i = 0; i < out.rows; ++i) {
    for (int j = 0; j < w; ++j) out(i, j) += layer.bo(0, j);
  }
  return out;
}

}  // namespace

std::vector<std::vector<float>> forward(const ParseNetModel& model, const SequenceBatch& batch) {
  const auto& cfg = model.config();
  if (batch.tokens.cols != cfg.width) throw ShapeError("token width does not match model width");
  nn::Matrix x = batch.tokens;
  for (const auto& layer : model.layers) {
    nn::Matrix h = nn::layer_norm_forward(x, layer.ln1_g, layer.ln1_b);
    nn::add_inplace(x, attention_eval(layer, h, cfg.heads));
    nn::Matrix h2 = nn::layer_norm_forward(x, layer.ln2_g, layer.ln2_b);
    nn::Matrix m = nn::matmul(h2, layer.w1);
    for (int i = 0; i < m.rows; ++i) {
      for (int j = 0; j < m.cols; ++j) m(i, j) = nn::gelu_scalar(m(i, j) + layer.b1(0, j));
    }
    nn::Matrix m2 = nn::matmul(m, layer.w2);
    for (int i = 0; i < m2.rows; ++i) {
      for (int j = 0; j < m2.cols; ++j) m2(i, j) += layer.b2(0, j);
    }
    nn::add_inplace(x, m2);
  }
  nn::Matrix f = nn::layer_norm_forward(x, model.final_g, model.final_b);
  std::vector<std::vector<float>> outputs;
  outputs.reserve(batch.mask_positions.size());
  for (int pos : batch.mask_positions) {
    nn::Matrix row(1, cfg.width);
    for (int j = 0; j < cfg.width; ++j) row(0, j) = f(pos, j);
    nn::Matrix y = nn::matmul(row, model.proj_w);
    for (int j = 0; j < cfg.width; ++j) y(0, j) += model.proj_b(0, j);
    outputs.push_back(std::move(y.d));
  }
  return outputs;
}

int forward_tape(nn::Graph& graph, enc::GraphParams& params, const ParseNetModel& model,
                 const ParseNetInput& input, std::optional<int> image_node, Rng* dropout_rng) {
  const auto& cfg = model.config();
  const SequencePlan plan = plan_sequence(model, input);
  const auto rows = content_rows(model, input);

  const int mask_node = params.node_for("mask_token", model.mask_token);
  std::vector<int> content_nodes;
  content_nodes.reserve(rows.size());
  size_t row_idx = 0;
  for (const auto* row : rows) {
    if (row == nullptr) {
      content_nodes.push_back(mask_node);
    } else if (plan.has_image && row_idx == 0 && image_node) {
      content_nodes.push_back(*image_node);
    } else {
      content_nodes.push_back(graph.input(nn::Matrix::from_row(*row)));
    }
    ++row_idx;
  }

  std::vector<int> type_ids(plan.types.size());
  std::vector<int> pos_ids(plan.types.size());
  for (size_t i = 0; i < plan.types.size(); ++i) {
    type_ids[i] = static_cast<int>(plan.types[i]);
    pos_ids[i] = static_cast<int>(i);
  }
  int x = graph.stack_rows(content_nodes);
  x = graph.add(x, graph.gather_rows(params.node_for("type_table", model.type_table), type_ids));
  x = graph.add(x, graph.gather_rows(params.node_for("pos_table", model.pos_table), pos_ids));

  const int dh = cfg.width / cfg.heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const double keep = 1.0 - static_cast<double>(cfg.dropout);
  for (size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    int h = graph.layer_norm(x, params.node_for(p + "ln1.g", layer.ln1_g),
                             params.node_for(p + "ln1.b", layer.ln1_b));
    int q = graph.add_rowvec(graph.matmul(h, params.node_for(p + "attn.wq", layer.wq)),
                             params.node_for(p + "attn.bq", layer.bq));
    int k = graph.add_rowvec(graph.matmul(h, params.node_for(p + "attn.wk", layer.wk)),
                             params.node_for(p + "attn.bk", layer.bk));
    int v = graph.add_rowvec(graph.matmul(h, params.node_for(p + "attn.wv", layer.wv)),
                             params.node_for(p + "attn.bv", layer.bv));
    std::vector<int> head_ctx;
    head_ctx.reserve(static_cast<size_t>(cfg.heads));
    for (int head = 0; head < cfg.heads; ++head) {
      const int c0 = head * dh;
      const int qi = graph.slice_cols(q, c0, c0 + dh);
      const int ki = graph.slice_cols(k, c0, c0 + dh);
      const int vi = graph.slice_cols(v, c0, c0 + dh);
      const int att = graph.softmax_rows(graph.scale(graph.matmul_nt(qi, ki), scale));
      head_ctx.push_back(graph.matmul(att, vi));
    }
    int attn = graph.add_rowvec(
        graph.matmul(graph.concat_cols(head_ctx), params.node_for(p + "attn.wo", layer.wo)),
        params.node_for(p + "attn.bo", layer.bo));
    if (dropout_rng && cfg.dropout > 0.0f) attn = graph.dropout(attn, keep, *dropout_rng);
    x = graph.add(x, attn);

    int h2 = graph.layer_norm(x, params.node_for(p + "ln2.g", layer.ln2_g),
                              params.node_for(p + "ln2.b", layer.ln2_b));
    int m = graph.gelu(graph.add_rowvec(graph.matmul(h2, params.node_for(p + "mlp.w1", layer.w1)),
                                        params.node_for(p + "mlp.b1", layer.b1)));
    int m2 = graph.add_rowvec(graph.matmul(m, params.node_for(p + "mlp.w2", layer.w2)),
                              params.node_for(p + "mlp.b2", layer.b2));
    if (dropout_rng && cfg.dropout > 0.0f) m2 = graph.dropout(m2, keep, *dropout_rng);
    x = graph.add(x, m2);
  }
  int f = graph.layer_norm(x, params.node_for("final.g", model.final_g),
                           params.node_for("final.b", model.final_b));
  int masked = graph.gather_rows(f, plan.mask_positions);
  return graph.add_rowvec(graph.matmul(masked, params.node_for("proj.w", model.proj_w)),
                          params.node_for("proj.b", model.proj_b));
}

double cosine_loss(const std::vector<std::vector<float>>& predicted,
                   const std::vector<std::vector<float>>& targets) {
  if (predicted.size() != targets.size()) {
    throw ShapeError("cosine_loss: predicted and target counts differ");
  }
  double total = 0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    total += 1.0 - nn::cosine_similarity(predicted[i], targets[i]);
  }
  return total;
}

std::vector<std::vector<double>> cosine_loss_gradient(
    const std::vector<std::vector<double>>& predicted,
    const std::vector<std::vector<double>>& targets) {
  if (predicted.size() != targets.size()) {
    throw ShapeError("cosine_loss_gradient: predicted and target counts differ");
  }
  std::vector<std::vector<double>> grads(predicted.size());
  for (size_t i = 0; i < predicted.size(); ++i) {
    const auto& p = predicted[i];
    const auto& t = targets[i];
    if (p.size() != t.size()) throw ShapeError("cosine_loss_gradient: dim mismatch");
    const int n = static_cast<int>(p.size());
    const double np = nn::norm2(p.data(), n);
    const double nt = nn::norm2(t.data(), n);
    if (np < 1e-12 || nt < 1e-12) throw ZeroNormError("cosine of zero-norm vector");
    const double c = nn::dot(p.data(), t.data(), n) / (np * nt);
    grads[i].resize(p.size());
    for (int j = 0; j < n; ++j) {
      // d(1 - cos)/dp_j
      grads[i][static_cast<size_t>(j)] = -(t[static_cast<size_t>(j)] / (np * nt) -
                                           c * p[static_cast<size_t>(j)] / (np * np));
    }
  }
  return grads;
}

std::vector<double> score_candidates(const std::vector<float>& predicted,
                                     const data::ValueVocabulary& vocab,
                                     const enc::EncoderBundle& bundle, enc::EmbeddingStore* store) {
  std::vector<double> scores(static_cast<size_t>(vocab.size()));
  for (int id = 0; id < vocab.size(); ++id) {
    const auto e = enc::embed_text(bundle, vocab.value_of(id), store);
    scores[static_cast<size_t>(id)] = nn::cosine_similarity(predicted, e);
  }
  return scores;
}

std::vector<RankedValue> rank_by_score(const std::vector<double>& scores) {
  std::vector<RankedValue> ranked(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) ranked[i] = {static_cast<int>(i), scores[i]};
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedValue& a, const RankedValue& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return ranked;
}

std::map<std::string, std::vector<RankedValue>> predict_values(
    const ParseNetModel& model, const enc::EncoderBundle& bundle, const data::ExhibitRecord& record,
    const std::vector<std::string>& query_attrs, const data::VocabularyMap& vocabularies,
    enc::EmbeddingStore* store, bool use_image) {
  for (const auto& attr : query_attrs) {
    if (!vocabularies.count(attr)) {
      throw UnknownAttributeError("no vocabulary for query attribute '" + attr + "'");
    }
  }
  const std::set<std::string> query_set(query_attrs.begin(), query_attrs.end());
  const data::TablePartition partition =
      data::partition_table(record.table, query_set, data::PartitionMode::Inference);
  const enc::TableEmbeddings emb = enc::embed_table(bundle, partition, store);

  ParseNetInput input;
  if (use_image) input.image_embedding = enc::embed_image(bundle, record.image_ref, store);
  input.context = emb.context;
  input.query_attr_embeddings = emb.query_attr_embeddings;

  const auto outputs = forward(model, build_sequence(model, input));
  std::map<std::string, std::vector<RankedValue>> result;
  for (size_t i = 0; i < emb.query_attrs.size(); ++i) {
    const auto& attr = emb.query_attrs[i];
    result[attr] = rank_by_score(score_candidates(outputs[i], vocabularies.at(attr), bundle, store));
  }
  return result;
}

}  // namespace muze::net
