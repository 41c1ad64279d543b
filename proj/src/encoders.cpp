#include "encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "errors.hpp"
#include "nn/checkpoint.hpp"
#include "rng.hpp"

namespace muze::enc {

int GraphParams::node_for(const std::string& name, const nn::Matrix& value) {
  auto it = nodes_.find(name);
  if (it != nodes_.end()) return it->second;
  const bool trainable = is_trainable_(name);
  const int node = graph_.input(value, trainable);
  nodes_.emplace(name, node);
  if (trainable) trainable_nodes_.emplace_back(name, node);
  return node;
}

nn::GradMap GraphParams::collect_grads() const {
  nn::GradMap grads;
  for (const auto& [name, node] : trainable_nodes_) {
    if (graph_.has_grad(node)) grads.emplace(name, graph_.grad(node));
  }
  return grads;
}

namespace {

std::vector<std::string> tokenize(const std::string& input) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : input) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  if (tokens.empty()) tokens.push_back(input);  // symbol-only input: hash it whole
  return tokens;
}

}  // namespace

StubTower::StubTower(std::string name, int dim, int blocks, uint64_t featurizer_seed,
                     uint64_t init_seed)
    : name_(std::move(name)), dim_(dim), featurizer_seed_(featurizer_seed) {
  Rng rng(init_seed);
  const float w1_std = 0.5f;
  blocks_.reserve(static_cast<size_t>(blocks));
  for (int b = 0; b < blocks; ++b) {
    Block blk;
    blk.w1 = nn::Matrix::randn(dim, dim, rng, w1_std);
    blk.w2 = nn::Matrix::zeros(dim, dim);  // identity residual at init
    blocks_.push_back(std::move(blk));
  }
  proj_ = nn::Matrix::identity(dim);
}

std::vector<float> StubTower::featurize(const std::string& input) const {
  std::vector<double> acc(static_cast<size_t>(dim_), 0.0);
  for (const auto& token : tokenize(input)) {
    Rng token_rng(hash_str(token, featurizer_seed_));
    for (auto& x : acc) x += token_rng.normal();
  }
  double norm = 0;
  for (double x : acc) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<float> out(static_cast<size_t>(dim_));
  if (norm < 1e-12) {
    out[0] = 1.0f;  // degenerate cancellation; pick a fixed unit vector
    return out;
  }
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

std::vector<float> StubTower::forward(const std::string& input) const {
  nn::Matrix x = nn::Matrix::from_row(featurize(input));
  for (const auto& blk : blocks_) {
    nn::Matrix h = nn::matmul(x, blk.w1);
    for (auto& v : h.d) v = std::tanh(v);
    nn::matmul_acc(x, h, blk.w2);
  }
  nn::Matrix out = nn::l2_normalize_rows(nn::matmul(x, proj_));
  return out.d;
}

int StubTower::forward_tape(nn::Graph& graph, GraphParams& params, const std::string& input) const {
  int x = graph.input(nn::Matrix::from_row(featurize(input)));
  for (size_t b = 0; b < blocks_.size(); ++b) {
    const std::string prefix = block_param_prefix(static_cast<int>(b));
    const int w1 = params.node_for(prefix + ".w1", blocks_[b].w1);
    const int w2 = params.node_for(prefix + ".w2", blocks_[b].w2);
    x = graph.add(x, graph.matmul(graph.tanh_op(graph.matmul(x, w1)), w2));
  }
  const int proj = params.node_for(name_ + ".proj", proj_);
  return graph.l2_normalize_rows_op(graph.matmul(x, proj));
}

void StubTower::for_each_param(const std::function<void(const std::string&, nn::Matrix&)>& fn) {
  for (size_t b = 0; b < blocks_.size(); ++b) {
    const std::string prefix = block_param_prefix(static_cast<int>(b));
    fn(prefix + ".w1", blocks_[b].w1);
    fn(prefix + ".w2", blocks_[b].w2);
  }
  fn(name_ + ".proj", proj_);
}

void StubTower::for_each_param(
    const std::function<void(const std::string&, const nn::Matrix&)>& fn) const {
  const_cast<StubTower*>(this)->for_each_param(
      [&](const std::string& name, nn::Matrix& m) { fn(name, m); });
}

std::string StubTower::block_param_prefix(int block) const {
  return name_ + ".block" + std::to_string(block);
}

EncoderBundle make_stub_bundle(int dim, uint64_t seed) {
  if (dim < 8) throw ConfigError("stub bundle dim must be >= 8");
  EncoderBundle b;
  b.kind_ = "stub";
  b.dim_ = dim;
  b.seed_ = seed;
  b.text_tower_ = StubTower("text", dim, EncoderBundle::kTextBlocks, seed, hash_str("text-init", seed));
  b.image_tower_ =
      StubTower("image", dim, EncoderBundle::kImageBlocks, seed, hash_str("image-init", seed));
  b.logit_scale_ = nn::Matrix(1, 1);
  b.logit_scale_(0, 0) = std::log(1.0f / 0.07f);
  b.policy_.freeze_text = true;
  b.policy_.frozen_image_blocks = EncoderBundle::kImageBlocks;
  b.policy_.freeze_image_all = false;
  return b;
}

EncoderBundle make_bundle(const std::string& kind, int dim, uint64_t seed) {
  if (kind == "stub") return make_stub_bundle(dim, seed);
  throw EncoderError("unknown encoder kind '" + kind + "' (this build ships the stub encoder; " +
                     "real backbone adapters load through bundle checkpoints)");
}

nn::ParamRefs EncoderBundle::trainable_params(const FreezePolicy& policy) {
  nn::ParamRefs refs;
  if (!policy.freeze_text) {
    text_tower_.for_each_param(
        [&](const std::string& name, nn::Matrix& m) { refs.push_back({name, &m}); });
  }
  if (!policy.freeze_image_all) {
    image_tower_.for_each_param([&](const std::string& name, nn::Matrix& m) {
      for (int blk = 0; blk < policy.frozen_image_blocks && blk < image_tower_.num_blocks(); ++blk) {
        if (name.starts_with(image_tower_.block_param_prefix(blk) + ".")) return;
      }
      refs.push_back({name, &m});
    });
  }
  refs.push_back({"logit_scale", &logit_scale_});
  return refs;
}

std::vector<std::string> EncoderBundle::trainable_param_names(const FreezePolicy& policy) const {
  auto refs = const_cast<EncoderBundle*>(this)->trainable_params(policy);
  std::vector<std::string> names;
  names.reserve(refs.size());
  for (const auto& r : refs) names.push_back(r.name);
  return names;
}

bool EncoderBundle::image_tower_trainable(const FreezePolicy& policy) const {
  if (policy.freeze_image_all) return false;
  // the projection alone already makes the tower output trainable
  return true;
}

void EncoderBundle::for_each_param(
    const std::function<void(const std::string&, const nn::Matrix&)>& fn) const {
  text_tower_.for_each_param(fn);
  image_tower_.for_each_param(fn);
  fn("logit_scale", logit_scale_);
}

std::string EncoderBundle::encoder_id(char modality) const {
  const StubTower& tower = modality == 'T' ? text_tower_ : image_tower_;
  bool& valid = modality == 'T' ? text_fp_valid_ : image_fp_valid_;
  uint64_t& fp = modality == 'T' ? text_fp_ : image_fp_;
  if (!valid) {
    uint64_t h = hash_str(kind_, seed_);
    tower.for_each_param([&](const std::string& name, const nn::Matrix& m) {
      h = hash_str(name, h);
      h = hash_bytes(m.d.data(), m.d.size() * sizeof(float), h);
    });
    fp = h;
    valid = true;
  }
  return kind_ + ":d" + std::to_string(dim_) + ":s" + std::to_string(seed_) + ":" + modality +
         hex64(fp);
}

void EncoderBundle::save(const std::filesystem::path& path) const {
  nn::TensorArchive ar;
  ar.kind = "bundle";
  ar.meta = {{"encoder", kind_},
             {"dim", dim_},
             {"seed", seed_},
             {"text_blocks", text_tower_.num_blocks()},
             {"image_blocks", image_tower_.num_blocks()},
             {"policy",
              {{"frozen_image_blocks", policy_.frozen_image_blocks},
               {"freeze_text", policy_.freeze_text},
               {"freeze_image_all", policy_.freeze_image_all}}}};
  for_each_param([&](const std::string& name, const nn::Matrix& m) { ar.add(name, m); });
  ar.save(path);
}

EncoderBundle EncoderBundle::load(const std::filesystem::path& path) {
  nn::TensorArchive ar = nn::TensorArchive::load(path);
  if (ar.kind != "bundle") throw IoError("not an encoder bundle checkpoint: " + path.string());
  const int dim = ar.meta.at("dim").get<int>();
  const uint64_t seed = ar.meta.at("seed").get<uint64_t>();
  EncoderBundle b = make_stub_bundle(dim, seed);
  b.kind_ = ar.meta.at("encoder").get<std::string>();
  const auto& policy = ar.meta.at("policy");
  b.policy_.frozen_image_blocks = policy.at("frozen_image_blocks").get<int>();
  b.policy_.freeze_text = policy.at("freeze_text").get<bool>();
  b.policy_.freeze_image_all = policy.at("freeze_image_all").get<bool>();
  b.text_tower_.for_each_param(
      [&](const std::string& name, nn::Matrix& m) { m = ar.get(name); });
  b.image_tower_.for_each_param(
      [&](const std::string& name, nn::Matrix& m) { m = ar.get(name); });
  b.logit_scale_ = ar.get("logit_scale");
  b.invalidate_fingerprint();
  return b;
}

namespace {

std::string trimmed(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string cache_key(const EncoderBundle& bundle, char modality, const std::string& input) {
  const std::string id = bundle.encoder_id(modality) + '\x1f' + modality + '\x1f' + input;
  return hex64(hash_str(id, 0x6d757a65)) + hex64(hash_str(id, 0x656d6265));
}

std::vector<float> cached_encode(const EncoderBundle& bundle, char modality,
                                 const std::string& input, EmbeddingStore* store) {
  std::string key;
  if (store) {
    key = cache_key(bundle, modality, input);
    if (auto hit = store->get(key)) return *hit;
  }
  std::vector<float> vec =
      modality == 'T' ? bundle.encode_text(input) : bundle.encode_image_key(input);
  if (store) store->put(key, vec);
  return vec;
}

}  // namespace

std::vector<float> embed_text(const EncoderBundle& bundle, const std::string& text,
                              EmbeddingStore* store) {
  if (trimmed(text).empty()) throw EmptyTextError("cannot embed empty text");
  return cached_encode(bundle, 'T', text, store);
}

std::vector<float> embed_image(const EncoderBundle& bundle, const std::string& image_ref,
                               EmbeddingStore* store) {
  if (image_ref.empty()) throw MissingImageError("empty image reference");
  if (bundle.image_files_required() && !std::filesystem::exists(image_ref)) {
    throw MissingImageError("image file not found: " + image_ref);
  }
  return cached_encode(bundle, 'I', image_ref, store);
}

namespace {

std::vector<float> combined_value_embedding(const EncoderBundle& bundle,
                                            const std::vector<std::string>& values,
                                            EmbeddingStore* store, bool normalize_before_sum) {
  std::vector<double> acc(static_cast<size_t>(bundle.dim()), 0.0);
  for (const auto& value : values) {
    std::vector<float> e = embed_text(bundle, value, store);
    if (normalize_before_sum) {
      const double n = nn::norm2(e.data(), static_cast<int>(e.size()));
      if (n < 1e-12) throw ZeroNormError("zero-norm value embedding: " + value);
      for (auto& x : e) x = static_cast<float>(x / n);
    }
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += e[i];
  }
  std::vector<float> out(acc.size());
  for (size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

}  // namespace

TableEmbeddings embed_table(const EncoderBundle& bundle, const data::TablePartition& partition,
                            EmbeddingStore* store, bool normalize_before_sum) {
  TableEmbeddings out;
  for (const auto& [attr, values] : partition.context.entries()) {
    if (values.empty()) continue;
    EmbeddedPair pair;
    pair.attr = embed_text(bundle, attr, store);
    pair.value = combined_value_embedding(bundle, values, store, normalize_before_sum);
    out.context.pairs.push_back(std::move(pair));
  }
  for (const auto& [attr, values] : partition.query.entries()) {
    out.query_attrs.push_back(attr);
    out.query_attr_embeddings.push_back(embed_text(bundle, attr, store));
    if (values.empty()) {
      out.targets.emplace_back(std::nullopt);
    } else {
      out.targets.emplace_back(combined_value_embedding(bundle, values, store, normalize_before_sum));
    }
  }
  return out;
}

}  // namespace muze::enc
