#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "encoders.hpp"
#include "errors.hpp"
#include "parsenet.hpp"
#include "rng.hpp"

using namespace muze;
using namespace muze::net;

namespace {

ParseNetConfig small_config(int width = 16, int heads = 2) {
  ParseNetConfig cfg;
  cfg.layers = 2;
  cfg.width = width;
  cfg.heads = heads;
  cfg.max_sequence_length = 32;
  return cfg;
}

std::vector<float> unit_vec(int dim, uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(static_cast<size_t>(dim));
  double n = 0;
  for (auto& x : v) {
    x = static_cast<float>(rng.normal());
    n += static_cast<double>(x) * x;
  }
  n = std::sqrt(n);
  for (auto& x : v) x = static_cast<float>(x / n);
  return v;
}

ParseNetInput make_input(int dim, int n_context, int n_queries, bool image) {
  ParseNetInput input;
  if (image) input.image_embedding = unit_vec(dim, 1);
  for (int i = 0; i < n_context; ++i) {
    enc::EmbeddedPair pair;
    pair.attr = unit_vec(dim, 100 + static_cast<uint64_t>(i));
    pair.value = unit_vec(dim, 200 + static_cast<uint64_t>(i));
    input.context.pairs.push_back(std::move(pair));
  }
  for (int q = 0; q < n_queries; ++q) {
    input.query_attr_embeddings.push_back(unit_vec(dim, 300 + static_cast<uint64_t>(q)));
  }
  return input;
}

}  // namespace

TEST_CASE("config validation") {
  ParseNetConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.width = 15;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.heads = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.dropout = 1.0f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  const ParseNetConfig defaults;
  CHECK(defaults.layers == 2);
  CHECK(defaults.width == 512);
  CHECK(defaults.heads == 8);
}

TEST_CASE("build_sequence lays out image, context pairs, and mask slots") {
  ParseNetModel model(small_config(), 42);

  // image + 2 context pairs + 1 query: L = 7, mask at index 6
  const auto batch = build_sequence(model, make_input(16, 2, 1, true));
  CHECK(batch.tokens.rows == 7);
  CHECK(batch.mask_positions == std::vector<int>{6});
  CHECK(batch.types[0] == TokenType::Image);
  CHECK(batch.types[1] == TokenType::Attr);
  CHECK(batch.types[2] == TokenType::Value);
  CHECK(batch.types[5] == TokenType::Attr);
  CHECK(batch.types[6] == TokenType::Mask);

  // no image, no context, one query: L = 2, mask at 1
  const auto minimal = build_sequence(model, make_input(16, 0, 1, false));
  CHECK(minimal.tokens.rows == 2);
  CHECK(minimal.mask_positions == std::vector<int>{1});

  // no queries is a precondition violation
  CHECK_THROWS_AS(build_sequence(model, make_input(16, 2, 0, true)), Error);

  // over the maximum sequence length
  CHECK_THROWS_AS(build_sequence(model, make_input(16, 14, 2, true)), SequenceTooLongError);

  // token = content + type + position
  const auto& input = make_input(16, 0, 1, true);
  const auto b2 = build_sequence(model, input);
  for (int j = 0; j < 16; ++j) {
    const float expected = (*input.image_embedding)[static_cast<size_t>(j)] +
                           model.type_table(0, j) + model.pos_table(0, j);
    CHECK(b2.tokens(0, j) == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("forward emits one embedding per mask position, deterministically") {
  ParseNetModel model(small_config(), 7);
  const auto input = make_input(16, 3, 2, true);
  const auto batch = build_sequence(model, input);
  const auto out1 = forward(model, batch);
  const auto out2 = forward(model, batch);
  REQUIRE(out1.size() == 2);
  CHECK(out1 == out2);
  CHECK(out1[0].size() == 16);
  CHECK(out1[0] != out1[1]);
}

TEST_CASE("zeroing the image token changes the outputs") {
  ParseNetModel model(small_config(), 21);
  auto input = make_input(16, 2, 1, true);
  const auto with_image = forward(model, build_sequence(model, input));
  input.image_embedding = std::vector<float>(16, 0.0f);
  const auto zeroed = forward(model, build_sequence(model, input));
  double diff = 0;
  for (size_t j = 0; j < 16; ++j) diff += std::abs(with_image[0][j] - zeroed[0][j]);
  CHECK(diff > 1e-4);
}

TEST_CASE("tape forward equals eval forward") {
  ParseNetModel model(small_config(), 33);
  const auto input = make_input(16, 2, 2, true);
  const auto eval_out = forward(model, build_sequence(model, input));

  nn::Graph graph;
  enc::GraphParams params(graph, [](const std::string&) { return true; });
  const int pred = forward_tape(graph, params, model, input);
  REQUIRE(graph.val(pred).rows == 2);
  for (int q = 0; q < 2; ++q) {
    for (int j = 0; j < 16; ++j) {
      CHECK(graph.val(pred)(q, j) ==
            doctest::Approx(eval_out[static_cast<size_t>(q)][static_cast<size_t>(j)]).epsilon(2e-5));
    }
  }
}

TEST_CASE("cosine_loss closed forms") {
  const std::vector<float> a = {1.0f, 0.0f, 0.0f};
  const std::vector<float> b = {0.0f, 2.0f, 0.0f};
  const std::vector<float> neg_a = {-1.0f, 0.0f, 0.0f};

  CHECK(cosine_loss({a}, {a}) == doctest::Approx(0.0));
  CHECK(cosine_loss({a}, {neg_a}) == doctest::Approx(2.0));
  CHECK(cosine_loss({a}, {b}) == doctest::Approx(1.0));
  CHECK(cosine_loss({a, a}, {neg_a, neg_a}) == doctest::Approx(4.0));  // 2 * |queries|
  CHECK_THROWS_AS(cosine_loss({a}, {{0.0f, 0.0f, 0.0f}}), ZeroNormError);
  CHECK_THROWS_AS(cosine_loss({a, b}, {a}), ShapeError);
}

TEST_CASE("cosine_loss stays within [0, 2n] on random vectors") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(4));
    const int dim = 2 + static_cast<int>(rng.below(12));
    std::vector<std::vector<float>> pred, tgt;
    for (int i = 0; i < n; ++i) {
      pred.push_back(unit_vec(dim, rng.next_u64()));
      tgt.push_back(unit_vec(dim, rng.next_u64()));
    }
    const double loss = cosine_loss(pred, tgt);
    CHECK(loss >= 0.0);
    CHECK(loss <= 2.0 * n + 1e-9);
  }
}

TEST_CASE("cosine_loss gradient matches central differences") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 3 + static_cast<int>(rng.below(8));
    std::vector<std::vector<double>> pred{std::vector<double>(static_cast<size_t>(dim))};
    std::vector<std::vector<double>> tgt{std::vector<double>(static_cast<size_t>(dim))};
    for (int j = 0; j < dim; ++j) {
      pred[0][static_cast<size_t>(j)] = rng.normal();
      tgt[0][static_cast<size_t>(j)] = rng.normal();
    }
    const auto grads = cosine_loss_gradient(pred, tgt);
    const double h = 1e-6;
    for (int j = 0; j < dim; ++j) {
      auto loss_at = [&](double x) {
        auto p = pred;
        p[0][static_cast<size_t>(j)] = x;
        std::vector<std::vector<float>> pf{{p[0].begin(), p[0].end()}};
        std::vector<std::vector<float>> tf{{tgt[0].begin(), tgt[0].end()}};
        // double-precision loss for the finite difference
        double np = 0, nt = 0, dot = 0;
        for (int k = 0; k < dim; ++k) {
          np += p[0][static_cast<size_t>(k)] * p[0][static_cast<size_t>(k)];
          nt += tgt[0][static_cast<size_t>(k)] * tgt[0][static_cast<size_t>(k)];
          dot += p[0][static_cast<size_t>(k)] * tgt[0][static_cast<size_t>(k)];
        }
        return 1.0 - dot / (std::sqrt(np) * std::sqrt(nt));
      };
      const double x0 = pred[0][static_cast<size_t>(j)];
      const double fd = (loss_at(x0 + h) - loss_at(x0 - h)) / (2 * h);
      const double got = grads[0][static_cast<size_t>(j)];
      CHECK(std::abs(got - fd) <= 1e-4 * std::max({1.0, std::abs(got), std::abs(fd)}));
    }
  }
}

TEST_CASE("ranking is scale-invariant and breaks ties by id") {
  std::vector<double> scores = {0.3, 0.9, 0.9, -0.2};
  const auto ranked = rank_by_score(scores);
  CHECK(ranked[0].id == 1);  // tie between 1 and 2 goes to the lower id
  CHECK(ranked[1].id == 2);
  CHECK(ranked[2].id == 0);
  CHECK(ranked[3].id == 3);
}

TEST_CASE("predict_values ranks the vocabulary by cosine similarity") {
  enc::EncoderBundle bundle = enc::make_stub_bundle(16, 6);
  ParseNetModel model(small_config(), 3);

  data::ExhibitRecord rec{"obj1", "img/obj1.png", "", {}};
  rec.table.set("materials", {});
  rec.table.set("categories", {"prints"});
  data::VocabularyMap vocabs;
  vocabs.emplace("materials", data::ValueVocabulary("materials", {"paper", "ink", "bronze"}));

  const auto result = predict_values(model, bundle, rec, {"materials"}, vocabs, nullptr);
  const auto& ranked = result.at("materials");
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0].score >= ranked[1].score);
  CHECK(ranked[1].score >= ranked[2].score);

  // singleton vocabulary trivially ranks its value first
  data::VocabularyMap single;
  single.emplace("materials", data::ValueVocabulary("materials", {"paper"}));
  const auto lone = predict_values(model, bundle, rec, {"materials"}, single, nullptr);
  CHECK(lone.at("materials").size() == 1);
  CHECK(lone.at("materials")[0].id == 0);

  // ranking (not just scores) is invariant under positive scaling of the
  // predicted embedding
  std::vector<float> pred = unit_vec(16, 77);
  const auto scores = score_candidates(pred, vocabs.at("materials"), bundle, nullptr);
  std::vector<float> scaled = pred;
  for (auto& x : scaled) x *= 37.5f;
  const auto scores2 = score_candidates(scaled, vocabs.at("materials"), bundle, nullptr);
  const auto r1 = rank_by_score(scores);
  const auto r2 = rank_by_score(scores2);
  for (size_t i = 0; i < r1.size(); ++i) CHECK(r1[i].id == r2[i].id);

  CHECK_THROWS_AS(predict_values(model, bundle, rec, {"nope"}, vocabs, nullptr),
                  UnknownAttributeError);
}

TEST_CASE("parsenet checkpoints round-trip bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "muze_test_parsenet_ckpt";
  std::filesystem::create_directories(dir);
  ParseNetModel model(small_config(), 99);
  model.save(dir / "m.ckpt");
  ParseNetModel loaded = ParseNetModel::load(dir / "m.ckpt");
  CHECK(loaded.config().width == 16);
  CHECK(loaded.mask_token == model.mask_token);
  CHECK(loaded.layers[1].w1 == model.layers[1].w1);

  const auto input = make_input(16, 1, 1, true);
  CHECK(forward(loaded, build_sequence(loaded, input)) ==
        forward(model, build_sequence(model, input)));

  loaded.save(dir / "m2.ckpt");
  std::ifstream f1(dir / "m.ckpt", std::ios::binary), f2(dir / "m2.ckpt", std::ios::binary);
  std::ostringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
}

TEST_CASE("model-level gradients pass a directional finite-difference check") {
  ParseNetModel model(small_config(), 55);
  const auto input = make_input(16, 2, 1, true);
  Rng rng(13);
  nn::Matrix target = nn::Matrix::from_row(unit_vec(16, 888));

  auto loss_of = [&](const ParseNetModel& m) {
    const auto out = forward(m, build_sequence(m, input));
    return cosine_loss(out, {target.d});
  };

  // analytic gradient via the tape
  nn::Graph graph;
  enc::GraphParams params(graph, [](const std::string&) { return true; });
  const int pred = forward_tape(graph, params, model, input);
  const int loss = graph.cosine_loss(pred, target);
  graph.backward(loss);
  const nn::GradMap grads = params.collect_grads();

  // random direction over all parameters
  std::unordered_map<std::string, nn::Matrix> direction;
  ParseNetModel plus = model, minus = model;
  const float h = 2e-3f;
  double gdotv = 0;
  for (auto& ref : model.named_params()) {
    nn::Matrix dir = nn::Matrix::randn(ref.value->rows, ref.value->cols, rng, 1.0f);
    auto git = grads.find(ref.name);
    if (git != grads.end()) {
      for (size_t i = 0; i < dir.size(); ++i) gdotv += static_cast<double>(git->second.d[i]) * dir.d[i];
    }
    direction[ref.name] = std::move(dir);
  }
  for (auto& ref : plus.named_params()) nn::axpy(*ref.value, h, direction.at(ref.name));
  for (auto& ref : minus.named_params()) nn::axpy(*ref.value, -h, direction.at(ref.name));
  const double fd = (loss_of(plus) - loss_of(minus)) / (2.0 * h);
  CHECK(std::abs(fd - gdotv) <= 2e-2 * std::max({1.0, std::abs(fd), std::abs(gdotv)}));
}
