#include "harness.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "curation.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "svg_plot.hpp"
#include "version.hpp"

namespace muze::harness {

using nlohmann::json;
namespace fs = std::filesystem;

const char* kMetricsCsvHeader =
    "attribute,n_samples,map_classes,mean_avg_accuracy_aka_mean_avg_recall,acc_at_1,hit_rate_at_5";

std::string metrics_csv_row(const eval::MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%.6f", r.attribute.c_str(), r.n_samples,
                r.map_classes * 100.0, r.mean_avg_accuracy * 100.0, r.acc_at_1 * 100.0,
                r.hit_rate_at_5 * 100.0);
  return buf;
}

namespace {

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash missing file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  return hex64(hash_bytes(bytes.data(), bytes.size()));
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write: " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

// Exclusive per-run-directory lock; stale locks report the owning path.
class RunLock {
public:
  explicit RunLock(const fs::path& dir) : path_(dir / "run.lock") {
    std::ofstream probe(path_, std::ios::binary | std::ios::app);
    if (!probe) throw IoError("cannot create lock: " + path_.string());
    // O_EXCL-style: refuse when a lock file with content exists
    if (fs::file_size(path_) > 0) {
      throw Error("run directory is locked: " + path_.string());
    }
    probe << "locked\n";
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

private:
  fs::path path_;
};

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  }
  return out;
}

struct DatasetPaths {
  fs::path train, eval, vocab;
};

DatasetPaths dataset_paths(const std::string& prefix, const std::string& eval_split) {
  DatasetPaths p;
  p.train = prefix + ".train.csv";
  p.eval = prefix + "." + eval_split + ".csv";
  p.vocab = prefix + ".vocab.json";
  return p;
}

struct RunState {
  std::set<std::string> completed;
  std::string config_hash;

  static RunState load(const fs::path& path) {
    RunState state;
    std::ifstream in(path, std::ios::binary);
    if (!in) return state;
    json doc;
    try {
      in >> doc;
    } catch (const json::exception&) {
      return state;
    }
    state.config_hash = doc.value("config_hash", "");
    for (const auto& s : doc.value("completed", json::array())) {
      state.completed.insert(s.get<std::string>());
    }
    return state;
  }

  void save(const fs::path& path) const {
    json doc{{"config_hash", config_hash}, {"completed", completed}};
    write_text_file(path, doc.dump(2) + "\n");
  }
};

struct StageContext {
  const ExperimentConfig& config;
  std::string attribute;
  fs::path run_dir;
  DatasetPaths data;  // possibly redirected to curated copies
  fs::path bundle_ckpt;
  fs::path parsenet_ckpt;
  fs::path parsenet_noimg_ckpt;
};

fs::path store_path_for(const ExperimentConfig& config, const fs::path& run_dir) {
  if (!config.cache_dir.empty()) return fs::path(config.cache_dir) / "cache.embstore";
  if (const char* env = std::getenv("MUZE_CACHE_DIR"); env && *env) {
    return fs::path(env) / "cache.embstore";
  }
  return run_dir / "cache.embstore";
}

void redirect_curated(StageContext& ctx) {
  if (!ctx.config.curation_rules) return;
  const fs::path data_dir = ctx.run_dir / "data";
  ctx.data.train = data_dir / "curated.train.csv";
  ctx.data.eval = data_dir / ("curated." + ctx.config.eval.split + ".csv");
  ctx.data.vocab = data_dir / "curated.vocab.json";
}

void stage_curate(StageContext& ctx) {
  const auto& config = ctx.config;
  if (!config.curation_rules) return;
  const curation::CurationConfig rules = curation::CurationConfig::from_json_file(*config.curation_rules);
  const fs::path data_dir = ctx.run_dir / "data";
  fs::create_directories(data_dir);

  // Curate every split first, then share one vocabulary across them so ids
  // stay consistent.
  std::vector<data::DatasetSplit> curated_splits;
  data::VocabularyMap merged;
  for (const char* split : {"train", "val", "test"}) {
    const fs::path src = config.dataset_prefix + "." + split + ".csv";
    if (!fs::exists(src)) continue;
    data::DatasetSplit loaded = data::load_dataset(src, dataset_paths(config.dataset_prefix, "test").vocab);
    data::DatasetSplit curated;
    curated.name = loaded.name;
    for (const auto& rec : loaded.records) curated.records.push_back(curation::curate_record(rec, rules));
    for (const auto& rec : curated.records) {
      for (const auto& [attr, values] : rec.table.entries()) {
        auto it = merged.find(attr);
        if (it == merged.end()) it = merged.emplace(attr, data::ValueVocabulary(attr, {})).first;
        for (const auto& v : values) it->second.add(v);
      }
    }
    curated_splits.push_back(std::move(curated));
  }
  for (auto& curated : curated_splits) {
    curated.vocabularies = merged;
    data::save_dataset(curated, data_dir / ("curated." + curated.name + ".csv"),
                       data_dir / "curated.vocab.json");
  }
  redirect_curated(ctx);
}

enc::EncoderBundle initial_bundle(const ExperimentConfig& config) {
  if (train::baseline_needs_backbone(config.baseline)) {
    return enc::EncoderBundle::load(config.backbone_checkpoint);
  }
  return enc::make_bundle(config.encoder, config.dim, config.encoder_seed);
}

void warm_store(const data::DatasetSplit& split, enc::EncoderBundle& bundle,
                enc::EmbeddingStore& store) {
  for (const auto& [attr, vocab] : split.vocabularies) {
    enc::embed_text(bundle, attr, &store);
    for (int id = 0; id < vocab.size(); ++id) enc::embed_text(bundle, vocab.value_of(id), &store);
  }
  for (const auto& rec : split.records) enc::embed_image(bundle, rec.image_ref, &store);
}

void stage_encode(StageContext& ctx) {
  const auto& config = ctx.config;
  enc::EncoderBundle bundle = initial_bundle(config);
  enc::EmbeddingStore store(store_path_for(config, ctx.run_dir), config.dim);
  warm_store(data::load_dataset(ctx.data.train, ctx.data.vocab), bundle, store);
  if (fs::exists(ctx.data.eval)) {
    warm_store(data::load_dataset(ctx.data.eval, ctx.data.vocab), bundle, store);
  }
}

net::ParseNetConfig effective_parsenet_config(const ExperimentConfig& config) {
  net::ParseNetConfig pc = config.parsenet;
  if (pc.width != config.dim) {
    throw ConfigError("parsenet width must equal the encoder dim (" + std::to_string(pc.width) +
                      " vs " + std::to_string(config.dim) + ")");
  }
  return pc;
}

void stage_train(StageContext& ctx) {
  const auto& config = ctx.config;
  enc::EncoderBundle bundle = initial_bundle(config);
  enc::EmbeddingStore store(store_path_for(config, ctx.run_dir), config.dim);
  const data::DatasetSplit split = data::load_dataset(ctx.data.train, ctx.data.vocab);

  train::TrainConfig cfg = config.train;
  cfg.seed = config.seed;

  if (train::baseline_trains_encoder(config.baseline)) {
    train::FinetuneMode mode = train::FinetuneMode::FullCaption;
    switch (config.baseline) {
      case train::BaselineKind::ClipFA: mode = train::FinetuneMode::PerAttribute; break;
      case train::BaselineKind::ClipFPhrase: mode = train::FinetuneMode::Phrase; break;
      case train::BaselineKind::ClipFText: mode = train::FinetuneMode::TextTower; break;
      default: break;
    }
    const auto curve = train::finetune_contrastive(bundle, split, cfg, mode, ctx.attribute, &store);
    train::write_loss_curve_csv(ctx.run_dir / "loss_curve.csv", curve);
  } else if (train::baseline_is_muze(config.baseline)) {
    net::ParseNetModel model(effective_parsenet_config(config), hash_str("model-init", config.seed));
    const auto curve = train::train_parsenet(model, bundle, split, ctx.attribute, cfg, &store);
    train::write_loss_curve_csv(ctx.run_dir / "loss_curve.csv", curve);
    model.save(ctx.parsenet_ckpt);
    if (config.eval.ablation) {
      // context-length study needs the context-only twin
      enc::EncoderBundle bundle2 = initial_bundle(config);
      net::ParseNetModel noimg(effective_parsenet_config(config),
                               hash_str("model-init-noimg", config.seed));
      train::TrainConfig cfg2 = cfg;
      cfg2.use_image = false;
      const auto curve2 = train::train_parsenet(noimg, bundle2, split, ctx.attribute, cfg2, &store);
      train::write_loss_curve_csv(ctx.run_dir / "loss_curve_noimg.csv", curve2);
      noimg.save(ctx.parsenet_noimg_ckpt);
    }
  }
  bundle.save(ctx.bundle_ckpt);
}


void write_margins(const StageContext& ctx, const std::vector<eval::MarginRecord>& margins) {
  std::string csv = "sample_id,margin\n";
  char buf[128];
  for (const auto& m : margins) {
    std::snprintf(buf, sizeof(buf), "%s,%.9g\n", m.sample_id.c_str(), m.margin);
    csv += buf;
  }
  write_text_file(ctx.run_dir / "margins.csv", csv);

  plot::Series series;
  series.label = to_string(ctx.config.baseline);
  series.color = "#c0392b";
  for (size_t i = 0; i < margins.size(); ++i) {
    series.points.emplace_back(static_cast<double>(i), margins[i].margin);
  }
  plot::write_scatter(ctx.run_dir / "margins.svg", "Classification margins (" + ctx.attribute + ")",
                      "sample", "margin", {series});
}

void write_ablation(const StageContext& ctx, const eval::AblationCurve& curve) {
  std::string csv = "context_size,acc_with_image,acc_without_image,evaluated,skipped,clip_zero_shot\n";
  char buf[192];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%d,%d,%.6f\n", p.context_size,
                  p.acc_with_image * 100.0, p.acc_without_image * 100.0, p.evaluated, p.skipped,
                  curve.clip_zero_shot_acc * 100.0);
    csv += buf;
  }
  write_text_file(ctx.run_dir / "ablation.csv", csv);

  plot::Series with_img{"image + context", "#c0392b", {}};
  plot::Series without_img{"context only", "#8e7cc3", {}};
  plot::Series clip_line{"image only baseline", "#7f8c8d", {}};
  for (const auto& p : curve.points) {
    with_img.points.emplace_back(p.context_size, p.acc_with_image * 100.0);
    without_img.points.emplace_back(p.context_size, p.acc_without_image * 100.0);
    clip_line.points.emplace_back(p.context_size, curve.clip_zero_shot_acc * 100.0);
  }
  plot::write_line_chart(ctx.run_dir / "ablation.svg", "Accuracy vs context size (" + ctx.attribute + ")",
                         "context pairs", "Acc@1 (%)", {with_img, without_img, clip_line});
}

void stage_evaluate(StageContext& ctx) {
  const auto& config = ctx.config;
  const data::DatasetSplit split = data::load_dataset(ctx.data.eval, ctx.data.vocab);
  if (!split.vocabularies.count(ctx.attribute)) {
    throw ConfigError("evaluation split has no vocabulary for '" + ctx.attribute + "'");
  }
  enc::EncoderBundle bundle = enc::EncoderBundle::load(ctx.bundle_ckpt);
  enc::EmbeddingStore store(store_path_for(config, ctx.run_dir), config.dim);

  std::optional<net::ParseNetModel> model;
  if (train::baseline_is_muze(config.baseline)) {
    model = net::ParseNetModel::load(ctx.parsenet_ckpt);
  }
  const auto samples = score_records(config.baseline, model ? &*model : nullptr, bundle, split,
                                     ctx.attribute, config.train.use_image, &store);
  if (samples.empty()) {
    throw StageFailedError("evaluate", "no evaluable record has a value for '" + ctx.attribute + "'");
  }
  const auto& vocab = split.vocabularies.at(ctx.attribute);
  const eval::MetricReport report = eval::compute_report(ctx.attribute, samples, vocab.size());
  write_text_file(ctx.run_dir / "metrics.csv",
                  std::string(kMetricsCsvHeader) + "\n" + metrics_csv_row(report) + "\n");

  if (config.eval.margins) write_margins(ctx, eval::classification_margins(samples));

  if (config.eval.ablation && train::baseline_is_muze(config.baseline)) {
    const auto with_image = net::ParseNetModel::load(ctx.parsenet_ckpt);
    const auto without_image = net::ParseNetModel::load(ctx.parsenet_noimg_ckpt);
    const auto curve = eval::context_ablation(
        with_image, without_image, bundle, split.records, ctx.attribute, vocab,
        config.eval.ablation->context_sizes, config.eval.ablation->trials, config.seed, &store);
    write_ablation(ctx, curve);
  }
}

void write_manifest(const StageContext& ctx, bool completed) {
  const auto& config = ctx.config;
  json files = json::object();
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(ctx.run_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), ctx.run_dir).generic_string();
    if (rel == "manifest.json" || rel == "run.lock") continue;
    paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    files[fs::relative(p, ctx.run_dir).generic_string()] = file_hash(p);
  }
  json manifest{{"version", MUZE_VERSION},
                {"name", config.name},
                {"baseline", train::to_string(config.baseline)},
                {"attribute", ctx.attribute},
                {"eval_split", config.eval.split},
                {"seed", config.seed},
                {"data_hash", file_hash(ctx.data.eval)},
                {"completed", completed},
                {"config", config.to_json()},
                {"files", files}};
  write_text_file(ctx.run_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

void ExperimentConfig::validate() const {
  train.validate();
  parsenet.validate();
  if (dataset_prefix.empty()) throw ConfigError("config: dataset_prefix is required");
  if (target_attributes.empty()) throw ConfigError("config: target_attributes is required");
  const auto paths = dataset_paths(dataset_prefix, eval.split);
  for (const fs::path& p : {paths.train, paths.eval, paths.vocab}) {
    if (!fs::exists(p)) throw ConfigError("config: missing dataset file " + p.string());
  }
  if (encoder != "stub") throw ConfigError("config: unknown encoder '" + encoder + "'");
  if (dim < 8) throw ConfigError("config: dim must be >= 8");
  if (eval.split != "train" && eval.split != "val" && eval.split != "test") {
    throw ConfigError("config: eval split must be train|val|test");
  }
  if (train::baseline_needs_backbone(baseline)) {
    if (backbone_checkpoint.empty() || !fs::exists(backbone_checkpoint)) {
      throw ConfigError("config: baseline " + train::to_string(baseline) +
                        " requires an existing backbone_checkpoint");
    }
  }
  if (curation_rules && !fs::exists(*curation_rules)) {
    throw ConfigError("config: missing curation rules file " + *curation_rules);
  }
  if (parsenet.width != dim) {
    throw ConfigError("config: parsenet width must equal dim");
  }
  if (eval.ablation) {
    if (eval.ablation->trials < 1) throw ConfigError("config: ablation trials must be >= 1");
    if (eval.ablation->context_sizes.empty()) {
      throw ConfigError("config: ablation context_sizes is required");
    }
  }
  if (!stop_after.empty() && stop_after != "curate" && stop_after != "encode" &&
      stop_after != "train") {
    throw ConfigError("config: stop_after must be curate|encode|train");
  }
}

json ExperimentConfig::to_json() const {
  json j{{"name", name},
         {"dataset_prefix", dataset_prefix},
         {"encoder", encoder},
         {"dim", dim},
         {"encoder_seed", encoder_seed},
         {"seed", seed},
         {"baseline", train::to_string(baseline)},
         {"target_attributes", target_attributes},
         {"parsenet", parsenet.to_json()},
         {"train", train.to_json()},
         {"output_dir", output_dir},
         {"eval", {{"split", eval.split}, {"margins", eval.margins}}}};
  if (!backbone_checkpoint.empty()) j["backbone_checkpoint"] = backbone_checkpoint;
  if (curation_rules) j["curation_rules"] = *curation_rules;
  if (!cache_dir.empty()) j["cache_dir"] = cache_dir;
  if (!stop_after.empty()) j["stop_after"] = stop_after;
  if (eval.ablation) {
    j["eval"]["ablation"] = {{"context_sizes", eval.ablation->context_sizes},
                             {"trials", eval.ablation->trials}};
  }
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  c.name = j.value("name", "experiment");
  c.dataset_prefix = j.value("dataset_prefix", "");
  c.encoder = j.value("encoder", "stub");
  c.dim = j.value("dim", 64);
  c.encoder_seed = j.value("encoder_seed", uint64_t{1});
  c.seed = j.value("seed", uint64_t{0});
  c.baseline = train::baseline_from_string(j.value("baseline", "MUZE_C"));
  c.backbone_checkpoint = j.value("backbone_checkpoint", "");
  for (const auto& a : j.value("target_attributes", json::array())) {
    c.target_attributes.push_back(a.get<std::string>());
  }
  if (j.contains("parsenet")) {
    c.parsenet = net::ParseNetConfig::from_json(j.at("parsenet"));
  } else {
    c.parsenet.width = c.dim;
    c.parsenet.heads = std::max(1, c.dim / 16);
  }
  if (j.contains("train")) c.train = train::TrainConfig::from_json(j.at("train"));
  c.output_dir = j.value("output_dir", "runs");
  if (j.contains("curation_rules")) c.curation_rules = j.at("curation_rules").get<std::string>();
  c.cache_dir = j.value("cache_dir", "");
  c.stop_after = j.value("stop_after", "");
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    c.eval.split = e.value("split", "test");
    c.eval.margins = e.value("margins", true);
    if (e.contains("ablation")) {
      AblationOptions ab;
      for (const auto& s : e.at("ablation").at("context_sizes")) ab.context_sizes.push_back(s.get<int>());
      ab.trials = e.at("ablation").value("trials", 4);
      c.eval.ablation = ab;
    }
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open experiment config: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("invalid experiment config JSON (" + path.string() + "): " + e.what());
  }
  return from_json(doc);
}

std::vector<RunOutcome> run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::vector<RunOutcome> outcomes;
  const std::string config_hash = hex64(hash_str(config.to_json().dump()));

  for (const auto& attribute : config.target_attributes) {
    StageContext ctx{config,
                     attribute,
                     fs::path(config.output_dir) /
                         sanitize(config.name + "-" + train::to_string(config.baseline) + "-" + attribute),
                     dataset_paths(config.dataset_prefix, config.eval.split),
                     {},
                     {},
                     {}};
    ctx.bundle_ckpt = ctx.run_dir / "bundle.ckpt";
    ctx.parsenet_ckpt = ctx.run_dir / "parsenet.ckpt";
    ctx.parsenet_noimg_ckpt = ctx.run_dir / "parsenet_noimg.ckpt";
    fs::create_directories(ctx.run_dir);
    RunLock lock(ctx.run_dir);

    const fs::path state_path = ctx.run_dir / "state.json";
    RunState state = RunState::load(state_path);
    if (state.config_hash != config_hash) {
      state = RunState{};
      state.config_hash = config_hash;
    }

    const std::vector<std::string> stages = {"curate", "encode", "train", "evaluate"};
    bool stopped = false;
    for (const auto& stage : stages) {
      if (state.completed.count(stage)) {
        if (stage == "curate") redirect_curated(ctx);
        continue;
      }
      try {
        if (stage == "curate") {
          stage_curate(ctx);
        } else if (stage == "encode") {
          stage_encode(ctx);
        } else if (stage == "train") {
          stage_train(ctx);
        } else {
          stage_evaluate(ctx);
        }
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        throw StageFailedError(stage, e.what());
      }
      state.completed.insert(stage);
      state.save(state_path);
      if (config.stop_after == stage) {
        stopped = true;
        break;
      }
    }
    write_manifest(ctx, !stopped);
    outcomes.push_back({ctx.run_dir, attribute, !stopped});
  }
  return outcomes;
}

namespace {

json load_manifest(const fs::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json", std::ios::binary);
  if (!in) throw IncompatibleRunsError("missing manifest in " + run_dir.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IncompatibleRunsError("corrupt manifest in " + run_dir.string() + ": " + e.what());
  }
  return doc;
}

eval::MetricReport read_metrics_csv(const fs::path& run_dir) {
  const auto rows = csvio::read_file(run_dir / "metrics.csv");
  if (rows.size() < 2 || rows[1].size() < 6) {
    throw IncompatibleRunsError("metrics.csv in " + run_dir.string() + " is malformed");
  }
  eval::MetricReport r;
  r.attribute = rows[1][0];
  r.n_samples = std::stoi(rows[1][1]);
  r.map_classes = std::stod(rows[1][2]) / 100.0;
  r.mean_avg_accuracy = std::stod(rows[1][3]) / 100.0;
  r.acc_at_1 = std::stod(rows[1][4]) / 100.0;
  r.hit_rate_at_5 = std::stod(rows[1][5]) / 100.0;
  return r;
}

std::map<std::string, double> read_margins_csv(const fs::path& run_dir) {
  std::map<std::string, double> margins;
  const fs::path path = run_dir / "margins.csv";
  if (!fs::exists(path)) return margins;
  const auto rows = csvio::read_file(path);
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() >= 2) margins[rows[i][0]] = std::stod(rows[i][1]);
  }
  return margins;
}

}  // namespace

std::vector<eval::ScoredSample> score_records(train::BaselineKind baseline,
                                              const net::ParseNetModel* model,
                                              const enc::EncoderBundle& bundle,
                                              const data::DatasetSplit& split,
                                              const std::string& attribute, bool use_image,
                                              enc::EmbeddingStore* store) {
  auto it = split.vocabularies.find(attribute);
  if (it == split.vocabularies.end()) {
    throw UnknownAttributeError("dataset has no vocabulary for '" + attribute + "'");
  }
  const auto& vocab = it->second;
  if (train::baseline_is_muze(baseline) && model == nullptr) {
    throw ConfigError("MUZE baselines need a trained parsing network");
  }
  std::vector<eval::ScoredSample> samples;
  for (const auto& rec : split.records) {
    eval::ScoredSample sample;
    sample.gt = eval::gt_ids_for(rec, attribute, vocab);
    if (sample.gt.empty()) continue;  // unknown target: not scoreable
    sample.sample_id = rec.object_id;
    if (train::baseline_is_muze(baseline)) {
      std::vector<std::string> context;
      for (const auto& attr : rec.table.known_attributes()) {
        if (attr != attribute) context.push_back(attr);
      }
      sample.scores =
          eval::parsenet_scores(*model, bundle, rec, attribute, context, vocab, use_image, store);
    } else if (baseline == train::BaselineKind::ClipCtx) {
      const auto ranked = train::clip_ctx_rank(bundle, rec, attribute, vocab, store);
      sample.scores.resize(static_cast<size_t>(vocab.size()));
      for (const auto& rv : ranked) sample.scores[static_cast<size_t>(rv.id)] = rv.score;
    } else {
      const auto image = enc::embed_image(bundle, rec.image_ref, store);
      sample.scores = net::score_candidates(image, vocab, bundle, store);
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

Comparison compare_runs(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
  Comparison cmp;
  std::string data_hash, split;
  for (const auto& dir : run_dirs) {
    const json manifest = load_manifest(dir);
    const std::string attr = manifest.value("attribute", "");
    const std::string hash = manifest.value("data_hash", "");
    const std::string eval_split = manifest.value("eval_split", "");
    if (cmp.attribute.empty()) {
      cmp.attribute = attr;
      data_hash = hash;
      split = eval_split;
    } else if (attr != cmp.attribute || hash != data_hash || split != eval_split) {
      throw IncompatibleRunsError("runs differ in attribute, split, or evaluation data");
    }
    ComparisonRow row;
    row.run_name = dir.filename().string();
    row.baseline = manifest.value("baseline", "");
    row.report = read_metrics_csv(dir);
    cmp.rows.push_back(std::move(row));
  }
  const auto margins_a = read_margins_csv(run_dirs[0]);
  const auto margins_b = read_margins_csv(run_dirs[1]);
  for (const auto& [id, ma] : margins_a) {
    auto it = margins_b.find(id);
    if (it != margins_b.end()) cmp.margin_pairs.emplace_back(id, ma, it->second);
  }
  return cmp;
}

void write_comparison(const Comparison& cmp, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::string csv = std::string("run,baseline,") + kMetricsCsvHeader + "\n";
  for (const auto& row : cmp.rows) {
    csv += row.run_name + "," + row.baseline + "," + metrics_csv_row(row.report) + "\n";
  }
  write_text_file(out_dir / "comparison.csv", csv);

  if (!cmp.margin_pairs.empty()) {
    std::string mcsv = "sample_id,margin_a,margin_b\n";
    char buf[192];
    plot::Series series{"margin pairs", "#2e86c1", {}};
    for (const auto& [id, a, b] : cmp.margin_pairs) {
      std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g\n", id.c_str(), a, b);
      mcsv += buf;
      series.points.emplace_back(a, b);
    }
    write_text_file(out_dir / "margin_scatter.csv", mcsv);
    plot::write_scatter(out_dir / "margin_scatter.svg",
                        "Margin comparison (" + cmp.attribute + ")", "margin A", "margin B",
                        {series});
  }
}

}  // namespace muze::harness
