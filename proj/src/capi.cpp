#include "muze/muze.h"

#include <cstring>
#include <fstream>
#include <optional>
#include <string>

#include "curation.hpp"
#include "data_model.hpp"
#include "encoders.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "harness.hpp"
#include "parsenet.hpp"
#include "synthetic.hpp"
#include "training.hpp"
#include "version.hpp"

using namespace muze;

struct muze_ctx {
  std::string last_error;
};

struct muze_dataset {
  data::DatasetSplit split;
  mutable std::string scratch;
};

struct muze_model {
  net::ParseNetModel model;
  enc::EncoderBundle bundle;
};

namespace {

template <class F>
muze_status guarded(muze_ctx* ctx, F&& fn) {
  if (!ctx) return MUZE_ERROR;
  try {
    fn();
    ctx->last_error.clear();
    return MUZE_OK;
  } catch (const ConfigError& e) {
    ctx->last_error = e.what();
    return MUZE_INVALID_CONFIG;
  } catch (const IoError& e) {
    ctx->last_error = e.what();
    return MUZE_IO_ERROR;
  } catch (const DataError& e) {
    ctx->last_error = e.what();
    return MUZE_DATA_ERROR;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return MUZE_ERROR;
  }
}

std::filesystem::path vocab_or_derived(const char* csv_path, const char* vocab_path) {
  if (vocab_path && *vocab_path) return vocab_path;
  return data::vocab_path_for(csv_path);
}

struct ParsedTrainConfig {
  train::TrainConfig train = train::TrainConfig::parsenet_defaults();
  std::optional<net::ParseNetConfig> parsenet;
};

ParsedTrainConfig parse_train_config(const char* path, int dim) {
  ParsedTrainConfig out;
  if (path && *path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(std::string("cannot open train config: ") + path);
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid train config JSON: ") + e.what());
    }
    out.train = train::TrainConfig::from_json(doc.contains("train") ? doc.at("train") : doc);
    if (doc.contains("parsenet")) {
      out.parsenet = net::ParseNetConfig::from_json(doc.at("parsenet"));
    }
  }
  if (!out.parsenet) {
    net::ParseNetConfig pc;
    pc.width = dim;
    pc.heads = std::max(1, dim / 16);
    out.parsenet = pc;
  }
  return out;
}

enc::EncoderBundle bundle_for(const char* encoder, int dim, uint64_t seed,
                              const char* bundle_ckpt) {
  if (bundle_ckpt && *bundle_ckpt) return enc::EncoderBundle::load(bundle_ckpt);
  return enc::make_bundle(encoder ? encoder : "stub", dim, seed);
}

void copy_out(const std::string& text, char* out, size_t cap) {
  if (!out || cap == 0) return;
  const size_t n = std::min(cap - 1, text.size());
  std::memcpy(out, text.data(), n);
  out[n] = '\0';
}

}  // namespace

extern "C" {

const char* muze_version(void) { return MUZE_VERSION; }

muze_ctx* muze_ctx_new(void) { return new muze_ctx(); }

void muze_ctx_free(muze_ctx* ctx) { delete ctx; }

const char* muze_last_error(const muze_ctx* ctx) {
  return ctx ? ctx->last_error.c_str() : "null context";
}

muze_status muze_dataset_load(muze_ctx* ctx, const char* csv_path, const char* vocab_json_path,
                              muze_dataset** out) {
  return guarded(ctx, [&] {
    if (!csv_path || !out) throw ConfigError("muze_dataset_load: null argument");
    auto handle = std::make_unique<muze_dataset>();
    handle->split = data::load_dataset(csv_path, vocab_or_derived(csv_path, vocab_json_path));
    *out = handle.release();
  });
}

muze_status muze_dataset_save(muze_ctx* ctx, const muze_dataset* dataset, const char* csv_path,
                              const char* vocab_json_path) {
  return guarded(ctx, [&] {
    if (!dataset || !csv_path) throw ConfigError("muze_dataset_save: null argument");
    data::save_dataset(dataset->split, csv_path, vocab_or_derived(csv_path, vocab_json_path));
  });
}

void muze_dataset_free(muze_dataset* dataset) { delete dataset; }

size_t muze_dataset_num_records(const muze_dataset* dataset) {
  return dataset ? dataset->split.records.size() : 0;
}

const char* muze_dataset_object_id(const muze_dataset* dataset, size_t index) {
  if (!dataset || index >= dataset->split.records.size()) return nullptr;
  return dataset->split.records[index].object_id.c_str();
}

size_t muze_dataset_value_count(const muze_dataset* dataset, size_t index,
                                const char* attribute) {
  if (!dataset || !attribute || index >= dataset->split.records.size()) return 0;
  const auto& table = dataset->split.records[index].table;
  if (!table.has(attribute)) return 0;
  return table.values(attribute).size();
}

const char* muze_dataset_value(const muze_dataset* dataset, size_t index, const char* attribute,
                               size_t value_index) {
  if (!dataset || !attribute || index >= dataset->split.records.size()) return nullptr;
  const auto& table = dataset->split.records[index].table;
  if (!table.has(attribute)) return nullptr;
  const auto& values = table.values(attribute);
  if (value_index >= values.size()) return nullptr;
  return values[value_index].c_str();
}

muze_status muze_curate(muze_ctx* ctx, const char* in_csv, const char* rules_json,
                        const char* out_csv) {
  return guarded(ctx, [&] {
    if (!in_csv || !out_csv) throw ConfigError("muze_curate: null argument");
    const curation::CurationConfig config = (rules_json && *rules_json)
                                                ? curation::CurationConfig::from_json_file(rules_json)
                                                : curation::CurationConfig::defaults();
    data::DatasetSplit split = data::load_dataset(in_csv, data::vocab_path_for(in_csv));
    data::DatasetSplit curated;
    curated.name = split.name;
    for (const auto& rec : split.records) {
      curated.records.push_back(curation::curate_record(rec, config));
    }
    data::save_dataset(curated, out_csv, data::vocab_path_for(out_csv));
  });
}

muze_status muze_encode(muze_ctx* ctx, const char* dataset_csv, const char* encoder, int dim,
                        uint64_t encoder_seed, const char* out_store) {
  return guarded(ctx, [&] {
    if (!dataset_csv || !out_store) throw ConfigError("muze_encode: null argument");
    enc::EncoderBundle bundle = enc::make_bundle(encoder ? encoder : "stub", dim, encoder_seed);
    enc::EmbeddingStore store(out_store, dim);
    const data::DatasetSplit split =
        data::load_dataset(dataset_csv, data::vocab_path_for(dataset_csv));
    for (const auto& [attr, vocab] : split.vocabularies) {
      enc::embed_text(bundle, attr, &store);
      for (int id = 0; id < vocab.size(); ++id) {
        enc::embed_text(bundle, vocab.value_of(id), &store);
      }
    }
    for (const auto& rec : split.records) enc::embed_image(bundle, rec.image_ref, &store);
  });
}

muze_status muze_synth_gen(muze_ctx* ctx, const char* spec_json, const char* out_csv) {
  return guarded(ctx, [&] {
    if (!spec_json || !out_csv) throw ConfigError("muze_synth_gen: null argument");
    synth::write_benchmark(synth::generate(synth::SyntheticSpec::from_json_file(spec_json)),
                           out_csv);
  });
}

muze_status muze_train_parsenet(muze_ctx* ctx, const char* train_csv, const char* target_attr,
                                const char* train_config_json, const char* encoder, int dim,
                                uint64_t encoder_seed, const char* backbone_ckpt,
                                int64_t seed_override, const char* out_checkpoint,
                                const char* out_curve_csv) {
  return guarded(ctx, [&] {
    if (!train_csv || !target_attr || !out_checkpoint) {
      throw ConfigError("muze_train_parsenet: null argument");
    }
    enc::EncoderBundle bundle = bundle_for(encoder, dim, encoder_seed, backbone_ckpt);
    ParsedTrainConfig cfg = parse_train_config(train_config_json, bundle.dim());
    if (seed_override >= 0) cfg.train.seed = static_cast<uint64_t>(seed_override);
    cfg.parsenet->validate();
    net::ParseNetModel model(*cfg.parsenet, hash_str("model-init", cfg.train.seed));
    const data::DatasetSplit split =
        data::load_dataset(train_csv, data::vocab_path_for(train_csv));
    const auto curve = train::train_parsenet(model, bundle, split, target_attr, cfg.train, nullptr);
    model.save(out_checkpoint);
    if (out_curve_csv && *out_curve_csv) train::write_loss_curve_csv(out_curve_csv, curve);
  });
}

muze_status muze_finetune(muze_ctx* ctx, const char* train_csv, const char* baseline,
                          const char* target_attr, const char* train_config_json,
                          const char* encoder, int dim, uint64_t encoder_seed,
                          int64_t seed_override, const char* out_checkpoint,
                          const char* out_curve_csv) {
  return guarded(ctx, [&] {
    if (!train_csv || !baseline || !out_checkpoint) throw ConfigError("muze_finetune: null argument");
    const train::BaselineKind kind = train::baseline_from_string(baseline);
    train::FinetuneMode mode;
    switch (kind) {
      case train::BaselineKind::ClipFC: mode = train::FinetuneMode::FullCaption; break;
      case train::BaselineKind::ClipFA: mode = train::FinetuneMode::PerAttribute; break;
      case train::BaselineKind::ClipFPhrase: mode = train::FinetuneMode::Phrase; break;
      case train::BaselineKind::ClipFText: mode = train::FinetuneMode::TextTower; break;
      default:
        throw ConfigError("muze_finetune: baseline must be CLIP_FC, CLIP_FA, CLIP_FPHRASE or CLIP_FTEXT");
    }
    enc::EncoderBundle bundle = enc::make_bundle(encoder ? encoder : "stub", dim, encoder_seed);
    ParsedTrainConfig cfg = parse_train_config(train_config_json, bundle.dim());
    if (!train_config_json) cfg.train = train::TrainConfig::finetune_defaults();
    if (seed_override >= 0) cfg.train.seed = static_cast<uint64_t>(seed_override);
    const data::DatasetSplit split =
        data::load_dataset(train_csv, data::vocab_path_for(train_csv));
    const auto curve = train::finetune_contrastive(bundle, split, cfg.train, mode,
                                                   target_attr ? target_attr : "", nullptr);
    bundle.save(out_checkpoint);
    if (out_curve_csv && *out_curve_csv) train::write_loss_curve_csv(out_curve_csv, curve);
  });
}

muze_status muze_evaluate(muze_ctx* ctx, const char* eval_csv, const char* baseline,
                          const char* parsenet_ckpt, const char* bundle_ckpt, const char* encoder,
                          int dim, uint64_t encoder_seed, const char* target_attr,
                          const char* out_metrics_csv, const char* out_margins_csv) {
  return guarded(ctx, [&] {
    if (!eval_csv || !baseline || !target_attr || !out_metrics_csv) {
      throw ConfigError("muze_evaluate: null argument");
    }
    const train::BaselineKind kind = train::baseline_from_string(baseline);
    enc::EncoderBundle bundle = bundle_for(encoder, dim, encoder_seed, bundle_ckpt);
    std::optional<net::ParseNetModel> model;
    if (train::baseline_is_muze(kind)) {
      if (!parsenet_ckpt || !*parsenet_ckpt) {
        throw ConfigError("muze_evaluate: MUZE baselines need a parsenet checkpoint");
      }
      model = net::ParseNetModel::load(parsenet_ckpt);
    }
    const data::DatasetSplit split = data::load_dataset(eval_csv, data::vocab_path_for(eval_csv));
    const auto samples = harness::score_records(kind, model ? &*model : nullptr, bundle, split,
                                                target_attr, true, nullptr);
    if (samples.empty()) throw DataError("no evaluable record has a value for the target attribute");
    const auto report =
        eval::compute_report(target_attr, samples, split.vocabularies.at(target_attr).size());
    std::ofstream out(out_metrics_csv, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(std::string("cannot write ") + out_metrics_csv);
    out << harness::kMetricsCsvHeader << "\n" << harness::metrics_csv_row(report) << "\n";
    if (out_margins_csv && *out_margins_csv) {
      std::ofstream mout(out_margins_csv, std::ios::binary | std::ios::trunc);
      if (!mout) throw IoError(std::string("cannot write ") + out_margins_csv);
      mout << "sample_id,margin\n";
      char buf[128];
      for (const auto& m : eval::classification_margins(samples)) {
        std::snprintf(buf, sizeof(buf), "%s,%.9g\n", m.sample_id.c_str(), m.margin);
        mout << buf;
      }
    }
  });
}

muze_status muze_ablate(muze_ctx* ctx, const char* train_csv, const char* eval_csv,
                        const char* target_attr, const char* train_config_json,
                        const char* encoder, int dim, uint64_t encoder_seed,
                        int64_t seed_override, int max_context, int trials,
                        const char* out_csv) {
  return guarded(ctx, [&] {
    if (!train_csv || !eval_csv || !target_attr || !out_csv) {
      throw ConfigError("muze_ablate: null argument");
    }
    if (max_context < 0) throw ConfigError("muze_ablate: max_context must be >= 0");
    enc::EncoderBundle bundle = enc::make_bundle(encoder ? encoder : "stub", dim, encoder_seed);
    enc::EncoderBundle bundle2 = enc::make_bundle(encoder ? encoder : "stub", dim, encoder_seed);
    ParsedTrainConfig cfg = parse_train_config(train_config_json, dim);
    if (seed_override >= 0) cfg.train.seed = static_cast<uint64_t>(seed_override);
    const data::DatasetSplit train_split =
        data::load_dataset(train_csv, data::vocab_path_for(train_csv));
    const data::DatasetSplit eval_split =
        data::load_dataset(eval_csv, data::vocab_path_for(eval_csv));

    net::ParseNetModel with_image(*cfg.parsenet, hash_str("model-init", cfg.train.seed));
    train::train_parsenet(with_image, bundle, train_split, target_attr, cfg.train, nullptr);
    net::ParseNetModel without_image(*cfg.parsenet, hash_str("model-init-noimg", cfg.train.seed));
    train::TrainConfig cfg2 = cfg.train;
    cfg2.use_image = false;
    train::train_parsenet(without_image, bundle2, train_split, target_attr, cfg2, nullptr);

    std::vector<int> sizes;
    for (int s = 0; s <= max_context; ++s) sizes.push_back(s);
    const auto curve = eval::context_ablation(
        with_image, without_image, bundle, eval_split.records, target_attr,
        eval_split.vocabularies.at(target_attr), sizes, trials, cfg.train.seed, nullptr);

    std::ofstream out(out_csv, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(std::string("cannot write ") + out_csv);
    out << "context_size,acc_with_image,acc_without_image,evaluated,skipped,clip_zero_shot\n";
    char buf[192];
    for (const auto& p : curve.points) {
      std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%d,%d,%.6f\n", p.context_size,
                    p.acc_with_image * 100.0, p.acc_without_image * 100.0, p.evaluated, p.skipped,
                    curve.clip_zero_shot_acc * 100.0);
      out << buf;
    }
  });
}

muze_status muze_compare(muze_ctx* ctx, const char* const* run_dirs, size_t n_runs,
                         const char* out_dir) {
  return guarded(ctx, [&] {
    if (!run_dirs || !out_dir) throw ConfigError("muze_compare: null argument");
    std::vector<std::filesystem::path> dirs;
    for (size_t i = 0; i < n_runs; ++i) dirs.emplace_back(run_dirs[i]);
    harness::write_comparison(harness::compare_runs(dirs), out_dir);
  });
}

muze_status muze_run_experiment(muze_ctx* ctx, const char* config_json_path,
                                int64_t seed_override, char* run_dirs_out, size_t run_dirs_cap) {
  return guarded(ctx, [&] {
    if (!config_json_path) throw ConfigError("muze_run_experiment: null argument");
    harness::ExperimentConfig config = harness::ExperimentConfig::from_json_file(config_json_path);
    if (seed_override >= 0) config.seed = static_cast<uint64_t>(seed_override);
    const auto outcomes = harness::run_experiment(config);
    std::string joined;
    for (const auto& o : outcomes) {
      joined += o.run_dir.string();
      joined.push_back('\n');
    }
    copy_out(joined, run_dirs_out, run_dirs_cap);
  });
}

muze_status muze_model_load(muze_ctx* ctx, const char* parsenet_ckpt, const char* bundle_ckpt,
                            muze_model** out) {
  return guarded(ctx, [&] {
    if (!parsenet_ckpt || !bundle_ckpt || !out) throw ConfigError("muze_model_load: null argument");
    auto handle = std::make_unique<muze_model>();
    handle->model = net::ParseNetModel::load(parsenet_ckpt);
    handle->bundle = enc::EncoderBundle::load(bundle_ckpt);
    *out = handle.release();
  });
}

void muze_model_free(muze_model* model) { delete model; }

muze_status muze_predict(muze_ctx* ctx, const muze_model* model, const muze_dataset* dataset,
                         const char* object_id, const char* query_attr, int top_k,
                         char* out_values, size_t out_cap) {
  return guarded(ctx, [&] {
    if (!model || !dataset || !object_id || !query_attr) {
      throw ConfigError("muze_predict: null argument");
    }
    const data::ExhibitRecord* record = nullptr;
    for (const auto& rec : dataset->split.records) {
      if (rec.object_id == object_id) {
        record = &rec;
        break;
      }
    }
    if (!record) throw DataError(std::string("no record with object_id '") + object_id + "'");
    const auto ranked = net::predict_values(model->model, model->bundle, *record, {query_attr},
                                            dataset->split.vocabularies, nullptr);
    const auto& vocab = dataset->split.vocabularies.at(query_attr);
    std::string joined;
    const auto& list = ranked.at(query_attr);
    for (int i = 0; i < top_k && i < static_cast<int>(list.size()); ++i) {
      joined += vocab.value_of(list[static_cast<size_t>(i)].id);
      joined.push_back('\n');
    }
    copy_out(joined, out_values, out_cap);
  });
}

}  // extern "C"
