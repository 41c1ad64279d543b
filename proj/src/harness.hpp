#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evaluation.hpp"
#include "training.hpp"

namespace muze::harness {

struct AblationOptions {
  std::vector<int> context_sizes;
  int trials = 4;
};

struct EvalOptions {
  std::string split = "test";
  bool margins = true;
  std::optional<AblationOptions> ablation;
};

// One declarative experiment: curate -> encode -> train -> evaluate for each
// (baseline, target attribute) pair, one run directory per pair.
struct ExperimentConfig {
  std::string name = "experiment";
  std::string dataset_prefix;  // <prefix>.{train,val,test}.csv + <prefix>.vocab.json
  std::string encoder = "stub";
  int dim = 64;
  uint64_t encoder_seed = 1;
  uint64_t seed = 0;
  train::BaselineKind baseline = train::BaselineKind::MuzeC;
  std::string backbone_checkpoint;  // bundle checkpoint for MUZE_CFC / MUZE_CFA
  std::vector<std::string> target_attributes;
  net::ParseNetConfig parsenet;  // width tracks dim unless set explicitly
  train::TrainConfig train = train::TrainConfig::parsenet_defaults();
  EvalOptions eval;
  std::string output_dir = "runs";
  std::optional<std::string> curation_rules;  // rules file enables the curate stage
  std::string cache_dir;    // embedding store directory; falls back to MUZE_CACHE_DIR
  std::string stop_after;   // debug: stop after "curate" | "encode" | "train"

  // Fail-fast validation: referenced files exist, baseline/backbone
  // compatibility, shape consistency. Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_json_file(const std::filesystem::path& path);
};

struct RunOutcome {
  std::filesystem::path run_dir;
  std::string attribute;
  bool completed = false;  // false when stop_after cut the pipeline short
};

// Executes the configured stages for every target attribute. Re-runs with an
// identical config and seed reproduce byte-identical metric CSVs; partially
// completed run directories resume from their state file.
std::vector<RunOutcome> run_experiment(const ExperimentConfig& config);

struct ComparisonRow {
  std::string run_name;
  std::string baseline;
  eval::MetricReport report;
};

struct Comparison {
  std::string attribute;
  std::vector<ComparisonRow> rows;
  // sample_id, margin in first run, margin in second run (first two runs)
  std::vector<std::tuple<std::string, double, double>> margin_pairs;
};

// Runs must share the evaluation split, dataset, and attribute.
Comparison compare_runs(const std::vector<std::filesystem::path>& run_dirs);
void write_comparison(const Comparison& cmp, const std::filesystem::path& out_dir);

// Metric CSV row format shared by run reports and comparisons; values are
// percentages. mean_avg_accuracy is labelled with its table alias.
extern const char* kMetricsCsvHeader;
std::string metrics_csv_row(const eval::MetricReport& report);

// Scores every record with a known target value under the given baseline:
// the parsing network with full context for MUZE baselines, image-to-value
// cosine for CLIP-style baselines, context-suffixed candidates for CLIP_CTX.
std::vector<eval::ScoredSample> score_records(train::BaselineKind baseline,
                                              const net::ParseNetModel* model,
                                              const enc::EncoderBundle& bundle,
                                              const data::DatasetSplit& split,
                                              const std::string& attribute, bool use_image,
                                              enc::EmbeddingStore* store);

}  // namespace muze::harness
