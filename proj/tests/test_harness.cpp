#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "curation.hpp"
#include "errors.hpp"
#include "harness.hpp"
#include "synthetic.hpp"

using namespace muze;
using namespace muze::harness;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("muze_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// small benchmark with one context-determined attribute
fs::path make_benchmark(const fs::path& dir) {
  synth::SyntheticSpec spec;
  spec.n_records = 300;
  spec.seed = 404;
  spec.missing_rate = 0.0;
  spec.attributes = {
      {"origin", 5, synth::Dependency::Independent, "", 0},
      {"era", 5, synth::Dependency::ContextDetermined, "origin", 1},
  };
  synth::write_benchmark(synth::generate(spec), dir / "bench.csv");
  return dir / "bench";
}

ExperimentConfig tiny_config(const fs::path& dir, const fs::path& prefix) {
  ExperimentConfig config;
  config.name = "tiny";
  config.dataset_prefix = prefix.string();
  config.dim = 16;
  config.encoder_seed = 2;
  config.seed = 3;
  config.baseline = train::BaselineKind::MuzeC;
  config.target_attributes = {"era"};
  config.parsenet.layers = 1;
  config.parsenet.width = 16;
  config.parsenet.heads = 2;
  config.parsenet.max_sequence_length = 16;
  config.train = train::TrainConfig::parsenet_defaults();
  config.train.iterations = 60;
  config.train.batch_size = 24;
  config.train.learning_rate = 2e-3;
  config.train.weight_decay = 0.01;
  config.eval.split = "test";
  config.output_dir = (dir / "runs").string();
  return config;
}

}  // namespace

TEST_CASE("config validation fails fast") {
  const auto dir = temp_dir("harness_validate");
  const auto prefix = make_benchmark(dir);
  ExperimentConfig config = tiny_config(dir, prefix);
  CHECK_NOTHROW(config.validate());

  ExperimentConfig missing = config;
  missing.dataset_prefix = (dir / "nope").string();
  CHECK_THROWS_AS(missing.validate(), ConfigError);
  CHECK_THROWS_AS(run_experiment(missing), ConfigError);

  ExperimentConfig no_backbone = config;
  no_backbone.baseline = train::BaselineKind::MuzeCFA;
  CHECK_THROWS_AS(no_backbone.validate(), ConfigError);

  ExperimentConfig bad_width = config;
  bad_width.parsenet.width = 32;
  CHECK_THROWS_AS(bad_width.validate(), ConfigError);

  ExperimentConfig bad_split = config;
  bad_split.eval.split = "holdout";
  CHECK_THROWS_AS(bad_split.validate(), ConfigError);

  // config JSON round-trip
  const ExperimentConfig back = ExperimentConfig::from_json(config.to_json());
  CHECK(back.to_json() == config.to_json());
}

TEST_CASE("run_experiment writes a complete, reproducible run directory") {
  const auto dir = temp_dir("harness_run");
  const auto prefix = make_benchmark(dir);
  ExperimentConfig config = tiny_config(dir, prefix);

  const auto outcomes = run_experiment(config);
  REQUIRE(outcomes.size() == 1);
  CHECK(outcomes[0].completed);
  const fs::path run_dir = outcomes[0].run_dir;

  for (const char* name : {"metrics.csv", "margins.csv", "loss_curve.csv", "parsenet.ckpt",
                           "bundle.ckpt", "manifest.json", "state.json"}) {
    CHECK(fs::exists(run_dir / name));
  }

  // manifest lists every artifact with its content hash
  const auto manifest = nlohmann::json::parse(slurp(run_dir / "manifest.json"));
  size_t file_count = 0;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), run_dir).generic_string();
    if (rel == "manifest.json") continue;
    ++file_count;
    REQUIRE(manifest.at("files").contains(rel));
  }
  CHECK(manifest.at("files").size() == file_count);
  CHECK(manifest.at("completed").get<bool>());
  CHECK(manifest.at("attribute").get<std::string>() == "era");

  // identical config + seed into a fresh directory: byte-identical metrics
  ExperimentConfig config2 = config;
  config2.output_dir = (dir / "runs2").string();
  const auto outcomes2 = run_experiment(config2);
  CHECK(slurp(outcomes2[0].run_dir / "metrics.csv") == slurp(run_dir / "metrics.csv"));
  CHECK(slurp(outcomes2[0].run_dir / "margins.csv") == slurp(run_dir / "margins.csv"));

  // re-running the same directory resumes and leaves the metrics untouched
  const std::string before = slurp(run_dir / "metrics.csv");
  const auto resumed = run_experiment(config);
  CHECK(slurp(run_dir / "metrics.csv") == before);
  CHECK(resumed[0].completed);
}

TEST_CASE("interrupted runs resume to the same metrics") {
  const auto dir = temp_dir("harness_resume");
  const auto prefix = make_benchmark(dir);

  ExperimentConfig full = tiny_config(dir, prefix);
  full.output_dir = (dir / "runs_full").string();
  const auto uninterrupted = run_experiment(full);

  ExperimentConfig staged = tiny_config(dir, prefix);
  staged.output_dir = (dir / "runs_staged").string();
  staged.stop_after = "train";
  const auto partial = run_experiment(staged);
  CHECK_FALSE(partial[0].completed);
  CHECK_FALSE(fs::exists(partial[0].run_dir / "metrics.csv"));

  staged.stop_after = "";
  const auto resumed = run_experiment(staged);
  CHECK(resumed[0].completed);
  CHECK(slurp(resumed[0].run_dir / "metrics.csv") ==
        slurp(uninterrupted[0].run_dir / "metrics.csv"));
}

TEST_CASE("compare_runs joins metrics and margins, rejecting mismatches") {
  const auto dir = temp_dir("harness_compare");
  const auto prefix = make_benchmark(dir);

  ExperimentConfig muze_cfg = tiny_config(dir, prefix);
  const auto muze_run = run_experiment(muze_cfg);

  ExperimentConfig clip_cfg = tiny_config(dir, prefix);
  clip_cfg.name = "tiny-clip";
  clip_cfg.baseline = train::BaselineKind::Clip;
  const auto clip_run = run_experiment(clip_cfg);

  const Comparison cmp = compare_runs({muze_run[0].run_dir, clip_run[0].run_dir});
  CHECK(cmp.attribute == "era");
  REQUIRE(cmp.rows.size() == 2);
  CHECK(cmp.rows[0].baseline == "MUZE_C");
  CHECK(cmp.rows[1].baseline == "CLIP");
  CHECK_FALSE(cmp.margin_pairs.empty());
  // era is a function of a context attribute: the trained parsing network
  // must beat the image-only zero-shot baseline
  CHECK(cmp.rows[0].report.acc_at_1 > cmp.rows[1].report.acc_at_1);

  // comparing a run with itself gives zero metric deltas
  const Comparison self = compare_runs({muze_run[0].run_dir, muze_run[0].run_dir});
  CHECK(self.rows[0].report.acc_at_1 == self.rows[1].report.acc_at_1);
  for (const auto& [id, a, b] : self.margin_pairs) CHECK(a == b);

  const auto out = dir / "cmp";
  write_comparison(cmp, out);
  CHECK(fs::exists(out / "comparison.csv"));
  CHECK(fs::exists(out / "margin_scatter.csv"));
  CHECK(fs::exists(out / "margin_scatter.svg"));

  // runs over different attributes are incompatible
  ExperimentConfig other_attr = tiny_config(dir, prefix);
  other_attr.name = "tiny-origin";
  other_attr.target_attributes = {"origin"};
  const auto origin_run = run_experiment(other_attr);
  CHECK_THROWS_AS(compare_runs({muze_run[0].run_dir, origin_run[0].run_dir}),
                  IncompatibleRunsError);
}

TEST_CASE("fine-tuned backbones feed MUZE_CFA runs") {
  const auto dir = temp_dir("harness_cfa");
  const auto prefix = make_benchmark(dir);

  // CLIP_FA first: fine-tunes a bundle for the attribute
  ExperimentConfig fa = tiny_config(dir, prefix);
  fa.name = "fa";
  fa.baseline = train::BaselineKind::ClipFA;
  fa.train.iterations = 10;
  fa.train.warmup_steps = 5;
  const auto fa_run = run_experiment(fa);
  const fs::path backbone = fa_run[0].run_dir / "bundle.ckpt";
  REQUIRE(fs::exists(backbone));

  // the parsing network over that backbone
  ExperimentConfig cfa = tiny_config(dir, prefix);
  cfa.name = "cfa";
  cfa.baseline = train::BaselineKind::MuzeCFA;
  cfa.backbone_checkpoint = backbone.string();
  cfa.train.iterations = 15;
  const auto cfa_run = run_experiment(cfa);
  CHECK(fs::exists(cfa_run[0].run_dir / "metrics.csv"));
  CHECK(fs::exists(cfa_run[0].run_dir / "parsenet.ckpt"));

  // context-suffix zero-shot baseline through the same pipeline
  ExperimentConfig ctx_cfg = tiny_config(dir, prefix);
  ctx_cfg.name = "ctx";
  ctx_cfg.baseline = train::BaselineKind::ClipCtx;
  ctx_cfg.train.iterations = 0;
  const auto ctx_run = run_experiment(ctx_cfg);
  CHECK(fs::exists(ctx_run[0].run_dir / "metrics.csv"));
}

TEST_CASE("MUZE_CACHE_DIR selects the embedding store location") {
  const auto dir = temp_dir("harness_cache_env");
  const auto prefix = make_benchmark(dir);
  const fs::path cache_dir = dir / "shared_cache";
  fs::create_directories(cache_dir);
  setenv("MUZE_CACHE_DIR", cache_dir.c_str(), 1);

  ExperimentConfig config = tiny_config(dir, prefix);
  config.name = "cached";
  config.train.iterations = 3;
  run_experiment(config);
  unsetenv("MUZE_CACHE_DIR");
  CHECK(fs::exists(cache_dir / "cache.embstore"));
}

TEST_CASE("curation stage rewrites the dataset before training") {
  const auto dir = temp_dir("harness_curate");
  const auto prefix = make_benchmark(dir);

  curation::CurationConfig rules = curation::CurationConfig::defaults();
  rules.to_json_file(dir / "rules.json");

  ExperimentConfig config = tiny_config(dir, prefix);
  config.name = "tiny-curated";
  config.curation_rules = (dir / "rules.json").string();
  config.train.iterations = 5;
  const auto outcomes = run_experiment(config);
  CHECK(fs::exists(outcomes[0].run_dir / "data" / "curated.train.csv"));
  CHECK(fs::exists(outcomes[0].run_dir / "data" / "curated.vocab.json"));
  CHECK(fs::exists(outcomes[0].run_dir / "metrics.csv"));
}
