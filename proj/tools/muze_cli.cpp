// muze command line front end. Talks to the library exclusively through the
// C API in muze/muze.h.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <muze/muze.h>

namespace {

struct CtxDeleter {
  void operator()(muze_ctx* ctx) const { muze_ctx_free(ctx); }
};

int exit_code(muze_status status, muze_ctx* ctx) {
  if (status == MUZE_OK) return 0;
  std::fprintf(stderr, "error: %s\n", muze_last_error(ctx));
  return status == MUZE_INVALID_CONFIG ? 2 : 1;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

std::string default_store_path() {
  if (const char* env = std::getenv("MUZE_CACHE_DIR"); env && *env) {
    return std::string(env) + "/cache.embstore";
  }
  return "cache.embstore";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"muze: tabular attribute-value prediction from image embeddings"};
  app.set_version_flag("--version", muze_version());

  std::string config_path;
  int64_t seed_override = -1;
  app.add_option("--config", config_path, "declarative experiment config JSON");
  app.add_option("--seed", seed_override, "override the config seed");

  // curate
  auto* curate = app.add_subcommand("curate", "clean, shorten and normalize attribute text");
  std::string c_in, c_rules, c_out;
  curate->add_option("--in", c_in, "input dataset CSV")->required();
  curate->add_option("--rules", c_rules, "curation rules JSON (defaults built in)");
  curate->add_option("--out", c_out, "output dataset CSV")->required();

  // encode
  auto* encode = app.add_subcommand("encode", "precompute embeddings into an .embstore file");
  std::string e_dataset, e_encoder = "stub", e_out = default_store_path();
  int e_dim = 512;
  uint64_t e_seed = 1;
  encode->add_option("--dataset", e_dataset, "dataset CSV")->required();
  encode->add_option("--encoder", e_encoder, "encoder kind (stub)");
  encode->add_option("--dim", e_dim, "embedding width");
  encode->add_option("--encoder-seed", e_seed, "stub encoder seed");
  encode->add_option("--out", e_out, "output .embstore path (defaults to MUZE_CACHE_DIR)");

  // synth-gen
  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic benchmark");
  std::string s_spec, s_out;
  synth->add_option("--spec", s_spec, "synthetic spec JSON")->required();
  synth->add_option("--out", s_out, "output CSV base path")->required();

  // train-parsenet
  auto* tp = app.add_subcommand("train-parsenet", "train the parsing network for one attribute");
  std::string tp_train, tp_attr, tp_config, tp_encoder = "stub", tp_backbone, tp_out, tp_curve;
  int tp_dim = 512;
  uint64_t tp_seed = 1;
  tp->add_option("--train", tp_train, "training split CSV")->required();
  tp->add_option("--attr", tp_attr, "target attribute")->required();
  tp->add_option("--config", tp_config, "train/parsenet config JSON");
  tp->add_option("--encoder", tp_encoder, "encoder kind (stub)");
  tp->add_option("--dim", tp_dim, "embedding width");
  tp->add_option("--encoder-seed", tp_seed, "stub encoder seed");
  tp->add_option("--backbone", tp_backbone, "fine-tuned bundle checkpoint");
  tp->add_option("--out", tp_out, "output parsenet checkpoint")->required();
  tp->add_option("--curve", tp_curve, "loss curve CSV");

  // finetune
  auto* ft = app.add_subcommand("finetune", "contrastive fine-tuning baselines");
  std::string ft_train, ft_baseline, ft_attr, ft_config, ft_encoder = "stub", ft_out, ft_curve;
  int ft_dim = 512;
  uint64_t ft_seed = 1;
  ft->add_option("--train", ft_train, "training split CSV")->required();
  ft->add_option("--baseline", ft_baseline, "CLIP_FC | CLIP_FA | CLIP_FPHRASE | CLIP_FTEXT")
      ->required();
  ft->add_option("--attr", ft_attr, "target attribute (per-attribute modes)");
  ft->add_option("--config", ft_config, "train config JSON");
  ft->add_option("--encoder", ft_encoder, "encoder kind (stub)");
  ft->add_option("--dim", ft_dim, "embedding width");
  ft->add_option("--encoder-seed", ft_seed, "stub encoder seed");
  ft->add_option("--out", ft_out, "output bundle checkpoint")->required();
  ft->add_option("--curve", ft_curve, "loss curve CSV");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "attribute prediction metrics for one baseline");
  std::string ev_eval, ev_baseline = "MUZE_C", ev_ckpt, ev_bundle, ev_encoder = "stub", ev_attr;
  std::string ev_metrics, ev_margins;
  int ev_dim = 512;
  uint64_t ev_seed = 1;
  ev->add_option("--eval", ev_eval, "evaluation split CSV")->required();
  ev->add_option("--baseline", ev_baseline, "baseline kind");
  ev->add_option("--checkpoint", ev_ckpt, "parsenet checkpoint (MUZE baselines)");
  ev->add_option("--bundle", ev_bundle, "bundle checkpoint (fine-tuned baselines)");
  ev->add_option("--encoder", ev_encoder, "encoder kind (stub)");
  ev->add_option("--dim", ev_dim, "embedding width");
  ev->add_option("--encoder-seed", ev_seed, "stub encoder seed");
  ev->add_option("--attr", ev_attr, "target attribute")->required();
  ev->add_option("--out-metrics", ev_metrics, "metrics CSV")->required();
  ev->add_option("--out-margins", ev_margins, "margins CSV");

  // ablate
  auto* ab = app.add_subcommand("ablate", "context-length study with and without the image");
  std::string ab_train, ab_eval, ab_attr, ab_config, ab_encoder = "stub", ab_out;
  int ab_dim = 512, ab_max_context = 3, ab_trials = 4;
  uint64_t ab_seed = 1;
  ab->add_option("--train", ab_train, "training split CSV")->required();
  ab->add_option("--eval", ab_eval, "evaluation split CSV")->required();
  ab->add_option("--attr", ab_attr, "target attribute")->required();
  ab->add_option("--config", ab_config, "train config JSON");
  ab->add_option("--encoder", ab_encoder, "encoder kind (stub)");
  ab->add_option("--dim", ab_dim, "embedding width");
  ab->add_option("--encoder-seed", ab_seed, "stub encoder seed");
  ab->add_option("--max-context", ab_max_context, "largest context size");
  ab->add_option("--trials", ab_trials, "context samples per record");
  ab->add_option("--out", ab_out, "ablation curve CSV")->required();

  // compare
  auto* cp = app.add_subcommand("compare", "side-by-side metric table and margin scatter");
  std::vector<std::string> cp_runs;
  std::string cp_out;
  cp->add_option("--run", cp_runs, "run directory (repeat)")->required()->expected(-2);
  cp->add_option("--out", cp_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  std::unique_ptr<muze_ctx, CtxDeleter> ctx(muze_ctx_new());

  if (*curate) {
    return exit_code(muze_curate(ctx.get(), c_in.c_str(), opt(c_rules), c_out.c_str()), ctx.get());
  }
  if (*encode) {
    return exit_code(
        muze_encode(ctx.get(), e_dataset.c_str(), e_encoder.c_str(), e_dim, e_seed, e_out.c_str()),
        ctx.get());
  }
  if (*synth) {
    return exit_code(muze_synth_gen(ctx.get(), s_spec.c_str(), s_out.c_str()), ctx.get());
  }
  if (*tp) {
    return exit_code(
        muze_train_parsenet(ctx.get(), tp_train.c_str(), tp_attr.c_str(), opt(tp_config),
                            tp_encoder.c_str(), tp_dim, tp_seed, opt(tp_backbone), seed_override,
                            tp_out.c_str(), opt(tp_curve)),
        ctx.get());
  }
  if (*ft) {
    return exit_code(
        muze_finetune(ctx.get(), ft_train.c_str(), ft_baseline.c_str(), opt(ft_attr),
                      opt(ft_config), ft_encoder.c_str(), ft_dim, ft_seed, seed_override,
                      ft_out.c_str(), opt(ft_curve)),
        ctx.get());
  }
  if (*ev) {
    return exit_code(
        muze_evaluate(ctx.get(), ev_eval.c_str(), ev_baseline.c_str(), opt(ev_ckpt),
                      opt(ev_bundle), ev_encoder.c_str(), ev_dim, ev_seed, ev_attr.c_str(),
                      ev_metrics.c_str(), opt(ev_margins)),
        ctx.get());
  }
  if (*ab) {
    return exit_code(
        muze_ablate(ctx.get(), ab_train.c_str(), ab_eval.c_str(), ab_attr.c_str(), opt(ab_config),
                    ab_encoder.c_str(), ab_dim, ab_seed, seed_override, ab_max_context, ab_trials,
                    ab_out.c_str()),
        ctx.get());
  }
  if (*cp) {
    std::vector<const char*> dirs;
    for (const auto& r : cp_runs) dirs.push_back(r.c_str());
    return exit_code(muze_compare(ctx.get(), dirs.data(), dirs.size(), cp_out.c_str()), ctx.get());
  }
  if (!config_path.empty()) {
    char run_dirs[4096];
    const muze_status status =
        muze_run_experiment(ctx.get(), config_path.c_str(), seed_override, run_dirs, sizeof(run_dirs));
    if (status == MUZE_OK) std::fputs(run_dirs, stdout);
    return exit_code(status, ctx.get());
  }

  std::fputs(app.help().c_str(), stderr);
  return 2;
}
