// siamprog: ordinal progression-level pipeline (generate, label, split,
// train, evaluate, embed, t-SNE) driven by one JSON config.

#include <CLI11.hpp>

#include <iostream>
#include <thread>
#include <string>
#include <vector>

#include "siamprog/pipeline.hpp"

namespace {

using namespace siamprog;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitValidation = 4;
constexpr int kExitNumeric = 5;

struct GlobalOpts {
  std::string config_path;
  std::string workdir_override;
  bool force = false;
  bool seed_set = false;
  uint64_t seed = 0;
};

PipelineConfig load_config(const GlobalOpts& opts) {
  if (opts.config_path.empty()) {
    throw ConfigError("--config PATH is required");
  }
  PipelineConfig cfg = load_pipeline_config(opts.config_path);
  if (!opts.workdir_override.empty()) cfg.workdir = opts.workdir_override;
  return cfg;
}

std::vector<LossKind> parse_kinds(const std::string& loss) {
  if (loss == "both") return {LossKind::UNWEIGHTED, LossKind::WEIGHTED};
  return {loss_kind_from_string(loss)};
}

Split parse_split(const std::string& split) {
  if (split == "train") return Split::TRAIN;
  if (split == "test") return Split::TEST;
  throw ConfigError("--split must be train or test, got \"" + split + "\"");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weighted-Siamese progression-level pipeline"};
  app.require_subcommand(1);

  GlobalOpts opts;
  app.add_option("--config", opts.config_path, "pipeline config JSON");
  app.add_option("--workdir", opts.workdir_override, "override the configured workdir");
  app.add_flag("--force", opts.force, "re-run stages whose outputs already exist");
  auto* seed_opt = app.add_option("--seed", opts.seed, "override the stage seed");

  auto* cmd_gen = app.add_subcommand("gen", "generate the synthetic cohort and volumes");
  auto* cmd_label = app.add_subcommand("label", "assign progression levels to the cohort");
  auto* cmd_split = app.add_subcommand("split", "build train/test triplet manifests");
  auto* cmd_verify = app.add_subcommand("verify", "check split hygiene of the manifests");

  std::string loss = "both";
  std::vector<uint64_t> seeds;
  int jobs = static_cast<int>(std::min(2u, std::max(1u, std::thread::hardware_concurrency())));
  auto* cmd_train = app.add_subcommand("train", "train one run per loss kind and seed");
  cmd_train->add_option("--loss", loss, "weighted, unweighted, or both");
  cmd_train->add_option("--seeds", seeds, "training seeds (default: config)");
  cmd_train->add_option("--jobs", jobs, "parallel training runs");

  auto* cmd_eval = app.add_subcommand("eval", "evaluate checkpoints (MAE/RMSE, scatter export)");
  cmd_eval->add_option("--loss", loss, "weighted, unweighted, or both");
  cmd_eval->add_option("--seeds", seeds, "checkpoint seeds (default: config)");

  std::string split_name = "test";
  auto* cmd_embed = app.add_subcommand("embed", "export raw embeddings for a split");
  cmd_embed->add_option("--loss", loss, "weighted or unweighted");
  cmd_embed->add_option("--seeds", seeds, "checkpoint seeds (default: config)");
  cmd_embed->add_option("--split", split_name, "train or test");

  double perplexity = 0.0;
  bool drop_underrepresented = false;
  uint64_t model_seed = 0;
  bool model_seed_set = false;
  auto* cmd_tsne = app.add_subcommand("tsne", "project a split's embeddings to 2-D");
  cmd_tsne->add_option("--loss", loss, "weighted or unweighted");
  auto* model_seed_opt =
      cmd_tsne->add_option("--model-seed", model_seed, "checkpoint seed (default: first config seed)");
  cmd_tsne->add_option("--split", split_name, "train or test");
  cmd_tsne->add_option("--perplexity", perplexity, "override the per-split perplexity");
  cmd_tsne->add_flag("--drop-underrepresented", drop_underrepresented,
                     "drop thin levels before fitting (train: 0.2; test: 0.2, 0.3, 0.5)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfig;
  }
  opts.seed_set = seed_opt->count() > 0;
  model_seed_set = model_seed_opt->count() > 0;

  try {
    PipelineConfig cfg = load_config(opts);
    if (cmd_gen->parsed()) {
      if (opts.seed_set) cfg.synth.seed = opts.seed;
      stage_gen(cfg, opts.force, std::cout);
    } else if (cmd_label->parsed()) {
      stage_label(cfg, opts.force, std::cout);
    } else if (cmd_split->parsed()) {
      if (opts.seed_set) cfg.split.seed = opts.seed;
      stage_split(cfg, opts.force, std::cout);
    } else if (cmd_verify->parsed()) {
      if (!stage_verify(cfg, std::cout)) return kExitValidation;
    } else if (cmd_train->parsed()) {
      if (seeds.empty()) seeds = opts.seed_set ? std::vector<uint64_t>{opts.seed} : cfg.train.seeds;
      stage_train(cfg, parse_kinds(loss), seeds, jobs, opts.force, std::cout);
    } else if (cmd_eval->parsed()) {
      if (seeds.empty()) seeds = opts.seed_set ? std::vector<uint64_t>{opts.seed} : cfg.train.seeds;
      stage_eval(cfg, parse_kinds(loss), seeds, std::cout);
    } else if (cmd_embed->parsed()) {
      if (loss == "both") throw ConfigError("embed needs --loss weighted or unweighted");
      if (seeds.empty()) seeds = opts.seed_set ? std::vector<uint64_t>{opts.seed} : cfg.train.seeds;
      stage_embed(cfg, loss_kind_from_string(loss), seeds, parse_split(split_name), std::cout);
    } else if (cmd_tsne->parsed()) {
      if (loss == "both") throw ConfigError("tsne needs --loss weighted or unweighted");
      if (opts.seed_set) cfg.tsne.seed = opts.seed;
      const uint64_t ckpt_seed = model_seed_set ? model_seed : cfg.train.seeds.front();
      stage_tsne(cfg, loss_kind_from_string(loss), ckpt_seed, parse_split(split_name), perplexity,
                 drop_underrepresented, opts.force, std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
