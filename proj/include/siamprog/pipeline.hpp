#ifndef SIAMPROG_PIPELINE_HPP_
#define SIAMPROG_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "siamprog/cohort.hpp"
#include "siamprog/encoder.hpp"
#include "siamprog/synth.hpp"
#include "siamprog/train.hpp"
#include "siamprog/tsne.hpp"

namespace siamprog {

struct TsneSettings {
  double perplexity_train = 32.0;
  double perplexity_test = 8.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  uint64_t seed = 0;
};

// One JSON document aggregating every stage's settings. Unknown keys are
// rejected; relative paths resolve against the config file's directory.
struct PipelineConfig {
  std::filesystem::path workdir = "out";
  SynthConfig synth;
  EncoderConfig encoder;
  TrainConfig train;
  SplitOptions split;
  TsneSettings tsne;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& config_path);

// Artifact locations under the workdir.
std::filesystem::path cohort_csv_path(const PipelineConfig& cfg);
std::filesystem::path labeled_json_path(const PipelineConfig& cfg);
std::filesystem::path manifest_path(const PipelineConfig& cfg, Split split);
std::filesystem::path checkpoint_path(const PipelineConfig& cfg, LossKind kind, uint64_t seed);
std::filesystem::path runlog_csv_path(const PipelineConfig& cfg, LossKind kind, uint64_t seed);
std::filesystem::path run_summary_path(const PipelineConfig& cfg, LossKind kind, uint64_t seed);
std::filesystem::path eval_report_path(const PipelineConfig& cfg, LossKind kind, uint64_t seed);
std::filesystem::path eval_scatter_path(const PipelineConfig& cfg, LossKind kind, uint64_t seed);
std::filesystem::path embeddings_csv_path(const PipelineConfig& cfg, Split split, LossKind kind,
                                          uint64_t seed);
std::filesystem::path tsne_points_path(const PipelineConfig& cfg, Split split, LossKind kind,
                                       uint64_t seed);
std::filesystem::path tsne_trace_path(const PipelineConfig& cfg, Split split, LossKind kind,
                                      uint64_t seed);

// Pipeline stages. Completed stages are skipped unless force; every stage
// is deterministic given config and seeds.
void stage_gen(const PipelineConfig& cfg, bool force, std::ostream& out);
void stage_label(const PipelineConfig& cfg, bool force, std::ostream& out);
void stage_split(const PipelineConfig& cfg, bool force, std::ostream& out);
// Returns false when split-hygiene violations were found (printed to out).
bool stage_verify(const PipelineConfig& cfg, std::ostream& out);
void stage_train(const PipelineConfig& cfg, const std::vector<LossKind>& kinds,
                 const std::vector<uint64_t>& seeds, int jobs, bool force, std::ostream& out);
void stage_eval(const PipelineConfig& cfg, const std::vector<LossKind>& kinds,
                const std::vector<uint64_t>& seeds, std::ostream& out);
void stage_embed(const PipelineConfig& cfg, LossKind kind, const std::vector<uint64_t>& seeds,
                 Split split, std::ostream& out);
// perplexity_override <= 0 selects the per-split default. With
// drop_underrepresented, the thinly populated levels are removed before
// fitting (train: 0.2; test: 0.2, 0.3, 0.5).
void stage_tsne(const PipelineConfig& cfg, LossKind kind, uint64_t seed, Split split,
                double perplexity_override, bool drop_underrepresented, bool force,
                std::ostream& out);

}  // namespace siamprog

#endif  // SIAMPROG_PIPELINE_HPP_
