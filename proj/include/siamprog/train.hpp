#ifndef SIAMPROG_TRAIN_HPP_
#define SIAMPROG_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "siamprog/cohort.hpp"
#include "siamprog/encoder.hpp"
#include "siamprog/volume.hpp"

namespace siamprog {

enum class LossKind { UNWEIGHTED, WEIGHTED };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

struct TrainConfig {
  LossKind loss_kind = LossKind::WEIGHTED;
  int epochs = 150;
  double lr_initial = 1e-3;
  double lr_decay_rate = 0.96;  // per epoch, exponential
  double margin = 1.0;
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  int batch_size = 4;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 0-based
  double train_loss = 0.0;
  double test_loss = 0.0;
  double lr = 0.0;
};

struct RunLog {
  uint64_t seed = 0;
  LossKind loss_kind = LossKind::WEIGHTED;
  std::vector<EpochStats> epochs;
  double wall_seconds = 0.0;  // informational; not serialized
  std::string checkpoint_path;
};

// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias correction).
// Moments are allocated on the first step and stay aligned with
// params.tensors.
struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

void adam_step(EncoderParams& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct TrainResult {
  EncoderParams params;
  RunLog log;
};

// One deterministic training run: seed-shuffled triplet order, shared-weight
// forward of anchor/positive/negative, mean batch loss, Adam with
// lr = lr_initial * decay^epoch. Test loss is forward-only. A NaN/Inf loss
// aborts with the offending epoch in the error message.
TrainResult train_run(const TripletManifest& manifest_train, const TripletManifest& manifest_test,
                      const EncoderConfig& encoder_cfg, const TrainConfig& cfg, uint64_t seed,
                      VolumeCache& volumes);

// RunLog CSV: header `epoch,train_loss,test_loss,lr`, one row per epoch.
void save_runlog_csv(const RunLog& log, const std::filesystem::path& path);

// Per-run JSON summary (seed, loss, epochs, final losses, checkpoint path).
// Wall time is deliberately left out so re-runs are byte-identical.
void save_run_summary(const RunLog& log, const std::filesystem::path& path);

}  // namespace siamprog

#endif  // SIAMPROG_TRAIN_HPP_
