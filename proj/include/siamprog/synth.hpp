#ifndef SIAMPROG_SYNTH_HPP_
#define SIAMPROG_SYNTH_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "siamprog/cohort.hpp"
#include "siamprog/tensor.hpp"

namespace siamprog {

// Synthetic longitudinal cohort generator. Every participant progresses
// from MCI to AD; each scan's volume is
//   baseline + rho * signal_strength * template + N(0, noise_sigma^2)
// with fixed deterministic spatial patterns, so embedding distance has a
// learnable monotone relationship with progression level.
struct SynthConfig {
  Shape volume_shape{1, 16, 16, 16};  // [C,D,H,W]
  // Number of participants when level_quotas is empty (scales the default
  // distribution shape). Ignored if 0 and quotas are given; if both are
  // set they must agree.
  int participants = 0;
  // Scan counts per level (tenths -> count). Realizable quotas are
  // non-decreasing from 0.1 to 0.9 with quota(1.0) == quota(0.9), since
  // every trajectory runs from its first MCI scan to one conversion scan.
  std::map<int, int64_t> level_quotas;
  double signal_strength = 1.0;
  double noise_sigma = 0.0;
  uint64_t seed = 0;
};

struct GenerateResult {
  std::vector<ParticipantRecord> cohort;
  // Distribution of the labeled scans, which round-trips the quotas.
  std::map<int, int64_t> distribution;
};

// Validated per-level scan counts after applying defaults/scaling.
std::map<int, int64_t> resolve_quotas(const SynthConfig& config);

// The deterministic per-voxel signal template (unit RMS) for a volume
// shape; exposed for tests that check the planted structure.
std::vector<double> signal_template(const Shape& volume_shape);

// Writes <out_dir>/cohort.csv and <out_dir>/volumes/*.vol. Everything is a
// deterministic function of the config; scan noise streams are
// counter-seeded per (participant, scan).
GenerateResult generate(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace siamprog

#endif  // SIAMPROG_SYNTH_HPP_
