#ifndef SIAMPROG_EVAL_HPP_
#define SIAMPROG_EVAL_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "siamprog/cohort.hpp"
#include "siamprog/encoder.hpp"
#include "siamprog/volume.hpp"

namespace siamprog {

// Equal-width distance bins with a fixed DESCENDING orientation: larger
// distance maps to lower rho. Fitted on the training split's distances and
// reused for test.
struct BinSpec {
  double lo = 0.0;
  double hi = 1.0;
  int k = 2;
  std::vector<ProgressionLevel> levels;  // ascending; size() == k
};

// lo/hi = min/max of the training distances, k = number of distinct levels.
// Throws when all distances coincide or fewer than 2 levels/distances are
// given.
BinSpec fit_bins(const std::vector<double>& train_distances,
                 const std::vector<ProgressionLevel>& levels);

// Clamps into [lo, hi], locates the bin, maps descending (bin at lo ->
// largest level). Out-of-range distances land in the extreme bins.
ProgressionLevel predict_level(double distance, const BinSpec& spec);

// Errors in bin units: one bin = 0.1 rho = one scan interval.
double mae(const std::vector<ProgressionLevel>& pred, const std::vector<ProgressionLevel>& truth);
double rmse(const std::vector<ProgressionLevel>& pred, const std::vector<ProgressionLevel>& truth);

struct EvalRow {
  std::string scan_ref;
  ProgressionLevel true_rho = ProgressionLevel::from_tenths(9);
  double distance = 0.0;  // mean distance to the split's anchor pool
  ProgressionLevel pred_rho = ProgressionLevel::from_tenths(9);
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mae = 0.0;
  double rmse = 0.0;
};

// Mean embedding distance from each distinct negative to the manifest's
// anchor pool, row order sorted by scan_ref.
std::vector<EvalRow> negative_distances(const EncoderParams& params,
                                        const TripletManifest& manifest, VolumeCache& volumes);

// Bin range fitted on the manifest's own negative distances/levels.
BinSpec fit_bins_from_manifest(const EncoderParams& params, const TripletManifest& manifest,
                               VolumeCache& volumes);

EvalReport evaluate(const EncoderParams& params, const TripletManifest& manifest,
                    const BinSpec& spec, VolumeCache& volumes);

void save_report_json(const EvalReport& report, const std::filesystem::path& path);
// Scatter CSV: `scan_ref,true_rho,distance,pred_rho`.
void save_scatter_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace siamprog

#endif  // SIAMPROG_EVAL_HPP_
