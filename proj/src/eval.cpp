#include "siamprog/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace siamprog {

BinSpec fit_bins(const std::vector<double>& train_distances,
                 const std::vector<ProgressionLevel>& levels) {
  if (train_distances.size() < 2) {
    throw ValidationError("fit_bins: need at least 2 distances");
  }
  BinSpec spec;
  spec.levels = levels;
  std::sort(spec.levels.begin(), spec.levels.end());
  spec.levels.erase(std::unique(spec.levels.begin(), spec.levels.end()), spec.levels.end());
  spec.k = static_cast<int>(spec.levels.size());
  if (spec.k < 2) throw ValidationError("fit_bins: need at least 2 distinct levels");

  const auto [lo_it, hi_it] = std::minmax_element(train_distances.begin(), train_distances.end());
  spec.lo = *lo_it;
  spec.hi = *hi_it;
  if (!(spec.lo < spec.hi)) {
    throw ValidationError("fit_bins: all training distances are identical");
  }
  return spec;
}

ProgressionLevel predict_level(double distance, const BinSpec& spec) {
  const double d = std::clamp(distance, spec.lo, spec.hi);
  const double width = (spec.hi - spec.lo) / spec.k;
  int idx = static_cast<int>(std::floor((d - spec.lo) / width));
  idx = std::clamp(idx, 0, spec.k - 1);
  // descending orientation: the bin nearest lo carries the largest level
  return spec.levels[static_cast<size_t>(spec.k - 1 - idx)];
}

namespace {

void check_pair_lengths(const std::vector<ProgressionLevel>& pred,
                        const std::vector<ProgressionLevel>& truth) {
  if (pred.size() != truth.size()) {
    throw ValidationError("prediction and truth lengths differ");
  }
  if (pred.empty()) throw ValidationError("cannot score an empty prediction vector");
}

}  // namespace

double mae(const std::vector<ProgressionLevel>& pred, const std::vector<ProgressionLevel>& truth) {
  check_pair_lengths(pred, truth);
  int64_t total = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    total += std::abs(pred[i].tenths() - truth[i].tenths());
  }
  return static_cast<double>(total) / static_cast<double>(pred.size());
}

double rmse(const std::vector<ProgressionLevel>& pred, const std::vector<ProgressionLevel>& truth) {
  check_pair_lengths(pred, truth);
  int64_t total = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const int64_t diff = pred[i].tenths() - truth[i].tenths();
    total += diff * diff;
  }
  return std::sqrt(static_cast<double>(total) / static_cast<double>(pred.size()));
}

std::vector<EvalRow> negative_distances(const EncoderParams& params,
                                        const TripletManifest& manifest, VolumeCache& volumes) {
  if (manifest.triplets.empty()) throw ValidationError("evaluate: manifest is empty");

  std::vector<Tensor> anchor_embeddings;
  for (const std::string& ref : manifest.anchor_pool()) {
    anchor_embeddings.push_back(embed(params, volumes.get(ref)));
  }

  std::map<std::string, ProgressionLevel> negatives;  // distinct, sorted by ref
  for (const TripletEntry& t : manifest.triplets) negatives.emplace(t.negative, t.rho);

  std::vector<EvalRow> rows;
  rows.reserve(negatives.size());
  for (const auto& [ref, rho] : negatives) {
    const Tensor e = embed(params, volumes.get(ref));
    double total = 0.0;
    for (const Tensor& a : anchor_embeddings) total += euclidean_distance(e, a).value();
    EvalRow row;
    row.scan_ref = ref;
    row.true_rho = rho;
    row.distance = total / static_cast<double>(anchor_embeddings.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

BinSpec fit_bins_from_manifest(const EncoderParams& params, const TripletManifest& manifest,
                               VolumeCache& volumes) {
  const std::vector<EvalRow> rows = negative_distances(params, manifest, volumes);
  std::vector<double> distances;
  std::vector<ProgressionLevel> levels;
  for (const EvalRow& row : rows) {
    distances.push_back(row.distance);
    levels.push_back(row.true_rho);
  }
  return fit_bins(distances, levels);
}

EvalReport evaluate(const EncoderParams& params, const TripletManifest& manifest,
                    const BinSpec& spec, VolumeCache& volumes) {
  EvalReport report;
  report.rows = negative_distances(params, manifest, volumes);
  std::vector<ProgressionLevel> pred, truth;
  for (EvalRow& row : report.rows) {
    row.pred_rho = predict_level(row.distance, spec);
    pred.push_back(row.pred_rho);
    truth.push_back(row.true_rho);
  }
  report.mae = mae(pred, truth);
  report.rmse = rmse(pred, truth);
  return report;
}

void save_report_json(const EvalReport& report, const std::filesystem::path& path) {
  nlohmann::json rows = nlohmann::json::array();
  for (const EvalRow& row : report.rows) {
    rows.push_back({{"scan_ref", row.scan_ref},
                    {"true_rho", row.true_rho.value()},
                    {"distance", row.distance},
                    {"pred_rho", row.pred_rho.value()}});
  }
  const nlohmann::json doc = {
      {"n", report.rows.size()}, {"mae", report.mae}, {"rmse", report.rmse}, {"rows", rows}};
  std::ofstream os(path);
  if (!os) throw IoError("cannot open eval report for writing: " + path.string());
  os << doc.dump(2) << '\n';
  if (!os) throw IoError("failed writing eval report: " + path.string());
}

void save_scatter_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open scatter CSV for writing: " + path.string());
  os << "scan_ref,true_rho,distance,pred_rho\n";
  char buf[160];
  for (const EvalRow& row : report.rows) {
    std::snprintf(buf, sizeof buf, ",%.1f,%.17g,%.1f\n", row.true_rho.value(), row.distance,
                  row.pred_rho.value());
    os << row.scan_ref << buf;
  }
  if (!os) throw IoError("failed writing scatter CSV: " + path.string());
}

}  // namespace siamprog
