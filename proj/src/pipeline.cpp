#include "siamprog/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "json_util.hpp"
#include "serialize.hpp"
#include "siamprog/eval.hpp"
#include "siamprog/volume.hpp"

namespace siamprog {

namespace fs = std::filesystem;

namespace {

// Write-then-rename keeps readers from ever seeing a partial file.
void write_atomic(const fs::path& path, const std::function<void(const fs::path&)>& writer) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  writer(tmp);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::map<int, int64_t> parse_level_map(const nlohmann::json& obj, const std::string& context) {
  std::map<int, int64_t> quotas;
  if (!obj.is_object()) throw ConfigError(context + ": level quotas must be an object");
  for (const auto& [key, value] : obj.items()) {
    double rho = 0.0;
    try {
      rho = std::stod(key);
    } catch (const std::exception&) {
      throw ConfigError(context + ": quota key \"" + key + "\" is not a progression level");
    }
    int tenths = 0;
    try {
      tenths = ProgressionLevel::from_value(rho).tenths();
    } catch (const ValidationError& e) {
      throw ConfigError(context + ": " + e.what());
    }
    if (!value.is_number_integer()) {
      throw ConfigError(context + ": quota counts must be integers");
    }
    quotas[tenths] = value.get<int64_t>();
  }
  return quotas;
}

std::string format_rho(int tenths) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%.1f", tenths / 10.0);
  return buf;
}

void print_distribution(const std::map<int, int64_t>& table, std::ostream& out) {
  out << "distribution:\n";
  for (const auto& [tenths, count] : table) {
    out << "  rho=" << format_rho(tenths) << " count=" << count << "\n";
  }
}

}  // namespace

PipelineConfig load_pipeline_config(const fs::path& config_path) {
  std::ifstream is(config_path);
  if (!is) throw ConfigError("cannot open config file: " + config_path.string());
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad JSON in " + config_path.string() + ": " + e.what());
  }
  const std::string context = "config " + config_path.string();
  jsonu::reject_unknown_keys(doc, {"workdir", "synth", "encoder", "train", "split", "tsne"},
                             context);

  PipelineConfig cfg;
  if (doc.contains("synth")) {
    const auto& j = doc.at("synth");
    jsonu::reject_unknown_keys(
        j, {"volume_shape", "participants", "level_quotas", "signal_strength", "noise_sigma",
            "seed"},
        context + ".synth");
    cfg.synth.volume_shape = jsonu::get_or<Shape>(j, "volume_shape", cfg.synth.volume_shape,
                                                  context);
    cfg.synth.participants = jsonu::get_or<int>(j, "participants", cfg.synth.participants, context);
    if (j.contains("level_quotas")) {
      cfg.synth.level_quotas = parse_level_map(j.at("level_quotas"), context + ".synth");
    }
    cfg.synth.signal_strength =
        jsonu::get_or<double>(j, "signal_strength", cfg.synth.signal_strength, context);
    cfg.synth.noise_sigma = jsonu::get_or<double>(j, "noise_sigma", cfg.synth.noise_sigma, context);
    cfg.synth.seed = jsonu::get_or<uint64_t>(j, "seed", cfg.synth.seed, context);
  }
  if (doc.contains("encoder")) {
    cfg.encoder = encoder_config_from_json(doc.at("encoder"), context + ".encoder");
  }
  if (doc.contains("train")) {
    const auto& j = doc.at("train");
    jsonu::reject_unknown_keys(
        j, {"loss", "epochs", "lr_initial", "lr_decay_rate", "margin", "seeds", "batch_size"},
        context + ".train");
    if (j.contains("loss")) {
      cfg.train.loss_kind = loss_kind_from_string(jsonu::require<std::string>(j, "loss", context));
    }
    cfg.train.epochs = jsonu::get_or<int>(j, "epochs", cfg.train.epochs, context);
    cfg.train.lr_initial = jsonu::get_or<double>(j, "lr_initial", cfg.train.lr_initial, context);
    cfg.train.lr_decay_rate =
        jsonu::get_or<double>(j, "lr_decay_rate", cfg.train.lr_decay_rate, context);
    cfg.train.margin = jsonu::get_or<double>(j, "margin", cfg.train.margin, context);
    cfg.train.seeds =
        jsonu::get_or<std::vector<uint64_t>>(j, "seeds", cfg.train.seeds, context);
    cfg.train.batch_size = jsonu::get_or<int>(j, "batch_size", cfg.train.batch_size, context);
    cfg.train.validate();
  }
  if (doc.contains("split")) {
    const auto& j = doc.at("split");
    jsonu::reject_unknown_keys(j, {"train_fraction", "seed", "level_quotas"}, context + ".split");
    cfg.split.train_fraction =
        jsonu::get_or<double>(j, "train_fraction", cfg.split.train_fraction, context);
    cfg.split.seed = jsonu::get_or<uint64_t>(j, "seed", cfg.split.seed, context);
    if (j.contains("level_quotas")) {
      cfg.split.level_quotas = parse_level_map(j.at("level_quotas"), context + ".split");
    }
  }
  if (doc.contains("tsne")) {
    const auto& j = doc.at("tsne");
    jsonu::reject_unknown_keys(j,
                               {"perplexity_train", "perplexity_test", "iterations",
                                "learning_rate", "early_exaggeration", "exaggeration_iters",
                                "seed"},
                               context + ".tsne");
    cfg.tsne.perplexity_train =
        jsonu::get_or<double>(j, "perplexity_train", cfg.tsne.perplexity_train, context);
    cfg.tsne.perplexity_test =
        jsonu::get_or<double>(j, "perplexity_test", cfg.tsne.perplexity_test, context);
    cfg.tsne.iterations = jsonu::get_or<int>(j, "iterations", cfg.tsne.iterations, context);
    cfg.tsne.learning_rate =
        jsonu::get_or<double>(j, "learning_rate", cfg.tsne.learning_rate, context);
    cfg.tsne.early_exaggeration =
        jsonu::get_or<double>(j, "early_exaggeration", cfg.tsne.early_exaggeration, context);
    cfg.tsne.exaggeration_iters =
        jsonu::get_or<int>(j, "exaggeration_iters", cfg.tsne.exaggeration_iters, context);
    cfg.tsne.seed = jsonu::get_or<uint64_t>(j, "seed", cfg.tsne.seed, context);
  }

  const fs::path base = config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");
  fs::path workdir = jsonu::get_or<std::string>(doc, "workdir", cfg.workdir.string(), context);
  cfg.workdir = workdir.is_absolute() ? workdir : base / workdir;
  return cfg;
}

// --- artifact paths -----------------------------------------------------------

fs::path cohort_csv_path(const PipelineConfig& cfg) { return cfg.workdir / "cohort.csv"; }

fs::path labeled_json_path(const PipelineConfig& cfg) { return cfg.workdir / "labeled.json"; }

fs::path manifest_path(const PipelineConfig& cfg, Split split) {
  return cfg.workdir / (split == Split::TRAIN ? "manifest_train.json" : "manifest_test.json");
}

namespace {

std::string run_tag(LossKind kind, uint64_t seed) {
  return to_string(kind) + "_seed" + std::to_string(seed);
}

}  // namespace

fs::path checkpoint_path(const PipelineConfig& cfg, LossKind kind, uint64_t seed) {
  return cfg.workdir / "checkpoints" / (run_tag(kind, seed) + ".ckpt");
}

fs::path runlog_csv_path(const PipelineConfig& cfg, LossKind kind, uint64_t seed) {
  return cfg.workdir / "logs" / (run_tag(kind, seed) + ".csv");
}

fs::path run_summary_path(const PipelineConfig& cfg, LossKind kind, uint64_t seed) {
  return cfg.workdir / "logs" / (run_tag(kind, seed) + ".json");
}

fs::path eval_report_path(const PipelineConfig& cfg, LossKind kind, uint64_t seed) {
  return cfg.workdir / "eval" / (run_tag(kind, seed) + "_report.json");
}

fs::path eval_scatter_path(const PipelineConfig& cfg, LossKind kind, uint64_t seed) {
  return cfg.workdir / "eval" / (run_tag(kind, seed) + "_scatter.csv");
}

namespace {

std::string split_tag(Split split) { return split == Split::TRAIN ? "train" : "test"; }

}  // namespace

fs::path embeddings_csv_path(const PipelineConfig& cfg, Split split, LossKind kind,
                             uint64_t seed) {
  return cfg.workdir / "embed" / (split_tag(split) + "_" + run_tag(kind, seed) + ".csv");
}

fs::path tsne_points_path(const PipelineConfig& cfg, Split split, LossKind kind, uint64_t seed) {
  return cfg.workdir / "tsne" / (split_tag(split) + "_" + run_tag(kind, seed) + "_points.csv");
}

fs::path tsne_trace_path(const PipelineConfig& cfg, Split split, LossKind kind, uint64_t seed) {
  return cfg.workdir / "tsne" / (split_tag(split) + "_" + run_tag(kind, seed) + "_trace.json");
}

// --- stages ---------------------------------------------------------------------

void stage_gen(const PipelineConfig& cfg, bool force, std::ostream& out) {
  const fs::path csv = cohort_csv_path(cfg);
  if (!force && fs::exists(csv)) {
    const std::vector<ParticipantRecord> cohort = load_cohort_csv(csv);
    out << "gen: up to date (" << csv.string() << ")\n";
    print_distribution(distribution_table(label_cohort(cohort)), out);
    return;
  }
  fs::create_directories(cfg.workdir);
  const GenerateResult result = generate(cfg.synth, cfg.workdir);
  out << "gen: wrote " << csv.string() << " (" << result.cohort.size() << " participants)\n";
  print_distribution(result.distribution, out);
}

namespace {

std::vector<LabeledScan> load_and_label(const PipelineConfig& cfg) {
  return label_cohort(load_cohort_csv(cohort_csv_path(cfg)));
}

void save_labeled_json(const std::vector<LabeledScan>& labeled, const fs::path& path) {
  nlohmann::json scans = nlohmann::json::array();
  for (const LabeledScan& scan : labeled) {
    scans.push_back({{"participant_id", scan.participant_id},
                     {"scan_ref", scan.scan_ref},
                     {"rho", scan.rho.value()},
                     {"exam_date", scan.exam_date}});
  }
  write_atomic(path, [&](const fs::path& tmp) {
    std::ofstream os(tmp);
    if (!os) throw IoError("cannot open " + tmp.string());
    os << nlohmann::json{{"scans", scans}}.dump(2) << '\n';
    if (!os) throw IoError("failed writing " + tmp.string());
  });
}

}  // namespace

void stage_label(const PipelineConfig& cfg, bool force, std::ostream& out) {
  const fs::path path = labeled_json_path(cfg);
  const std::vector<LabeledScan> labeled = load_and_label(cfg);
  if (!force && fs::exists(path)) {
    out << "label: up to date (" << path.string() << ")\n";
  } else {
    save_labeled_json(labeled, path);
    out << "label: wrote " << path.string() << " (" << labeled.size() << " scans)\n";
  }
  print_distribution(distribution_table(labeled), out);
}

void stage_split(const PipelineConfig& cfg, bool force, std::ostream& out) {
  const fs::path train_path = manifest_path(cfg, Split::TRAIN);
  const fs::path test_path = manifest_path(cfg, Split::TEST);
  if (!force && fs::exists(train_path) && fs::exists(test_path)) {
    out << "split: up to date\n";
    return;
  }
  const std::vector<LabeledScan> labeled = load_and_label(cfg);
  std::vector<LabeledScan> negatives, ad_scans;
  for (const LabeledScan& scan : labeled) {
    (scan.rho.is_conversion() ? ad_scans : negatives).push_back(scan);
  }
  const auto [train, test] = split_participants(negatives, ad_scans, cfg.split);
  write_atomic(train_path, [&](const fs::path& tmp) { save_manifest(train, tmp); });
  write_atomic(test_path, [&](const fs::path& tmp) { save_manifest(test, tmp); });
  out << "split: " << train.triplets.size() << " train / " << test.triplets.size()
      << " test triplets (seed " << cfg.split.seed << ")\n";
}

bool stage_verify(const PipelineConfig& cfg, std::ostream& out) {
  const std::vector<ParticipantRecord> cohort = load_cohort_csv(cohort_csv_path(cfg));
  const TripletManifest train = load_manifest(manifest_path(cfg, Split::TRAIN));
  const TripletManifest test = load_manifest(manifest_path(cfg, Split::TEST));
  const std::vector<std::string> violations = verify_split(cohort, train, test);
  if (violations.empty()) {
    out << "verify: ok (" << train.triplets.size() << " train / " << test.triplets.size()
        << " test triplets)\n";
    return true;
  }
  for (const std::string& v : violations) out << "violation: " << v << "\n";
  return false;
}

namespace {

void preload_volumes(VolumeCache& volumes, const TripletManifest& manifest) {
  for (const TripletEntry& t : manifest.triplets) {
    volumes.get(t.anchor);
    volumes.get(t.positive);
    volumes.get(t.negative);
  }
}

struct RunSpec {
  LossKind kind;
  uint64_t seed;
};

}  // namespace

void stage_train(const PipelineConfig& cfg, const std::vector<LossKind>& kinds,
                 const std::vector<uint64_t>& seeds, int jobs, bool force, std::ostream& out) {
  const TripletManifest train = load_manifest(manifest_path(cfg, Split::TRAIN));
  const TripletManifest test = load_manifest(manifest_path(cfg, Split::TEST));

  std::vector<RunSpec> runs;
  std::vector<std::string> done;
  for (LossKind kind : kinds) {
    for (uint64_t seed : seeds) {
      if (!force && fs::exists(checkpoint_path(cfg, kind, seed)) &&
          fs::exists(runlog_csv_path(cfg, kind, seed)) &&
          fs::exists(run_summary_path(cfg, kind, seed))) {
        done.push_back("train " + run_tag(kind, seed) + ": up to date");
      } else {
        runs.push_back({kind, seed});
      }
    }
  }
  for (const std::string& line : done) out << line << "\n";
  if (runs.empty()) return;

  VolumeCache volumes(cfg.workdir);
  preload_volumes(volumes, train);
  preload_volumes(volumes, test);

  const int max_jobs = std::max(1, jobs);
  std::vector<std::string> lines(runs.size());
  std::vector<std::exception_ptr> errors(runs.size());

  for (size_t begin = 0; begin < runs.size(); begin += max_jobs) {
    const size_t end = std::min(begin + max_jobs, runs.size());
    std::vector<std::thread> threads;
    for (size_t i = begin; i < end; ++i) {
      threads.emplace_back([&, i] {
        try {
          TrainConfig run_cfg = cfg.train;
          run_cfg.loss_kind = runs[i].kind;
          TrainResult result =
              train_run(train, test, cfg.encoder, run_cfg, runs[i].seed, volumes);
          const fs::path ckpt = checkpoint_path(cfg, runs[i].kind, runs[i].seed);
          result.log.checkpoint_path = ckpt.string();
          write_atomic(ckpt, [&](const fs::path& tmp) { save_checkpoint(result.params, tmp); });
          write_atomic(runlog_csv_path(cfg, runs[i].kind, runs[i].seed),
                       [&](const fs::path& tmp) { save_runlog_csv(result.log, tmp); });
          write_atomic(run_summary_path(cfg, runs[i].kind, runs[i].seed),
                       [&](const fs::path& tmp) { save_run_summary(result.log, tmp); });
          std::ostringstream line;
          line << "train " << run_tag(runs[i].kind, runs[i].seed) << ": final train loss "
               << result.log.epochs.back().train_loss << ", test loss "
               << result.log.epochs.back().test_loss << " (" << result.log.wall_seconds << "s)";
          lines[i] = line.str();
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (std::thread& t : threads) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const std::string& line : lines) out << line << "\n";
}

void stage_eval(const PipelineConfig& cfg, const std::vector<LossKind>& kinds,
                const std::vector<uint64_t>& seeds, std::ostream& out) {
  const TripletManifest train = load_manifest(manifest_path(cfg, Split::TRAIN));
  const TripletManifest test = load_manifest(manifest_path(cfg, Split::TEST));
  VolumeCache volumes(cfg.workdir);

  char buf[160];
  for (LossKind kind : kinds) {
    double mae_total = 0.0, rmse_total = 0.0;
    for (uint64_t seed : seeds) {
      const EncoderParams params = load_checkpoint(checkpoint_path(cfg, kind, seed));
      const BinSpec spec = fit_bins_from_manifest(params, train, volumes);
      const EvalReport report = evaluate(params, test, spec, volumes);
      write_atomic(eval_report_path(cfg, kind, seed),
                   [&](const fs::path& tmp) { save_report_json(report, tmp); });
      write_atomic(eval_scatter_path(cfg, kind, seed),
                   [&](const fs::path& tmp) { save_scatter_csv(report, tmp); });
      std::snprintf(buf, sizeof buf, "eval %s: mae=%.4f, rmse=%.4f (n=%zu)\n",
                    run_tag(kind, seed).c_str(), report.mae, report.rmse, report.rows.size());
      out << buf;
      mae_total += report.mae;
      rmse_total += report.rmse;
    }
    std::snprintf(buf, sizeof buf, "eval %s mean over %zu seeds: mae=%.4f, rmse=%.4f\n",
                  to_string(kind).c_str(), seeds.size(),
                  mae_total / static_cast<double>(seeds.size()),
                  rmse_total / static_cast<double>(seeds.size()));
    out << buf;
  }
}

namespace {

// Every distinct scan of the manifest with its level: negatives carry
// their rho, anchors and positives are conversion scans (1.0).
std::vector<std::pair<std::string, ProgressionLevel>> manifest_scans(
    const TripletManifest& manifest) {
  std::map<std::string, ProgressionLevel> scans;
  for (const TripletEntry& t : manifest.triplets) {
    scans.emplace(t.anchor, ProgressionLevel::from_tenths(10));
    scans.emplace(t.positive, ProgressionLevel::from_tenths(10));
    scans.emplace(t.negative, t.rho);
  }
  return {scans.begin(), scans.end()};
}

}  // namespace

void stage_embed(const PipelineConfig& cfg, LossKind kind, const std::vector<uint64_t>& seeds,
                 Split split, std::ostream& out) {
  const TripletManifest manifest = load_manifest(manifest_path(cfg, split));
  const auto scans = manifest_scans(manifest);
  VolumeCache volumes(cfg.workdir);

  for (uint64_t seed : seeds) {
    const EncoderParams params = load_checkpoint(checkpoint_path(cfg, kind, seed));
    const fs::path path = embeddings_csv_path(cfg, split, kind, seed);
    write_atomic(path, [&](const fs::path& tmp) {
      std::ofstream os(tmp);
      if (!os) throw IoError("cannot open " + tmp.string());
      os << "scan_ref,true_rho";
      for (int i = 0; i < params.config.embedding_dim; ++i) os << ",e" << i;
      os << "\n";
      char buf[64];
      for (const auto& [ref, rho] : scans) {
        const Tensor e = embed(params, volumes.get(ref));
        os << ref;
        std::snprintf(buf, sizeof buf, ",%.1f", rho.value());
        os << buf;
        for (double v : e.data) {
          std::snprintf(buf, sizeof buf, ",%.17g", v);
          os << buf;
        }
        os << "\n";
      }
      if (!os) throw IoError("failed writing " + tmp.string());
    });
    out << "embed: wrote " << path.string() << " (" << scans.size() << " scans)\n";
  }
}

void stage_tsne(const PipelineConfig& cfg, LossKind kind, uint64_t seed, Split split,
                double perplexity_override, bool drop_underrepresented, bool force,
                std::ostream& out) {
  const fs::path points_path = tsne_points_path(cfg, split, kind, seed);
  const fs::path trace_path = tsne_trace_path(cfg, split, kind, seed);
  if (!force && fs::exists(points_path) && fs::exists(trace_path)) {
    out << "tsne: up to date (" << points_path.string() << ")\n";
    return;
  }

  const TripletManifest manifest = load_manifest(manifest_path(cfg, split));
  auto scans = manifest_scans(manifest);
  if (drop_underrepresented) {
    const std::set<int> drop = split == Split::TRAIN ? std::set<int>{2} : std::set<int>{2, 3, 5};
    std::erase_if(scans, [&](const auto& s) { return drop.count(s.second.tenths()) > 0; });
  }

  VolumeCache volumes(cfg.workdir);
  const EncoderParams params = load_checkpoint(checkpoint_path(cfg, kind, seed));
  std::vector<std::vector<double>> embeddings;
  embeddings.reserve(scans.size());
  for (const auto& [ref, rho] : scans) {
    embeddings.push_back(embed(params, volumes.get(ref)).data);
  }

  TsneConfig tsne_cfg;
  tsne_cfg.perplexity = perplexity_override > 0.0
                            ? perplexity_override
                            : (split == Split::TRAIN ? cfg.tsne.perplexity_train
                                                     : cfg.tsne.perplexity_test);
  tsne_cfg.iterations = cfg.tsne.iterations;
  tsne_cfg.learning_rate = cfg.tsne.learning_rate;
  tsne_cfg.early_exaggeration = cfg.tsne.early_exaggeration;
  tsne_cfg.exaggeration_iters = cfg.tsne.exaggeration_iters;
  tsne_cfg.seed = cfg.tsne.seed;
  const TsneResult result = project(embeddings, tsne_cfg);

  write_atomic(points_path, [&](const fs::path& tmp) {
    std::ofstream os(tmp);
    if (!os) throw IoError("cannot open " + tmp.string());
    os << "scan_ref,true_rho,x,y\n";
    char buf[96];
    for (size_t i = 0; i < scans.size(); ++i) {
      std::snprintf(buf, sizeof buf, ",%.1f,%.17g,%.17g\n", scans[i].second.value(),
                    result.points[i][0], result.points[i][1]);
      os << scans[i].first << buf;
    }
    if (!os) throw IoError("failed writing " + tmp.string());
  });
  write_atomic(trace_path, [&](const fs::path& tmp) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& [iteration, kl] : result.kl_trace) {
      trace.push_back({{"iteration", iteration}, {"kl", kl}});
    }
    std::ofstream os(tmp);
    if (!os) throw IoError("cannot open " + tmp.string());
    os << nlohmann::json{{"kl_trace", trace}}.dump(2) << '\n';
    if (!os) throw IoError("failed writing " + tmp.string());
  });
  out << "tsne: wrote " << points_path.string() << " (" << scans.size() << " points, perplexity "
      << tsne_cfg.perplexity << ")\n";
}

}  // namespace siamprog
