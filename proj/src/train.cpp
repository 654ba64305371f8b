#include "siamprog/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "siamprog/loss.hpp"
#include "siamprog/rng.hpp"

namespace siamprog {

std::string to_string(LossKind kind) {
  return kind == LossKind::WEIGHTED ? "weighted" : "unweighted";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "weighted") return LossKind::WEIGHTED;
  if (s == "unweighted") return LossKind::UNWEIGHTED;
  throw ConfigError("loss kind must be \"weighted\" or \"unweighted\", got \"" + s + "\"");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(lr_initial > 0.0)) throw ConfigError("train: lr_initial must be > 0");
  if (!(lr_decay_rate > 0.0 && lr_decay_rate <= 1.0)) {
    throw ConfigError("train: lr_decay_rate must be in (0, 1]");
  }
  if (margin < 0.0) throw ConfigError("train: margin must be >= 0");
  if (seeds.empty()) throw ConfigError("train: seeds must be non-empty");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
}

void adam_step(EncoderParams& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (grads.size() != params.tensors.size()) {
    throw ShapeError("adam_step: gradient count does not match parameter count");
  }
  if (state.m.empty()) {
    state.m.resize(params.tensors.size());
    state.v.resize(params.tensors.size());
    for (size_t i = 0; i < params.tensors.size(); ++i) {
      state.m[i].assign(params.tensors[i].tensor.data.size(), 0.0);
      state.v[i].assign(params.tensors[i].tensor.data.size(), 0.0);
    }
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    std::vector<double>& p = params.tensors[i].tensor.data;
    const std::vector<double>& g = grads[i].data;
    if (g.size() != p.size()) {
      throw ShapeError("adam_step: gradient shape mismatch for " + params.tensors[i].name);
    }
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    for (size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

namespace {

Tensor triplet_loss_for(LossKind kind, const Tensor& d_ap, const Tensor& d_an,
                        const TripletEntry& entry, double margin) {
  if (kind == LossKind::WEIGHTED) {
    return weighted_triplet_loss(d_ap, d_an, entry.alpha, margin);
  }
  return unweighted_triplet_loss(d_ap, d_an, margin);
}

// Forward-only mean loss over a manifest.
double mean_loss(const EncoderParams& params, const TripletManifest& manifest, LossKind kind,
                 double margin, VolumeCache& volumes) {
  double total = 0.0;
  for (const TripletEntry& entry : manifest.triplets) {
    const Tensor ea = embed(params, volumes.get(entry.anchor));
    const Tensor ep = embed(params, volumes.get(entry.positive));
    const Tensor en = embed(params, volumes.get(entry.negative));
    const Tensor d_ap = euclidean_distance(ea, ep);
    const Tensor d_an = euclidean_distance(ea, en);
    total += triplet_loss_for(kind, d_ap, d_an, entry, margin).value();
  }
  return total / static_cast<double>(manifest.triplets.size());
}

}  // namespace

TrainResult train_run(const TripletManifest& manifest_train, const TripletManifest& manifest_test,
                      const EncoderConfig& encoder_cfg, const TrainConfig& cfg, uint64_t seed,
                      VolumeCache& volumes) {
  cfg.validate();
  if (manifest_train.triplets.empty() || manifest_test.triplets.empty()) {
    throw ValidationError("train_run: manifests must be non-empty");
  }

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  result.params = init_params(encoder_cfg, seed);
  result.log.seed = seed;
  result.log.loss_kind = cfg.loss_kind;

  AdamState state;
  Rng order_rng(mix64(seed, 100));
  std::vector<size_t> order(manifest_train.triplets.size());
  std::iota(order.begin(), order.end(), 0);

  const size_t n_train = order.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_initial * std::pow(cfg.lr_decay_rate, static_cast<double>(epoch));
    try {
      shuffle(order, order_rng);
      double epoch_loss = 0.0;
      for (size_t begin = 0; begin < n_train; begin += cfg.batch_size) {
        const size_t end = std::min(begin + cfg.batch_size, n_train);
        Tape tape;
        const EncoderParams bound = bind(result.params, tape);
        Tensor batch_total;
        for (size_t i = begin; i < end; ++i) {
          const TripletEntry& entry = manifest_train.triplets[order[i]];
          // One shared parameter set feeds all three branches.
          const Tensor ea = embed(bound, volumes.get(entry.anchor));
          const Tensor ep = embed(bound, volumes.get(entry.positive));
          const Tensor en = embed(bound, volumes.get(entry.negative));
          const Tensor d_ap = euclidean_distance(ea, ep);
          const Tensor d_an = euclidean_distance(ea, en);
          const Tensor loss = triplet_loss_for(cfg.loss_kind, d_ap, d_an, entry, cfg.margin);
          epoch_loss += loss.value();
          batch_total = i == begin ? loss : add(batch_total, loss);
        }
        const Tensor batch_mean = scale(batch_total, 1.0 / static_cast<double>(end - begin));
        const GradMap grad_map = tape.backward(batch_mean);
        std::vector<Tensor> grads;
        grads.reserve(bound.tensors.size());
        for (const NamedTensor& nt : bound.tensors) grads.push_back(grad_map.at(nt.tensor.node));
        adam_step(result.params, grads, state, lr);
      }

      EpochStats stats;
      stats.epoch = epoch;
      stats.train_loss = epoch_loss / static_cast<double>(n_train);
      stats.test_loss = mean_loss(result.params, manifest_test, cfg.loss_kind, cfg.margin, volumes);
      stats.lr = lr;
      result.log.epochs.push_back(stats);
    } catch (const NumericError& e) {
      throw NumericError("training aborted at epoch " + std::to_string(epoch) + ": " + e.what());
    }
  }

  result.log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void save_runlog_csv(const RunLog& log, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open run log for writing: " + path.string());
  os << "epoch,train_loss,test_loss,lr\n";
  char buf[128];
  for (const EpochStats& e : log.epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.test_loss,
                  e.lr);
    os << buf;
  }
  if (!os) throw IoError("failed writing run log: " + path.string());
}

void save_run_summary(const RunLog& log, const std::filesystem::path& path) {
  nlohmann::json doc = {
      {"seed", log.seed},
      {"loss", to_string(log.loss_kind)},
      {"epochs", log.epochs.size()},
      {"final_train_loss", log.epochs.empty() ? 0.0 : log.epochs.back().train_loss},
      {"final_test_loss", log.epochs.empty() ? 0.0 : log.epochs.back().test_loss},
      {"checkpoint", log.checkpoint_path},
  };
  std::ofstream os(path);
  if (!os) throw IoError("cannot open run summary for writing: " + path.string());
  os << doc.dump(2) << '\n';
  if (!os) throw IoError("failed writing run summary: " + path.string());
}

}  // namespace siamprog
