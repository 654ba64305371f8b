#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "siamprog/loss.hpp"
#include "siamprog/synth.hpp"
#include "siamprog/train.hpp"

using namespace siamprog;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("siamprog_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

EncoderConfig tiny_encoder() {
  EncoderConfig cfg;
  cfg.input_shape = {1, 6, 6, 6};
  cfg.stem_channels = 2;
  cfg.stages = {{1, 4, 2}};
  cfg.head_dims = {8, 4};
  cfg.embedding_dim = 4;
  return cfg;
}

struct TinySetup {
  fs::path dir;
  TripletManifest train;
  TripletManifest test;
};

TinySetup tiny_setup(const std::string& name, std::map<int, int64_t> quotas, double noise) {
  TinySetup setup;
  setup.dir = fresh_dir(name);
  SynthConfig synth;
  synth.volume_shape = {1, 6, 6, 6};
  synth.level_quotas = std::move(quotas);
  synth.noise_sigma = noise;
  synth.seed = 11;
  const GenerateResult gen = generate(synth, setup.dir);

  std::vector<LabeledScan> negatives, ad_scans;
  for (const LabeledScan& scan : label_cohort(gen.cohort)) {
    (scan.rho.is_conversion() ? ad_scans : negatives).push_back(scan);
  }
  SplitOptions options;
  options.train_fraction = 0.75;
  options.seed = 2;
  auto [train, test] = split_participants(negatives, ad_scans, options);
  setup.train = std::move(train);
  setup.test = std::move(test);
  return setup;
}

EncoderParams single_param(double value) {
  EncoderConfig cfg;
  cfg.input_shape = {1, 1, 1, 1};
  cfg.stem_channels = 1;
  cfg.stages = {};
  cfg.head_dims = {1};
  cfg.embedding_dim = 1;
  EncoderParams params;
  params.config = cfg;
  params.tensors.push_back({"w", Tensor::scalar(value)});
  return params;
}

}  // namespace

TEST_CASE("adam with zero gradient changes nothing") {
  EncoderParams params = single_param(0.7);
  AdamState state;
  adam_step(params, {Tensor::scalar(0.0)}, state, 1e-3);
  CHECK(params.tensors[0].tensor.data[0] == 0.7);
  CHECK(state.m[0][0] == 0.0);
  CHECK(state.v[0][0] == 0.0);
  CHECK(state.step == 1);
}

TEST_CASE("adam first step matches the scalar reference formula") {
  const double g = 0.37, lr = 1e-2;
  EncoderParams params = single_param(1.0);
  AdamState state;
  adam_step(params, {Tensor::scalar(g)}, state, lr);

  // reference: m=(1-b1)g, v=(1-b2)g^2, mh=m/(1-b1), vh=v/(1-b2)
  const double m = 0.1 * g, v = 0.001 * g * g;
  const double want = 1.0 - lr * (m / 0.1) / (std::sqrt(v / 0.001) + 1e-8);
  CHECK(params.tensors[0].tensor.data[0] == want);
  // the first step is essentially a signed lr-sized move
  CHECK(std::fabs((1.0 - params.tensors[0].tensor.data[0]) - lr) < lr * 1e-6);
}

TEST_CASE("adam trace matches a scalar oracle bit for bit") {
  const double lr = 5e-3;
  EncoderParams params = single_param(-0.25);
  AdamState state;

  double w = -0.25, m = 0.0, v = 0.0;
  const double grads[] = {0.4, 0.4, -1.3, 0.02, 7.5};
  int t = 0;
  for (double g : grads) {
    adam_step(params, {Tensor::scalar(g)}, state, lr);
    t += 1;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    w -= lr * mh / (std::sqrt(vh) + 1e-8);
    CHECK(params.tensors[0].tensor.data[0] == w);
  }
}

TEST_CASE("adam rejects mismatched gradients") {
  EncoderParams params = single_param(0.0);
  AdamState state;
  CHECK_THROWS_AS(adam_step(params, {}, state, 1e-3), ShapeError);
  CHECK_THROWS_AS(adam_step(params, {Tensor::zeros({2})}, state, 1e-3), ShapeError);
}

TEST_CASE("train_run is deterministic and follows the lr schedule") {
  const TinySetup setup = tiny_setup("train_det", {{8, 2}, {9, 6}, {10, 6}}, 0.1);
  TrainConfig cfg;
  cfg.loss_kind = LossKind::WEIGHTED;
  cfg.epochs = 5;
  cfg.batch_size = 3;
  VolumeCache volumes_a(setup.dir), volumes_b(setup.dir);

  const TrainResult a = train_run(setup.train, setup.test, tiny_encoder(), cfg, 17, volumes_a);
  const TrainResult b = train_run(setup.train, setup.test, tiny_encoder(), cfg, 17, volumes_b);

  REQUIRE(a.log.epochs.size() == 5);
  for (size_t i = 0; i < 5; ++i) {
    CHECK(a.log.epochs[i].train_loss == b.log.epochs[i].train_loss);
    CHECK(a.log.epochs[i].test_loss == b.log.epochs[i].test_loss);
    CHECK(a.log.epochs[i].lr == cfg.lr_initial * std::pow(cfg.lr_decay_rate, i));
    if (i > 0) CHECK(a.log.epochs[i].lr < a.log.epochs[i - 1].lr);
  }
  for (size_t i = 0; i < a.params.tensors.size(); ++i) {
    CHECK(a.params.tensors[i].tensor.data == b.params.tensors[i].tensor.data);
  }
}

TEST_CASE("weighted run with alpha identically 1 matches the unweighted run") {
  // negatives exist only at rho 0.9, so every alpha is exactly 1.0
  const TinySetup setup = tiny_setup("train_a1", {{9, 8}, {10, 8}}, 0.05);
  for (const TripletEntry& t : setup.train.triplets) REQUIRE(t.alpha.value() == 1.0);

  TrainConfig weighted;
  weighted.loss_kind = LossKind::WEIGHTED;
  weighted.epochs = 4;
  TrainConfig unweighted = weighted;
  unweighted.loss_kind = LossKind::UNWEIGHTED;

  VolumeCache va(setup.dir), vb(setup.dir);
  const TrainResult w = train_run(setup.train, setup.test, tiny_encoder(), weighted, 3, va);
  const TrainResult u = train_run(setup.train, setup.test, tiny_encoder(), unweighted, 3, vb);
  for (size_t i = 0; i < w.log.epochs.size(); ++i) {
    CHECK(w.log.epochs[i].train_loss == u.log.epochs[i].train_loss);
    CHECK(w.log.epochs[i].test_loss == u.log.epochs[i].test_loss);
  }
  for (size_t i = 0; i < w.params.tensors.size(); ++i) {
    CHECK(w.params.tensors[i].tensor.data == u.params.tensors[i].tensor.data);
  }
}

TEST_CASE("noise-free training reduces the mean train loss") {
  const TinySetup setup = tiny_setup("train_learn", {{7, 2}, {8, 4}, {9, 6}, {10, 6}}, 0.0);
  TrainConfig cfg;
  cfg.loss_kind = LossKind::WEIGHTED;
  cfg.epochs = 40;
  VolumeCache volumes(setup.dir);
  const TrainResult r = train_run(setup.train, setup.test, tiny_encoder(), cfg, 1, volumes);
  CHECK(r.log.epochs.back().train_loss < r.log.epochs.front().train_loss);
}

TEST_CASE("forward passes share one parameter set and leave it untouched") {
  const TinySetup setup = tiny_setup("train_share", {{9, 8}, {10, 8}}, 0.0);
  const EncoderParams params = init_params(tiny_encoder(), 5);
  const std::vector<std::vector<double>> before = [&] {
    std::vector<std::vector<double>> copy;
    for (const NamedTensor& nt : params.tensors) copy.push_back(nt.tensor.data);
    return copy;
  }();

  VolumeCache volumes(setup.dir);
  Tape tape;
  const EncoderParams bound = bind(params, tape);
  const TripletEntry& entry = setup.train.triplets.front();
  const Tensor ea = embed(bound, volumes.get(entry.anchor));
  const Tensor ep = embed(bound, volumes.get(entry.positive));
  const Tensor en = embed(bound, volumes.get(entry.negative));
  const Tensor loss = weighted_triplet_loss(euclidean_distance(ea, ep),
                                            euclidean_distance(ea, en), entry.alpha, 1.0);
  const GradMap grads = tape.backward(loss);

  // one gradient entry per parameter tensor, not per branch
  CHECK(grads.size() == params.tensors.size());
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    CHECK(params.tensors[i].tensor.data == before[i]);
    CHECK(grads.count(bound.tensors[i].tensor.node) == 1);
  }
}

TEST_CASE("weighted gradient on d_an is alpha times the unweighted one") {
  const Alpha alpha = alpha_of(ProgressionLevel::from_value(0.1));  // 1.8
  Tape tw, tu;
  Tensor d_ap_w = tw.leaf(Tensor::scalar(2.0)), d_an_w = tw.leaf(Tensor::scalar(1.0));
  Tensor d_ap_u = tu.leaf(Tensor::scalar(2.0)), d_an_u = tu.leaf(Tensor::scalar(1.0));
  const GradMap gw = tw.backward(weighted_triplet_loss(d_ap_w, d_an_w, alpha, 1.0));
  const GradMap gu = tu.backward(unweighted_triplet_loss(d_ap_u, d_an_u, 1.0));
  CHECK(gw.at(d_an_w.node).data[0] ==
        doctest::Approx(alpha.value() * gu.at(d_an_u.node).data[0]).epsilon(1e-12));
}

TEST_CASE("a numeric blow-up aborts with the offending epoch recorded") {
  const TinySetup setup = tiny_setup("train_nan", {{9, 8}, {10, 8}}, 0.0);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr_initial = 1e300;  // guarantees overflow after the first update
  VolumeCache volumes(setup.dir);
  try {
    train_run(setup.train, setup.test, tiny_encoder(), cfg, 2, volumes);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("empty manifests and bad configs are rejected") {
  const TinySetup setup = tiny_setup("train_bad", {{9, 8}, {10, 8}}, 0.0);
  VolumeCache volumes(setup.dir);
  TrainConfig cfg;
  CHECK_THROWS_AS(train_run(TripletManifest{}, setup.test, tiny_encoder(), cfg, 1, volumes),
                  ValidationError);
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_run(setup.train, setup.test, tiny_encoder(), cfg, 1, volumes),
                  ConfigError);
  cfg = TrainConfig{};
  cfg.lr_decay_rate = 1.5;
  CHECK_THROWS_AS(train_run(setup.train, setup.test, tiny_encoder(), cfg, 1, volumes),
                  ConfigError);
}

TEST_CASE("run log serialization is stable") {
  const fs::path dir = fresh_dir("runlog");
  RunLog log;
  log.seed = 9;
  log.loss_kind = LossKind::UNWEIGHTED;
  log.epochs = {{0, 1.25, 1.5, 1e-3}, {1, 1.0, 1.25, 9.6e-4}};
  log.checkpoint_path = "checkpoints/unweighted_seed9.ckpt";

  save_runlog_csv(log, dir / "log.csv");
  save_runlog_csv(log, dir / "log2.csv");
  std::ifstream a(dir / "log.csv"), b(dir / "log2.csv");
  const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
  CHECK(bytes_a == bytes_b);
  CHECK(bytes_a.rfind("epoch,train_loss,test_loss,lr\n", 0) == 0);

  save_run_summary(log, dir / "summary.json");
  std::ifstream s(dir / "summary.json");
  const std::string summary((std::istreambuf_iterator<char>(s)), {});
  CHECK(summary.find("\"seed\": 9") != std::string::npos);
  CHECK(summary.find("wall") == std::string::npos);
}
