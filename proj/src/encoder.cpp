#include "siamprog/encoder.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "binio.hpp"
#include "json_util.hpp"
#include "serialize.hpp"
#include "siamprog/rng.hpp"

namespace siamprog {

namespace {

int strided_extent(int extent, int stride) {
  // 3x3x3 kernel with padding 1 (or 1x1x1 with padding 0): the output
  // extent is floor((extent - 1)/stride) + 1 in both cases.
  return (extent - 1) / stride + 1;
}

}  // namespace

void EncoderConfig::validate() const {
  if (input_shape.size() != 4) {
    throw ConfigError("encoder: input_shape must be [C,D,H,W], got " + shape_str(input_shape));
  }
  for (int e : input_shape) {
    if (e <= 0) throw ConfigError("encoder: input_shape extents must be positive");
  }
  if (stem_channels < 1) throw ConfigError("encoder: stem_channels must be >= 1");
  int d = input_shape[1], h = input_shape[2], w = input_shape[3];
  for (size_t i = 0; i < stages.size(); ++i) {
    const StageSpec& st = stages[i];
    if (st.num_blocks < 1) throw ConfigError("encoder: stage num_blocks must be >= 1");
    if (st.channels < 1) throw ConfigError("encoder: stage channels must be >= 1");
    if (st.stride != 1 && st.stride != 2) {
      throw ConfigError("encoder: stage stride must be 1 or 2, got " + std::to_string(st.stride));
    }
    d = strided_extent(d, st.stride);
    h = strided_extent(h, st.stride);
    w = strided_extent(w, st.stride);
    if (d < 1 || h < 1 || w < 1) {
      throw ConfigError("encoder: spatial extent vanishes at stage " + std::to_string(i));
    }
  }
  if (head_dims.empty()) throw ConfigError("encoder: head_dims must be non-empty");
  for (int dim : head_dims) {
    if (dim < 1) throw ConfigError("encoder: head dims must be positive");
  }
  if (embedding_dim < 1) throw ConfigError("encoder: embedding_dim must be >= 1");
  if (head_dims.back() != embedding_dim) {
    throw ConfigError("encoder: last head dim " + std::to_string(head_dims.back()) +
                      " must equal embedding_dim " + std::to_string(embedding_dim));
  }
}

namespace {

// Enumerates every parameter of a config in construction order. fan_in 0
// marks zero-initialized tensors (biases).
void for_each_param(const EncoderConfig& cfg,
                    const std::function<void(const std::string&, const Shape&, int64_t)>& fn) {
  const int c_in = cfg.input_shape[0];
  fn("stem.kernel", {cfg.stem_channels, c_in, 3, 3, 3}, static_cast<int64_t>(c_in) * 27);

  int ch = cfg.stem_channels;
  for (size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageSpec& st = cfg.stages[i];
    for (int j = 0; j < st.num_blocks; ++j) {
      const std::string prefix = "stage" + std::to_string(i) + ".block" + std::to_string(j) + ".";
      const int stride = j == 0 ? st.stride : 1;
      fn(prefix + "conv1", {st.channels, ch, 3, 3, 3}, static_cast<int64_t>(ch) * 27);
      fn(prefix + "conv2", {st.channels, st.channels, 3, 3, 3},
         static_cast<int64_t>(st.channels) * 27);
      if (ch != st.channels || stride != 1) {
        fn(prefix + "proj", {st.channels, ch, 1, 1, 1}, ch);
      }
      ch = st.channels;
    }
  }

  int prev = ch;
  for (size_t k = 0; k < cfg.head_dims.size(); ++k) {
    const std::string prefix = "head" + std::to_string(k) + ".";
    fn(prefix + "weight", {cfg.head_dims[k], prev}, prev);
    fn(prefix + "bias", {cfg.head_dims[k]}, 0);
    prev = cfg.head_dims[k];
  }
}

}  // namespace

const Tensor& EncoderParams::find(std::string_view name) const {
  for (const NamedTensor& nt : tensors) {
    if (nt.name == name) return nt.tensor;
  }
  throw Error("encoder parameter not found: " + std::string(name));
}

Tensor& EncoderParams::find(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const EncoderParams*>(this)->find(name));
}

EncoderParams init_params(const EncoderConfig& config, uint64_t seed) {
  config.validate();
  EncoderParams params;
  params.config = config;
  params.seed = seed;
  Rng rng(seed);
  for_each_param(config, [&](const std::string& name, const Shape& shape, int64_t fan_in) {
    Tensor t = Tensor::zeros(shape);
    if (fan_in > 0) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& v : t.data) v = rng.uniform(-bound, bound);
    }
    params.tensors.push_back({name, std::move(t)});
  });
  return params;
}

EncoderParams bind(const EncoderParams& params, Tape& tape) {
  EncoderParams bound;
  bound.config = params.config;
  bound.seed = params.seed;
  bound.tensors.reserve(params.tensors.size());
  for (const NamedTensor& nt : params.tensors) {
    bound.tensors.push_back({nt.name, tape.leaf(nt.tensor)});
  }
  return bound;
}

Tensor embed(const EncoderParams& params, const Tensor& volume) {
  const EncoderConfig& cfg = params.config;
  if (volume.shape != cfg.input_shape) {
    throw ShapeError("embed: volume shape " + shape_str(volume.shape) +
                     " does not match config input shape " + shape_str(cfg.input_shape));
  }

  Tensor x = relu(conv3d(volume, params.find("stem.kernel"), 1, 1));

  int ch = cfg.stem_channels;
  for (size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageSpec& st = cfg.stages[i];
    for (int j = 0; j < st.num_blocks; ++j) {
      const std::string prefix = "stage" + std::to_string(i) + ".block" + std::to_string(j) + ".";
      const int stride = j == 0 ? st.stride : 1;
      Tensor out = relu(conv3d(x, params.find(prefix + "conv1"), stride, 1));
      out = conv3d(out, params.find(prefix + "conv2"), 1, 1);
      Tensor shortcut =
          (ch != st.channels || stride != 1) ? conv3d(x, params.find(prefix + "proj"), stride, 0) : x;
      x = relu(add(out, shortcut));
      ch = st.channels;
    }
  }

  x = global_avg_pool(x);

  for (size_t k = 0; k < cfg.head_dims.size(); ++k) {
    const std::string prefix = "head" + std::to_string(k) + ".";
    x = dense(x, params.find(prefix + "weight"), params.find(prefix + "bias"));
    if (k + 1 < cfg.head_dims.size()) x = relu(x);
  }
  return x;
}

// --- config JSON -------------------------------------------------------------

nlohmann::json encoder_config_to_json(const EncoderConfig& cfg) {
  nlohmann::json stages = nlohmann::json::array();
  for (const StageSpec& st : cfg.stages) {
    stages.push_back({st.num_blocks, st.channels, st.stride});
  }
  return {{"input_shape", cfg.input_shape},
          {"stem_channels", cfg.stem_channels},
          {"stages", stages},
          {"head_dims", cfg.head_dims},
          {"embedding_dim", cfg.embedding_dim}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j, const std::string& context) {
  jsonu::reject_unknown_keys(
      j, {"input_shape", "stem_channels", "stages", "head_dims", "embedding_dim"}, context);
  EncoderConfig cfg;
  cfg.input_shape = jsonu::get_or<Shape>(j, "input_shape", cfg.input_shape, context);
  cfg.stem_channels = jsonu::get_or<int>(j, "stem_channels", cfg.stem_channels, context);
  if (j.contains("stages")) {
    cfg.stages.clear();
    for (const auto& s : j.at("stages")) {
      if (!s.is_array() || s.size() != 3) {
        throw ConfigError(context + ": each stage must be [num_blocks, channels, stride]");
      }
      cfg.stages.push_back({s[0].get<int>(), s[1].get<int>(), s[2].get<int>()});
    }
  }
  cfg.head_dims = jsonu::get_or<std::vector<int>>(j, "head_dims", cfg.head_dims, context);
  cfg.embedding_dim = jsonu::get_or<int>(j, "embedding_dim", cfg.embedding_dim, context);
  cfg.validate();
  return cfg;
}

// --- checkpoints ----------------------------------------------------------------

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  uint64_t offset = 0;
  for (const NamedTensor& nt : params.tensors) {
    tensors.push_back(
        {{"name", nt.name}, {"shape", nt.tensor.shape}, {"offset", offset}});
    offset += nt.tensor.data.size() * sizeof(double);
  }
  const nlohmann::json header = {{"config", encoder_config_to_json(params.config)},
                                 {"seed", params.seed},
                                 {"tensors", tensors}};
  const std::string header_str = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write("CKP1", 4);
  binio::put_u32(os, static_cast<uint32_t>(header_str.size()));
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const NamedTensor& nt : params.tensors) {
    for (double v : nt.tensor.data) binio::put_f64(os, v);
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "CKP1") {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const uint32_t header_len = binio::get_u32(is);
  std::string header_str(header_len, '\0');
  is.read(header_str.data(), header_len);
  if (!is) throw IoError("truncated checkpoint header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint header in " + path.string() + ": " + e.what());
  }
  const std::string context = "checkpoint " + path.string();
  jsonu::reject_unknown_keys(header, {"config", "seed", "tensors"}, context);

  EncoderParams params;
  params.config = encoder_config_from_json(header.at("config"), context);
  params.seed = jsonu::require<uint64_t>(header, "seed", context);

  uint64_t expected_offset = 0;
  for (const auto& t : header.at("tensors")) {
    jsonu::reject_unknown_keys(t, {"name", "shape", "offset"}, context);
    const auto name = jsonu::require<std::string>(t, "name", context);
    const auto shape = jsonu::require<Shape>(t, "shape", context);
    if (jsonu::require<uint64_t>(t, "offset", context) != expected_offset) {
      throw IoError("non-contiguous tensor payload in " + path.string());
    }
    Tensor tensor = Tensor::zeros(shape);
    for (double& v : tensor.data) v = binio::get_f64(is);
    if (!is) throw IoError("truncated checkpoint payload: " + path.string());
    expected_offset += tensor.data.size() * sizeof(double);
    params.tensors.push_back({name, std::move(tensor)});
  }

  // Shapes are pinned by the config; a mismatch means a corrupt file.
  size_t idx = 0;
  bool ok = true;
  for_each_param(params.config, [&](const std::string& name, const Shape& shape, int64_t) {
    if (idx >= params.tensors.size() || params.tensors[idx].name != name ||
        params.tensors[idx].tensor.shape != shape) {
      ok = false;
    }
    ++idx;
  });
  if (!ok || idx != params.tensors.size()) {
    throw IoError("checkpoint tensors do not match config: " + path.string());
  }
  return params;
}

}  // namespace siamprog
