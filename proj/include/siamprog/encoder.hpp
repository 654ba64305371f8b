#ifndef SIAMPROG_ENCODER_HPP_
#define SIAMPROG_ENCODER_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "siamprog/tensor.hpp"

namespace siamprog {

struct StageSpec {
  int num_blocks = 1;
  int channels = 8;
  int stride = 1;  // applied by the first block of the stage

  bool operator==(const StageSpec&) const = default;
};

// Residual 3-D encoder: 3x3x3 conv stem, residual stages (conv-relu-conv
// plus identity or 1x1x1-projected shortcut, then relu), global average
// pooling, and a dense head whose last layer is the embedding (no
// activation on it).
struct EncoderConfig {
  Shape input_shape{1, 16, 16, 16};  // [C,D,H,W]
  int stem_channels = 8;
  std::vector<StageSpec> stages{{2, 8, 1}, {2, 16, 2}, {2, 32, 2}, {2, 64, 2}};
  std::vector<int> head_dims{64, 32, 8};
  int embedding_dim = 8;

  // Throws ConfigError when shapes are inconsistent, a stride is outside
  // {1,2}, head_dims is empty, or its last entry differs from embedding_dim.
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// All learned weights of one encoder, in construction order (stem, stages,
// head). Tensor shapes are exactly determined by the config.
struct EncoderParams {
  EncoderConfig config;
  uint64_t seed = 0;
  std::vector<NamedTensor> tensors;

  const Tensor& find(std::string_view name) const;
  Tensor& find(std::string_view name);
};

// Deterministic function of (config, seed): kernels and dense weights from
// a fan-in-scaled uniform distribution, biases zero.
EncoderParams init_params(const EncoderConfig& config, uint64_t seed);

// Copy of `params` whose tensors are differentiable leaves on `tape`.
EncoderParams bind(const EncoderParams& params, Tape& tape);

// Forward pass producing the embedding ([embedding_dim]). Pure function of
// (params, volume); safe to call concurrently on shared read-only params.
Tensor embed(const EncoderParams& params, const Tensor& volume);

// Checkpoint container: magic "CKP1", u32 header length, JSON header
// (config, seed, tensor name -> shape/offset), then raw little-endian f64
// payload. Round-trips bit-exactly.
void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace siamprog

#endif  // SIAMPROG_ENCODER_HPP_
