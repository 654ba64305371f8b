#ifndef SIAMPROG_VOLUME_HPP_
#define SIAMPROG_VOLUME_HPP_

#include <filesystem>
#include <map>
#include <string>

#include "siamprog/tensor.hpp"

namespace siamprog {

// Volume container: 32-byte header (magic "VOL1", C,D,H,W as u32 LE, 12
// reserved zero bytes), then raw little-endian f32 voxels in row-major
// [C,D,H,W] order.
void write_volume(const Tensor& volume, const std::filesystem::path& path);
Tensor read_volume(const std::filesystem::path& path);

// Read-through cache of volumes keyed by scan_ref, resolved against a root
// directory. Loaded tensors are immutable; concurrent reads of already
// cached entries are safe only after preload.
class VolumeCache {
 public:
  explicit VolumeCache(std::filesystem::path root) : root_(std::move(root)) {}

  const Tensor& get(const std::string& scan_ref);
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, Tensor> cache_;
};

}  // namespace siamprog

#endif  // SIAMPROG_VOLUME_HPP_
