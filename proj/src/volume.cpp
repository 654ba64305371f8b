#include "siamprog/volume.hpp"

#include <cmath>
#include <fstream>

#include "binio.hpp"

namespace siamprog {

void write_volume(const Tensor& volume, const std::filesystem::path& path) {
  if (volume.shape.size() != 4) {
    throw ShapeError("volume must be [C,D,H,W], got " + shape_str(volume.shape));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open volume for writing: " + path.string());
  os.write("VOL1", 4);
  for (int e : volume.shape) binio::put_u32(os, static_cast<uint32_t>(e));
  const char reserved[12] = {};
  os.write(reserved, sizeof reserved);
  for (double v : volume.data) binio::put_f32(os, static_cast<float>(v));
  if (!os) throw IoError("failed writing volume: " + path.string());
}

Tensor read_volume(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open volume: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "VOL1") {
    throw IoError("not a volume file: " + path.string());
  }
  Shape shape(4);
  for (int& e : shape) e = static_cast<int>(binio::get_u32(is));
  char reserved[12];
  is.read(reserved, sizeof reserved);
  if (!is) throw IoError("truncated volume header: " + path.string());

  Tensor volume = Tensor::zeros(shape);
  for (double& v : volume.data) {
    const float f = binio::get_f32(is);
    if (!std::isfinite(f)) throw NumericError("non-finite voxel in " + path.string());
    v = static_cast<double>(f);
  }
  if (!is) throw IoError("truncated volume payload: " + path.string());
  return volume;
}

const Tensor& VolumeCache::get(const std::string& scan_ref) {
  auto it = cache_.find(scan_ref);
  if (it == cache_.end()) {
    it = cache_.emplace(scan_ref, read_volume(root_ / scan_ref)).first;
  }
  return it->second;
}

}  // namespace siamprog
