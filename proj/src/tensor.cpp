#include "siamprog/tensor.hpp"

#include <cmath>
#include <sstream>

namespace siamprog {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  for (int e : shape) {
    if (e <= 0) throw ShapeError("tensor extent must be positive, got shape " + shape_str(shape));
  }
  if (numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("shape " + shape_str(shape) + " does not match data length " +
                     std::to_string(data.size()));
  }
}

double Tensor::value() const {
  if (!is_scalar()) throw ShapeError("value() requires a scalar tensor, got " + shape_str(shape));
  return data[0];
}

Tensor Tensor::zeros(const Shape& s) { return Tensor(s, std::vector<double>(numel(s), 0.0)); }

Tensor Tensor::full(const Shape& s, double v) { return Tensor(s, std::vector<double>(numel(s), v)); }

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

// --- Tape -------------------------------------------------------------------

Tensor Tape::leaf(const Tensor& value) {
  Tensor out(value.shape, value.data);
  out.tape = this;
  Node node;
  node.shape = value.shape;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  out.node = static_cast<int>(nodes_.size()) - 1;
  return out;
}

int Tape::record(const Shape& out_shape, std::vector<int> inputs, Backprop fn) {
  Node node;
  node.shape = out_shape;
  node.inputs = std::move(inputs);
  node.backprop = std::move(fn);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

GradMap Tape::backward(const Tensor& loss) const {
  if (loss.tape != this || loss.node < 0 || loss.node >= static_cast<int>(nodes_.size())) {
    throw Error("backward: loss tensor is not on this tape");
  }
  if (!loss.is_scalar()) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape));
  }

  std::vector<std::vector<double>> grads(nodes_.size());
  std::vector<char> reached(nodes_.size(), 0);
  for (size_t i = 0; i < nodes_.size(); ++i) grads[i].assign(numel(nodes_[i].shape), 0.0);
  grads[loss.node][0] = 1.0;
  reached[loss.node] = 1;

  // Nodes only reference earlier nodes, so one reverse sweep visits each
  // node exactly once with its output gradient fully accumulated.
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    if (!reached[i] || nodes_[i].is_leaf) continue;
    nodes_[i].backprop(grads[i], grads);
    for (int in : nodes_[i].inputs) reached[in] = 1;
  }

  GradMap out;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf) {
      out.emplace(static_cast<int>(i), Tensor(nodes_[i].shape, std::move(grads[i])));
    }
  }
  return out;
}

// --- Op helpers ---------------------------------------------------------------

namespace {

void ensure_finite(const std::vector<double>& data, const char* op) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
}

// The single tape shared by the on-tape inputs, or nullptr when all inputs
// are constants.
Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->on_tape()) continue;
    if (tape != nullptr && tape != t->tape) {
      throw Error("operation mixes tensors from different tapes");
    }
    tape = t->tape;
  }
  return tape;
}

}  // namespace

// --- conv3d -------------------------------------------------------------------

Tensor conv3d(const Tensor& input, const Tensor& kernels, int stride, int padding) {
  if (input.shape.size() != 4) {
    throw ShapeError("conv3d: input must be [C,D,H,W], got " + shape_str(input.shape));
  }
  if (kernels.shape.size() != 5) {
    throw ShapeError("conv3d: kernels must be [C_out,C_in,kd,kh,kw], got " + shape_str(kernels.shape));
  }
  if (stride < 1) throw ShapeError("conv3d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv3d: padding must be >= 0");

  const int c_in = input.shape[0], d = input.shape[1], h = input.shape[2], w = input.shape[3];
  const int c_out = kernels.shape[0], kc = kernels.shape[1];
  const int kd = kernels.shape[2], kh = kernels.shape[3], kw = kernels.shape[4];
  if (kc != c_in) {
    throw ShapeError("conv3d: kernel C_in " + std::to_string(kc) + " does not match input C_in " +
                     std::to_string(c_in));
  }
  if (kd > d + 2 * padding || kh > h + 2 * padding || kw > w + 2 * padding) {
    throw ShapeError("conv3d: kernel larger than padded input");
  }

  const int od = (d + 2 * padding - kd) / stride + 1;
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (w + 2 * padding - kw) / stride + 1;

  const int64_t in_cs = static_cast<int64_t>(d) * h * w, in_ds = static_cast<int64_t>(h) * w;
  const int64_t k_os = static_cast<int64_t>(c_in) * kd * kh * kw;
  const int64_t k_cs = static_cast<int64_t>(kd) * kh * kw, k_ds = static_cast<int64_t>(kh) * kw;
  const int64_t out_cs = static_cast<int64_t>(od) * oh * ow, out_ds = static_cast<int64_t>(oh) * ow;

  std::vector<double> out(static_cast<size_t>(c_out) * od * oh * ow, 0.0);
  const double* in = input.data.data();
  const double* kn = kernels.data.data();

  for (int co = 0; co < c_out; ++co) {
    for (int z = 0; z < od; ++z) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          double acc = 0.0;
          for (int ci = 0; ci < c_in; ++ci) {
            for (int fz = 0; fz < kd; ++fz) {
              const int iz = z * stride - padding + fz;
              if (iz < 0 || iz >= d) continue;
              for (int fy = 0; fy < kh; ++fy) {
                const int iy = y * stride - padding + fy;
                if (iy < 0 || iy >= h) continue;
                const double* in_row = in + ci * in_cs + iz * in_ds + iy * w;
                const double* k_row = kn + co * k_os + ci * k_cs + fz * k_ds + fy * kw;
                for (int fx = 0; fx < kw; ++fx) {
                  const int ix = x * stride - padding + fx;
                  if (ix < 0 || ix >= w) continue;
                  acc += in_row[ix] * k_row[fx];
                }
              }
            }
          }
          out[co * out_cs + z * out_ds + y * ow + x] = acc;
        }
      }
    }
  }
  ensure_finite(out, "conv3d");

  Tensor result({c_out, od, oh, ow}, std::move(out));
  Tape* tape = common_tape({&input, &kernels});
  if (tape != nullptr) {
    const bool track_in = input.on_tape(), track_k = kernels.on_tape();
    std::vector<int> ids;
    if (track_in) ids.push_back(input.node);
    if (track_k) ids.push_back(kernels.node);
    // Saved for backward: copies of both operands.
    auto in_data = input.data;
    auto k_data = kernels.data;
    const int in_node = input.node, k_node = kernels.node;
    const Shape in_shape = input.shape, k_shape = kernels.shape;
    result.tape = tape;
    result.node = tape->record(
        result.shape, std::move(ids),
        [=, in_data = std::move(in_data), k_data = std::move(k_data)](
            const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
          double* gi = track_in ? grads[in_node].data() : nullptr;
          double* gk = track_k ? grads[k_node].data() : nullptr;
          for (int co = 0; co < c_out; ++co) {
            for (int z = 0; z < od; ++z) {
              for (int y = 0; y < oh; ++y) {
                for (int x = 0; x < ow; ++x) {
                  const double go = g[co * out_cs + z * out_ds + y * ow + x];
                  if (go == 0.0) continue;
                  for (int ci = 0; ci < c_in; ++ci) {
                    for (int fz = 0; fz < kd; ++fz) {
                      const int iz = z * stride - padding + fz;
                      if (iz < 0 || iz >= d) continue;
                      for (int fy = 0; fy < kh; ++fy) {
                        const int iy = y * stride - padding + fy;
                        if (iy < 0 || iy >= h) continue;
                        const int64_t in_base = ci * in_cs + iz * in_ds + iy * w;
                        const int64_t k_base = co * k_os + ci * k_cs + fz * k_ds + fy * kw;
                        for (int fx = 0; fx < kw; ++fx) {
                          const int ix = x * stride - padding + fx;
                          if (ix < 0 || ix >= w) continue;
                          if (gi != nullptr) gi[in_base + ix] += go * k_data[k_base + fx];
                          if (gk != nullptr) gk[k_base + fx] += go * in_data[in_base + ix];
                        }
                      }
                    }
                  }
                }
              }
            }
          }
        });
  }
  return result;
}

// --- dense --------------------------------------------------------------------

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.shape.size() != 1 || weights.shape.size() != 2 || bias.shape.size() != 1) {
    throw ShapeError("dense: expected input [n], weights [m,n], bias [m]");
  }
  const int n = input.shape[0], m = weights.shape[0];
  if (weights.shape[1] != n) {
    throw ShapeError("dense: weights " + shape_str(weights.shape) + " incompatible with input " +
                     shape_str(input.shape));
  }
  if (bias.shape[0] != m) {
    throw ShapeError("dense: bias " + shape_str(bias.shape) + " incompatible with weights " +
                     shape_str(weights.shape));
  }

  std::vector<double> out(m, 0.0);
  for (int i = 0; i < m; ++i) {
    double acc = bias.data[i];
    const double* row = weights.data.data() + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) acc += row[j] * input.data[j];
    out[i] = acc;
  }
  ensure_finite(out, "dense");

  Tensor result({m}, std::move(out));
  Tape* tape = common_tape({&input, &weights, &bias});
  if (tape != nullptr) {
    const bool track_in = input.on_tape(), track_w = weights.on_tape(), track_b = bias.on_tape();
    std::vector<int> ids;
    if (track_in) ids.push_back(input.node);
    if (track_w) ids.push_back(weights.node);
    if (track_b) ids.push_back(bias.node);
    auto in_data = input.data;
    auto w_data = weights.data;
    const int in_node = input.node, w_node = weights.node, b_node = bias.node;
    result.tape = tape;
    result.node = tape->record(
        result.shape, std::move(ids),
        [=, in_data = std::move(in_data), w_data = std::move(w_data)](
            const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
          for (int i = 0; i < m; ++i) {
            const double go = g[i];
            if (go == 0.0) continue;
            const double* row = w_data.data() + static_cast<int64_t>(i) * n;
            if (track_in) {
              double* gi = grads[in_node].data();
              for (int j = 0; j < n; ++j) gi[j] += go * row[j];
            }
            if (track_w) {
              double* gw = grads[w_node].data() + static_cast<int64_t>(i) * n;
              for (int j = 0; j < n; ++j) gw[j] += go * in_data[j];
            }
            if (track_b) grads[b_node][i] += go;
          }
        });
  }
  return result;
}

// --- elementwise ----------------------------------------------------------------

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  ensure_finite(out, "relu");

  Tensor result(x.shape, std::move(out));
  if (x.on_tape()) {
    auto x_data = x.data;
    const int xn = x.node;
    result.tape = x.tape;
    result.node = x.tape->record(
        result.shape, {xn},
        [xn, x_data = std::move(x_data)](const std::vector<double>& g,
                                         std::vector<std::vector<double>>& grads) {
          double* gi = grads[xn].data();
          for (size_t i = 0; i < g.size(); ++i) {
            if (x_data[i] > 0.0) gi[i] += g[i];
          }
        });
  }
  return result;
}

namespace {

Tensor binary_elementwise(const Tensor& a, const Tensor& b, bool subtract, const char* op) {
  if (a.shape != b.shape) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  }
  std::vector<double> out(a.data.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = subtract ? a.data[i] - b.data[i] : a.data[i] + b.data[i];
  }
  ensure_finite(out, op);

  Tensor result(a.shape, std::move(out));
  Tape* tape = common_tape({&a, &b});
  if (tape != nullptr) {
    const bool track_a = a.on_tape(), track_b = b.on_tape();
    std::vector<int> ids;
    if (track_a) ids.push_back(a.node);
    if (track_b) ids.push_back(b.node);
    const int an = a.node, bn = b.node;
    const double bsign = subtract ? -1.0 : 1.0;
    result.tape = tape;
    result.node =
        tape->record(result.shape, std::move(ids),
                     [=](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                       if (track_a) {
                         double* ga = grads[an].data();
                         for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       }
                       if (track_b) {
                         double* gb = grads[bn].data();
                         for (size_t i = 0; i < g.size(); ++i) gb[i] += bsign * g[i];
                       }
                     });
  }
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, false, "add"); }

Tensor sub(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, true, "sub"); }

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data[i] * c;
  ensure_finite(out, "scale");

  Tensor result(x.shape, std::move(out));
  if (x.on_tape()) {
    const int xn = x.node;
    result.tape = x.tape;
    result.node = x.tape->record(
        result.shape, {xn},
        [xn, c](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
          double* gi = grads[xn].data();
          for (size_t i = 0; i < g.size(); ++i) gi[i] += c * g[i];
        });
  }
  return result;
}

Tensor add_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data[i] + c;
  ensure_finite(out, "add_scalar");

  Tensor result(x.shape, std::move(out));
  if (x.on_tape()) {
    const int xn = x.node;
    result.tape = x.tape;
    result.node =
        x.tape->record(result.shape, {xn},
                       [xn](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                         double* gi = grads[xn].data();
                         for (size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                       });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data) acc += v;
  std::vector<double> out{acc};
  ensure_finite(out, "sum");

  Tensor result({1}, std::move(out));
  if (x.on_tape()) {
    const int xn = x.node;
    const size_t n = x.data.size();
    result.tape = x.tape;
    result.node = x.tape->record(
        result.shape, {xn},
        [xn, n](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
          double* gi = grads[xn].data();
          for (size_t i = 0; i < n; ++i) gi[i] += g[0];
        });
  }
  return result;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.shape.size() != 4) {
    throw ShapeError("global_avg_pool: input must be [C,D,H,W], got " + shape_str(x.shape));
  }
  const int c = x.shape[0];
  const int64_t spatial = numel(x.shape) / c;
  std::vector<double> out(c, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    const double* base = x.data.data() + ch * spatial;
    for (int64_t i = 0; i < spatial; ++i) acc += base[i];
    out[ch] = acc / static_cast<double>(spatial);
  }
  ensure_finite(out, "global_avg_pool");

  Tensor result({c}, std::move(out));
  if (x.on_tape()) {
    const int xn = x.node;
    result.tape = x.tape;
    result.node = x.tape->record(
        result.shape, {xn},
        [xn, c, spatial](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
          double* gi = grads[xn].data();
          const double inv = 1.0 / static_cast<double>(spatial);
          for (int ch = 0; ch < c; ++ch) {
            const double go = g[ch] * inv;
            double* base = gi + ch * spatial;
            for (int64_t i = 0; i < spatial; ++i) base[i] += go;
          }
        });
  }
  return result;
}

Tensor euclidean_distance(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw ShapeError("euclidean_distance: shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  }
  double sq = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double diff = a.data[i] - b.data[i];
    sq += diff * diff;
  }
  const double dist = std::sqrt(sq);
  std::vector<double> out{dist};
  ensure_finite(out, "euclidean_distance");

  Tensor result({1}, std::move(out));
  Tape* tape = common_tape({&a, &b});
  if (tape != nullptr) {
    const bool track_a = a.on_tape(), track_b = b.on_tape();
    std::vector<int> ids;
    if (track_a) ids.push_back(a.node);
    if (track_b) ids.push_back(b.node);
    auto a_data = a.data;
    auto b_data = b.data;
    const int an = a.node, bn = b.node;
    result.tape = tape;
    result.node = tape->record(
        result.shape, std::move(ids),
        [=, a_data = std::move(a_data), b_data = std::move(b_data)](
            const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
          if (dist == 0.0) return;  // subgradient 0 at coincident points
          const double go = g[0] / dist;
          for (size_t i = 0; i < a_data.size(); ++i) {
            const double diff = (a_data[i] - b_data[i]) * go;
            if (track_a) grads[an][i] += diff;
            if (track_b) grads[bn][i] -= diff;
          }
        });
  }
  return result;
}

}  // namespace siamprog
