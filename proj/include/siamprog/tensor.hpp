#ifndef SIAMPROG_TENSOR_HPP_
#define SIAMPROG_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "siamprog/common.hpp"

namespace siamprog {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Dense row-major tensor of 64-bit floats. A tensor participates in
// reverse-mode differentiation when it is linked to a Tape (tape != nullptr,
// node >= 0); otherwise it is a constant.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  bool on_tape() const { return tape != nullptr; }
  bool is_scalar() const { return data.size() == 1; }
  double value() const;  // scalar tensors only

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, double v);
  static Tensor scalar(double v);
};

using GradMap = std::map<int, Tensor>;

// Records primitive operations in execution order. Node inputs always
// precede the node, so reverse iteration is a valid backward schedule.
// A tape and its tensors are confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a differentiable leaf (a parameter). The returned tensor
  // carries this tape and a fresh handle.
  Tensor leaf(const Tensor& value);

  // Gradient of a scalar loss w.r.t. every leaf, keyed by leaf handle.
  // Leaves that do not reach the loss get zero gradients.
  GradMap backward(const Tensor& loss) const;

  // Backward hook: accumulate into input gradients given this node's
  // output gradient. `grads` is indexed by node handle.
  using Backprop =
      std::function<void(const std::vector<double>& grad_out, std::vector<std::vector<double>>& grads)>;

  int record(const Shape& out_shape, std::vector<int> inputs, Backprop fn);

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<int> inputs;
    bool is_leaf = false;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
};

// --- Primitive operations -------------------------------------------------
//
// Every op validates shapes, computes the forward value, and raises
// NumericError if the result contains NaN/Inf. If any input is on a tape,
// the output is recorded there; mixing tensors from different tapes is an
// error.

// 3-D cross-correlation. input [C_in,D,H,W], kernels [C_out,C_in,kd,kh,kw].
// Output extent: floor((D + 2*padding - kd)/stride) + 1, same for H, W.
Tensor conv3d(const Tensor& input, const Tensor& kernels, int stride, int padding);

// output[i] = bias[i] + sum_j weights[i,j] * input[j]
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

// Elementwise max(x, 0). Gradient at exactly 0 is 0.
Tensor relu(const Tensor& x);

// Same-shape elementwise sum / difference.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);

// x * c and x + c with a compile-time constant c (not differentiated w.r.t. c).
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

// Sum of all elements, as a scalar tensor.
Tensor sum(const Tensor& x);

// [C,D,H,W] -> [C], mean over the spatial extents per channel.
Tensor global_avg_pool(const Tensor& x);

// sqrt(sum_i (a_i - b_i)^2). Gradient is 0 when the distance is 0.
Tensor euclidean_distance(const Tensor& a, const Tensor& b);

}  // namespace siamprog

#endif  // SIAMPROG_TENSOR_HPP_
