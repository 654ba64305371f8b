#ifndef SIAMPROG_TESTS_GRADCHECK_HPP_
#define SIAMPROG_TESTS_GRADCHECK_HPP_

// Central finite-difference gradient checking shared by the unit and
// acceptance suites. The graph under test is evaluated twice per input
// element with perturbed constant tensors; the analytic gradients come from
// one tape backward pass.

#include <cmath>
#include <functional>
#include <vector>

#include "siamprog/tensor.hpp"

namespace gradcheck {

// Builds a scalar from tensors that may or may not sit on a tape.
using GraphFn = std::function<siamprog::Tensor(const std::vector<siamprog::Tensor>&)>;

struct Result {
  double worst_violation = 0.0;  // max over elements of |a-fd| - tol(a,fd); <= 0 means pass
  double max_abs_diff = 0.0;
  int elements = 0;
  bool pass = true;
};

inline Result check(const GraphFn& graph, const std::vector<siamprog::Tensor>& inputs,
                    double h = 1e-5, double rel_tol = 1e-4, double abs_tol = 1e-7) {
  using siamprog::Tape;
  using siamprog::Tensor;

  Tape tape;
  std::vector<Tensor> bound;
  bound.reserve(inputs.size());
  for (const Tensor& t : inputs) bound.push_back(tape.leaf(t));
  const Tensor loss = graph(bound);
  const siamprog::GradMap grads = tape.backward(loss);

  Result res;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& analytic = grads.at(bound[i].node);
    for (size_t k = 0; k < inputs[i].data.size(); ++k) {
      std::vector<Tensor> plus = inputs;
      std::vector<Tensor> minus = inputs;
      plus[i].data[k] += h;
      minus[i].data[k] -= h;
      const double fd = (graph(plus).value() - graph(minus).value()) / (2.0 * h);
      const double a = analytic.data[k];
      const double diff = std::fabs(a - fd);
      const double tol = std::max(rel_tol * std::max(std::fabs(a), std::fabs(fd)), abs_tol);
      res.elements += 1;
      res.max_abs_diff = std::max(res.max_abs_diff, diff);
      res.worst_violation = std::max(res.worst_violation, diff - tol);
      if (diff > tol) res.pass = false;
    }
  }
  return res;
}

}  // namespace gradcheck

#endif  // SIAMPROG_TESTS_GRADCHECK_HPP_
