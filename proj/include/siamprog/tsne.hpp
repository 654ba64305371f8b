#ifndef SIAMPROG_TSNE_HPP_
#define SIAMPROG_TSNE_HPP_

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "siamprog/common.hpp"

namespace siamprog {

struct TsneConfig {
  double perplexity = 32.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;  // also the momentum switch point
  uint64_t seed = 0;

  void validate(size_t n_points) const;  // enforces perplexity < (n-1)/3
};

struct TsneResult {
  std::vector<std::array<double, 2>> points;
  // KL(P || Q) against the true (unexaggerated) P, every 50 iterations.
  std::vector<std::pair<int, double>> kl_trace;
};

// Input-space affinities, exposed so the bisection and symmetrization
// contracts can be checked directly. Both matrices are n x n, row-major,
// with zero diagonals; every conditional row sums to 1 and its perplexity
// matches the target within 1e-5; the symmetric matrix has total mass 1.
struct TsneAffinities {
  size_t n = 0;
  std::vector<double> conditional;
  std::vector<double> symmetric;
};

TsneAffinities tsne_affinities(const std::vector<std::vector<double>>& points, double perplexity);

// Exact O(n^2) t-SNE. Per-point Gaussian bandwidths are bisected until the
// row perplexity matches cfg.perplexity within 1e-5 (NumericError
// otherwise); P is symmetrized to total mass 1; the map is optimized by
// gradient descent with momentum 0.5, switching to 0.8 after the
// exaggeration phase. Deterministic given (points, cfg).
TsneResult project(const std::vector<std::vector<double>>& points, const TsneConfig& cfg);

// 2^H(p) with H in bits. Rejects rows that are not probability
// distributions.
double perplexity_of(const std::vector<double>& p_row);

}  // namespace siamprog

#endif  // SIAMPROG_TSNE_HPP_
