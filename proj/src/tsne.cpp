#include "siamprog/tsne.hpp"

#include <cfloat>
#include <cmath>
#include <string>

#include "siamprog/rng.hpp"

namespace siamprog {

void TsneConfig::validate(size_t n_points) const {
  if (n_points < 4) throw ValidationError("t-SNE needs at least 4 points");
  if (!(perplexity >= 1.0)) throw ValidationError("t-SNE perplexity must be >= 1");
  if (!(perplexity < (static_cast<double>(n_points) - 1.0) / 3.0)) {
    throw ValidationError("infeasible perplexity " + std::to_string(perplexity) + " for " +
                          std::to_string(n_points) + " points (need perplexity < (n-1)/3)");
  }
  if (iterations < 1) throw ValidationError("t-SNE iterations must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("t-SNE learning rate must be > 0");
  if (!(early_exaggeration >= 1.0)) throw ValidationError("t-SNE exaggeration must be >= 1");
}

double perplexity_of(const std::vector<double>& p_row) {
  double total = 0.0;
  for (double p : p_row) {
    if (p < 0.0 || !std::isfinite(p)) {
      throw ValidationError("perplexity_of: entries must be non-negative and finite");
    }
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw ValidationError("perplexity_of: row must sum to 1, got " + std::to_string(total));
  }
  double h_bits = 0.0;
  for (double p : p_row) {
    if (p > 0.0) h_bits -= p * std::log2(p);
  }
  return std::pow(2.0, h_bits);
}

namespace {

// Conditional row p_{j|i} for one bandwidth; returns the row perplexity
// exp(H). `row` holds the unnormalized kernel on entry to the caller.
double row_perplexity(const std::vector<double>& sq_dist, size_t i, double beta,
                      std::vector<double>& row) {
  const size_t n = row.size();
  double sum = 0.0;
  for (size_t j = 0; j < n; ++j) {
    row[j] = j == i ? 0.0 : std::exp(-beta * sq_dist[i * n + j]);
    sum += row[j];
  }
  if (sum < DBL_MIN) {
    // kernel collapsed below double range; the limit is one-hot on the
    // nearest neighbor, with perplexity 1
    size_t nearest = i == 0 ? 1 : 0;
    for (size_t j = 0; j < n; ++j) {
      row[j] = 0.0;
      if (j != i && sq_dist[i * n + j] < sq_dist[i * n + nearest]) nearest = j;
    }
    row[nearest] = 1.0;
    return 1.0;
  }
  double h_nats = 0.0;
  for (size_t j = 0; j < n; ++j) {
    if (j != i) h_nats += beta * sq_dist[i * n + j] * row[j];
  }
  h_nats = h_nats / sum + std::log(sum);
  for (size_t j = 0; j < n; ++j) row[j] /= sum;
  return std::exp(h_nats);
}

// Bandwidth search: bracket by doubling/halving, then bisect until the row
// perplexity matches the target within 1e-5.
void fit_row(const std::vector<double>& sq_dist, size_t i, double target,
             std::vector<double>& row) {
  constexpr double kTol = 1e-5;
  double beta = 1.0;
  double lo = 0.0, hi = DBL_MAX;
  double perp = row_perplexity(sq_dist, i, beta, row);

  // Larger beta -> sharper kernel -> lower perplexity.
  for (int iter = 0; iter < 100 && std::fabs(perp - target) > kTol; ++iter) {
    if (perp > target) {
      lo = beta;
      beta = hi == DBL_MAX ? beta * 2.0 : (beta + hi) / 2.0;
    } else {
      hi = beta;
      beta = lo == 0.0 ? beta / 2.0 : (beta + lo) / 2.0;
    }
    perp = row_perplexity(sq_dist, i, beta, row);
  }
  if (std::fabs(perp - target) > kTol) {
    throw NumericError("t-SNE perplexity bisection failed for point " + std::to_string(i) +
                       " (got " + std::to_string(perp) + ", want " + std::to_string(target) + ")");
  }
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q_unnorm,
                     double sum_q, size_t n) {
  double kl = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i == j || p[i * n + j] <= 0.0) continue;
      kl += p[i * n + j] * std::log(p[i * n + j] * sum_q / q_unnorm[i * n + j]);
    }
  }
  return kl;
}

}  // namespace

TsneAffinities tsne_affinities(const std::vector<std::vector<double>>& points,
                               double perplexity) {
  const size_t n = points.size();
  if (n < 2) throw ValidationError("t-SNE affinities need at least 2 points");
  const size_t dims = points[0].size();
  for (const std::vector<double>& p : points) {
    if (p.size() != dims) throw ValidationError("t-SNE input points must share one dimension");
  }

  std::vector<double> sq_dist(n * n, 0.0);
  bool any_distinct = false;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      double d2 = 0.0;
      for (size_t k = 0; k < dims; ++k) {
        const double diff = points[i][k] - points[j][k];
        d2 += diff * diff;
      }
      sq_dist[i * n + j] = sq_dist[j * n + i] = d2;
      if (d2 > 0.0) any_distinct = true;
    }
  }
  if (!any_distinct) throw ValidationError("t-SNE input is degenerate: all points identical");

  TsneAffinities out;
  out.n = n;
  out.conditional.assign(n * n, 0.0);
  std::vector<double> row(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    fit_row(sq_dist, i, perplexity, row);
    for (size_t j = 0; j < n; ++j) out.conditional[i * n + j] = row[j];
  }

  out.symmetric.assign(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double sym = (out.conditional[i * n + j] + out.conditional[j * n + i]) /
                         (2.0 * static_cast<double>(n));
      out.symmetric[i * n + j] = out.symmetric[j * n + i] = sym;
    }
  }
  return out;
}

TsneResult project(const std::vector<std::vector<double>>& points, const TsneConfig& cfg) {
  const size_t n = points.size();
  cfg.validate(n);
  const std::vector<double> p = tsne_affinities(points, cfg.perplexity).symmetric;

  TsneResult result;
  result.points.assign(n, {0.0, 0.0});
  Rng rng(cfg.seed);
  for (auto& y : result.points) {
    y[0] = rng.normal() * 1e-4;
    y[1] = rng.normal() * 1e-4;
  }

  const int stop_lying = std::min(cfg.exaggeration_iters, cfg.iterations);
  std::vector<std::array<double, 2>> velocity(n, {0.0, 0.0});
  std::vector<double> q_unnorm(n * n, 0.0);
  std::vector<std::array<double, 2>> grad(n);

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    const double p_factor = iter <= stop_lying ? cfg.early_exaggeration : 1.0;
    const double momentum = iter <= cfg.exaggeration_iters ? 0.5 : 0.8;

    double sum_q = 0.0;
    for (size_t i = 0; i < n; ++i) {
      q_unnorm[i * n + i] = 0.0;
      for (size_t j = i + 1; j < n; ++j) {
        const double dx = result.points[i][0] - result.points[j][0];
        const double dy = result.points[i][1] - result.points[j][1];
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        q_unnorm[i * n + j] = q_unnorm[j * n + i] = q;
        sum_q += 2.0 * q;
      }
    }

    for (size_t i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double q = q_unnorm[i * n + j];
        const double mult = (p_factor * p[i * n + j] - q / sum_q) * q;
        gx += mult * (result.points[i][0] - result.points[j][0]);
        gy += mult * (result.points[i][1] - result.points[j][1]);
      }
      grad[i] = {4.0 * gx, 4.0 * gy};
    }

    double mean_x = 0.0, mean_y = 0.0;
    for (size_t i = 0; i < n; ++i) {
      velocity[i][0] = momentum * velocity[i][0] - cfg.learning_rate * grad[i][0];
      velocity[i][1] = momentum * velocity[i][1] - cfg.learning_rate * grad[i][1];
      result.points[i][0] += velocity[i][0];
      result.points[i][1] += velocity[i][1];
      mean_x += result.points[i][0];
      mean_y += result.points[i][1];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);
    for (auto& y : result.points) {
      y[0] -= mean_x;
      y[1] -= mean_y;
    }

    if (iter % 50 == 0 || iter == cfg.iterations) {
      // Q from the just-updated map, so the trace reflects the state that
      // will be returned at the final iteration.
      double sum_q_now = 0.0;
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
          const double dx = result.points[i][0] - result.points[j][0];
          const double dy = result.points[i][1] - result.points[j][1];
          const double q = 1.0 / (1.0 + dx * dx + dy * dy);
          q_unnorm[i * n + j] = q_unnorm[j * n + i] = q;
          sum_q_now += 2.0 * q;
        }
      }
      if (result.kl_trace.empty() || result.kl_trace.back().first != iter) {
        result.kl_trace.emplace_back(iter, kl_divergence(p, q_unnorm, sum_q_now, n));
      }
    }
  }
  return result;
}

}  // namespace siamprog
