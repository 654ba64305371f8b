#ifndef SIAMPROG_LOSS_HPP_
#define SIAMPROG_LOSS_HPP_

#include "siamprog/common.hpp"
#include "siamprog/tensor.hpp"

namespace siamprog {

// Ordinal progression level rho in {0.1, ..., 1.0}, stored as integer
// tenths so arithmetic on levels is exact. 1.0 marks the conversion scan.
class ProgressionLevel {
 public:
  static ProgressionLevel from_tenths(int tenths);
  // Accepts values within 1e-9 of a multiple of 0.1.
  static ProgressionLevel from_value(double rho);

  int tenths() const { return tenths_; }
  double value() const { return tenths_ / 10.0; }
  bool is_conversion() const { return tenths_ == 10; }

  auto operator<=>(const ProgressionLevel&) const = default;

 private:
  explicit ProgressionLevel(int tenths) : tenths_(tenths) {}
  int tenths_ = 10;
};

// Weighting coefficient alpha = 1.9 - rho, in [1.0, 1.8]. Computed in
// exact tenths, so alpha_of(0.6) is 1.3 and not 1.2999...
class Alpha {
 public:
  double value() const { return tenths_ / 10.0; }
  int tenths() const { return tenths_; }

  auto operator<=>(const Alpha&) const = default;

 private:
  friend Alpha alpha_of(ProgressionLevel rho);
  explicit Alpha(int tenths) : tenths_(tenths) {}
  int tenths_ = 10;
};

// rho = 1.0 is rejected: conversion scans serve as anchors and positives,
// never as weighted negatives.
Alpha alpha_of(ProgressionLevel rho);

// Triplet hinge max(d_ap - d_an + margin, 0). Differentiable through the
// tensor module; the gradient in the clamped region is 0.
Tensor unweighted_triplet_loss(const Tensor& d_ap, const Tensor& d_an, double margin = 1.0);

// Weighted variant max(d_ap - alpha * d_an + margin, 0). With alpha = 1.0
// this equals the unweighted loss bit for bit.
Tensor weighted_triplet_loss(const Tensor& d_ap, const Tensor& d_an, Alpha alpha,
                             double margin = 1.0);

}  // namespace siamprog

#endif  // SIAMPROG_LOSS_HPP_
