#include "siamprog/loss.hpp"

#include <cmath>
#include <string>

namespace siamprog {

ProgressionLevel ProgressionLevel::from_tenths(int tenths) {
  if (tenths < 1 || tenths > 10) {
    throw ValidationError("progression level must be in [0.1, 1.0], got " +
                          std::to_string(tenths / 10.0));
  }
  return ProgressionLevel(tenths);
}

ProgressionLevel ProgressionLevel::from_value(double rho) {
  const double scaled = rho * 10.0;
  const int tenths = static_cast<int>(std::lround(scaled));
  if (std::fabs(scaled - tenths) > 1e-9 * 10.0) {
    throw ValidationError("progression level must be a multiple of 0.1, got " +
                          std::to_string(rho));
  }
  return from_tenths(tenths);
}

Alpha alpha_of(ProgressionLevel rho) {
  if (rho.is_conversion()) {
    throw ValidationError("alpha is undefined for rho = 1.0 (conversion scans are not negatives)");
  }
  return Alpha(19 - rho.tenths());
}

namespace {

void check_loss_inputs(const Tensor& d_ap, const Tensor& d_an, double margin) {
  if (!d_ap.is_scalar() || !d_an.is_scalar()) {
    throw ShapeError("triplet loss distances must be scalar tensors");
  }
  if (d_ap.data[0] < 0.0 || d_an.data[0] < 0.0) {
    throw ValidationError("triplet loss distances must be non-negative");
  }
  if (margin < 0.0 || !std::isfinite(margin)) {
    throw ValidationError("triplet loss margin must be non-negative and finite");
  }
}

}  // namespace

Tensor unweighted_triplet_loss(const Tensor& d_ap, const Tensor& d_an, double margin) {
  check_loss_inputs(d_ap, d_an, margin);
  return relu(add_scalar(sub(d_ap, d_an), margin));
}

Tensor weighted_triplet_loss(const Tensor& d_ap, const Tensor& d_an, Alpha alpha, double margin) {
  check_loss_inputs(d_ap, d_an, margin);
  return relu(add_scalar(sub(d_ap, scale(d_an, alpha.value())), margin));
}

}  // namespace siamprog
