#pragma once

#include <vector>

#include "cmask/mat.hpp"

namespace cmask {

// Mean absolute difference between two magnitude spectrograms.
double magnitude_loss(const RealMat& est_mag, const RealMat& target_mag);

// d magnitude_loss / d est_mag: sign(est - target) / count, 0 at exact ties.
RealMat magnitude_loss_grad(const RealMat& est_mag, const RealMat& target_mag);

// Negative cosine similarity between time-domain signals, in [-1, 1]:
//   -(y . y_hat) / (max(||y||, eps) * max(||y_hat||, eps)).
// Flooring each norm separately keeps the value exactly -1 when the estimate
// equals a non-silent target and keeps gradients finite near silent estimates.
double sdr_loss(const std::vector<double>& est, const std::vector<double>& target);

std::vector<double> sdr_loss_grad(const std::vector<double>& est,
                                  const std::vector<double>& target);

// Plain sum of the two terms above, no weighting.
double sdr_plus_mag_loss(const std::vector<double>& est_wave,
                         const std::vector<double>& target_wave, const RealMat& est_mag,
                         const RealMat& target_mag);

}  // namespace cmask
