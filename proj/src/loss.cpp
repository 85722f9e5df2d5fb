#include "cmask/loss.hpp"

#include <cmath>

#include "cmask/errors.hpp"
#include "cmask/masking.hpp"

namespace cmask {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_matching(const std::vector<double>& est, const std::vector<double>& target) {
  if (est.size() != target.size()) throw ParamError("sdr_loss: length mismatch");
  if (est.empty()) throw ParamError("sdr_loss: empty signals");
}

}  // namespace

double magnitude_loss(const RealMat& est_mag, const RealMat& target_mag) {
  if (!est_mag.same_shape(target_mag)) throw ParamError("magnitude_loss: shape mismatch");
  if (est_mag.size() == 0) throw ParamError("magnitude_loss: empty input");
  double s = 0.0;
  const double* a = est_mag.data();
  const double* b = target_mag.data();
  for (size_t i = 0; i < est_mag.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(est_mag.size());
}

RealMat magnitude_loss_grad(const RealMat& est_mag, const RealMat& target_mag) {
  if (!est_mag.same_shape(target_mag)) throw ParamError("magnitude_loss_grad: shape mismatch");
  if (est_mag.size() == 0) throw ParamError("magnitude_loss_grad: empty input");
  RealMat g(est_mag.rows(), est_mag.cols());
  double inv_n = 1.0 / static_cast<double>(est_mag.size());
  for (int t = 0; t < g.rows(); ++t) {
    for (int k = 0; k < g.cols(); ++k) {
      double d = est_mag(t, k) - target_mag(t, k);
      g(t, k) = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
    }
  }
  return g;
}

double sdr_loss(const std::vector<double>& est, const std::vector<double>& target) {
  require_matching(est, target);
  double num = dot(target, est);
  double a = std::max(std::sqrt(dot(target, target)), kEpsGuard);
  double b = std::max(std::sqrt(dot(est, est)), kEpsGuard);
  return -num / (a * b);
}

std::vector<double> sdr_loss_grad(const std::vector<double>& est,
                                  const std::vector<double>& target) {
  require_matching(est, target);
  double num = dot(target, est);
  double ty = std::sqrt(dot(target, target));
  double ey = std::sqrt(dot(est, est));
  double a = std::max(ty, kEpsGuard);
  double b = std::max(ey, kEpsGuard);

  std::vector<double> g(est.size());
  if (ey > kEpsGuard) {
    // L = -num / (a b), b = ||est||: dL/de_i = -y_i/(a b) + num e_i / (a b^3).
    for (size_t i = 0; i < est.size(); ++i)
      g[i] = -target[i] / (a * b) + num * est[i] / (a * b * b * b);
  } else {
    // Below the floor b is constant, the loss is linear in the estimate.
    for (size_t i = 0; i < est.size(); ++i) g[i] = -target[i] / (a * b);
  }
  return g;
}

double sdr_plus_mag_loss(const std::vector<double>& est_wave,
                         const std::vector<double>& target_wave, const RealMat& est_mag,
                         const RealMat& target_mag) {
  return sdr_loss(est_wave, target_wave) + magnitude_loss(est_mag, target_mag);
}

}  // namespace cmask
