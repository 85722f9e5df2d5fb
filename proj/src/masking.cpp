#include "cmask/masking.hpp"

#include <cmath>

namespace cmask {

namespace {

void require_same_shape(int mr, int mc, const Spectrogram& x, const char* what) {
  if (mr != x.num_frames() || mc != x.num_bins())
    throw ParamError(std::string(what) + ": mask shape does not match spectrogram");
}

}  // namespace

double sigmoid(double x) {
  // Split on sign so the exponential never overflows.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

RealMat real_mask_from_output(const RealMat& raw) {
  RealMat m(raw.rows(), raw.cols());
  for (int t = 0; t < raw.rows(); ++t)
    for (int k = 0; k < raw.cols(); ++k) m(t, k) = sigmoid(raw(t, k));
  return m;
}

ComplexMat complex_mask_from_output(const ComplexMat& raw) {
  ComplexMat m(raw.rows(), raw.cols());
  for (int t = 0; t < raw.rows(); ++t) {
    for (int k = 0; k < raw.cols(); ++k) {
      double r = std::abs(raw(t, k));
      m(t, k) = r < kEpsGuard ? std::complex<double>(0.0, 0.0)
                              : raw(t, k) * (std::tanh(r) / r);
    }
  }
  return m;
}

Spectrogram apply_real_mask(const RealMat& mask, const Spectrogram& mixture) {
  require_same_shape(mask.rows(), mask.cols(), mixture, "apply_real_mask");
  Spectrogram out;
  out.params = mixture.params;
  out.bins = ComplexMat(mixture.num_frames(), mixture.num_bins());
  for (int t = 0; t < mixture.num_frames(); ++t) {
    for (int k = 0; k < mixture.num_bins(); ++k) {
      const std::complex<double>& x = mixture.bins(t, k);
      double mag = std::abs(x);
      if (mag == 0.0) {
        out.bins(t, k) = {0.0, 0.0};
      } else {
        // mask * |X| * e^{i phase(X)}, with e^{i phase} taken as X / |X|.
        std::complex<double> unit = x / mag;
        out.bins(t, k) = mask(t, k) * mag * unit;
      }
    }
  }
  return out;
}

Spectrogram apply_complex_mask(const ComplexMat& mask, const Spectrogram& mixture) {
  require_same_shape(mask.rows(), mask.cols(), mixture, "apply_complex_mask");
  Spectrogram out;
  out.params = mixture.params;
  out.bins = ComplexMat(mixture.num_frames(), mixture.num_bins());
  for (int t = 0; t < mixture.num_frames(); ++t)
    for (int k = 0; k < mixture.num_bins(); ++k) out.bins(t, k) = mask(t, k) * mixture.bins(t, k);
  return out;
}

RealMat ideal_real_mask(const Spectrogram& target, const Spectrogram& mixture) {
  if (!target.bins.same_shape(mixture.bins))
    throw ParamError("ideal_real_mask: target and mixture shapes differ");
  RealMat m(mixture.num_frames(), mixture.num_bins());
  for (int t = 0; t < m.rows(); ++t) {
    for (int k = 0; k < m.cols(); ++k) {
      double ratio = std::abs(target.bins(t, k)) / std::max(std::abs(mixture.bins(t, k)), kEpsGuard);
      m(t, k) = std::min(ratio, 1.0);
    }
  }
  return m;
}

ComplexMat ideal_complex_mask(const Spectrogram& target, const Spectrogram& mixture,
                              double max_modulus) {
  if (!target.bins.same_shape(mixture.bins))
    throw ParamError("ideal_complex_mask: target and mixture shapes differ");
  if (!(max_modulus > 0.0))
    throw ParamError("ideal_complex_mask: max_modulus must be positive");
  ComplexMat m(mixture.num_frames(), mixture.num_bins());
  for (int t = 0; t < m.rows(); ++t) {
    for (int k = 0; k < m.cols(); ++k) {
      const std::complex<double>& x = mixture.bins(t, k);
      // Y / X as Y * conj(X) / |X|^2 with the denominator floored; exact
      // whenever |X| >= kEpsGuard.
      double den = std::max(std::norm(x), kEpsGuard * kEpsGuard);
      std::complex<double> ratio = target.bins(t, k) * std::conj(x) / den;
      double r = std::abs(ratio);
      if (r > max_modulus) ratio *= max_modulus / r;
      m(t, k) = ratio;
    }
  }
  return m;
}

}  // namespace cmask
