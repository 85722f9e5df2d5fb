#pragma once

// Reference implementations used only by tests. Each one recomputes a result
// through a route independent of the library code it checks: dense DFT sums
// instead of FFTs, quadruple loops instead of blocked convolution, central
// differences instead of analytic gradients.

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

namespace oracle {

// Dense O(n^2) one-sided DFT: out[k] = sum_m x[m] e^{-2pi i k m / n}, k <= n/2.
inline std::vector<std::complex<double>> dense_dft_onesided(const std::vector<double>& x) {
  int n = static_cast<int>(x.size());
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (int k = 0; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (int m = 0; m < n; ++m) {
      double ang = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(m) / n;
      re += x[m] * std::cos(ang);
      im += x[m] * std::sin(ang);
    }
    out[k] = {re, im};
  }
  return out;
}

// Reference short-time analysis: explicit centered framing with zero padding,
// its own window formula, and the dense DFT above.
inline std::vector<std::vector<std::complex<double>>> dense_stft(
    const std::vector<double>& signal, int window, int hop) {
  long len = static_cast<long>(signal.size());
  long frames = (len + window + hop - 1) / hop;
  std::vector<std::vector<std::complex<double>>> out;
  for (long t = 0; t < frames; ++t) {
    std::vector<double> frame(window);
    for (int n = 0; n < window; ++n) {
      long idx = t * hop + n - window / 2;
      double sample = (idx >= 0 && idx < len) ? signal[static_cast<size_t>(idx)] : 0.0;
      double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / window);
      frame[static_cast<size_t>(n)] = sample * w;
    }
    out.push_back(dense_dft_onesided(frame));
  }
  return out;
}

// Central finite difference of a scalar function at x, step h.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace oracle
