#include "cmask/resample.hpp"

#include <cmath>

#include "cmask/errors.hpp"

namespace cmask {

namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  double px = M_PI * x;
  return std::sin(px) / px;
}

}  // namespace

std::vector<double> resample(const std::vector<double>& in, double in_rate, double out_rate,
                             int half_taps) {
  if (!(in_rate > 0.0) || !(out_rate > 0.0))
    throw ParamError("resample: rates must be positive");
  if (half_taps < 2) throw ParamError("resample: need at least 2 taps per side");
  if (in_rate == out_rate || in.empty()) return in;

  const double step = in_rate / out_rate;           // input samples per output sample
  const double fc = std::min(1.0, out_rate / in_rate);  // relative to input Nyquist
  const double span = half_taps / fc;
  const long n_in = static_cast<long>(in.size());
  const long n_out = std::llround(static_cast<double>(in.size()) / step);

  std::vector<double> out(static_cast<size_t>(n_out), 0.0);
  for (long i = 0; i < n_out; ++i) {
    const double t = i * step;
    const long lo = static_cast<long>(std::ceil(t - span));
    const long hi = static_cast<long>(std::floor(t + span));
    double acc = 0.0, wsum = 0.0;
    for (long j = lo; j <= hi; ++j) {
      const double x = t - j;
      const double w = 0.5 + 0.5 * std::cos(M_PI * x / span);  // Hann taper over the span
      const double k = fc * sinc(fc * x) * w;
      wsum += k;
      if (j >= 0 && j < n_in) acc += in[static_cast<size_t>(j)] * k;
    }
    // Kernel mass normalization removes the window's DC ripple.
    out[static_cast<size_t>(i)] = wsum > 0.0 ? acc / wsum : 0.0;
  }
  return out;
}

}  // namespace cmask
