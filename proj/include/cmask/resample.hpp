#pragma once

#include <vector>

namespace cmask {

// Windowed-sinc sample-rate conversion (Hann window, 16 zero crossings per
// side, kernel widened by the decimation factor when downsampling so the
// cutoff stays below the output Nyquist). Output length is
// round(n * out_rate / in_rate). Equal rates return the input unchanged.
std::vector<double> resample(const std::vector<double>& in, double in_rate, double out_rate,
                             int half_taps = 16);

}  // namespace cmask
