#pragma once

#include <complex>
#include <vector>

#include "cmask/errors.hpp"
#include "cmask/mat.hpp"

namespace cmask {

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 22050.0;
};

struct StftParams {
  int window_size = 1024;
  int hop_size = 256;
  double sample_rate = 22050.0;

  void validate() const;

  int num_bins() const { return window_size / 2 + 1; }

  // Frame t covers samples [t*hop - window/2, t*hop + window/2). The count is
  // ceil((length + window) / hop): the half-window of leading zero padding plus
  // a tail frame that always overhangs the signal end.
  long num_frames(long signal_length) const;

  // Longest signal length that analyzes to exactly `frames` frames.
  long canonical_length(long frames) const {
    return frames * static_cast<long>(hop_size) - window_size;
  }
};

struct Spectrogram {
  ComplexMat bins;  // frames x (window/2 + 1), row per frame
  StftParams params;

  int num_frames() const { return bins.rows(); }
  int num_bins() const { return bins.cols(); }
};

// Periodic Hann, w[n] = 0.5 * (1 - cos(2*pi*n / size)). Peak of 1 at size/2.
std::vector<double> hann_window(int size);

Spectrogram stft(const Waveform& w, const StftParams& p);

// Overlap-add inverse with the same window on synthesis, normalized per sample
// by the accumulated squared window. Exact inverse of stft for any hop with
// nonzero window coverage, not just perfect-overlap hops. `out_length` must be
// consistent with the spectrogram's frame count. The imaginary parts of the DC
// and Nyquist bins are ignored.
Waveform istft(const Spectrogram& s, long out_length);

RealMat magnitude(const Spectrogram& s);

// Phase in (-pi, pi]; exact zero bins get phase 0.
RealMat phase(const Spectrogram& s);

// One-sided real FFT of length n (even): out[k] = sum_m in[m] e^{-2pi i k m / n},
// k = 0 .. n/2. Shared by the training graph's spectral resynthesis ops.
void rfft(const double* in, int n, std::complex<double>* out);

// Inverse of rfft including the 1/n normalization. Ignores the imaginary parts
// of in[0] and in[n/2].
void irfft(const std::complex<double>* in, int n, double* out);

}  // namespace cmask
