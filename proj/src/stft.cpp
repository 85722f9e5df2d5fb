#include "cmask/stft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <utility>

namespace cmask {

namespace {

// FFTW planning is not thread safe; executing a plan on fresh arrays is.
// Plans are created once per size with FFTW_UNALIGNED so they can run on
// arbitrary caller buffers, and kept for the life of the process.
std::mutex g_plan_mutex;
std::map<int, std::pair<fftw_plan, fftw_plan>>& plan_cache() {
  static std::map<int, std::pair<fftw_plan, fftw_plan>> cache;
  return cache;
}

std::pair<fftw_plan, fftw_plan> plans_for(int n) {
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto& cache = plan_cache();
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  std::vector<double> re(n);
  std::vector<std::complex<double>> cx(n / 2 + 1);
  auto* cx_raw = reinterpret_cast<fftw_complex*>(cx.data());
  fftw_plan fwd = fftw_plan_dft_r2c_1d(n, re.data(), cx_raw, FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_plan inv = fftw_plan_dft_c2r_1d(n, cx_raw, re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (fwd == nullptr || inv == nullptr) throw std::runtime_error("fftw planning failed");
  cache.emplace(n, std::make_pair(fwd, inv));
  return {fwd, inv};
}

}  // namespace

void StftParams::validate() const {
  if (window_size <= 0 || window_size % 2 != 0)
    throw ParamError("stft: window_size must be positive and even");
  if (hop_size <= 0) throw ParamError("stft: hop_size must be positive");
  if (hop_size > window_size) throw ParamError("stft: hop_size must not exceed window_size");
  if (!(sample_rate > 0.0)) throw ParamError("stft: sample_rate must be positive");
}

long StftParams::num_frames(long signal_length) const {
  if (signal_length < 0) throw ParamError("stft: negative signal length");
  return (signal_length + window_size + hop_size - 1) / hop_size;
}

std::vector<double> hann_window(int size) {
  if (size <= 0) throw ParamError("hann_window: size must be positive");
  std::vector<double> w(size);
  for (int n = 0; n < size; ++n) w[n] = 0.5 * (1.0 - std::cos(2.0 * M_PI * n / size));
  return w;
}

void rfft(const double* in, int n, std::complex<double>* out) {
  auto plans = plans_for(n);
  // r2c does not modify its input; FFTW's interface just lacks the const.
  fftw_execute_dft_r2c(plans.first, const_cast<double*>(in),
                       reinterpret_cast<fftw_complex*>(out));
}

void irfft(const std::complex<double>* in, int n, double* out) {
  auto plans = plans_for(n);
  // c2r destroys its input, and the DC/Nyquist imaginary parts must read as
  // zero regardless of what the caller stored there, so work on a copy.
  std::vector<std::complex<double>> scratch(in, in + n / 2 + 1);
  scratch[0] = {scratch[0].real(), 0.0};
  scratch[n / 2] = {scratch[n / 2].real(), 0.0};
  fftw_execute_dft_c2r(plans.second, reinterpret_cast<fftw_complex*>(scratch.data()), out);
  double inv_n = 1.0 / n;
  for (int i = 0; i < n; ++i) out[i] *= inv_n;
}

Spectrogram stft(const Waveform& w, const StftParams& p) {
  p.validate();
  if (w.samples.empty()) throw ParamError("stft: empty signal");

  const int W = p.window_size;
  const int H = p.hop_size;
  const long L = static_cast<long>(w.samples.size());
  const long F = p.num_frames(L);

  std::vector<double> padded(static_cast<size_t>((F - 1) * H + W), 0.0);
  std::copy(w.samples.begin(), w.samples.end(), padded.begin() + W / 2);

  const std::vector<double> win = hann_window(W);
  std::vector<double> frame(W);

  Spectrogram s;
  s.params = p;
  s.params.sample_rate = w.sample_rate;
  s.bins = ComplexMat(static_cast<int>(F), p.num_bins());
  for (long t = 0; t < F; ++t) {
    const double* src = padded.data() + t * H;
    for (int n = 0; n < W; ++n) frame[n] = src[n] * win[n];
    rfft(frame.data(), W, s.bins.row(static_cast<int>(t)));
  }
  return s;
}

Waveform istft(const Spectrogram& s, long out_length) {
  s.params.validate();
  if (s.bins.cols() != s.params.num_bins())
    throw ParamError("istft: bin count does not match params");
  if (s.bins.rows() <= 0) throw ParamError("istft: empty spectrogram");
  if (out_length <= 0) throw ParamError("istft: out_length must be positive");
  if (s.params.num_frames(out_length) != s.num_frames())
    throw ParamError("istft: out_length inconsistent with frame count");

  const int W = s.params.window_size;
  const int H = s.params.hop_size;
  const int F = s.num_frames();

  std::vector<double> acc(static_cast<size_t>((F - 1) * H + W), 0.0);
  std::vector<double> wsum(acc.size(), 0.0);
  const std::vector<double> win = hann_window(W);
  std::vector<double> frame(W);

  for (int t = 0; t < F; ++t) {
    irfft(s.bins.row(t), W, frame.data());
    double* dst = acc.data() + static_cast<long>(t) * H;
    double* wdst = wsum.data() + static_cast<long>(t) * H;
    for (int n = 0; n < W; ++n) {
      dst[n] += frame[n] * win[n];
      wdst[n] += win[n] * win[n];
    }
  }

  Waveform out;
  out.sample_rate = s.params.sample_rate;
  out.samples.resize(static_cast<size_t>(out_length));
  for (long i = 0; i < out_length; ++i) {
    double ws = wsum[static_cast<size_t>(W / 2 + i)];
    out.samples[static_cast<size_t>(i)] =
        ws > 1e-12 ? acc[static_cast<size_t>(W / 2 + i)] / ws : 0.0;
  }
  return out;
}

RealMat magnitude(const Spectrogram& s) {
  RealMat m(s.num_frames(), s.num_bins());
  for (int t = 0; t < m.rows(); ++t)
    for (int k = 0; k < m.cols(); ++k) m(t, k) = std::abs(s.bins(t, k));
  return m;
}

RealMat phase(const Spectrogram& s) {
  RealMat m(s.num_frames(), s.num_bins());
  for (int t = 0; t < m.rows(); ++t) {
    for (int k = 0; k < m.cols(); ++k) {
      const std::complex<double>& c = s.bins(t, k);
      double ph = (c.real() == 0.0 && c.imag() == 0.0) ? 0.0 : std::atan2(c.imag(), c.real());
      if (ph <= -M_PI) ph = M_PI;  // atan2 can return -pi; keep the range (-pi, pi]
      m(t, k) = ph;
    }
  }
  return m;
}

}  // namespace cmask
