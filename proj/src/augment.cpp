#include "cmask/augment.hpp"

#include <cmath>

#include "cmask/errors.hpp"
#include "cmask/resample.hpp"

namespace cmask {

namespace {

// Peaking EQ biquad (constant-Q), direct form II transposed, zero initial
// state. Stable for any gain when 0 < freq < Nyquist and q > 0.
void peaking_eq_inplace(std::vector<double>& x, double freq_hz, double gain_db, double q,
                        double sr) {
  const double amp = std::pow(10.0, gain_db / 40.0);
  const double w = 2.0 * M_PI * freq_hz / sr;
  const double alpha = std::sin(w) / (2.0 * q);
  const double a0 = 1.0 + alpha / amp;
  const double b0 = (1.0 + alpha * amp) / a0;
  const double b1 = (-2.0 * std::cos(w)) / a0;
  const double b2 = (1.0 - alpha * amp) / a0;
  const double a1 = b1;  // peaking EQ shares the cosine term
  const double a2 = (1.0 - alpha / amp) / a0;

  double z1 = 0.0, z2 = 0.0;
  for (double& v : x) {
    const double in = v;
    v = b0 * in + z1;
    z1 = b1 * in - a1 * v + z2;
    z2 = b2 * in - a2 * v;
  }
}

}  // namespace

bool AugmentSpec::is_identity() const {
  if (resample_ratio != 1.0) return false;
  for (const auto& s : per_stem)
    if (s.gain_db != 0.0 || s.eq) return false;
  return true;
}

void AugmentSpec::validate(size_t num_stems, double sample_rate) const {
  if (!per_stem.empty() && per_stem.size() != num_stems)
    throw ParamError("augment: per-stem list must be empty or cover every stem");
  if (resample_ratio < 0.9 || resample_ratio > 1.1)
    throw ParamError("augment: resample ratio must lie in [0.9, 1.1]");
  for (const auto& s : per_stem) {
    if (s.gain_db < -12.0 || s.gain_db > 12.0)
      throw ParamError("augment: gain must lie in [-12, +12] dB");
    if (s.eq) {
      if (s.eq_gain_db < -12.0 || s.eq_gain_db > 12.0)
        throw ParamError("augment: EQ gain must lie in [-12, +12] dB");
      // An out-of-band center or non-positive Q makes the filter unstable.
      if (!(s.eq_freq_hz > 0.0) || s.eq_freq_hz >= sample_rate / 2.0 || !(s.eq_q > 0.0))
        throw ParamError("augment: unstable EQ settings");
    }
  }
}

AugmentSpec AugmentSpec::random(Rng& rng, size_t num_stems, double sample_rate) {
  AugmentSpec spec;
  const double hi_hz = std::min(8000.0, 0.45 * sample_rate);
  const double lo_hz = std::min(200.0, hi_hz / 2.0);
  for (size_t i = 0; i < num_stems; ++i) {
    StemAugment s;
    s.gain_db = rng.uniform(-6.0, 6.0);
    s.eq = rng.uniform() < 0.7;
    // Log-uniform center keeps low and high regions equally likely.
    s.eq_freq_hz = std::exp(rng.uniform(std::log(lo_hz), std::log(hi_hz)));
    s.eq_gain_db = rng.uniform(-6.0, 6.0);
    s.eq_q = rng.uniform(0.7, 2.0);
    spec.per_stem.push_back(s);
  }
  spec.resample_ratio = rng.uniform(0.9, 1.1);
  return spec;
}

StemSet augment(const StemSet& in, const AugmentSpec& spec) {
  spec.validate(in.stems.size(), in.sample_rate);
  if (spec.is_identity()) return in;

  StemSet out;
  out.names = in.names;
  out.sample_rate = in.sample_rate;
  for (size_t i = 0; i < in.stems.size(); ++i) {
    std::vector<double> stem = in.stems[i];
    if (!spec.per_stem.empty()) {
      const StemAugment& s = spec.per_stem[i];
      if (s.gain_db != 0.0) {
        const double g = std::pow(10.0, s.gain_db / 20.0);
        for (double& v : stem) v *= g;
      }
      if (s.eq) peaking_eq_inplace(stem, s.eq_freq_hz, s.eq_gain_db, s.eq_q, in.sample_rate);
    }
    if (spec.resample_ratio != 1.0)
      stem = resample(stem, spec.resample_ratio, 1.0);  // speed r shortens by 1/r
    out.stems.push_back(std::move(stem));
  }
  out.remix();
  return out;
}

}  // namespace cmask
