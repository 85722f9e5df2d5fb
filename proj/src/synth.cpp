#include "cmask/synth.hpp"

#include <algorithm>
#include <cmath>

#include "cmask/errors.hpp"
#include "cmask/rng.hpp"

namespace cmask {

namespace {

constexpr double kTau = 2.0 * M_PI;

void add_scaled_to_peak(std::vector<double>& stem, double target_peak) {
  double peak = 0.0;
  for (double v : stem) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : stem) v *= target_peak / peak;
}

// Trapezoid envelope with exponential tail; t and lengths in samples.
double envelope(long t, long attack, long hold, double release_tau) {
  if (t < 0) return 0.0;
  if (t < attack) return static_cast<double>(t) / static_cast<double>(attack);
  if (t < attack + hold) return 1.0;
  return std::exp(-static_cast<double>(t - attack - hold) / release_tau);
}

// Mid-range harmonic phrases; vibrato plus a short breathy onset per phrase.
std::vector<double> gen_vocals(Rng& rng, long n, double sr) {
  std::vector<double> out(n, 0.0);
  double cursor = rng.uniform(0.05, 0.3);
  while (cursor * sr < n - 0.25 * sr) {
    const double phrase_s = rng.uniform(0.5, 1.1);
    const double f0 = rng.uniform(220.0, 520.0);
    const double vib_rate = rng.uniform(4.5, 6.5);
    const double vib_depth = rng.uniform(0.006, 0.02);
    const double vib_phase = rng.uniform(0.0, kTau);
    double harm_amp[5], harm_phase[5];
    for (int h = 0; h < 5; ++h) {
      harm_amp[h] = std::pow(1.0 / (h + 1), 1.3) * rng.uniform(0.7, 1.0);
      harm_phase[h] = rng.uniform(0.0, kTau);
    }
    const long start = static_cast<long>(cursor * sr);
    const long len = std::min(static_cast<long>(phrase_s * sr), n - start);
    const long attack = static_cast<long>(0.015 * sr);
    const long hold = static_cast<long>(0.75 * len);
    double phi = 0.0;
    for (long i = 0; i < len; ++i) {
      const double t = i / sr;
      phi += kTau * f0 * (1.0 + vib_depth * std::sin(kTau * vib_rate * t + vib_phase)) / sr;
      double s = 0.0;
      for (int h = 0; h < 5; ++h) s += harm_amp[h] * std::sin((h + 1) * phi + harm_phase[h]);
      out[start + i] += s * envelope(i, attack, hold, 0.06 * sr);
    }
    // Breathy onset transient: a short quiet noise burst at the phrase start.
    const long burst = std::min(static_cast<long>(0.02 * sr), n - start);
    for (long i = 0; i < burst; ++i)
      out[start + i] += 0.25 * rng.normal() * envelope(i, burst / 4, 0, 0.004 * sr);
    cursor += phrase_s * rng.uniform(1.0, 1.5);
  }
  add_scaled_to_peak(out, 0.24);
  return out;
}

// Plucked-string-like notes: damped harmonics whose decay speeds up with
// harmonic number, which is what makes a pluck sound plucked.
std::vector<double> gen_guitar(Rng& rng, long n, double sr) {
  std::vector<double> out(n, 0.0);
  double cursor = rng.uniform(0.0, 0.2);
  while (cursor * sr < n - 0.1 * sr) {
    const double f0 = 196.0 * std::pow(2.0, rng.uniform_int(0, 12) / 12.0);
    double harm_phase[8];
    for (int h = 0; h < 8; ++h) harm_phase[h] = rng.uniform(0.0, kTau);
    const long start = static_cast<long>(cursor * sr);
    const long len = std::min(static_cast<long>(0.8 * sr), n - start);
    for (long i = 0; i < len; ++i) {
      const double t = i / sr;
      double s = 0.0;
      for (int h = 1; h <= 8; ++h)
        s += (1.0 / h) * std::sin(kTau * h * f0 * t + harm_phase[h - 1]) *
             std::exp(-t * (2.5 + 1.1 * h));
      out[start + i] += s * std::min(1.0, i / (0.002 * sr));
    }
    cursor += rng.uniform(0.25, 0.5);
  }
  add_scaled_to_peak(out, 0.22);
  return out;
}

// Low harmonic tones with slow onsets; all partials stay well below 1 kHz.
std::vector<double> gen_bass(Rng& rng, long n, double sr) {
  std::vector<double> out(n, 0.0);
  double cursor = rng.uniform(0.0, 0.15);
  while (cursor * sr < n - 0.3 * sr) {
    const double note_s = rng.uniform(0.6, 1.2);
    const double f0 = rng.uniform(60.0, 200.0);
    const double p1 = rng.uniform(0.0, kTau), p2 = rng.uniform(0.0, kTau),
                 p3 = rng.uniform(0.0, kTau);
    const long start = static_cast<long>(cursor * sr);
    const long len = std::min(static_cast<long>(note_s * sr), n - start);
    const long attack = static_cast<long>(rng.uniform(0.08, 0.15) * sr);
    const long hold = std::max(0L, len - 2 * attack);
    for (long i = 0; i < len; ++i) {
      const double t = i / sr;
      const double s = std::sin(kTau * f0 * t + p1) + 0.45 * std::sin(kTau * 2 * f0 * t + p2) +
                       0.18 * std::sin(kTau * 3 * f0 * t + p3);
      out[start + i] += s * envelope(i, attack, hold, 0.1 * sr);
    }
    cursor += note_s * rng.uniform(0.95, 1.3);
  }
  add_scaled_to_peak(out, 0.26);
  return out;
}

// Filtered noise bursts on a tempo grid: descending-pitch kick on the beat,
// band-passed snare on the off-beats, short bright hat between.
std::vector<double> gen_percussion(Rng& rng, long n, double sr) {
  std::vector<double> out(n, 0.0);
  const double bpm = rng.uniform(95.0, 135.0);
  const double beat = 60.0 / bpm;

  auto add_kick = [&](long start) {
    const long len = std::min(static_cast<long>(0.12 * sr), n - start);
    for (long i = 0; i < len; ++i) {
      const double t = i / sr;
      const double f = 45.0 + 55.0 * std::exp(-t / 0.02);
      double s = std::sin(kTau * f * t) * std::exp(-t / 0.05);
      if (i < 0.003 * sr) s += 0.3 * rng.normal();
      out[start + i] += s;
    }
  };
  auto add_snare = [&](long start) {
    const long len = std::min(static_cast<long>(0.09 * sr), n - start);
    // Band-pass around 1 kHz: one-pole high-pass into one-pole low-pass.
    const double alo = 1.0 - std::exp(-kTau * 3500.0 / sr);
    const double ahi = 1.0 - std::exp(-kTau * 180.0 / sr);
    double lp = 0.0, lp2 = 0.0;
    for (long i = 0; i < len; ++i) {
      const double x = rng.normal();
      lp += alo * (x - lp);
      lp2 += ahi * (lp - lp2);
      out[start + i] += 0.6 * (lp - lp2) * std::exp(-i / (0.03 * sr));
    }
  };
  auto add_hat = [&](long start) {
    const long len = std::min(static_cast<long>(0.05 * sr), n - start);
    double prev = 0.0, prev2 = 0.0;
    for (long i = 0; i < len; ++i) {
      const double x = rng.normal();
      const double d = x - prev;        // first difference brightens the noise
      out[start + i] += 0.25 * (d - prev2) * std::exp(-i / (0.012 * sr));
      prev = x;
      prev2 = d;
    }
  };

  for (long k = 0;; ++k) {
    const long start = static_cast<long>(k * beat * sr);
    if (start >= n) break;
    if (k % 2 == 0)
      add_kick(start);
    else
      add_snare(start);
    const long half = start + static_cast<long>(0.5 * beat * sr);
    if (half < n) add_hat(half);
  }
  add_scaled_to_peak(out, 0.3);
  return out;
}

// Band-limited noise pad with a slow tremolo, always on.
std::vector<double> gen_other(Rng& rng, long n, double sr) {
  std::vector<double> out(n, 0.0);
  const double lo_fc = rng.uniform(150.0, 300.0);
  const double hi_fc = rng.uniform(1500.0, 3000.0);
  const double trem_rate = rng.uniform(0.2, 0.5);
  const double trem_phase = rng.uniform(0.0, kTau);
  const double alo = 1.0 - std::exp(-kTau * hi_fc / sr);
  const double ahi = 1.0 - std::exp(-kTau * lo_fc / sr);
  double lp = 0.0, lp2 = 0.0;
  for (long i = 0; i < n; ++i) {
    const double x = rng.normal();
    lp += alo * (x - lp);
    lp2 += ahi * (lp - lp2);
    const double trem = 1.0 - 0.4 * (0.5 + 0.5 * std::sin(kTau * trem_rate * i / sr + trem_phase));
    out[i] = (lp - lp2) * trem;
  }
  add_scaled_to_peak(out, 0.12);
  return out;
}

}  // namespace

void StemSet::remix() {
  const size_t n = stems.empty() ? 0 : stems[0].size();
  for (const auto& s : stems)
    if (s.size() != n) throw ParamError("stemset: stems have unequal lengths");
  mixture.assign(n, 0.0);
  for (const auto& s : stems)
    for (size_t i = 0; i < n; ++i) mixture[i] += s[i];
}

const std::vector<double>& StemSet::stem(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return stems[i];
  throw ParamError("stemset: no stem named " + name);
}

const std::vector<std::string>& stem_names() {
  static const std::vector<std::string> kNames = {"vocals", "guitar", "bass", "percussion",
                                                  "other"};
  return kNames;
}

StemSet synth_stems(uint64_t seed, double duration_s, double sample_rate) {
  if (!(duration_s > 0.0)) throw ParamError("synth: duration must be positive");
  if (!(sample_rate > 0.0)) throw ParamError("synth: sample rate must be positive");
  const long n = std::llround(duration_s * sample_rate);

  StemSet set;
  set.names = stem_names();
  set.sample_rate = sample_rate;
  // One generator per stem, each with its own stream, so stems stay stable
  // if another generator's draw count changes.
  for (size_t i = 0; i < set.names.size(); ++i) {
    Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
    switch (i) {
      case 0: set.stems.push_back(gen_vocals(rng, n, sample_rate)); break;
      case 1: set.stems.push_back(gen_guitar(rng, n, sample_rate)); break;
      case 2: set.stems.push_back(gen_bass(rng, n, sample_rate)); break;
      case 3: set.stems.push_back(gen_percussion(rng, n, sample_rate)); break;
      default: set.stems.push_back(gen_other(rng, n, sample_rate)); break;
    }
  }
  set.remix();
  return set;
}

}  // namespace cmask
