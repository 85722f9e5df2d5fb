#pragma once

#include <vector>

#include "cmask/rng.hpp"
#include "cmask/synth.hpp"

namespace cmask {

// Per-stem gain and peaking-filter settings; neutral by default.
struct StemAugment {
  double gain_db = 0.0;  // [-12, +12]
  bool eq = false;
  double eq_freq_hz = 1000.0;
  double eq_gain_db = 0.0;  // [-12, +12]
  double eq_q = 1.0;
};

// Stem-level gain/EQ plus a track-level speed change applied identically to
// every stem (a shared resample shifts pitch and tempo together).
struct AugmentSpec {
  std::vector<StemAugment> per_stem;  // empty or one entry per stem
  double resample_ratio = 1.0;        // speed factor, [0.9, 1.1]

  bool is_identity() const;
  void validate(size_t num_stems, double sample_rate) const;  // ParamError on bad ranges
  // Draws in-range settings; the EQ center stays below the Nyquist frequency.
  static AugmentSpec random(Rng& rng, size_t num_stems, double sample_rate);
};

// Applies the spec and re-mixes. The identity spec returns the input
// bit-for-bit; the mixture is always recomputed, never carried over.
StemSet augment(const StemSet& in, const AugmentSpec& spec);

}  // namespace cmask
