#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cmask {

// A multi-stem track. The mixture is always the unweighted samplewise sum of
// the stems; remix() must be called after any stem edit.
struct StemSet {
  std::vector<std::string> names;
  std::vector<std::vector<double>> stems;  // parallel to names, equal lengths
  std::vector<double> mixture;
  double sample_rate = 0.0;

  void remix();
  const std::vector<double>& stem(const std::string& name) const;  // ParamError if absent
};

// Canonical stem order: vocals, guitar, bass, percussion, other.
const std::vector<std::string>& stem_names();

// Deterministic synthetic five-stem track. Stems deliberately overlap in time
// and partially in frequency: vocals are mid-range harmonic phrases with
// vibrato and breathy onsets, guitar is plucked damped harmonics, bass stays
// below 1 kHz with slow onsets, percussion is filtered noise
// bursts on a tempo grid, other is a band-limited noise pad.
StemSet synth_stems(uint64_t seed, double duration_s, double sample_rate = 22050.0);

}  // namespace cmask
