#pragma once

#include <string>
#include <vector>

namespace cmask {

struct WavData {
  std::vector<double> samples;
  double sample_rate = 0.0;
};

// Mono WAV only. Readable encodings: PCM 16-bit and IEEE float32. Writing
// always emits IEEE float32 (an 16-bit quantization would break the
// sample-exact conservation guarantees downstream).
WavData read_wav(const std::string& path);
void write_wav(const std::string& path, const std::vector<double>& samples, double sample_rate);

}  // namespace cmask
