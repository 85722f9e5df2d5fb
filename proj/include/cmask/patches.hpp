#pragma once

#include <vector>

#include "cmask/stft.hpp"
#include "cmask/tensor.hpp"

namespace cmask {

// Training examples are fixed-size spectrogram slices: 256 frames by the
// frequency axis zero-padded up to the next power of two (513 -> 1024), so
// both spatial dims divide cleanly through a strided encoder.
constexpr int kPatchFrames = 256;

enum class ChannelMode { kMagnitude, kComplex };

struct SpectroPatch {
  Tensor data;          // [channels, kPatchFrames, padded_bins], grad-free
  int t0 = 0;           // first source frame covered by this patch
  int valid_frames = 0; // frames beyond this are zero padding
  int valid_bins = 0;   // bins beyond this are zero padding
};

int padded_bins_for(int bins);  // next power of two >= bins

// Contiguous non-overlapping slices covering the whole spectrogram; the last
// one is zero-padded up to kPatchFrames. Magnitude mode emits one |X| channel;
// complex mode emits Re and Im channels.
std::vector<SpectroPatch> make_patches(const Spectrogram& spec, ChannelMode mode);

// 1 over the valid time-frequency region, 0 over padding. [1, frames, bins].
Tensor validity_mask(const SpectroPatch& patch);

// Inverses of make_patches (crop padding, concatenate). Bit-exact.
ComplexMat reassemble_complex(const std::vector<SpectroPatch>& patches);
RealMat reassemble_magnitude(const std::vector<SpectroPatch>& patches);

// Whole spectrogram as one network input, both axes zero-padded: frames up to
// a multiple of frame_multiple, bins to the next power of two. Used for
// fully-convolutional inference on complete tracks.
SpectroPatch full_input(const Spectrogram& spec, ChannelMode mode, int frame_multiple);

}  // namespace cmask
