#include "cmask/patches.hpp"

#include <cmath>

#include "cmask/errors.hpp"

namespace cmask {

namespace {

SpectroPatch slice(const Spectrogram& spec, ChannelMode mode, int t0, int frames_out,
                   int padded_bins) {
  const int frames_in = static_cast<int>(spec.bins.rows());
  const int bins = static_cast<int>(spec.bins.cols());
  const int channels = mode == ChannelMode::kComplex ? 2 : 1;

  SpectroPatch patch;
  patch.t0 = t0;
  patch.valid_frames = std::min(frames_out, frames_in - t0);
  patch.valid_bins = bins;
  patch.data = Tensor::zeros({channels, frames_out, padded_bins});

  auto& v = patch.data.value();
  const size_t plane = static_cast<size_t>(frames_out) * padded_bins;
  for (int f = 0; f < patch.valid_frames; ++f) {
    for (int b = 0; b < bins; ++b) {
      const std::complex<double> x = spec.bins(t0 + f, b);
      const size_t at = static_cast<size_t>(f) * padded_bins + b;
      if (mode == ChannelMode::kComplex) {
        v[at] = x.real();
        v[plane + at] = x.imag();
      } else {
        v[at] = std::abs(x);
      }
    }
  }
  return patch;
}

}  // namespace

int padded_bins_for(int bins) {
  if (bins < 1) throw ParamError("patches: bin count must be positive");
  int p = 1;
  while (p < bins) p *= 2;
  return p;
}

std::vector<SpectroPatch> make_patches(const Spectrogram& spec, ChannelMode mode) {
  const int frames = static_cast<int>(spec.bins.rows());
  const int bins = static_cast<int>(spec.bins.cols());
  if (frames < 1 || bins < 1) throw ParamError("patches: empty spectrogram");
  const int pb = padded_bins_for(bins);
  std::vector<SpectroPatch> out;
  for (int t0 = 0; t0 < frames; t0 += kPatchFrames)
    out.push_back(slice(spec, mode, t0, kPatchFrames, pb));
  return out;
}

Tensor validity_mask(const SpectroPatch& patch) {
  const int frames = patch.data.dim(1);
  const int bins = patch.data.dim(2);
  Tensor mask = Tensor::zeros({1, frames, bins});
  auto& v = mask.value();
  for (int f = 0; f < patch.valid_frames; ++f)
    for (int b = 0; b < patch.valid_bins; ++b) v[static_cast<size_t>(f) * bins + b] = 1.0;
  return mask;
}

ComplexMat reassemble_complex(const std::vector<SpectroPatch>& patches) {
  if (patches.empty()) throw ParamError("patches: nothing to reassemble");
  int total = 0;
  const int bins = patches[0].valid_bins;
  for (const auto& p : patches) {
    if (p.data.dim(0) != 2) throw ParamError("patches: reassemble_complex wants 2 channels");
    if (p.valid_bins != bins) throw ParamError("patches: inconsistent bin counts");
    if (p.t0 != total) throw ParamError("patches: non-contiguous patches");
    total += p.valid_frames;
  }
  ComplexMat out(total, bins);
  for (const auto& p : patches) {
    const int pb = p.data.dim(2);
    const auto& v = p.data.value();
    const size_t plane = static_cast<size_t>(p.data.dim(1)) * pb;
    for (int f = 0; f < p.valid_frames; ++f)
      for (int b = 0; b < bins; ++b) {
        const size_t at = static_cast<size_t>(f) * pb + b;
        out(p.t0 + f, b) = {v[at], v[plane + at]};
      }
  }
  return out;
}

RealMat reassemble_magnitude(const std::vector<SpectroPatch>& patches) {
  if (patches.empty()) throw ParamError("patches: nothing to reassemble");
  int total = 0;
  const int bins = patches[0].valid_bins;
  for (const auto& p : patches) {
    if (p.data.dim(0) != 1) throw ParamError("patches: reassemble_magnitude wants 1 channel");
    if (p.valid_bins != bins) throw ParamError("patches: inconsistent bin counts");
    if (p.t0 != total) throw ParamError("patches: non-contiguous patches");
    total += p.valid_frames;
  }
  RealMat out(total, bins);
  for (const auto& p : patches) {
    const int pb = p.data.dim(2);
    const auto& v = p.data.value();
    for (int f = 0; f < p.valid_frames; ++f)
      for (int b = 0; b < bins; ++b) out(p.t0 + f, b) = v[static_cast<size_t>(f) * pb + b];
  }
  return out;
}

SpectroPatch full_input(const Spectrogram& spec, ChannelMode mode, int frame_multiple) {
  const int frames = static_cast<int>(spec.bins.rows());
  const int bins = static_cast<int>(spec.bins.cols());
  if (frames < 1 || bins < 1) throw ParamError("patches: empty spectrogram");
  if (frame_multiple < 1) throw ParamError("patches: frame multiple must be positive");
  const int padded_frames = ((frames + frame_multiple - 1) / frame_multiple) * frame_multiple;
  return slice(spec, mode, 0, padded_frames, padded_bins_for(bins));
}

}  // namespace cmask
