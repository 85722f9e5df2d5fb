#pragma once

#include "cmask/mat.hpp"
#include "cmask/stft.hpp"

namespace cmask {

// Shared guard for divisions by magnitudes that may vanish.
inline constexpr double kEpsGuard = 1e-8;

double sigmoid(double x);

// Squash raw network output to a magnitude mask in (0, 1), elementwise sigmoid.
RealMat real_mask_from_output(const RealMat& raw);

// Compress raw complex output O to a mask with |M| = tanh(|O|) and the phase
// of O. Below the guard the direction of O is meaningless, so M = 0 there.
ComplexMat complex_mask_from_output(const ComplexMat& raw);

// Estimate = mask * |X| * e^{i phase(X)}, mixture magnitude scaled per bin with
// the mixture phase reused untouched.
Spectrogram apply_real_mask(const RealMat& mask, const Spectrogram& mixture);

// Estimate = mask * X, elementwise complex product.
Spectrogram apply_complex_mask(const ComplexMat& mask, const Spectrogram& mixture);

// Oracle magnitude mask min(|Y| / max(|X|, eps), 1) for target Y, mixture X.
RealMat ideal_real_mask(const Spectrogram& target, const Spectrogram& mixture);

// Oracle complex mask Y / X, the exact bin-wise ratio. Moduli above
// `max_modulus` are scaled back onto the bound with phase kept; pass
// infinity to disable clipping. The division is guarded so silent mixture
// bins yield finite masks.
ComplexMat ideal_complex_mask(const Spectrogram& target, const Spectrogram& mixture,
                              double max_modulus = 1.0);

}  // namespace cmask
