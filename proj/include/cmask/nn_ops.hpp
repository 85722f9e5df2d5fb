#pragma once

#include <vector>

#include "cmask/mat.hpp"
#include "cmask/rng.hpp"
#include "cmask/stft.hpp"
#include "cmask/tensor.hpp"

namespace cmask {

// x [N,Cin,H,W], w [Cout,Cin,kH,kW], b [Cout] -> [N,Cout,OH,OW] where
// OH = (H + 2*padding - kH) / stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);

// x [N,Cin,H,W], w [Cin,Cout,kH,kW], b [Cout] -> [N,Cout,OH,OW] where
// OH = (H - 1)*stride - 2*padding + kH + output_padding. Exact adjoint of
// conv2d with the same weight array: <conv(x,w), y> == <x, convT(y,w)>.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int padding, int output_padding);

// Per-channel running statistics, owned by the layer across steps.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;  // unbiased estimate accumulated in training

  explicit BatchNormState(int channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

// Training mode normalizes with biased batch statistics over (N,H,W) per
// channel and folds them into the running estimates; eval mode normalizes
// with the running estimates.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, double momentum = 0.1,
                  double eps = 1e-5);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid_op(const Tensor& x);

// Inverted dropout: kept units are scaled by 1/(1-p) so eval needs no rescale.
// Identity when not training.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

// [N,Ca,H,W] + [N,Cb,H,W] -> [N,Ca+Cb,H,W].
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Keep the top-left new_h x new_w region of every channel plane.
Tensor crop_hw(const Tensor& x, int new_h, int new_w);

// Raw 2-channel (re, im) output -> mask with modulus tanh(|raw|) and the
// direction of raw; zero below the kEpsGuard modulus. Graph twin of
// complex_mask_from_output.
Tensor complex_mask_compress(const Tensor& raw);

// Elementwise complex product of two 2-channel tensors [N,2,H,W].
Tensor complex_mul(const Tensor& a, const Tensor& b);

// [N,1,H,W] real mask times [N,2,H,W] spectrum, channelwise broadcast.
Tensor real_mask_apply(const Tensor& mask, const Tensor& spec);

// [N,2,H,W] -> [N,1,H,W] moduli. The gradient is guarded at zero modulus.
Tensor complex_magnitude(const Tensor& est);

// [N,2,F,K] one-sided spectra -> [N,out_length] waveforms through the
// overlap-add inverse transform; K must equal p.num_bins() and F must be
// consistent with out_length. Linear, with an exact adjoint in backward.
Tensor istft_batch(const Tensor& est, const StftParams& p, long out_length);

// Mean absolute difference against a constant target (flattened, same numel).
Tensor l1_loss_const(const Tensor& a, const std::vector<double>& target);

// Mean over batch rows of the negative cosine similarity against constant
// targets; forward and backward call the loss module routines directly.
Tensor sdr_loss_batch(const Tensor& waves, const std::vector<std::vector<double>>& targets);

}  // namespace cmask
