#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cmask/nn_ops.hpp"
#include "cmask/rng.hpp"
#include "cmask/tensor.hpp"

namespace cmask {

struct UNetConfig {
  int depth = 6;
  std::vector<int> channels = {16, 32, 64, 128, 256, 512};  // encoder widths, shallow to deep
  int in_channels = 1;  // 1 for magnitude masking, 2 for complex (re, im)
  int kernel_size = 5;
  int stride = 2;
  double leaky_slope = 0.2;
  double dropout_p = 0.5;
  int dropout_layers = 5;  // first N decoder layers, capped at depth - 1

  void validate() const;
  int downsample_factor() const;  // stride^depth
};

// Mirror-symmetric encoder/decoder stack with channel-concatenated skips.
// Encoder: strided conv, batch norm (except the first layer), leaky ReLU.
// Decoder: strided transposed conv, batch norm (except the last layer),
// dropout on the leading layers, ReLU (except the last layer). The final
// output is raw; mask squashing is the caller's business.
class UNet {
 public:
  UNet(const UNetConfig& cfg, Rng& init_rng);

  // x must be [N, in_channels, H, W] with H and W divisible by stride^depth.
  // Training mode needs a dropout generator when the config enables dropout.
  Tensor forward(const Tensor& x, bool training, Rng* dropout_rng = nullptr);

  std::vector<Tensor> parameters();
  std::vector<std::pair<std::string, Tensor>> named_parameters();
  std::vector<std::pair<std::string, std::vector<double>*>> named_buffers();
  size_t parameter_count();

  const UNetConfig& config() const { return cfg_; }

 private:
  struct Block {
    Tensor w, b;
    bool has_bn = false;
    Tensor gamma, beta;
    BatchNormState bn_state;
  };

  UNetConfig cfg_;
  std::vector<Block> enc_, dec_;
};

}  // namespace cmask
