#include "cmask/unet.hpp"

#include <algorithm>

namespace cmask {

namespace {

// Initial values are squeezed through float32 so a freshly constructed model
// and one loaded from a checkpoint are bit-identical.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Tensor init_conv_weight(const std::vector<int>& shape, Rng& rng) {
  Tensor t = Tensor::zeros(shape, true);
  for (auto& v : t.value()) v = f32(0.02 * rng.normal());
  return t;
}

Tensor init_bn_gamma(int channels, Rng& rng) {
  Tensor t = Tensor::zeros({channels}, true);
  for (auto& v : t.value()) v = f32(1.0 + 0.02 * rng.normal());
  return t;
}

}  // namespace

void UNetConfig::validate() const {
  if (depth < 1) throw ParamError("unet: depth must be at least 1");
  if (static_cast<int>(channels.size()) != depth)
    throw ParamError("unet: channels list must have one entry per encoder layer");
  for (int c : channels)
    if (c < 1) throw ParamError("unet: channel counts must be positive");
  if (in_channels < 1) throw ParamError("unet: in_channels must be positive");
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw ParamError("unet: kernel_size must be odd and positive");
  if (stride < 1) throw ParamError("unet: stride must be positive");
  if (leaky_slope < 0.0) throw ParamError("unet: leaky_slope must be non-negative");
  if (dropout_p < 0.0 || dropout_p >= 1.0) throw ParamError("unet: dropout_p must be in [0, 1)");
  if (dropout_layers < 0) throw ParamError("unet: dropout_layers must be non-negative");
}

int UNetConfig::downsample_factor() const {
  int f = 1;
  for (int i = 0; i < depth; ++i) f *= stride;
  return f;
}

UNet::UNet(const UNetConfig& cfg, Rng& init_rng) : cfg_(cfg) {
  cfg_.validate();
  const int k = cfg_.kernel_size;

  for (int i = 0; i < cfg_.depth; ++i) {
    Block blk;
    const int cin = i == 0 ? cfg_.in_channels : cfg_.channels[i - 1];
    const int cout = cfg_.channels[i];
    blk.w = init_conv_weight({cout, cin, k, k}, init_rng);
    blk.b = Tensor::zeros({cout}, true);
    blk.has_bn = i > 0;
    if (blk.has_bn) {
      blk.gamma = init_bn_gamma(cout, init_rng);
      blk.beta = Tensor::zeros({cout}, true);
      blk.bn_state = BatchNormState(cout);
    }
    enc_.push_back(std::move(blk));
  }

  for (int j = 0; j < cfg_.depth; ++j) {
    Block blk;
    const int cin = j == 0 ? cfg_.channels[cfg_.depth - 1] : 2 * cfg_.channels[cfg_.depth - 1 - j];
    const int cout = j < cfg_.depth - 1 ? cfg_.channels[cfg_.depth - 2 - j] : cfg_.in_channels;
    blk.w = init_conv_weight({cin, cout, k, k}, init_rng);
    blk.b = Tensor::zeros({cout}, true);
    blk.has_bn = j < cfg_.depth - 1;
    if (blk.has_bn) {
      blk.gamma = init_bn_gamma(cout, init_rng);
      blk.beta = Tensor::zeros({cout}, true);
      blk.bn_state = BatchNormState(cout);
    }
    dec_.push_back(std::move(blk));
  }
}

Tensor UNet::forward(const Tensor& x, bool training, Rng* dropout_rng) {
  if (!x.defined() || x.ndim() != 4) throw ParamError("unet: input must be 4-d");
  if (x.dim(1) != cfg_.in_channels) throw ParamError("unet: input channel count mismatch");
  const int factor = cfg_.downsample_factor();
  if (x.dim(2) % factor != 0 || x.dim(3) % factor != 0 || x.dim(2) / factor < 1 ||
      x.dim(3) / factor < 1)
    throw ParamError("unet: spatial dims must be positive multiples of stride^depth");

  const int eff_dropout = std::min(cfg_.dropout_layers, cfg_.depth - 1);
  const bool want_dropout = training && cfg_.dropout_p > 0.0 && eff_dropout > 0;
  if (want_dropout && dropout_rng == nullptr)
    throw ParamError("unet: training forward needs a dropout generator");

  const int pad = cfg_.kernel_size / 2;
  const int opad = cfg_.stride - 1;

  std::vector<Tensor> skips;
  Tensor h = x;
  for (int i = 0; i < cfg_.depth; ++i) {
    h = conv2d(h, enc_[i].w, enc_[i].b, cfg_.stride, pad);
    if (enc_[i].has_bn)
      h = batch_norm(h, enc_[i].gamma, enc_[i].beta, enc_[i].bn_state, training);
    h = leaky_relu(h, cfg_.leaky_slope);
    skips.push_back(h);
  }

  for (int j = 0; j < cfg_.depth; ++j) {
    Tensor in = j == 0 ? skips[cfg_.depth - 1]
                       : concat_channels(h, skips[cfg_.depth - 1 - j]);
    h = conv_transpose2d(in, dec_[j].w, dec_[j].b, cfg_.stride, pad, opad);
    if (dec_[j].has_bn)
      h = batch_norm(h, dec_[j].gamma, dec_[j].beta, dec_[j].bn_state, training);
    if (want_dropout && j < eff_dropout) h = dropout(h, cfg_.dropout_p, true, *dropout_rng);
    if (j < cfg_.depth - 1) h = relu(h);
  }
  return h;
}

std::vector<Tensor> UNet::parameters() {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.second);
  return out;
}

std::vector<std::pair<std::string, Tensor>> UNet::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add_block = [&out](const std::string& prefix, Block& blk) {
    out.emplace_back(prefix + ".weight", blk.w);
    out.emplace_back(prefix + ".bias", blk.b);
    if (blk.has_bn) {
      out.emplace_back(prefix + ".bn.gamma", blk.gamma);
      out.emplace_back(prefix + ".bn.beta", blk.beta);
    }
  };
  for (size_t i = 0; i < enc_.size(); ++i) add_block("enc" + std::to_string(i), enc_[i]);
  for (size_t j = 0; j < dec_.size(); ++j) add_block("dec" + std::to_string(j), dec_[j]);
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> UNet::named_buffers() {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  auto add_block = [&out](const std::string& prefix, Block& blk) {
    if (blk.has_bn) {
      out.emplace_back(prefix + ".bn.running_mean", &blk.bn_state.running_mean);
      out.emplace_back(prefix + ".bn.running_var", &blk.bn_state.running_var);
    }
  };
  for (size_t i = 0; i < enc_.size(); ++i) add_block("enc" + std::to_string(i), enc_[i]);
  for (size_t j = 0; j < dec_.size(); ++j) add_block("dec" + std::to_string(j), dec_[j]);
  return out;
}

size_t UNet::parameter_count() {
  size_t n = 0;
  for (auto& p : named_parameters()) n += p.second.numel();
  return n;
}

}  // namespace cmask
