#include "cmask/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

#include "cmask/adam.hpp"
#include "cmask/augment.hpp"
#include "cmask/errors.hpp"
#include "cmask/masking.hpp"
#include "cmask/metrics.hpp"
#include "cmask/nn_ops.hpp"
#include "cmask/patches.hpp"
#include "cmask/resample.hpp"
#include "cmask/wav.hpp"

namespace cmask {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError("checkpoint: bad numeric config value for " + what);
  return v;
}

long parse_long(const std::string& s, const std::string& what) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError("checkpoint: bad integer config value for " + what);
  return v;
}

const std::string& require_key(const std::map<std::string, std::string>& m,
                               const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw FormatError("checkpoint: missing config key " + key);
  return it->second;
}

// One spectrogram patch prepared for a training step: the network input, the
// complex mixture bins it will mask, and both loss targets for the same
// zero-extended frame slice.
struct TrainExample {
  Tensor input;     // [mask_channels, kPatchFrames, padded_bins]
  Tensor mix_bins;  // [2, kPatchFrames, num_bins]
  std::vector<double> target_mag;   // kPatchFrames * num_bins
  std::vector<double> target_wave;  // canonical_length(kPatchFrames)
};

Tensor add_batch_dim(const Tensor& t) {
  std::vector<int> shape = {1};
  for (int i = 0; i < t.ndim(); ++i) shape.push_back(t.dim(i));
  return Tensor::from_values(shape, t.value());
}

Tensor stack_examples(const std::vector<TrainExample>& ex, const std::vector<size_t>& idx,
                      bool mix) {
  const Tensor& first = mix ? ex[idx[0]].mix_bins : ex[idx[0]].input;
  std::vector<int> shape = {static_cast<int>(idx.size())};
  for (int i = 0; i < first.ndim(); ++i) shape.push_back(first.dim(i));
  Tensor out = Tensor::zeros(shape);
  const size_t item = first.numel();
  for (size_t n = 0; n < idx.size(); ++n) {
    const auto& src = (mix ? ex[idx[n]].mix_bins : ex[idx[n]].input).value();
    std::memcpy(out.value().data() + n * item, src.data(), item * sizeof(double));
  }
  return out;
}

// Complex mixture bins of frames [t0, t0+frames), zero-extended, as a
// [2, frames, bins] tensor (true bins, no frequency padding).
Tensor mix_bins_slice(const Spectrogram& spec, int t0, int frames) {
  const int bins = spec.num_bins();
  const int valid = std::min(frames, spec.num_frames() - t0);
  Tensor out = Tensor::zeros({2, frames, bins});
  auto& v = out.value();
  const size_t plane = static_cast<size_t>(frames) * bins;
  for (int f = 0; f < valid; ++f)
    for (int b = 0; b < bins; ++b) {
      const std::complex<double> x = spec.bins(t0 + f, b);
      v[static_cast<size_t>(f) * bins + b] = x.real();
      v[plane + static_cast<size_t>(f) * bins + b] = x.imag();
    }
  return out;
}

std::vector<TrainExample> build_examples(const StemSet& track, const TrainConfig& cfg) {
  const Waveform mix_wave = {track.mixture, track.sample_rate};
  const Waveform stem_wave = {track.stem(cfg.stem), track.sample_rate};
  const Spectrogram mix_spec = stft(mix_wave, cfg.stft);
  const Spectrogram stem_spec = stft(stem_wave, cfg.stft);
  const int bins = mix_spec.num_bins();
  const long canon = cfg.stft.canonical_length(kPatchFrames);

  const ChannelMode mode =
      cfg.mask_type == "complex" ? ChannelMode::kComplex : ChannelMode::kMagnitude;
  std::vector<SpectroPatch> inputs = make_patches(mix_spec, mode);

  std::vector<TrainExample> out;
  for (const auto& patch : inputs) {
    TrainExample ex;
    ex.input = patch.data;
    ex.mix_bins = mix_bins_slice(mix_spec, patch.t0, kPatchFrames);

    ex.target_mag.assign(static_cast<size_t>(kPatchFrames) * bins, 0.0);
    Spectrogram slice;
    slice.params = cfg.stft;
    slice.bins = ComplexMat(kPatchFrames, bins);
    const int valid = std::min(kPatchFrames, stem_spec.num_frames() - patch.t0);
    for (int f = 0; f < valid; ++f)
      for (int b = 0; b < bins; ++b) {
        const std::complex<double> y = stem_spec.bins(patch.t0 + f, b);
        slice.bins(f, b) = y;
        ex.target_mag[static_cast<size_t>(f) * bins + b] = std::abs(y);
      }
    ex.target_wave = istft(slice, canon).samples;

    // The scale-free SDR loss is degenerate on a silent reference: the guard
    // pins the term to zero with zero gradient, so such patches only dilute
    // the batch mean. Mirror silent-reference exclusion from SDR evaluation.
    if (cfg.loss == "sdr") {
      double norm2 = 0.0;
      for (double v : ex.target_wave) norm2 += v * v;
      if (std::sqrt(norm2) <= kEpsGuard) continue;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

// Masked estimate [N,2,frames,bins] from a batch of network inputs.
Tensor estimate_bins(UNet& net, const Tensor& x, const Tensor& mix, const TrainConfig& cfg,
                     bool training, Rng* dropout_rng) {
  Tensor out = net.forward(x, training, dropout_rng);
  out = crop_hw(out, mix.dim(2), mix.dim(3));
  if (cfg.mask_type == "complex") return complex_mul(complex_mask_compress(out), mix);
  return real_mask_apply(sigmoid_op(out), mix);
}

Tensor batch_loss(UNet& net, const std::vector<TrainExample>& ex, const std::vector<size_t>& idx,
                  const TrainConfig& cfg, Rng& dropout_rng) {
  Tensor x = stack_examples(ex, idx, false);
  Tensor mix = stack_examples(ex, idx, true);
  Tensor est = estimate_bins(net, x, mix, cfg, true, &dropout_rng);

  Tensor mag_part, sdr_part;
  if (cfg.loss != "sdr") {
    std::vector<double> cat;
    for (size_t i : idx)
      cat.insert(cat.end(), ex[i].target_mag.begin(), ex[i].target_mag.end());
    mag_part = l1_loss_const(complex_magnitude(est), cat);
  }
  if (cfg.loss != "mag") {
    std::vector<std::vector<double>> waves;
    for (size_t i : idx) waves.push_back(ex[i].target_wave);
    const long canon = cfg.stft.canonical_length(kPatchFrames);
    sdr_part = sdr_loss_batch(istft_batch(est, cfg.stft, canon), waves);
  }
  if (cfg.loss == "mag") return mag_part;
  if (cfg.loss == "sdr") return sdr_part;
  return add(sdr_part, mag_part);
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  stft.validate();
  if (mask_type != "real" && mask_type != "complex")
    throw ParamError("train: mask type must be real or complex");
  if (loss != "mag" && loss != "sdr" && loss != "sdr+mag")
    throw ParamError("train: loss must be mag, sdr, or sdr+mag");
  if (model.in_channels != mask_channels())
    throw ParamError("train: in_channels must match the mask type (1 real, 2 complex)");
  if (stem.empty()) throw ParamError("train: stem name must not be empty");
  if (steps < 0) throw ParamError("train: steps must be non-negative");
  if (!(lr > 0.0)) throw ParamError("train: learning rate must be positive");
  if (batch_size < 1) throw ParamError("train: batch size must be positive");
  if (augment_multiplicity < 0) throw ParamError("train: augment multiplicity must be >= 0");
  if (val_every < 0) throw ParamError("train: val-every must be non-negative");
  if (data_dir.empty()) {
    if (synth_tracks < 1) throw ParamError("train: need at least one synthetic track");
    if (!(synth_duration > 0.0)) throw ParamError("train: synth duration must be positive");
  }
  if (kPatchFrames % model.downsample_factor() != 0 ||
      padded_bins_for(stft.num_bins()) % model.downsample_factor() != 0)
    throw ParamError("train: patch dims must divide by stride^depth");
}

CheckpointData model_to_checkpoint(UNet& net, const TrainConfig& cfg, long step) {
  CheckpointData data;
  auto& c = data.config;
  c["mask"] = cfg.mask_type;
  c["loss"] = cfg.loss;
  c["stem"] = cfg.stem;
  c["depth"] = std::to_string(cfg.model.depth);
  std::string ch;
  for (size_t i = 0; i < cfg.model.channels.size(); ++i) {
    if (i) ch += ',';
    ch += std::to_string(cfg.model.channels[i]);
  }
  c["channels"] = ch;
  c["in_channels"] = std::to_string(cfg.model.in_channels);
  c["kernel_size"] = std::to_string(cfg.model.kernel_size);
  c["stride"] = std::to_string(cfg.model.stride);
  c["leaky_slope"] = fmt_double(cfg.model.leaky_slope);
  c["dropout_p"] = fmt_double(cfg.model.dropout_p);
  c["dropout_layers"] = std::to_string(cfg.model.dropout_layers);
  c["window"] = std::to_string(cfg.stft.window_size);
  c["hop"] = std::to_string(cfg.stft.hop_size);
  c["sample_rate"] = fmt_double(cfg.stft.sample_rate);
  c["seed"] = std::to_string(cfg.seed);
  c["lr"] = fmt_double(cfg.lr);
  c["step"] = std::to_string(step);

  for (auto& [name, p] : net.named_parameters()) {
    TensorBlob blob;
    blob.name = name;
    for (int i = 0; i < p.ndim(); ++i) blob.dims.push_back(static_cast<uint32_t>(p.dim(i)));
    for (double v : p.value()) blob.data.push_back(static_cast<float>(v));
    data.tensors.push_back(std::move(blob));
  }
  for (auto& [name, buf] : net.named_buffers()) {
    TensorBlob blob;
    blob.name = name;
    blob.dims.push_back(static_cast<uint32_t>(buf->size()));
    for (double v : *buf) blob.data.push_back(static_cast<float>(v));
    data.tensors.push_back(std::move(blob));
  }
  return data;
}

LoadedModel model_from_checkpoint(const CheckpointData& data) {
  const auto& c = data.config;
  TrainConfig cfg;
  cfg.mask_type = require_key(c, "mask");
  cfg.loss = require_key(c, "loss");
  cfg.stem = require_key(c, "stem");
  cfg.model.depth = static_cast<int>(parse_long(require_key(c, "depth"), "depth"));
  cfg.model.channels.clear();
  {
    const std::string& ch = require_key(c, "channels");
    size_t pos = 0;
    while (pos <= ch.size()) {
      size_t comma = ch.find(',', pos);
      if (comma == std::string::npos) comma = ch.size();
      cfg.model.channels.push_back(
          static_cast<int>(parse_long(ch.substr(pos, comma - pos), "channels")));
      pos = comma + 1;
    }
  }
  cfg.model.in_channels = static_cast<int>(parse_long(require_key(c, "in_channels"), "in_channels"));
  cfg.model.kernel_size = static_cast<int>(parse_long(require_key(c, "kernel_size"), "kernel_size"));
  cfg.model.stride = static_cast<int>(parse_long(require_key(c, "stride"), "stride"));
  cfg.model.leaky_slope = parse_double(require_key(c, "leaky_slope"), "leaky_slope");
  cfg.model.dropout_p = parse_double(require_key(c, "dropout_p"), "dropout_p");
  cfg.model.dropout_layers =
      static_cast<int>(parse_long(require_key(c, "dropout_layers"), "dropout_layers"));
  cfg.stft.window_size = static_cast<int>(parse_long(require_key(c, "window"), "window"));
  cfg.stft.hop_size = static_cast<int>(parse_long(require_key(c, "hop"), "hop"));
  cfg.stft.sample_rate = parse_double(require_key(c, "sample_rate"), "sample_rate");
  cfg.seed = static_cast<uint64_t>(parse_long(require_key(c, "seed"), "seed"));
  cfg.lr = parse_double(require_key(c, "lr"), "lr");
  const long step = parse_long(require_key(c, "step"), "step");

  try {
    cfg.model.validate();
    cfg.stft.validate();
  } catch (const ParamError& e) {
    throw FormatError(std::string("checkpoint: invalid config: ") + e.what());
  }
  if (cfg.model.in_channels != cfg.mask_channels())
    throw FormatError("checkpoint: in_channels inconsistent with mask type");

  Rng init_rng(cfg.seed);
  LoadedModel loaded{cfg, step, UNet(cfg.model, init_rng)};

  std::map<std::string, const TensorBlob*> by_name;
  for (const auto& blob : data.tensors) {
    if (!by_name.emplace(blob.name, &blob).second)
      throw FormatError("checkpoint: duplicate tensor " + blob.name);
  }
  size_t used = 0;
  for (auto& [name, p] : loaded.net.named_parameters()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint: missing tensor " + name);
    const TensorBlob& blob = *it->second;
    if (static_cast<int>(blob.dims.size()) != p.ndim())
      throw FormatError("checkpoint: rank mismatch for " + name);
    for (int i = 0; i < p.ndim(); ++i)
      if (static_cast<int>(blob.dims[i]) != p.dim(i))
        throw FormatError("checkpoint: shape mismatch for " + name);
    auto& v = p.value();
    for (size_t j = 0; j < v.size(); ++j) v[j] = static_cast<double>(blob.data[j]);
    ++used;
  }
  for (auto& [name, buf] : loaded.net.named_buffers()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint: missing tensor " + name);
    const TensorBlob& blob = *it->second;
    if (blob.dims.size() != 1 || blob.dims[0] != buf->size())
      throw FormatError("checkpoint: shape mismatch for " + name);
    for (size_t j = 0; j < buf->size(); ++j) (*buf)[j] = static_cast<double>(blob.data[j]);
    ++used;
  }
  if (used != by_name.size()) throw FormatError("checkpoint: unexpected extra tensors");
  return loaded;
}

LoadedModel load_model(const std::string& path) {
  return model_from_checkpoint(load_checkpoint(path));
}

std::vector<double> separate_one(UNet& net, const TrainConfig& cfg,
                                 const std::vector<double>& mixture) {
  if (mixture.empty()) throw ParamError("separate: empty input");
  detail::NoGradGuard ng;

  const Spectrogram spec = stft({mixture, cfg.stft.sample_rate}, cfg.stft);
  const ChannelMode mode =
      cfg.mask_type == "complex" ? ChannelMode::kComplex : ChannelMode::kMagnitude;
  const SpectroPatch full = full_input(spec, mode, cfg.model.downsample_factor());

  Tensor x = add_batch_dim(full.data);
  Tensor mix = add_batch_dim(mix_bins_slice(spec, 0, spec.num_frames()));
  Tensor est = estimate_bins(net, x, mix, cfg, false, nullptr);

  Spectrogram est_spec;
  est_spec.params = cfg.stft;
  est_spec.bins = ComplexMat(spec.num_frames(), spec.num_bins());
  const auto& v = est.value();
  const size_t plane = static_cast<size_t>(spec.num_frames()) * spec.num_bins();
  for (int f = 0; f < spec.num_frames(); ++f)
    for (int b = 0; b < spec.num_bins(); ++b) {
      const size_t at = static_cast<size_t>(f) * spec.num_bins() + b;
      est_spec.bins(f, b) = {v[at], v[plane + at]};
    }
  return istft(est_spec, static_cast<long>(mixture.size())).samples;
}

std::vector<StemSet> load_dataset(const std::string& dir, double target_rate) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ParamError("dataset: not a directory: " + dir);

  std::vector<fs::path> tracks;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) tracks.push_back(entry.path());
  std::sort(tracks.begin(), tracks.end());
  if (tracks.empty()) throw ParamError("dataset: no track directories in " + dir);

  std::vector<StemSet> out;
  for (const auto& track : tracks) {
    std::string missing;
    for (const auto& name : stem_names()) {
      if (!fs::is_regular_file(track / (name + ".wav"))) {
        if (!missing.empty()) missing += ", ";
        missing += name + ".wav";
      }
    }
    if (!missing.empty())
      throw ParamError("dataset: track '" + track.filename().string() +
                       "' is missing stems: " + missing);

    StemSet set;
    set.names = stem_names();
    set.sample_rate = target_rate;
    size_t min_len = SIZE_MAX;
    for (const auto& name : set.names) {
      WavData wav = read_wav((track / (name + ".wav")).string());
      std::vector<double> samples = wav.sample_rate == target_rate
                                        ? std::move(wav.samples)
                                        : resample(wav.samples, wav.sample_rate, target_rate);
      min_len = std::min(min_len, samples.size());
      set.stems.push_back(std::move(samples));
    }
    // Rounding during rate conversion can leave lengths one sample apart.
    for (auto& s : set.stems) s.resize(min_len);
    set.remix();
    out.push_back(std::move(set));
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const std::string& checkpoint_path,
                  const std::string& log_csv_path, std::ostream* out) {
  cfg.validate();

  std::vector<StemSet> tracks;
  if (cfg.data_dir.empty()) {
    for (int t = 0; t < cfg.synth_tracks; ++t)
      tracks.push_back(synth_stems(cfg.seed + 1000003ull * t, cfg.synth_duration,
                                   cfg.stft.sample_rate));
  } else {
    tracks = load_dataset(cfg.data_dir, cfg.stft.sample_rate);
  }
  for (const auto& t : tracks) t.stem(cfg.stem);  // fails early if the stem is unknown

  Rng init_rng(cfg.seed);
  UNet net(cfg.model, init_rng);
  Adam opt(net.parameters(), cfg.lr);
  Rng sample_rng(cfg.seed + 2);
  Rng dropout_rng(cfg.seed + 3);

  const size_t variants = 1 + static_cast<size_t>(cfg.augment_multiplicity);
  const size_t num_items = tracks.size() * variants;
  std::map<size_t, std::vector<TrainExample>> cache;
  auto item_examples = [&](size_t item) -> const std::vector<TrainExample>& {
    auto it = cache.find(item);
    if (it != cache.end()) return it->second;
    const size_t t = item / variants, v = item % variants;
    if (v == 0) return cache.emplace(item, build_examples(tracks[t], cfg)).first->second;
    Rng spec_rng(cfg.seed ^ (0x51ed2701ull + 131 * t + v));
    AugmentSpec spec =
        AugmentSpec::random(spec_rng, tracks[t].stems.size(), cfg.stft.sample_rate);
    return cache.emplace(item, build_examples(augment(tracks[t], spec), cfg)).first->second;
  };

  std::ofstream csv(log_csv_path, std::ios::trunc);
  if (!csv) throw ParamError("train: cannot open log file: " + log_csv_path);
  csv << "step,loss,wall_ms\n";

  // Held-out synthetic track for periodic validation, never trained on.
  StemSet val_track;
  if (cfg.val_every > 0)
    val_track = synth_stems(cfg.seed + 999983ull, cfg.synth_duration, cfg.stft.sample_rate);

  TrainResult result;
  for (long step = 1; step <= cfg.steps; ++step) {
    size_t item = num_items == 1 ? 0 : static_cast<size_t>(sample_rng.uniform_int(
                                           0, static_cast<int>(num_items) - 1));
    // Items can come up empty when every patch target is silent; walk to the
    // next usable one deterministically.
    size_t probed = 0;
    while (item_examples(item).empty()) {
      if (++probed >= num_items)
        throw ParamError("train: no patch has a non-silent '" + cfg.stem + "' target");
      item = (item + 1) % num_items;
    }
    const auto& examples = item_examples(item);

    std::vector<size_t> idx;
    if (examples.size() <= static_cast<size_t>(cfg.batch_size)) {
      for (size_t i = 0; i < examples.size(); ++i) idx.push_back(i);
    } else {
      std::vector<size_t> pool(examples.size());
      for (size_t i = 0; i < pool.size(); ++i) pool[i] = i;
      for (int i = 0; i < cfg.batch_size; ++i) {
        const int j = sample_rng.uniform_int(i, static_cast<int>(pool.size()) - 1);
        std::swap(pool[i], pool[j]);
        idx.push_back(pool[i]);
      }
    }

    const auto t0 = std::chrono::steady_clock::now();
    opt.zero_grad();
    Tensor loss = batch_loss(net, examples, idx, cfg, dropout_rng);
    loss.backward();
    opt.step();
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    result.final_loss = loss.item();
    result.steps_run = step;
    csv << step << ',' << fmt_double(result.final_loss) << ',' << fmt_double(ms) << '\n';

    if (cfg.val_every > 0 && (step % cfg.val_every == 0 || step == cfg.steps)) {
      std::vector<double> est = separate_one(net, cfg, val_track.mixture);
      const double val = si_sdr_db(val_track.stem(cfg.stem), est);
      if (out) *out << "step=" << step << " val_si_sdr_db=" << fmt_double(val) << "\n";
    }
  }

  save_checkpoint(checkpoint_path, model_to_checkpoint(net, cfg, cfg.steps));
  return result;
}

}  // namespace cmask
