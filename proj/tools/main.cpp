// Command-line front end: train, separate, oracle, evaluate, dump-mask, synth.
// Exit codes: 0 success, 2 usage or parameter error, 3 file-format error.

#include <cinttypes>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cmask/errors.hpp"
#include "cmask/masking.hpp"
#include "cmask/metrics.hpp"
#include "cmask/nn_ops.hpp"
#include "cmask/patches.hpp"
#include "cmask/resample.hpp"
#include "cmask/stft.hpp"
#include "cmask/synth.hpp"
#include "cmask/training.hpp"
#include "cmask/wav.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cmask;

namespace {

struct Shared {
  uint64_t seed = 0;
  double sample_rate = 22050.0;
  int window = 1024;
  int hop = 256;
};

void add_shared(CLI::App* cmd, Shared& s) {
  cmd->add_option("--seed", s.seed, "random seed");
  cmd->add_option("--sample-rate", s.sample_rate, "sample rate in Hz");
  cmd->add_option("--window", s.window, "analysis window size in samples");
  cmd->add_option("--hop", s.hop, "analysis hop size in samples");
  cmd->set_config("--config", "", "flat key=value config file; command-line flags win");
}

std::string fmt_db(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void print_metrics(const std::string& name, double sdr, double si_sdr, bool json) {
  if (json) {
    nlohmann::json j;
    j["sdr_db"] = sdr;
    j["si_sdr_db"] = si_sdr;
    std::cout << j.dump() << "\n";
  } else {
    std::cout << name << "\tSDR_dB=" << fmt_db(sdr) << "\tSI-SDR_dB=" << fmt_db(si_sdr) << "\n";
  }
}

WavData read_audio(const std::string& path) { return read_wav(path); }

// Mask planes of an eval-mode forward pass over the whole (padded) input,
// cropped back to the true frame/bin grid.
struct MaskPlanes {
  RealMat mag;            // frames x bins, [0, 1]
  RealMat phase;          // frames x bins, radians; all zero for real masks
  bool complex_mask = false;
};

MaskPlanes compute_mask(UNet& net, const TrainConfig& cfg, const Spectrogram& spec) {
  detail::NoGradGuard ng;
  const ChannelMode mode =
      cfg.mask_type == "complex" ? ChannelMode::kComplex : ChannelMode::kMagnitude;
  const SpectroPatch full = full_input(spec, mode, cfg.model.downsample_factor());

  std::vector<int> shape = {1};
  for (int i = 0; i < full.data.ndim(); ++i) shape.push_back(full.data.dim(i));
  Tensor x = Tensor::from_values(shape, full.data.value());
  Tensor out = net.forward(x, false);
  out = crop_hw(out, spec.num_frames(), spec.num_bins());

  MaskPlanes planes;
  planes.complex_mask = cfg.mask_type == "complex";
  planes.mag = RealMat(spec.num_frames(), spec.num_bins());
  planes.phase = RealMat(spec.num_frames(), spec.num_bins());
  const size_t plane = static_cast<size_t>(spec.num_frames()) * spec.num_bins();
  if (planes.complex_mask) {
    Tensor mask = complex_mask_compress(out);
    const auto& v = mask.value();
    for (int f = 0; f < spec.num_frames(); ++f)
      for (int b = 0; b < spec.num_bins(); ++b) {
        const size_t at = static_cast<size_t>(f) * spec.num_bins() + b;
        const std::complex<double> m(v[at], v[plane + at]);
        planes.mag(f, b) = std::abs(m);
        planes.phase(f, b) = m == 0.0 ? 0.0 : std::arg(m);
      }
  } else {
    Tensor mask = sigmoid_op(out);
    const auto& v = mask.value();
    for (int f = 0; f < spec.num_frames(); ++f)
      for (int b = 0; b < spec.num_bins(); ++b)
        planes.mag(f, b) = v[static_cast<size_t>(f) * spec.num_bins() + b];
  }
  return planes;
}

void write_pgm(const std::string& path, const RealMat& img, double full_scale) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParamError("cannot open for writing: " + path);
  out << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (int r = 0; r < img.rows(); ++r)
    for (int c = 0; c < img.cols(); ++c) {
      const double v = std::min(std::abs(img(r, c)) / full_scale, 1.0);
      out.put(static_cast<char>(std::lround(v * 255.0)));
    }
  if (!out) throw ParamError("write failed: " + path);
}

void write_csv_mat(const std::string& path, const RealMat& img) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParamError("cannot open for writing: " + path);
  out << "frame,bin,value\n";
  char buf[64];
  for (int r = 0; r < img.rows(); ++r)
    for (int c = 0; c < img.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", img(r, c));
      out << r << ',' << c << ',' << buf << '\n';
    }
  if (!out) throw ParamError("write failed: " + path);
}

void warn_model_params(const CLI::App* cmd) {
  for (const char* name : {"--window", "--hop", "--sample-rate"})
    if (cmd->count(name) > 0)
      std::cerr << "warning: " << name
                << " is ignored here; analysis parameters come from the checkpoint\n";
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  Shared shared;
  std::string loss = "sdr";
  std::string mask = "complex";
  int depth = 6;
  std::vector<int> channels;
  long steps = 500;
  double lr = 1e-3;
  int batch = 16;
  std::string stem = "vocals";
  std::string data;
  std::string out = "model.ckpt";
  std::string log = "train_log.csv";
  long val_every = 100;
  int augment = 0;
  int synth_tracks = 1;
  double synth_duration = 3.0;
  int kernel = 5;
  int stride = 2;
  double leaky = 0.2;
  double dropout = 0.5;
  int dropout_layers = 5;
};

void run_train(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.model.depth = a.depth;
  if (a.channels.empty()) {
    cfg.model.channels.clear();
    for (int i = 0; i < a.depth; ++i) cfg.model.channels.push_back(std::min(16 << i, 512));
  } else {
    cfg.model.channels = a.channels;
  }
  cfg.mask_type = a.mask;
  cfg.model.in_channels = cfg.mask_channels();
  cfg.model.kernel_size = a.kernel;
  cfg.model.stride = a.stride;
  cfg.model.leaky_slope = a.leaky;
  cfg.model.dropout_p = a.dropout;
  cfg.model.dropout_layers = a.dropout_layers;
  cfg.stft.window_size = a.shared.window;
  cfg.stft.hop_size = a.shared.hop;
  cfg.stft.sample_rate = a.shared.sample_rate;
  cfg.loss = a.loss;
  cfg.stem = a.stem;
  cfg.steps = a.steps;
  cfg.lr = a.lr;
  cfg.seed = a.shared.seed;
  cfg.batch_size = a.batch;
  cfg.augment_multiplicity = a.augment;
  cfg.val_every = a.val_every;
  cfg.data_dir = a.data;
  cfg.synth_tracks = a.synth_tracks;
  cfg.synth_duration = a.synth_duration;

  TrainResult res = train(cfg, a.out, a.log, &std::cout);
  std::cout << "checkpoint=" << a.out << " steps=" << res.steps_run;
  if (res.steps_run > 0) std::cout << " final_loss=" << res.final_loss;
  std::cout << "\n";
}

// ---- separate ---------------------------------------------------------------

struct SeparateArgs {
  Shared shared;
  std::string model;
  std::string manifest;
  std::string input;
  std::string outdir = ".";
};

std::vector<std::string> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParamError("cannot open manifest: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    const size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  if (out.empty()) throw FormatError("manifest lists no checkpoints: " + path);
  return out;
}

void run_separate(const SeparateArgs& a, const CLI::App* cmd) {
  warn_model_params(cmd);
  if (a.model.empty() == a.manifest.empty())
    throw ParamError("separate: give exactly one of --model or --manifest");

  std::vector<std::string> paths =
      a.model.empty() ? read_manifest(a.manifest) : std::vector<std::string>{a.model};

  std::vector<LoadedModel> models;
  for (const auto& p : paths) models.push_back(load_model(p));
  for (size_t i = 0; i < models.size(); ++i) {
    if (models[i].cfg.stem == "other")
      throw ParamError("separate: stem name 'other' is reserved for the residual");
    for (size_t j = i + 1; j < models.size(); ++j)
      if (models[i].cfg.stem == models[j].cfg.stem)
        throw ParamError("separate: two checkpoints target stem " + models[i].cfg.stem);
    if (models[i].cfg.stft.sample_rate != models[0].cfg.stft.sample_rate)
      throw ParamError("separate: checkpoints disagree on sample rate");
  }

  const WavData in = read_audio(a.input);
  const double model_rate = models[0].cfg.stft.sample_rate;
  std::vector<double> analysis = in.samples;
  const bool need_resample = in.sample_rate != model_rate;
  if (need_resample) {
    std::cerr << "warning: resampling input from " << in.sample_rate << " Hz to the model rate "
              << model_rate << " Hz\n";
    analysis = resample(in.samples, in.sample_rate, model_rate);
  }

  fs::create_directories(a.outdir);
  std::vector<double> residual = in.samples;
  for (auto& m : models) {
    std::vector<double> est = separate_one(m.net, m.cfg, analysis);
    if (need_resample) est = resample(est, model_rate, in.sample_rate);
    est.resize(in.samples.size(), 0.0);
    for (size_t i = 0; i < residual.size(); ++i) residual[i] -= est[i];
    write_wav((fs::path(a.outdir) / (m.cfg.stem + ".wav")).string(), est, in.sample_rate);
    std::cout << "wrote " << m.cfg.stem << ".wav\n";
  }
  write_wav((fs::path(a.outdir) / "other.wav").string(), residual, in.sample_rate);
  std::cout << "wrote other.wav (residual)\n";
}

// ---- oracle -----------------------------------------------------------------

struct OracleArgs {
  Shared shared;
  std::string mixture;
  std::string source;
  std::string mask_type;
  std::string out = "estimate.wav";
  double clip = 1.0;
  bool json = false;
};

void run_oracle(const OracleArgs& a) {
  const WavData mix = read_audio(a.mixture);
  const WavData src = read_audio(a.source);
  if (mix.sample_rate != src.sample_rate)
    throw ParamError("oracle: mixture and source sample rates differ");
  if (mix.samples.size() != src.samples.size())
    throw ParamError("oracle: mixture and source lengths differ");
  if (!(a.clip > 0.0)) throw ParamError("oracle: clip bound must be positive");

  StftParams p;
  p.window_size = a.shared.window;
  p.hop_size = a.shared.hop;
  p.sample_rate = mix.sample_rate;
  p.validate();

  const Spectrogram mix_spec = stft({mix.samples, mix.sample_rate}, p);
  const Spectrogram src_spec = stft({src.samples, src.sample_rate}, p);

  Spectrogram est_spec;
  if (a.mask_type == "irm") {
    est_spec = apply_real_mask(ideal_real_mask(src_spec, mix_spec), mix_spec);
  } else if (a.mask_type == "cirm") {
    est_spec = apply_complex_mask(
        ideal_complex_mask(src_spec, mix_spec, std::numeric_limits<double>::infinity()),
        mix_spec);
  } else if (a.mask_type == "cirm-clipped") {
    est_spec = apply_complex_mask(ideal_complex_mask(src_spec, mix_spec, a.clip), mix_spec);
  } else {
    throw ParamError("oracle: mask type must be irm, cirm, or cirm-clipped");
  }

  const Waveform est = istft(est_spec, static_cast<long>(mix.samples.size()));
  write_wav(a.out, est.samples, mix.sample_rate);
  print_metrics(a.mask_type, sdr_db(src.samples, est.samples),
                si_sdr_db(src.samples, est.samples), a.json);
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  Shared shared;
  std::string reference;
  std::string estimate;
  bool json = false;
};

void run_evaluate(const EvaluateArgs& a) {
  const WavData ref = read_audio(a.reference);
  const WavData est = read_audio(a.estimate);
  if (ref.sample_rate != est.sample_rate)
    throw ParamError("evaluate: reference and estimate sample rates differ");
  if (ref.samples.size() != est.samples.size())
    throw ParamError("evaluate: reference and estimate lengths differ");
  print_metrics(fs::path(a.estimate).stem().string(), sdr_db(ref.samples, est.samples),
                si_sdr_db(ref.samples, est.samples), a.json);
}

// ---- dump-mask --------------------------------------------------------------

struct DumpMaskArgs {
  Shared shared;
  std::string model;
  std::string input;
  std::string outdir = ".";
  std::string format = "pgm";
};

void run_dump_mask(const DumpMaskArgs& a, const CLI::App* cmd) {
  warn_model_params(cmd);
  if (a.format != "pgm" && a.format != "csv")
    throw ParamError("dump-mask: format must be pgm or csv");

  LoadedModel m = load_model(a.model);
  const WavData in = read_audio(a.input);
  std::vector<double> analysis = in.samples;
  if (in.sample_rate != m.cfg.stft.sample_rate) {
    std::cerr << "warning: resampling input from " << in.sample_rate << " Hz to the model rate "
              << m.cfg.stft.sample_rate << " Hz\n";
    analysis = resample(in.samples, in.sample_rate, m.cfg.stft.sample_rate);
  }

  const Spectrogram spec = stft({analysis, m.cfg.stft.sample_rate}, m.cfg.stft);
  MaskPlanes planes = compute_mask(m.net, m.cfg, spec);

  fs::create_directories(a.outdir);
  const std::string base = (fs::path(a.outdir) / (m.cfg.stem + "_mask_")).string();
  if (a.format == "pgm") {
    write_pgm(base + "mag.pgm", planes.mag, 1.0);
    write_pgm(base + "phase.pgm", planes.phase, M_PI);
  } else {
    write_csv_mat(base + "mag.csv", planes.mag);
    write_csv_mat(base + "phase.csv", planes.phase);
  }

  std::ofstream side(base + "sidecar.txt", std::ios::trunc);
  side << "mask dump for stem '" << m.cfg.stem << "'\n"
       << "frames=" << spec.num_frames() << " bins=" << spec.num_bins()
       << " window=" << m.cfg.stft.window_size << " hop=" << m.cfg.stft.hop_size
       << " sample_rate=" << m.cfg.stft.sample_rate << "\n"
       << "orientation: each raster/table row is one frame, first frame first;\n"
       << "columns are frequency bins ascending from bin 0 (DC) to the Nyquist bin.\n";
  if (a.format == "pgm") {
    side << "mag.pgm: binary P5, maxval 255, pixel = round(clamp(|mask|, 0, 1) * 255)\n"
         << "phase.pgm: binary P5, maxval 255, pixel = round(|phase| / pi * 255)\n";
  } else {
    side << "mag.csv / phase.csv: frame,bin,value rows; magnitude in [0, 1], phase in\n"
         << "signed radians.\n";
  }
  if (!planes.complex_mask)
    side << "real mask: the phase dump is all zeros; real masks never rotate phase.\n";
  std::cout << "wrote " << base << (a.format == "pgm" ? "{mag,phase}.pgm" : "{mag,phase}.csv")
            << " and " << base << "sidecar.txt\n";
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  Shared shared;
  std::string outdir = ".";
  double duration = 10.0;
};

void run_synth(const SynthArgs& a) {
  if (!(a.duration > 0.0)) throw ParamError("synth: duration must be positive");
  StemSet set = synth_stems(a.shared.seed, a.duration, a.shared.sample_rate);
  fs::create_directories(a.outdir);
  for (size_t i = 0; i < set.names.size(); ++i)
    write_wav((fs::path(a.outdir) / (set.names[i] + ".wav")).string(), set.stems[i],
              set.sample_rate);
  write_wav((fs::path(a.outdir) / "mixture.wav").string(), set.mixture, set.sample_rate);
  std::cout << "wrote " << set.names.size() << " stems and mixture.wav to " << a.outdir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-frequency source separation: spectral masking, oracles, and a trainable U-Net"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* t = app.add_subcommand("train", "train a single-stem separation model");
  add_shared(t, train_args.shared);
  t->add_option("--loss", train_args.loss, "training loss")
      ->check(CLI::IsMember({"mag", "sdr", "sdr+mag"}));
  t->add_option("--mask", train_args.mask, "mask family")
      ->check(CLI::IsMember({"real", "complex"}));
  t->add_option("--depth", train_args.depth, "number of encoder/decoder levels");
  t->add_option("--channels", train_args.channels, "encoder channels per level, comma separated")
      ->delimiter(',');
  t->add_option("--steps", train_args.steps, "optimizer steps");
  t->add_option("--lr", train_args.lr, "Adam learning rate");
  t->add_option("--batch", train_args.batch, "patches per step");
  t->add_option("--stem", train_args.stem, "target stem name");
  t->add_option("--data", train_args.data,
                "dataset directory (one subdirectory of stem WAVs per track); "
                "omitted: train on synthetic tracks");
  t->add_option("--out", train_args.out, "checkpoint output path");
  t->add_option("--log", train_args.log, "per-step CSV log path");
  t->add_option("--val-every", train_args.val_every, "validation interval in steps (0 disables)");
  t->add_option("--augment", train_args.augment, "random gain/EQ/speed variants per track");
  t->add_option("--synth-tracks", train_args.synth_tracks, "synthetic training tracks");
  t->add_option("--synth-duration", train_args.synth_duration, "synthetic track seconds");
  t->add_option("--kernel", train_args.kernel, "convolution kernel size");
  t->add_option("--stride", train_args.stride, "convolution stride");
  t->add_option("--leaky", train_args.leaky, "encoder LeakyReLU slope");
  t->add_option("--dropout", train_args.dropout, "decoder dropout probability");
  t->add_option("--dropout-layers", train_args.dropout_layers, "decoder layers with dropout");
  t->callback([&] { run_train(train_args); });

  SeparateArgs sep_args;
  CLI::App* s = app.add_subcommand("separate", "split a mixture with trained models");
  add_shared(s, sep_args.shared);
  s->add_option("--model", sep_args.model, "single checkpoint");
  s->add_option("--manifest", sep_args.manifest, "text file, one checkpoint path per line");
  s->add_option("--input", sep_args.input, "mixture WAV")->required();
  s->add_option("--outdir", sep_args.outdir, "output directory");
  s->callback([&] { run_separate(sep_args, s); });

  OracleArgs oracle_args;
  CLI::App* o = app.add_subcommand("oracle", "apply an ideal mask and report its quality");
  add_shared(o, oracle_args.shared);
  o->add_option("mixture", oracle_args.mixture, "mixture WAV")->required();
  o->add_option("source", oracle_args.source, "true source WAV")->required();
  o->add_option("--mask-type", oracle_args.mask_type, "irm | cirm | cirm-clipped")->required();
  o->add_option("--out", oracle_args.out, "estimate WAV path");
  o->add_option("--clip", oracle_args.clip, "modulus bound for cirm-clipped");
  o->add_flag("--json", oracle_args.json, "machine-readable metrics");
  o->callback([&] { run_oracle(oracle_args); });

  EvaluateArgs eval_args;
  CLI::App* e = app.add_subcommand("evaluate", "SDR / SI-SDR of an estimate against a reference");
  add_shared(e, eval_args.shared);
  e->add_option("reference", eval_args.reference, "reference WAV")->required();
  e->add_option("estimate", eval_args.estimate, "estimate WAV")->required();
  e->add_flag("--json", eval_args.json, "machine-readable metrics");
  e->callback([&] { run_evaluate(eval_args); });

  DumpMaskArgs dump_args;
  CLI::App* d = app.add_subcommand("dump-mask", "write a model's mask as PGM images or CSV");
  add_shared(d, dump_args.shared);
  d->add_option("--model", dump_args.model, "checkpoint")->required();
  d->add_option("--input", dump_args.input, "mixture WAV")->required();
  d->add_option("--outdir", dump_args.outdir, "output directory");
  d->add_option("--format", dump_args.format, "pgm | csv")
      ->check(CLI::IsMember({"pgm", "csv"}));
  d->callback([&] { run_dump_mask(dump_args, d); });

  SynthArgs synth_args;
  CLI::App* y = app.add_subcommand("synth", "write a synthetic five-stem track as WAVs");
  add_shared(y, synth_args.shared);
  y->add_option("--outdir", synth_args.outdir, "output directory");
  y->add_option("--duration", synth_args.duration, "track length in seconds");
  y->callback([&] { run_synth(synth_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  } catch (const ParamError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const FormatError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
