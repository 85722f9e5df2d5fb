#pragma once

#include <map>
#include <string>
#include <vector>

#include "cmask/checkpoint.hpp"
#include "cmask/stft.hpp"
#include "cmask/synth.hpp"
#include "cmask/unet.hpp"

namespace cmask {

// Everything a training or inference run needs to be reproducible. The mask
// type fixes the network width: real masks see one |X| channel, complex masks
// see re/im channels.
struct TrainConfig {
  UNetConfig model;
  StftParams stft;
  std::string mask_type = "complex";  // real | complex
  std::string loss = "sdr";           // mag | sdr | sdr+mag
  std::string stem = "vocals";
  long steps = 500;
  double lr = 1e-3;
  uint64_t seed = 0;
  int batch_size = 16;
  int augment_multiplicity = 0;  // extra random variants per track
  long val_every = 100;          // 0 disables held-out validation
  std::string data_dir;          // empty: synthesize the training set
  int synth_tracks = 1;
  double synth_duration = 3.0;

  void validate() const;
  int mask_channels() const { return mask_type == "complex" ? 2 : 1; }
};

struct TrainResult {
  double final_loss = 0.0;
  long steps_run = 0;
};

// Runs the training loop and writes the checkpoint and a per-step CSV log
// (header step,loss,wall_ms). Deterministic given the config seed, except for
// the wall_ms column. Progress and validation lines go to `out` when given.
TrainResult train(const TrainConfig& cfg, const std::string& checkpoint_path,
                  const std::string& log_csv_path, std::ostream* out = nullptr);

// Checkpoint composition: config snapshot + every parameter and running
// statistic. Loading validates names and shapes against the rebuilt config
// and throws FormatError on any mismatch.
CheckpointData model_to_checkpoint(UNet& net, const TrainConfig& cfg, long step);

struct LoadedModel {
  TrainConfig cfg;
  long step = 0;
  UNet net;
};

LoadedModel model_from_checkpoint(const CheckpointData& data);
LoadedModel load_model(const std::string& path);

// Whole-signal separation: mask the full padded spectrogram in one eval-mode
// pass and invert. Output length equals input length.
std::vector<double> separate_one(UNet& net, const TrainConfig& cfg,
                                 const std::vector<double>& mixture);

// Dataset loading for `train` with on-disk data: each track is a directory
// holding one WAV per canonical stem. Missing stems raise ParamError naming
// every absent file. Files at other rates are resampled to the target rate.
std::vector<StemSet> load_dataset(const std::string& dir, double target_rate);

}  // namespace cmask
