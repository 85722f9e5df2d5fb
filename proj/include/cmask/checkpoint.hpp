#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cmask {

// Container format for trained models:
//   "CMSK" | u32 version=1 | u32 config byte length | config text
//   | u32 tensor count | per tensor: u16 name length, name bytes,
//     u8 ndim, u32 dims[ndim], u8 dtype (0 = float32), raw values
// All integers little-endian; the config text is "key=value\n" lines with
// keys sorted. Values are stored as float32, so saving is lossy from the
// double-precision engine but save -> load -> save is byte-stable.

struct TensorBlob {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> data;
};

struct CheckpointData {
  std::map<std::string, std::string> config;  // ordered map keeps keys sorted
  std::vector<TensorBlob> tensors;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);

// Throws FormatError on malformed files and ParamError on unreadable paths.
CheckpointData load_checkpoint(const std::string& path);

}  // namespace cmask
