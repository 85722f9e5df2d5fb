#include "cmask/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "cmask/errors.hpp"

namespace cmask {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'S', 'K'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kDtypeFloat32 = 0;

void put_u8(std::string& out, uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const std::string& buf) : buf_(buf) {}

  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf_[pos_++]);
  }

  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(static_cast<uint8_t>(buf_[pos_]) |
                                       (static_cast<uint8_t>(buf_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }

  uint32_t u32() {
    need(4);
    uint32_t v = static_cast<uint8_t>(buf_[pos_]) |
                 (static_cast<uint32_t>(static_cast<uint8_t>(buf_[pos_ + 1])) << 8) |
                 (static_cast<uint32_t>(static_cast<uint8_t>(buf_[pos_ + 2])) << 16) |
                 (static_cast<uint32_t>(static_cast<uint8_t>(buf_[pos_ + 3])) << 24);
    pos_ += 4;
    return v;
  }

  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string bytes(size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == buf_.size(); }

 private:
  void need(size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError("checkpoint: truncated file");
  }
  const std::string& buf_;
  size_t pos_ = 0;
};

std::string encode_config(const std::map<std::string, std::string>& config) {
  std::string text;
  for (const auto& [key, value] : config) {
    if (key.empty() || key.find('=') != std::string::npos ||
        key.find('\n') != std::string::npos || value.find('\n') != std::string::npos)
      throw ParamError("checkpoint: config keys/values must be single-line, '=' free keys");
    text += key;
    text += '=';
    text += value;
    text += '\n';
  }
  return text;
}

std::map<std::string, std::string> decode_config(const std::string& text) {
  std::map<std::string, std::string> config;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) throw FormatError("checkpoint: config line without newline");
    std::string line = text.substr(pos, eol - pos);
    size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw FormatError("checkpoint: malformed config line");
    config[line.substr(0, eq)] = line.substr(eq + 1);
    pos = eol + 1;
  }
  return config;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);

  std::string config = encode_config(data.config);
  put_u32(out, static_cast<uint32_t>(config.size()));
  out += config;

  put_u32(out, static_cast<uint32_t>(data.tensors.size()));
  for (const auto& t : data.tensors) {
    if (t.name.empty() || t.name.size() > 0xffff)
      throw ParamError("checkpoint: tensor name must be 1..65535 bytes");
    put_u16(out, static_cast<uint16_t>(t.name.size()));
    out += t.name;
    if (t.dims.size() > 0xff) throw ParamError("checkpoint: too many dims");
    put_u8(out, static_cast<uint8_t>(t.dims.size()));
    size_t numel = 1;
    for (uint32_t d : t.dims) {
      put_u32(out, d);
      numel *= d;
    }
    if (numel != t.data.size()) throw ParamError("checkpoint: dims do not match data size");
    put_u8(out, kDtypeFloat32);
    for (float v : t.data) put_f32(out, v);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ParamError("checkpoint: cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ParamError("checkpoint: write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParamError("checkpoint: cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r(buf);
  if (r.bytes(4) != std::string(kMagic, 4)) throw FormatError("checkpoint: bad magic");
  uint32_t version = r.u32();
  if (version != kVersion) throw FormatError("checkpoint: unsupported version");

  CheckpointData data;
  uint32_t config_len = r.u32();
  data.config = decode_config(r.bytes(config_len));

  uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    TensorBlob t;
    uint16_t name_len = r.u16();
    if (name_len == 0) throw FormatError("checkpoint: bad tensor name length");
    t.name = r.bytes(name_len);
    uint8_t ndim = r.u8();
    size_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      uint32_t dim = r.u32();
      if (dim == 0 || numel > std::numeric_limits<uint32_t>::max() / dim)
        throw FormatError("checkpoint: bad tensor dims");
      t.dims.push_back(dim);
      numel *= dim;
    }
    uint8_t dtype = r.u8();
    if (dtype != kDtypeFloat32) throw FormatError("checkpoint: unsupported dtype");
    t.data.resize(numel);
    for (size_t j = 0; j < numel; ++j) t.data[j] = r.f32();
    data.tensors.push_back(std::move(t));
  }
  if (!r.exhausted()) throw FormatError("checkpoint: trailing bytes");
  return data;
}

}  // namespace cmask
