#include "cmask/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "cmask/errors.hpp"

namespace cmask {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;

uint16_t get_u16(const char* p) {
  return static_cast<uint16_t>(static_cast<uint8_t>(p[0]) |
                               (static_cast<uint8_t>(p[1]) << 8));
}

uint32_t get_u32(const char* p) {
  return static_cast<uint8_t>(p[0]) |
         (static_cast<uint32_t>(static_cast<uint8_t>(p[1])) << 8) |
         (static_cast<uint32_t>(static_cast<uint8_t>(p[2])) << 16) |
         (static_cast<uint32_t>(static_cast<uint8_t>(p[3])) << 24);
}

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

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParamError("wav: cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (buf.size() < 12 || buf.compare(0, 4, "RIFF") != 0 || buf.compare(8, 4, "WAVE") != 0)
    throw FormatError("wav: not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  const char* data = nullptr;
  size_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    std::string id = buf.substr(pos, 4);
    uint32_t size = get_u32(buf.data() + pos + 4);
    pos += 8;
    if (pos + size > buf.size()) throw FormatError("wav: truncated chunk: " + path);
    if (id == "fmt ") {
      if (size < 16) throw FormatError("wav: fmt chunk too small: " + path);
      format = get_u16(buf.data() + pos);
      channels = get_u16(buf.data() + pos + 2);
      rate = get_u32(buf.data() + pos + 4);
      bits = get_u16(buf.data() + pos + 14);
      have_fmt = true;
    } else if (id == "data") {
      data = buf.data() + pos;
      data_len = size;
    }
    pos += size + (size & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr) throw FormatError("wav: missing fmt or data chunk: " + path);
  if (channels != 1) throw FormatError("wav: only mono input is supported: " + path);
  if (rate == 0) throw FormatError("wav: zero sample rate: " + path);

  WavData out;
  out.sample_rate = static_cast<double>(rate);
  if (format == kFormatPcm && bits == 16) {
    size_t n = data_len / 2;
    out.samples.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      int16_t s = static_cast<int16_t>(get_u16(data + 2 * i));
      out.samples.push_back(static_cast<double>(s) / 32768.0);
    }
  } else if (format == kFormatFloat && bits == 32) {
    size_t n = data_len / 4;
    out.samples.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t word = get_u32(data + 4 * i);
      float v;
      std::memcpy(&v, &word, 4);
      out.samples.push_back(static_cast<double>(v));
    }
  } else {
    throw FormatError("wav: unsupported encoding (want PCM16 or float32): " + path);
  }
  return out;
}

void write_wav(const std::string& path, const std::vector<double>& samples, double sample_rate) {
  if (!(sample_rate > 0.0)) throw ParamError("wav: sample rate must be positive");
  const uint32_t rate = static_cast<uint32_t>(sample_rate);
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 4);

  std::string out;
  out += "RIFF";
  // fmt (18 bytes incl. cbSize, required for non-PCM) + fact + data
  put_u32(out, 4 + (8 + 18) + (8 + 4) + (8 + data_bytes));
  out += "WAVE";

  out += "fmt ";
  put_u32(out, 18);
  put_u16(out, kFormatFloat);
  put_u16(out, 1);  // mono
  put_u32(out, rate);
  put_u32(out, rate * 4);
  put_u16(out, 4);
  put_u16(out, 32);
  put_u16(out, 0);  // cbSize

  out += "fact";
  put_u32(out, 4);
  put_u32(out, static_cast<uint32_t>(samples.size()));

  out += "data";
  put_u32(out, data_bytes);
  for (double s : samples) {
    float v = static_cast<float>(s);
    uint32_t word;
    std::memcpy(&word, &v, 4);
    put_u32(out, word);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ParamError("wav: cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ParamError("wav: write failed: " + path);
}

}  // namespace cmask
