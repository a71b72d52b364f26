#include "viopose/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace viopose {
namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::vector<char>& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  std::memcpy(&v, p, 4);
  return v;
}
std::uint16_t get_u16(const char* p) {
  std::uint16_t v = 0;
  std::memcpy(&v, p, 2);
  return v;
}

}  // namespace

void write_wav(const std::string& path, const AudioClip& clip) {
  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = n * 4;
  std::vector<char> out;
  out.reserve(58 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 4 + 26 + 12 + 8 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  put_u32(out, 18);
  put_u16(out, 3);  // IEEE float
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 4);
  put_u16(out, 4);
  put_u16(out, 32);
  put_u16(out, 0);  // cbSize
  out.insert(out.end(), {'f', 'a', 'c', 't'});
  put_u32(out, 4);
  put_u32(out, n);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    const float f = static_cast<float>(s);
    std::uint32_t bits = 0;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("wav: cannot open for writing: " + path);
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("wav: write failed: " + path);
}

AudioClip read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("wav: cannot open: " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("wav: not a RIFF/WAVE file: " + path);
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const char* data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* id = buf.data() + pos;
    const std::uint32_t len = get_u32(buf.data() + pos + 4);
    const char* body = buf.data() + pos + 8;
    if (pos + 8 + len > buf.size()) break;
    if (std::memcmp(id, "fmt ", 4) == 0 && len >= 16) {
      format = get_u16(body);
      channels = get_u16(body + 2);
      sample_rate = get_u32(body + 4);
      bits = get_u16(body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = body;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (!data) throw std::runtime_error("wav: missing data chunk: " + path);
  if (channels != 1) throw std::runtime_error("wav: expected mono, got " + std::to_string(channels) + " channels");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);
  if (format == 3 && bits == 32) {
    const std::uint32_t n = data_len / 4;
    clip.samples.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      std::uint32_t raw = get_u32(data + 4ull * i);
      float f = 0;
      std::memcpy(&f, &raw, 4);
      clip.samples[i] = static_cast<double>(f);
    }
  } else if (format == 1 && bits == 16) {
    const std::uint32_t n = data_len / 2;
    clip.samples.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::int16_t v = static_cast<std::int16_t>(get_u16(data + 2ull * i));
      clip.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else {
    throw std::runtime_error("wav: unsupported format (want float32 or PCM16): " + path);
  }
  return clip;
}

}  // namespace viopose
