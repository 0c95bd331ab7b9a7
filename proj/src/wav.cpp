#include "asabf/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "asabf/errors.hpp"

namespace asabf {
namespace wav {

namespace {

void put_u32(std::vector<char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::vector<char>& buf, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

AudioBuffer read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF WAV file: " + path);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_len = get_u32(bytes.data() + pos + 4);
    const unsigned char* chunk = bytes.data() + pos + 8;
    if (pos + 8 + chunk_len > bytes.size()) {
      throw FormatError("truncated WAV chunk in " + path);
    }
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw FormatError("short fmt chunk in " + path);
      format = get_u16(chunk);
      channels = get_u16(chunk + 2);
      sample_rate = get_u32(chunk + 4);
      bits = get_u16(chunk + 14);
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      data = chunk;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len % 2);  // chunks are word-aligned
  }
  if (!data || channels == 0 || sample_rate == 0) {
    throw FormatError("missing fmt/data chunk in " + path);
  }

  AudioBuffer audio;
  audio.sample_rate = static_cast<double>(sample_rate);
  if (format == 3 && bits == 32) {
    const std::uint32_t n = data_len / 4 / channels;
    audio.samples.assign(channels, std::vector<double>(n));
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint16_t c = 0; c < channels; ++c) {
        float v;
        std::memcpy(&v, data + 4 * (i * channels + c), 4);
        audio.samples[c][i] = static_cast<double>(v);
      }
    }
  } else if (format == 1 && bits == 16) {
    const std::uint32_t n = data_len / 2 / channels;
    audio.samples.assign(channels, std::vector<double>(n));
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint16_t c = 0; c < channels; ++c) {
        std::int16_t v;
        std::memcpy(&v, data + 2 * (i * channels + c), 2);
        audio.samples[c][i] = static_cast<double>(v) / 32768.0;
      }
    }
  } else {
    throw FormatError("unsupported WAV encoding (need float32 or PCM16): " +
                      path);
  }
  return audio;
}

void write(const std::string& path, const AudioBuffer& audio) {
  audio.validate();
  const std::uint16_t channels = static_cast<std::uint16_t>(audio.channels());
  const std::uint32_t rate = static_cast<std::uint32_t>(audio.sample_rate);
  const std::uint32_t n = static_cast<std::uint32_t>(audio.num_samples());
  const std::uint32_t data_len = n * channels * 4;

  std::vector<char> buf;
  buf.reserve(44 + data_len);
  buf.insert(buf.end(), {'R', 'I', 'F', 'F'});
  put_u32(buf, 36 + data_len);
  buf.insert(buf.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(buf, 16);
  put_u16(buf, 3);  // IEEE float
  put_u16(buf, channels);
  put_u32(buf, rate);
  put_u32(buf, rate * channels * 4);
  put_u16(buf, channels * 4);
  put_u16(buf, 32);
  buf.insert(buf.end(), {'d', 'a', 't', 'a'});
  put_u32(buf, data_len);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint16_t c = 0; c < channels; ++c) {
      const float v = static_cast<float>(audio.samples[c][i]);
      char b[4];
      std::memcpy(b, &v, 4);
      buf.insert(buf.end(), b, b + 4);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace wav
}  // namespace asabf
