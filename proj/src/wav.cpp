#include "musedit/wav.hpp"

#include <cstdio>
#include <cstring>
#include <vector>

namespace musedit {

namespace {

void put_u32(std::vector<unsigned char>& b, uint32_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
  b.push_back((v >> 16) & 0xff);
  b.push_back((v >> 24) & 0xff);
}

void put_u16(std::vector<unsigned char>& b, uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}

uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (uint32_t(p[3]) << 24);
}

uint16_t get_u16(const unsigned char* p) { return p[0] | (p[1] << 8); }

}  // namespace

void write_wav(const std::string& path, const Vec& samples, int sample_rate) {
  ME_CHECK(sample_rate > 0, "write_wav: bad sample rate");
  const uint32_t n = static_cast<uint32_t>(samples.size());
  std::vector<unsigned char> b;
  b.reserve(44 + 2 * n);
  const char* riff = "RIFF";
  b.insert(b.end(), riff, riff + 4);
  put_u32(b, 36 + 2 * n);
  const char* wavefmt = "WAVEfmt ";
  b.insert(b.end(), wavefmt, wavefmt + 8);
  put_u32(b, 16);
  put_u16(b, 1);  // PCM
  put_u16(b, 1);  // mono
  put_u32(b, static_cast<uint32_t>(sample_rate));
  put_u32(b, static_cast<uint32_t>(sample_rate) * 2);
  put_u16(b, 2);
  put_u16(b, 16);
  const char* data = "data";
  b.insert(b.end(), data, data + 4);
  put_u32(b, 2 * n);
  for (uint32_t i = 0; i < n; ++i) {
    double x = samples[i];
    if (x > 1.0) x = 1.0;
    if (x < -1.0) x = -1.0;
    long q = lrint(x * 32767.0);
    int16_t s = static_cast<int16_t>(q);
    put_u16(b, static_cast<uint16_t>(s));
  }
  FILE* f = fopen(path.c_str(), "wb");
  ME_CHECK(f != nullptr, "write_wav: cannot open " + path);
  size_t written = fwrite(b.data(), 1, b.size(), f);
  fclose(f);
  ME_CHECK(written == b.size(), "write_wav: short write to " + path);
}

WavData read_wav(const std::string& path) {
  FILE* f = fopen(path.c_str(), "rb");
  ME_CHECK(f != nullptr, "read_wav: cannot open " + path);
  fseek(f, 0, SEEK_END);
  long sz = ftell(f);
  fseek(f, 0, SEEK_SET);
  std::vector<unsigned char> b(static_cast<size_t>(sz));
  size_t got = fread(b.data(), 1, b.size(), f);
  fclose(f);
  ME_CHECK(got == b.size() && sz >= 44, "read_wav: truncated file " + path);
  ME_CHECK(memcmp(b.data(), "RIFF", 4) == 0 && memcmp(b.data() + 8, "WAVE", 4) == 0,
           "read_wav: not a RIFF/WAVE file: " + path);

  WavData out;
  size_t pos = 12;
  int bits = 0, channels = 0;
  bool have_fmt = false;
  while (pos + 8 <= b.size()) {
    char id[5] = {0};
    memcpy(id, &b[pos], 4);
    uint32_t len = get_u32(&b[pos + 4]);
    pos += 8;
    if (strncmp(id, "fmt ", 4) == 0) {
      ME_CHECK(len >= 16 && pos + 16 <= b.size(), "read_wav: bad fmt chunk");
      uint16_t fmt = get_u16(&b[pos]);
      channels = get_u16(&b[pos + 2]);
      out.sample_rate = static_cast<int>(get_u32(&b[pos + 4]));
      bits = get_u16(&b[pos + 14]);
      ME_CHECK(fmt == 1, "read_wav: only PCM supported");
      have_fmt = true;
    } else if (strncmp(id, "data", 4) == 0) {
      ME_CHECK(have_fmt, "read_wav: data before fmt");
      ME_CHECK(bits == 16 && channels == 1, "read_wav: only mono 16-bit supported");
      ME_CHECK(pos + len <= b.size(), "read_wav: data chunk overruns file");
      size_t n = len / 2;
      out.samples.resize(static_cast<Eigen::Index>(n));
      for (size_t i = 0; i < n; ++i) {
        int16_t s = static_cast<int16_t>(get_u16(&b[pos + 2 * i]));
        out.samples[static_cast<Eigen::Index>(i)] = s / 32767.0;
      }
      return out;
    }
    pos += len + (len & 1);
  }
  throw Error("read_wav: no data chunk in " + path);
}

}  // namespace musedit
