#pragma once

#include <string>

#include "musedit/common.hpp"

namespace musedit {

// Mono 16-bit PCM WAV. Samples are doubles in [-1, 1]; values outside are
// clipped at write time.
void write_wav(const std::string& path, const Vec& samples, int sample_rate);

struct WavData {
  Vec samples;
  int sample_rate = 0;
};

WavData read_wav(const std::string& path);

}  // namespace musedit
