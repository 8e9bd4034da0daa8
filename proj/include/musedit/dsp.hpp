#pragma once

#include <vector>

#include "musedit/common.hpp"

namespace musedit {

// Magnitude STFT with a Hann window. Returns (nfft/2 + 1) x frames.
// Frames start at hop*i; the tail is zero-padded to a full window.
Mat stft_mag(const Vec& x, int nfft, int hop);

// Mean magnitude spectrum over the whole signal (nfft/2 + 1 bins).
Vec mean_spectrum(const Vec& x, int nfft);

// Triangular mel filterbank, rows = bands, cols = nfft/2 + 1 bins.
Mat mel_filterbank(int bands, int nfft, int sample_rate, double fmin, double fmax);

// log(1 + mel * scale) features, bands x frames.
Mat log_mel_frames(const Vec& x, int sample_rate, int bands, int nfft, int hop);

// 12-bin chroma vector from a magnitude spectrum (fold onto pitch classes).
Vec chroma_from_spectrum(const Vec& mag, int nfft, int sample_rate,
                         double fmin = 55.0, double fmax = 3500.0);

inline double midi_to_hz(double midi) { return 440.0 * std::pow(2.0, (midi - 69.0) / 12.0); }
inline double hz_to_midi(double hz) { return 69.0 + 12.0 * std::log2(hz / 440.0); }

}  // namespace musedit
