#include "musedit/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>

namespace musedit {

Mat stft_mag(const Vec& x, int nfft, int hop) {
  ME_CHECK(nfft > 0 && hop > 0, "stft: bad nfft/hop");
  const int n = static_cast<int>(x.size());
  const int frames = n <= 0 ? 0 : (n + hop - 1) / hop;
  Mat out(nfft / 2 + 1, std::max(frames, 0));
  Eigen::FFT<double> fft;
  std::vector<double> win(nfft);
  for (int i = 0; i < nfft; ++i)
    win[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / nfft);
  std::vector<double> buf(nfft);
  std::vector<std::complex<double>> spec(nfft);
  for (int fr = 0; fr < frames; ++fr) {
    const int start = fr * hop;
    for (int i = 0; i < nfft; ++i) {
      const int idx = start + i;
      buf[i] = (idx < n ? x[idx] : 0.0) * win[i];
    }
    fft.fwd(spec, buf);
    for (int b = 0; b <= nfft / 2; ++b) out(b, fr) = std::abs(spec[b]);
  }
  return out;
}

Vec mean_spectrum(const Vec& x, int nfft) {
  Mat m = stft_mag(x, nfft, nfft / 2);
  if (m.cols() == 0) return Vec::Zero(nfft / 2 + 1);
  return m.rowwise().mean();
}

Mat mel_filterbank(int bands, int nfft, int sample_rate, double fmin, double fmax) {
  auto hz_to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto mel_to_hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };
  const int bins = nfft / 2 + 1;
  Mat fb = Mat::Zero(bands, bins);
  const double mlo = hz_to_mel(fmin), mhi = hz_to_mel(fmax);
  std::vector<double> centers(bands + 2);
  for (int i = 0; i < bands + 2; ++i)
    centers[i] = mel_to_hz(mlo + (mhi - mlo) * i / (bands + 1));
  for (int b = 0; b < bands; ++b) {
    const double lo = centers[b], mid = centers[b + 1], hi = centers[b + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / nfft;
      if (f <= lo || f >= hi) continue;
      fb(b, k) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

Mat log_mel_frames(const Vec& x, int sample_rate, int bands, int nfft, int hop) {
  Mat mag = stft_mag(x, nfft, hop);
  Mat fb = mel_filterbank(bands, nfft, sample_rate, 40.0, 0.475 * sample_rate);
  Mat mel = fb * mag;
  return (1.0 + 1000.0 * mel.array()).log().matrix();
}

Vec chroma_from_spectrum(const Vec& mag, int nfft, int sample_rate, double fmin,
                         double fmax) {
  Vec chroma = Vec::Zero(12);
  const int bins = static_cast<int>(mag.size());
  for (int k = 1; k < bins; ++k) {
    const double f = static_cast<double>(k) * sample_rate / nfft;
    if (f < fmin || f > fmax) continue;
    const double midi = hz_to_midi(f);
    int pc = static_cast<int>(std::lround(midi)) % 12;
    if (pc < 0) pc += 12;
    // energy-weighted to favor strong partials over noise floor
    chroma[pc] += mag[k] * mag[k];
  }
  return chroma;
}

}  // namespace musedit
