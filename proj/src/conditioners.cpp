#include "musedit/conditioners.hpp"

#include <cmath>

#include "musedit/dsp.hpp"

#include <unsupported/Eigen/FFT>
#include "musedit/rng.hpp"

namespace musedit {

TextEncoder::TextEncoder(int dim, uint64_t seed) {
  const int vocab = Grammar::get().vocab_size();
  Rng rng(seed);
  table_.resize(dim, vocab);
  for (int c = 0; c < vocab; ++c)
    for (int r = 0; r < dim; ++r) table_(r, c) = rng.gaussian() / std::sqrt(dim);
}

TextEncoder::TextEncoder(Mat table) : table_(std::move(table)) {
  ME_CHECK(table_.cols() == Grammar::get().vocab_size(),
           "TextEncoder: table vocab mismatch");
}

TextEmb TextEncoder::encode(const std::string& instruction) const {
  return encode(parse_instruction(instruction));
}

TextEmb TextEncoder::encode(const EditTask& task) const {
  TextEmb e;
  e.token_ids = Grammar::get().tokenize(task);
  e.embeddings.resize(table_.rows(), static_cast<Eigen::Index>(e.token_ids.size()));
  for (size_t i = 0; i < e.token_ids.size(); ++i)
    e.embeddings.col(static_cast<Eigen::Index>(i)) = table_.col(e.token_ids[i]);
  return e;
}

std::vector<Chord> ChordMatrix::argmax_labels() const {
  std::vector<Chord> out;
  for (int c = 0; c < frames(); ++c) {
    Eigen::Index best;
    probs.col(c).maxCoeff(&best);
    out.push_back(Chord::from_class_index(static_cast<int>(best)));
  }
  return out;
}

nlohmann::json ChordMatrix::to_json() const {
  nlohmann::json labels = nlohmann::json::array();
  for (int i = 0; i < kChordClasses; ++i)
    labels.push_back(Chord::from_class_index(i).label());
  nlohmann::json cols = nlohmann::json::array();
  for (int c = 0; c < frames(); ++c) {
    nlohmann::json col = nlohmann::json::array();
    for (int r = 0; r < kChordClasses; ++r) col.push_back(probs(r, c));
    cols.push_back(col);
  }
  return {{"labels", labels}, {"frame_hop", frame_hop}, {"probs", cols}};
}

namespace {

// Harmonic-summation pitch salience folded to pitch classes. Sampling the
// spectrum only at semitone-grid harmonic positions keeps percussive noise
// and deliberately inharmonic partials out of the chroma.
Vec salience_chroma(const Vec& segment, int sample_rate, int nfft) {
  Eigen::FFT<double> fft;
  std::vector<double> buf(nfft, 0.0);
  const int n = std::min<int>(nfft, static_cast<int>(segment.size()));
  for (int i = 0; i < n; ++i)
    buf[i] = segment[i] * (0.5 - 0.5 * std::cos(2.0 * M_PI * i / n));
  std::vector<std::complex<double>> spec(nfft);
  fft.fwd(spec, buf);
  const int bins = nfft / 2 + 1;
  auto power_at = [&](double hz) {
    // peak power within +-2% of the target frequency
    const int lo = std::max(1, static_cast<int>(hz * 0.98 * nfft / sample_rate));
    const int hi = std::min(bins - 1, static_cast<int>(hz * 1.02 * nfft / sample_rate) + 1);
    double best = 0.0;
    for (int b = lo; b <= hi; ++b) best = std::max(best, std::norm(spec[b]));
    return best;
  };
  const double weights[5] = {1.0, 0.6, 0.4, 0.25, 0.15};
  Vec chroma = Vec::Zero(12);
  for (int midi = 36; midi <= 96; ++midi) {
    const double f0 = midi_to_hz(midi);
    double stack = 0.0;
    for (int h = 1; h <= 5; ++h) {
      const double fh = f0 * h;
      if (fh > 0.45 * sample_rate) break;
      stack += weights[h - 1] * power_at(fh);
    }
    // gate on the fundamental so subharmonic ghosts score zero
    const double sal = std::sqrt(power_at(f0) * stack);
    chroma[midi % 12] += sal;
  }
  return chroma;
}

}  // namespace

ChordMatrix extract_chords(const Vec& wave, int sample_rate,
                           const ChordExtractorConfig& cfg) {
  const int hop_samples = static_cast<int>(std::lround(cfg.hop * sample_rate));
  ME_CHECK(hop_samples > 0, "extract_chords: bad hop");
  ME_CHECK(wave.size() >= hop_samples,
           "extract_chords: waveform shorter than one chord frame");
  const int frames = static_cast<int>(wave.size()) / hop_samples;

  // 24 triads + uniform N, all unit norm
  Mat templates(12, kChordClasses);
  for (int i = 0; i < kChordClasses; ++i)
    templates.col(i) = Chord::from_class_index(i).chroma_template();

  ChordMatrix out;
  out.frame_hop = cfg.hop;
  out.probs.resize(kChordClasses, frames);
  for (int f = 0; f < frames; ++f) {
    Vec seg = wave.segment(static_cast<Eigen::Index>(f) * hop_samples, hop_samples);
    Vec chroma_pow = salience_chroma(seg, sample_rate, cfg.nfft);
    if (chroma_pow.sum() < cfg.silence_power) {
      out.probs.col(f).setZero();
      out.probs(24, f) = 1.0;  // N
      continue;
    }
    // mild compression keeps all triad tones comparable without flattening
    Vec chroma = chroma_pow.array().pow(0.7);
    chroma /= chroma.norm();
    Vec scores(kChordClasses);
    for (int i = 0; i < kChordClasses; ++i) scores[i] = chroma.dot(templates.col(i));
    scores[24] *= 0.85;  // N competes only when no triad stands out
    scores /= cfg.temperature;
    const double m = scores.maxCoeff();
    Vec e = (scores.array() - m).exp();
    out.probs.col(f) = e / e.sum();
  }
  return out;
}

std::vector<Chord> chords_at_hop(const std::vector<ChordSpan>& spans, double duration,
                                 double hop) {
  std::vector<Chord> out;
  const int frames = static_cast<int>(duration / hop + 1e-9);
  for (int f = 0; f < frames; ++f) {
    const double mid = (f + 0.5) * hop;
    Chord c = Chord::none();
    for (const auto& s : spans)
      if (mid >= s.start && mid < s.end) {
        c = s.chord;
        break;
      }
    out.push_back(c);
  }
  return out;
}

}  // namespace musedit
