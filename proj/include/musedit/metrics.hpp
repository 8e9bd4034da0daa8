#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "musedit/common.hpp"
#include "musedit/music.hpp"
#include "musedit/synth.hpp"

namespace musedit {

// ------------------------------------------------------------------ FAD

struct EmbeddingStats {
  Vec mu;
  Mat sigma;
  int64_t n = 0;
};

// Gaussian fit over frame-level embeddings (columns of `frames`).
EmbeddingStats embedding_stats(const Mat& frames);

// ||mu_t - mu_e||^2 + tr(St + Se - 2 sqrt(St Se)); matrix square roots via
// eigendecomposition with 1e-6 jitter, clamped at 0 against round-off.
double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b);

// Frame-level log-mel features used as the default FAD embedder.
Mat fad_embedding_frames(const Vec& wave, int sample_rate);

// ---------------------------------------------------------- IA / CRA

// |Te ∩ Tt| / max(|Te|, |Tt|); both empty counts as 1.
double instruction_accuracy(const std::set<std::string>& tags_e,
                            const std::set<std::string>& tags_t);

// Fraction of positions with equal argmax chord labels (truncate to the
// shorter sequence); throws on empty input.
double chord_accuracy(const std::vector<Chord>& a, const std::vector<Chord>& b);

// ------------------------------------------------- PCH / IOI / OA

struct DistributionPdf {
  Vec grid;      // 512 points
  Vec density;   // integrates to 1 on the grid
  bool empty_input = false;  // uniform fallback with a warning flag
};

// 12 pitch classes -> KDE-smoothed pdf (Scott's rule bandwidth).
DistributionPdf pch_distribution(const std::vector<NoteEvent>& notes);
// inter-onset intervals within a bar quantized to 32 classes -> pdf
DistributionPdf ioi_distribution(const std::vector<double>& onsets, double bar_duration);
// shared KDE machinery (exposed for the class-relabeling property test)
DistributionPdf kde_pdf(const std::vector<double>& samples, double lo_hint,
                        double hi_hint);

// integral of min(a, b); grids must match
double overlapped_area(const DistributionPdf& a, const DistributionPdf& b);

// ------------------------------------------ analyzers for generated audio

// spectral-flux onset detector; returns onset times in seconds
std::vector<double> detect_onsets(const Vec& wave, int sample_rate);
// spectral-peak (harmonic product) pitch tracking -> pseudo note events
std::vector<NoteEvent> detect_notes(const Vec& wave, int sample_rate);

// ------------------------------------------------------------- reports

struct TaskMetrics {
  double fad = 0.0;
  double ia = 0.0;
  double cra = 0.0;
  double pch_oa = 0.0;
  double ioi_oa = 0.0;
  int count = 0;
};

struct MetricReport {
  std::map<std::string, TaskMetrics> per_task;
  TaskMetrics average;
  std::string config_digest;
  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  std::string to_csv() const;
};

// One evaluation pair: edited audio vs. reference (target) audio with the
// reference clip's metadata for exact tags/chords/notes.
struct EvalPair {
  std::string task_kind;
  Vec edited;
  Vec target;
  int sample_rate = 8000;
  std::set<std::string> target_tags;
  std::vector<Chord> target_chords;          // at the extractor hop
  std::vector<NoteEvent> target_notes;       // pooled over stems
  double bar_duration = 1.0;
};

MetricReport evaluate_suite(const std::vector<EvalPair>& pairs);

}  // namespace musedit
