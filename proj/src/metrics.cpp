#include "musedit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "musedit/conditioners.hpp"
#include "musedit/dsp.hpp"

namespace musedit {

EmbeddingStats embedding_stats(const Mat& frames) {
  ME_CHECK(frames.cols() >= 2, "embedding_stats: need at least 2 samples");
  EmbeddingStats s;
  s.n = frames.cols();
  s.mu = frames.rowwise().mean();
  Mat centered = frames.colwise() - s.mu;
  s.sigma = centered * centered.transpose() / static_cast<double>(frames.cols() - 1);
  return s;
}

namespace {

Mat psd_sqrt(const Mat& m, double jitter) {
  Mat sym = 0.5 * (m + m.transpose());
  sym.diagonal().array() += jitter;
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  ME_CHECK(es.info() == Eigen::Success, "psd_sqrt: eigendecomposition failed");
  Vec ev = es.eigenvalues();
  ME_CHECK(ev.minCoeff() > -1e-4 * std::max(1.0, std::abs(ev.maxCoeff())),
           "psd_sqrt: matrix is not PSD beyond jitter tolerance");
  Vec root = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b) {
  ME_CHECK(a.mu.size() == b.mu.size(), "frechet_distance: dimension mismatch");
  constexpr double kJitter = 1e-6;
  const Mat sa = psd_sqrt(a.sigma, kJitter);
  // tr sqrt(Sa Sb) computed as tr sqrt(sqrt(Sa) Sb sqrt(Sa)) for symmetry
  const Mat inner = psd_sqrt(sa * b.sigma * sa, kJitter);
  const double d2 = (a.mu - b.mu).squaredNorm() + a.sigma.trace() + b.sigma.trace() -
                    2.0 * inner.trace();
  return std::max(0.0, d2);
}

Mat fad_embedding_frames(const Vec& wave, int sample_rate) {
  return log_mel_frames(wave, sample_rate, 64, 512, 128);
}

double instruction_accuracy(const std::set<std::string>& tags_e,
                            const std::set<std::string>& tags_t) {
  if (tags_e.empty() && tags_t.empty()) return 1.0;
  std::vector<std::string> inter;
  std::set_intersection(tags_e.begin(), tags_e.end(), tags_t.begin(), tags_t.end(),
                        std::back_inserter(inter));
  return static_cast<double>(inter.size()) /
         static_cast<double>(std::max(tags_e.size(), tags_t.size()));
}

double chord_accuracy(const std::vector<Chord>& a, const std::vector<Chord>& b) {
  ME_CHECK(!a.empty() && !b.empty(), "chord_accuracy: empty sequence");
  const size_t n = std::min(a.size(), b.size());
  int same = 0;
  for (size_t i = 0; i < n; ++i)
    if (a[i] == b[i]) ++same;
  return static_cast<double>(same) / static_cast<double>(n);
}

DistributionPdf kde_pdf(const std::vector<double>& samples, double lo_hint,
                        double hi_hint) {
  constexpr int kGrid = 512;
  DistributionPdf pdf;
  pdf.grid.resize(kGrid);
  pdf.density.resize(kGrid);
  if (samples.empty()) {
    pdf.empty_input = true;
    for (int i = 0; i < kGrid; ++i)
      pdf.grid[i] = lo_hint + (hi_hint - lo_hint) * i / (kGrid - 1);
    pdf.density.setConstant(1.0 / (hi_hint - lo_hint));
    // normalize exactly on the grid (trapezoid)
  } else {
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= n;
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= std::max(1.0, n - 1.0);
    // Scott's rule, clamped so degenerate samples still smooth
    double bw = std::max(0.25, std::sqrt(var) * std::pow(n, -0.2));
    const double lo = std::min(lo_hint, *std::min_element(samples.begin(), samples.end())) -
                      3.0 * bw;
    const double hi = std::max(hi_hint, *std::max_element(samples.begin(), samples.end())) +
                      3.0 * bw;
    for (int i = 0; i < kGrid; ++i)
      pdf.grid[i] = lo + (hi - lo) * i / (kGrid - 1);
    const double inv = 1.0 / (bw * std::sqrt(2.0 * M_PI));
    for (int i = 0; i < kGrid; ++i) {
      double acc = 0.0;
      for (double s : samples) {
        const double z = (pdf.grid[i] - s) / bw;
        acc += std::exp(-0.5 * z * z);
      }
      pdf.density[i] = acc * inv / n;
    }
  }
  // exact unit mass on the grid
  double mass = 0.0;
  for (int i = 0; i + 1 < kGrid; ++i)
    mass += 0.5 * (pdf.density[i] + pdf.density[i + 1]) * (pdf.grid[i + 1] - pdf.grid[i]);
  ME_CHECK(mass > 0.0, "kde_pdf: zero mass");
  pdf.density /= mass;
  return pdf;
}

DistributionPdf pch_distribution(const std::vector<NoteEvent>& notes) {
  std::vector<double> classes;
  for (const auto& n : notes) classes.push_back(static_cast<double>(n.pitch % 12));
  return kde_pdf(classes, 0.0, 11.0);
}

DistributionPdf ioi_distribution(const std::vector<double>& onsets, double bar_duration) {
  ME_CHECK(bar_duration > 0.0, "ioi_distribution: bad bar duration");
  std::vector<double> sorted = onsets;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> classes;
  for (size_t i = 1; i < sorted.size(); ++i) {
    const double ioi = sorted[i] - sorted[i - 1];
    if (ioi <= 1e-9) continue;  // simultaneous onsets (chords)
    int cls = static_cast<int>(ioi / bar_duration * 32.0);
    cls = std::clamp(cls, 0, 31);
    classes.push_back(static_cast<double>(cls));
  }
  return kde_pdf(classes, 0.0, 31.0);
}

double overlapped_area(const DistributionPdf& a, const DistributionPdf& b) {
  ME_CHECK(a.grid.size() == b.grid.size(), "overlapped_area: grid size mismatch");
  ME_CHECK((a.grid - b.grid).cwiseAbs().maxCoeff() < 1e-12,
           "overlapped_area: grids do not match");
  double oa = 0.0;
  for (int i = 0; i + 1 < a.grid.size(); ++i) {
    const double lo = std::min(a.density[i], b.density[i]);
    const double hi = std::min(a.density[i + 1], b.density[i + 1]);
    oa += 0.5 * (lo + hi) * (a.grid[i + 1] - a.grid[i]);
  }
  return std::clamp(oa, 0.0, 1.0);
}

// --------------------------------------------------------------- analyzers

std::vector<double> detect_onsets(const Vec& wave, int sample_rate) {
  const int nfft = 256, hop = 64;
  Mat mag = stft_mag(wave, nfft, hop);
  const int frames = static_cast<int>(mag.cols());
  if (frames < 3) return {};
  Vec flux = Vec::Zero(frames);
  for (int f = 1; f < frames; ++f)
    flux[f] = (mag.col(f) - mag.col(f - 1)).cwiseMax(0.0).sum();
  // adaptive threshold: local median + global floor
  const int half = 8;
  std::vector<double> onsets;
  const double floor_thr = 0.1 * flux.maxCoeff();
  const int min_sep = std::max(1, static_cast<int>(0.05 * sample_rate / hop));
  int last_pick = -1000;
  for (int f = 1; f + 1 < frames; ++f) {
    std::vector<double> win;
    for (int j = std::max(0, f - half); j < std::min(frames, f + half + 1); ++j)
      win.push_back(flux[j]);
    std::nth_element(win.begin(), win.begin() + win.size() / 2, win.end());
    const double med = win[win.size() / 2];
    if (flux[f] >= flux[f - 1] && flux[f] > flux[f + 1] &&
        flux[f] > 1.3 * med + 1e-9 && flux[f] > floor_thr && f - last_pick >= min_sep) {
      onsets.push_back(static_cast<double>(f) * hop / sample_rate);
      last_pick = f;
    }
  }
  return onsets;
}

namespace {

// harmonic product spectrum fundamental estimate for one frame
double hps_pitch_hz(const Vec& mag, int nfft, int sample_rate) {
  const int bins = static_cast<int>(mag.size());
  Vec hps = mag;
  for (int h = 2; h <= 3; ++h)
    for (int k = 0; k < bins; ++k) hps[k] *= (k * h < bins) ? mag[k * h] : 0.0;
  const double fmin = 50.0, fmax = 2500.0;
  int best = -1;
  double best_v = 0.0;
  for (int k = 1; k < bins; ++k) {
    const double f = static_cast<double>(k) * sample_rate / nfft;
    if (f < fmin || f > fmax) continue;
    if (hps[k] > best_v) {
      best_v = hps[k];
      best = k;
    }
  }
  if (best < 0) return 0.0;
  return static_cast<double>(best) * sample_rate / nfft;
}

}  // namespace

std::vector<NoteEvent> detect_notes(const Vec& wave, int sample_rate) {
  std::vector<double> onsets = detect_onsets(wave, sample_rate);
  std::vector<NoteEvent> notes;
  const double clip_dur = static_cast<double>(wave.size()) / sample_rate;
  for (size_t i = 0; i < onsets.size(); ++i) {
    const double start = onsets[i];
    const double end = i + 1 < onsets.size() ? onsets[i + 1] : clip_dur;
    const int s0 = static_cast<int>(start * sample_rate);
    const int n = std::min<int>(static_cast<int>((end - start) * sample_rate),
                                static_cast<int>(wave.size()) - s0);
    if (n < 64) continue;
    const int nfft = 2048;
    Vec seg = wave.segment(s0, n);
    Vec mag = mean_spectrum(seg, nfft);
    const double hz = hps_pitch_hz(mag, nfft, sample_rate);
    if (hz <= 0.0) continue;
    int midi = static_cast<int>(std::lround(hz_to_midi(hz)));
    midi = std::clamp(midi, 24, 96);
    notes.push_back({midi, start, std::max(1e-3, end - start), 0.8});
  }
  return notes;
}

// ----------------------------------------------------------------- reports

nlohmann::json MetricReport::to_json() const {
  auto task_json = [](const TaskMetrics& m) {
    return nlohmann::json{{"fad", m.fad},   {"instruction_acc", m.ia},
                          {"chord_acc", m.cra}, {"pch_oa", m.pch_oa},
                          {"ioi_oa", m.ioi_oa}, {"count", m.count}};
  };
  nlohmann::json tasks = nlohmann::json::object();
  for (const auto& [k, v] : per_task) tasks[k] = task_json(v);
  return {{"tasks", tasks}, {"average", task_json(average)},
          {"config_digest", config_digest}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  auto task_from = [](const nlohmann::json& t) {
    TaskMetrics m;
    m.fad = t["fad"].get<double>();
    m.ia = t["instruction_acc"].get<double>();
    m.cra = t["chord_acc"].get<double>();
    m.pch_oa = t["pch_oa"].get<double>();
    m.ioi_oa = t["ioi_oa"].get<double>();
    m.count = t["count"].get<int>();
    return m;
  };
  MetricReport r;
  for (const auto& [k, v] : j["tasks"].items()) r.per_task[k] = task_from(v);
  r.average = task_from(j["average"]);
  r.config_digest = j.value("config_digest", "");
  return r;
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "task,fad,instruction_acc,chord_acc,pch_oa,ioi_oa,count\n";
  auto row = [&](const std::string& name, const TaskMetrics& m) {
    os << name << "," << m.fad << "," << m.ia << "," << m.cra << "," << m.pch_oa << ","
       << m.ioi_oa << "," << m.count << "\n";
  };
  for (const auto& [k, v] : per_task) row(k, v);
  row("average", average);
  return os.str();
}

MetricReport evaluate_suite(const std::vector<EvalPair>& pairs) {
  ME_CHECK(!pairs.empty(), "evaluate_suite: no pairs");
  MetricReport report;
  std::map<std::string, std::vector<const EvalPair*>> by_task;
  for (const auto& p : pairs) {
    ME_CHECK(p.edited.size() > 0 && p.target.size() > 0,
             "evaluate_suite: unpaired or empty data");
    by_task[p.task_kind].push_back(&p);
  }

  double sum_fad = 0, sum_ia = 0, sum_cra = 0, sum_pch = 0, sum_ioi = 0;
  int total = 0;
  for (const auto& [kind, list] : by_task) {
    TaskMetrics m;
    m.count = static_cast<int>(list.size());
    // FAD over the whole task set (set-level statistics)
    std::vector<Mat> e_frames, t_frames;
    double ia = 0, cra = 0, pch = 0, ioi = 0;
    for (const EvalPair* p : list) {
      e_frames.push_back(fad_embedding_frames(p->edited, p->sample_rate));
      t_frames.push_back(fad_embedding_frames(p->target, p->sample_rate));
      ia += instruction_accuracy(oracle_tags(p->edited, p->sample_rate), p->target_tags);
      ChordMatrix cm = extract_chords(p->edited, p->sample_rate);
      cra += chord_accuracy(cm.argmax_labels(), p->target_chords);
      // per-bar OA of PCH and IOI between analyzer output and metadata
      std::vector<NoteEvent> e_notes = detect_notes(p->edited, p->sample_rate);
      const double dur = static_cast<double>(p->edited.size()) / p->sample_rate;
      const int bars = std::max(1, static_cast<int>(std::lround(dur / p->bar_duration)));
      double pch_bar = 0, ioi_bar = 0;
      for (int b = 0; b < bars; ++b) {
        const double b0 = b * p->bar_duration, b1 = (b + 1) * p->bar_duration;
        std::vector<NoteEvent> en, tn;
        std::vector<double> eo, to;
        for (const auto& n : e_notes)
          if (n.onset >= b0 && n.onset < b1) {
            en.push_back(n);
            eo.push_back(n.onset);
          }
        for (const auto& n : p->target_notes)
          if (n.onset >= b0 && n.onset < b1) {
            tn.push_back(n);
            to.push_back(n.onset);
          }
        pch_bar += overlapped_area(pch_distribution(en), pch_distribution(tn));
        ioi_bar += overlapped_area(ioi_distribution(eo, p->bar_duration),
                                   ioi_distribution(to, p->bar_duration));
      }
      pch += pch_bar / bars;
      ioi += ioi_bar / bars;
    }
    auto hcat = [](const std::vector<Mat>& mats) {
      Eigen::Index cols = 0;
      for (const auto& m : mats) cols += m.cols();
      Mat out(mats[0].rows(), cols);
      Eigen::Index c = 0;
      for (const auto& m : mats) {
        out.middleCols(c, m.cols()) = m;
        c += m.cols();
      }
      return out;
    };
    m.fad = frechet_distance(embedding_stats(hcat(t_frames)),
                             embedding_stats(hcat(e_frames)));
    m.ia = ia / m.count;
    m.cra = cra / m.count;
    m.pch_oa = pch / m.count;
    m.ioi_oa = ioi / m.count;
    report.per_task[kind] = m;
    sum_fad += m.fad * m.count;
    sum_ia += m.ia * m.count;
    sum_cra += m.cra * m.count;
    sum_pch += m.pch_oa * m.count;
    sum_ioi += m.ioi_oa * m.count;
    total += m.count;
  }
  report.average.count = total;
  report.average.fad = sum_fad / total;
  report.average.ia = sum_ia / total;
  report.average.cra = sum_cra / total;
  report.average.pch_oa = sum_pch / total;
  report.average.ioi_oa = sum_ioi / total;
  ME_CHECK(std::isfinite(report.average.fad + report.average.ia + report.average.cra +
                         report.average.pch_oa + report.average.ioi_oa),
           "evaluate_suite: non-finite metrics");
  return report;
}

}  // namespace musedit
