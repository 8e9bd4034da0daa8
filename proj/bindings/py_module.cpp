#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "musedit/chunk.hpp"
#include "musedit/conditioners.hpp"
#include "musedit/corpus_io.hpp"
#include "musedit/diffusion.hpp"
#include "musedit/editor.hpp"
#include "musedit/metrics.hpp"
#include "musedit/synth.hpp"
#include "musedit/trainers.hpp"
#include "musedit/wav.hpp"

namespace py = pybind11;
using namespace musedit;

namespace {

StemSet compose_by_name(const std::string& preset, double tempo, double duration,
                        uint64_t seed, int sample_rate) {
  return compose_clip(preset_by_name(preset), tempo, duration, seed, sample_rate);
}

py::dict task_to_dict(const EditTask& t) {
  py::dict d;
  d["kind"] = edit_kind_name(t.kind);
  d["instruments"] = t.instruments;
  d["genre"] = t.genre;
  return d;
}

EditTask task_from_dict(const py::dict& d) {
  EditTask t;
  t.kind = edit_kind_from_name(d["kind"].cast<std::string>());
  if (d.contains("instruments"))
    t.instruments = d["instruments"].cast<std::vector<std::string>>();
  if (d.contains("genre")) t.genre = d["genre"].cast<std::string>();
  return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "instruction-guided music editing core";

  py::register_exception<Error>(m, "MuseditError");

  // ---- synthetic corpus ----
  py::class_<NoteEvent>(m, "NoteEvent")
      .def(py::init<>())
      .def_readwrite("pitch", &NoteEvent::pitch)
      .def_readwrite("onset", &NoteEvent::onset)
      .def_readwrite("duration", &NoteEvent::duration)
      .def_readwrite("velocity", &NoteEvent::velocity);

  py::class_<StemSet>(m, "StemSet")
      .def_readonly("tempo", &StemSet::tempo)
      .def_readonly("genre", &StemSet::genre)
      .def_readonly("sample_rate", &StemSet::sample_rate)
      .def_readonly("duration", &StemSet::duration)
      .def_readonly("seed", &StemSet::seed)
      .def("stem_names", &StemSet::stem_names)
      .def("stem", [](const StemSet& s, const std::string& name) {
        auto it = s.stems.find(name);
        ME_CHECK(it != s.stems.end(), "no such stem: " + name);
        return it->second;
      })
      .def("notes", [](const StemSet& s, const std::string& name) {
        auto it = s.notes.find(name);
        ME_CHECK(it != s.notes.end(), "no such stem: " + name);
        return it->second;
      })
      .def("chord_labels", [](const StemSet& s) {
        std::vector<std::string> out;
        for (const auto& c : s.chord_labels()) out.push_back(c.label());
        return out;
      })
      .def("mix", &StemSet::mix)
      .def("mix_subset", &StemSet::mix_subset)
      .def("headroom_gain", &StemSet::headroom_gain);

  m.def("instrument_names", [] {
    std::vector<std::string> names;
    for (const auto& i : instrument_vocabulary()) names.push_back(i.name);
    return names;
  });
  m.def("genre_names", [] {
    std::vector<std::string> names;
    for (const auto& p : genre_presets()) names.push_back(p.name);
    return names;
  });
  m.def("compose_clip", &compose_by_name, py::arg("preset"), py::arg("tempo") = 120.0,
        py::arg("duration") = 1.0, py::arg("seed") = 0, py::arg("sample_rate") = 8000);
  m.def("render_stem",
        [](const std::string& instrument, const std::vector<NoteEvent>& notes,
           int sample_rate, double duration) {
          return render_stem(instrument_by_name(instrument), notes, sample_rate, duration);
        });
  m.def("oracle_tags",
        [](const Vec& wave, int sample_rate) {
          auto tags = oracle_tags(wave, sample_rate);
          return std::vector<std::string>(tags.begin(), tags.end());
        });
  m.def("template_energy", &template_energy);

  // ---- instructions ----
  m.def("format_instruction",
        [](const py::dict& d) { return format_instruction(task_from_dict(d)); });
  m.def("parse_instruction",
        [](const std::string& s) { return task_to_dict(parse_instruction(s)); });
  m.def("tokenize_instruction", [](const std::string& s) {
    return Grammar::get().tokenize(parse_instruction(s));
  });

  // ---- triplets ----
  m.def("make_add_remove", [](const StemSet& clip, uint64_t seed) {
    ClipRef ref{"py", &clip};
    auto [a, r] = make_add_remove(ref, seed);
    py::dict out;
    out["add_instruction"] = a.instruction;
    out["add_source"] = a.source;
    out["add_target"] = a.target;
    out["remove_instruction"] = r.instruction;
    out["remove_source"] = r.source;
    out["remove_target"] = r.target;
    return out;
  });

  // ---- conditioners ----
  m.def("extract_chords", [](const Vec& wave, int sample_rate) {
    ChordMatrix cm = extract_chords(wave, sample_rate);
    std::vector<std::string> labels;
    for (const auto& c : cm.argmax_labels()) labels.push_back(c.label());
    return py::make_tuple(labels, Mat(cm.probs));
  });

  // ---- chunk attention ----
  py::class_<AttentionCost>(m, "AttentionCost")
      .def_readonly("paper_chunk_ops", &AttentionCost::paper_chunk_ops)
      .def_readonly("full_ops", &AttentionCost::full_ops)
      .def_readonly("measured_score_elements", &AttentionCost::measured_score_elements)
      .def_readonly("chunk_count", &AttentionCost::chunk_count);
  m.def("attention_cost", &attention_cost, py::arg("T"), py::arg("K"));
  m.def("segment_offsets", [](int total_frames, int k) {
    return make_chunk_layout(total_frames, ChunkSpec{k}).offsets;
  });
  m.def("segment_fuse_roundtrip", [](const Mat& seq, int k) {
    ChunkLayout layout;
    auto chunks = segment(seq, ChunkSpec{k}, &layout);
    return fuse(chunks, layout);
  });

  // ---- diffusion math ----
  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_readonly("t_steps", &NoiseSchedule::t_steps)
      .def_readonly("beta", &NoiseSchedule::beta)
      .def_readonly("alpha", &NoiseSchedule::alpha)
      .def_readonly("alpha_bar", &NoiseSchedule::alpha_bar)
      .def("alpha_bar_at", &NoiseSchedule::alpha_bar_at);
  m.def("make_schedule", &make_schedule, py::arg("t_steps"), py::arg("beta_start") = 1e-4,
        py::arg("beta_end") = 0.02, py::arg("kind") = "linear");
  m.def("q_sample", &q_sample);
  m.def("ddim_timesteps", &ddim_timesteps);

  // ---- metrics ----
  m.def("frechet_distance_1d",
        [](double mu_a, double var_a, double mu_b, double var_b) {
          EmbeddingStats a, b;
          a.mu = Vec::Constant(1, mu_a);
          a.sigma = Mat::Constant(1, 1, var_a);
          a.n = 2;
          b.mu = Vec::Constant(1, mu_b);
          b.sigma = Mat::Constant(1, 1, var_b);
          b.n = 2;
          return frechet_distance(a, b);
        });
  m.def("instruction_accuracy",
        [](const std::vector<std::string>& e, const std::vector<std::string>& t) {
          return instruction_accuracy(std::set<std::string>(e.begin(), e.end()),
                                      std::set<std::string>(t.begin(), t.end()));
        });
  m.def("chord_accuracy",
        [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
          std::vector<Chord> ca, cb;
          for (const auto& s : a) ca.push_back(Chord::from_label(s));
          for (const auto& s : b) cb.push_back(Chord::from_label(s));
          return chord_accuracy(ca, cb);
        });
  m.def("overlapped_area_of_classes",
        [](const std::vector<double>& a, const std::vector<double>& b, double lo,
           double hi) {
          return overlapped_area(kde_pdf(a, lo, hi), kde_pdf(b, lo, hi));
        });

  // ---- io ----
  m.def("write_wav", &write_wav);
  m.def("read_wav", [](const std::string& path) {
    WavData w = read_wav(path);
    return py::make_tuple(w.samples, w.sample_rate);
  });
  m.def("save_clip", &save_clip);
  m.def("load_clip", &load_clip);

  // ---- editing with trained checkpoints ----
  py::class_<Editor>(m, "Editor")
      .def(py::init<const std::string&, const std::string&, const std::string&>(),
           py::arg("vae_checkpoint"), py::arg("diffusion_checkpoint"),
           py::arg("embedder_checkpoint") = "")
      .def("edit",
           [](const Editor& e, const Vec& source, int sample_rate,
              const std::string& instruction, double w, double s, int steps,
              uint64_t seed) {
             GuidanceConfig g;
             g.w = w;
             g.s = s;
             auto r = e.edit(source, sample_rate, instruction, g, steps, seed);
             return py::make_tuple(r.wave, r.provenance.dump());
           },
           py::arg("source"), py::arg("sample_rate"), py::arg("instruction"),
           py::arg("w") = 2.0, py::arg("s") = 0.0, py::arg("steps") = 50,
           py::arg("seed") = 0);
}
