// Command-line surface: corpus synthesis, triplet generation, training,
// editing, multi-round editing, evaluation, attention benchmarking.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "musedit/checkpoint.hpp"
#include "musedit/chunk.hpp"
#include "musedit/conditioners.hpp"
#include "musedit/corpus_io.hpp"
#include "musedit/editor.hpp"
#include "musedit/metrics.hpp"
#include "musedit/svg_plot.hpp"
#include "musedit/trainers.hpp"
#include "musedit/wav.hpp"

namespace fs = std::filesystem;
using namespace musedit;
using nlohmann::json;

namespace {

std::string data_root() {
  const char* env = std::getenv("MUSEDIT_DATA_ROOT");
  return env ? env : "data";
}

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  ME_CHECK(f.good(), "cannot open config file " + path);
  return json::parse(f);
}

json section(const json& cfg, const std::string& name) {
  return cfg.contains(name) ? cfg[name] : json::object();
}

std::vector<TripletRecord> manifest_for_split(const std::string& corpus,
                                              const std::string& out_dir, Split split,
                                              int count, uint64_t seed,
                                              const TaskMix& mix) {
  std::vector<std::string> ids;
  for (const auto& id : list_clip_ids(corpus))
    if (clip_split(id) == split) ids.push_back(id);
  ME_CHECK(!ids.empty(), "no clips in split " + split_name(split));
  TripletGenConfig tc;
  tc.count = count;
  tc.seed = seed;
  tc.mix = mix;
  auto records = generate_triplets(corpus, ids, tc, out_dir);
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), records);
  return records;
}

EvalPair eval_pair_from_record(const TripletRecord& rec, const std::string& base_dir,
                               const std::string& corpus, const Vec& edited) {
  EditTriplet t = load_triplet(rec, base_dir);
  StemSet target_clip = load_clip(corpus, rec.target_clip);
  EvalPair p;
  p.task_kind = edit_kind_name(rec.task.kind);
  p.edited = edited;
  p.target = t.target;
  p.sample_rate = rec.sample_rate;
  p.target_tags = std::set<std::string>(rec.target_stems.begin(), rec.target_stems.end());
  p.target_chords = chords_at_hop(target_clip.chords, target_clip.duration);
  for (const auto& name : rec.target_stems) {
    const auto& notes = target_clip.notes.at(name);
    p.target_notes.insert(p.target_notes.end(), notes.begin(), notes.end());
  }
  p.bar_duration = target_clip.bar_duration();
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"instruction-guided music editing toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its values");

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate the synthetic stem corpus");
  std::string synth_out = data_root();
  SynthConfig synth_cfg;
  synth->add_option("--out", synth_out, "corpus root directory");
  synth->add_option("--clips", synth_cfg.count, "number of clips");
  synth->add_option("--seed", synth_cfg.seed, "corpus seed");
  synth->add_option("--duration", synth_cfg.duration, "clip seconds (whole bars)");
  synth->add_option("--tempo", synth_cfg.tempo, "tempo in BPM");
  synth->add_option("--sample-rate", synth_cfg.sample_rate, "sample rate in Hz");

  // ---- triplets ----
  auto* triplets = app.add_subcommand("triplets", "build edit triplets + manifest");
  std::string tri_corpus = data_root();
  std::string tri_out;
  std::string tri_split = "train";
  std::string tri_mix;
  int tri_count = 1000;
  uint64_t tri_seed = 11;
  triplets->add_option("--corpus", tri_corpus, "corpus root");
  triplets->add_option("--out", tri_out, "output directory");
  triplets->add_option("--split", tri_split, "train|val|test");
  triplets->add_option("--count", tri_count, "triplet count");
  triplets->add_option("--seed", tri_seed, "seed");
  triplets->add_option("--mix", tri_mix,
                       "task mix remix,add,replace,extract,remove (default 5,1.5,1.5,1,1)");

  // ---- train-vae ----
  auto* tvae = app.add_subcommand("train-vae", "train the waveform VAE");
  std::string tvae_corpus = data_root(), tvae_out, tvae_resume;
  VaeTrainConfig vae_cfg;
  int tvae_steps = -1, tvae_batch = -1, tvae_warmup = -1, tvae_min_clips = -1;
  double tvae_lr = -1;
  uint64_t tvae_seed = 0;
  bool tvae_seed_set = false;
  tvae->add_option("--corpus", tvae_corpus, "corpus root");
  tvae->add_option("--out", tvae_out, "run directory");
  tvae->add_option("--steps", tvae_steps, "training steps");
  tvae->add_option("--batch", tvae_batch, "batch size");
  tvae->add_option("--lr", tvae_lr, "learning rate");
  tvae->add_option("--adv-warmup", tvae_warmup, "steps before the adversarial term");
  tvae->add_option("--min-clips", tvae_min_clips, "required corpus size");
  tvae->add_option("--resume", tvae_resume, "checkpoint to resume from");
  tvae->add_option("--seed", tvae_seed, "seed")->each([&](const std::string&) {
    tvae_seed_set = true;
  });

  // ---- train-diffusion ----
  auto* tdiff = app.add_subcommand("train-diffusion", "train the latent editor");
  std::string tdiff_triplets, tdiff_val, tdiff_vae, tdiff_out, tdiff_resume;
  DiffusionTrainConfig diff_cfg;
  int tdiff_steps = -1, tdiff_batch = -1;
  double tdiff_lr = -1, tdiff_pcfg = -1;
  bool tdiff_no_chord = false;
  uint64_t tdiff_seed = 0;
  bool tdiff_seed_set = false;
  tdiff->add_option("--triplets", tdiff_triplets, "train triplet dir (with manifest.jsonl)")
      ->required();
  tdiff->add_option("--val-triplets", tdiff_val, "val triplet dir")->required();
  tdiff->add_option("--vae", tdiff_vae, "VAE checkpoint")->required();
  tdiff->add_option("--out", tdiff_out, "run directory");
  tdiff->add_option("--steps", tdiff_steps, "training steps");
  tdiff->add_option("--batch", tdiff_batch, "batch size");
  tdiff->add_option("--lr", tdiff_lr, "learning rate");
  tdiff->add_option("--p-cfg", tdiff_pcfg, "text condition drop probability");
  tdiff->add_flag("--no-chord", tdiff_no_chord, "disable chord conditioning (ablation)");
  tdiff->add_option("--resume", tdiff_resume, "checkpoint to resume from");
  tdiff->add_option("--seed", tdiff_seed, "seed")->each([&](const std::string&) {
    tdiff_seed_set = true;
  });

  // ---- train-embedder ----
  auto* temb = app.add_subcommand("train-embedder", "train the joint text-audio embedder");
  std::string temb_triplets, temb_val, temb_vae, temb_out;
  EmbedderTrainConfig emb_cfg;
  int temb_steps = -1, temb_batch = -1;
  double temb_lr = -1;
  temb->add_option("--triplets", temb_triplets, "train triplet dir")->required();
  temb->add_option("--val-triplets", temb_val, "val triplet dir")->required();
  temb->add_option("--vae", temb_vae, "VAE checkpoint")->required();
  temb->add_option("--out", temb_out, "run directory");
  temb->add_option("--steps", temb_steps, "training steps");
  temb->add_option("--batch", temb_batch, "batch size");
  temb->add_option("--lr", temb_lr, "learning rate");

  // ---- edit ----
  auto* edit = app.add_subcommand("edit", "apply one instruction to a WAV");
  std::string edit_src, edit_out, edit_instr, edit_vae, edit_diff, edit_emb;
  GuidanceConfig edit_g;
  int edit_steps = 50;
  uint64_t edit_seed = 0;
  edit->add_option("--source", edit_src, "source WAV")->required();
  edit->add_option("--instruction", edit_instr, "edit instruction")->required();
  edit->add_option("--out", edit_out, "output WAV")->required();
  edit->add_option("--vae", edit_vae, "VAE checkpoint")->required();
  edit->add_option("--diffusion", edit_diff, "diffusion checkpoint")->required();
  edit->add_option("--embedder", edit_emb, "embedder checkpoint (needed when s != 0)");
  edit->add_option("--w", edit_g.w, "CFG weight");
  edit->add_option("--s", edit_g.s, "CG scale (signed)");
  edit->add_option("--cg-stride", edit_g.cg_stride, "apply CG every n-th step");
  edit->add_option("--steps", edit_steps, "DDIM steps");
  edit->add_option("--seed", edit_seed, "sampling seed");

  // ---- multiround ----
  auto* mr = app.add_subcommand("multiround", "chain edits, report per round");
  std::string mr_src, mr_out, mr_instr, mr_vae, mr_diff, mr_emb;
  GuidanceConfig mr_g;
  int mr_steps = 50;
  uint64_t mr_seed = 0;
  mr->add_option("--source", mr_src, "source WAV")->required();
  mr->add_option("--instructions", mr_instr, "semicolon-separated instructions")
      ->required();
  mr->add_option("--out", mr_out, "output directory")->required();
  mr->add_option("--vae", mr_vae, "VAE checkpoint")->required();
  mr->add_option("--diffusion", mr_diff, "diffusion checkpoint")->required();
  mr->add_option("--embedder", mr_emb, "embedder checkpoint");
  mr->add_option("--w", mr_g.w, "CFG weight");
  mr->add_option("--s", mr_g.s, "CG scale");
  mr->add_option("--steps", mr_steps, "DDIM steps");
  mr->add_option("--seed", mr_seed, "sampling seed");

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "run the metric suite over a manifest");
  std::string ev_triplets, ev_corpus = data_root(), ev_vae, ev_diff, ev_emb, ev_out;
  GuidanceConfig ev_g;
  int ev_steps = 50, ev_limit = 0;
  uint64_t ev_seed = 0;
  bool ev_self = false;
  ev->add_option("--triplets", ev_triplets, "triplet dir with manifest.jsonl")->required();
  ev->add_option("--corpus", ev_corpus, "corpus root (for ground-truth metadata)");
  ev->add_option("--vae", ev_vae, "VAE checkpoint");
  ev->add_option("--diffusion", ev_diff, "diffusion checkpoint");
  ev->add_option("--embedder", ev_emb, "embedder checkpoint");
  ev->add_option("--out", ev_out, "report directory")->required();
  ev->add_option("--w", ev_g.w, "CFG weight");
  ev->add_option("--s", ev_g.s, "CG scale");
  ev->add_option("--steps", ev_steps, "DDIM steps");
  ev->add_option("--seed", ev_seed, "sampling seed");
  ev->add_option("--limit", ev_limit, "evaluate at most this many triplets (0 = all)");
  ev->add_flag("--self", ev_self, "self-evaluation: edited := target (sanity mode)");

  // ---- bench-attn ----
  auto* bench = app.add_subcommand("bench-attn", "chunk attention cost benchmark");
  std::vector<int> bench_T{64, 128, 256, 512, 1024};
  std::vector<int> bench_K{16};
  std::string bench_out = "bench_attn";
  int bench_dim = 32, bench_reps = 3;
  bench->add_option("--T", bench_T, "sequence lengths");
  bench->add_option("--K", bench_K, "chunk lengths");
  bench->add_option("--dim", bench_dim, "model width");
  bench->add_option("--reps", bench_reps, "repetitions per point");
  bench->add_option("--out", bench_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    const json cfg_file = load_config_file(config_path);

    if (*synth) {
      const json s = section(cfg_file, "synth");
      if (!synth->count("--clips")) synth_cfg.count = s.value("clips", synth_cfg.count);
      if (!synth->count("--seed")) synth_cfg.seed = s.value("seed", synth_cfg.seed);
      if (!synth->count("--duration"))
        synth_cfg.duration = s.value("duration", synth_cfg.duration);
      if (!synth->count("--tempo")) synth_cfg.tempo = s.value("tempo", synth_cfg.tempo);
      if (!synth->count("--out")) synth_out = s.value("out", synth_out);
      auto ids = synth_corpus(synth_out, synth_cfg);
      json index = {{"schema_version", kClipSchemaVersion},
                    {"clips", ids},
                    {"seed", synth_cfg.seed},
                    {"duration", synth_cfg.duration},
                    {"tempo", synth_cfg.tempo},
                    {"sample_rate", synth_cfg.sample_rate},
                    {"config_digest",
                     config_digest({{"clips", synth_cfg.count},
                                    {"seed", synth_cfg.seed},
                                    {"duration", synth_cfg.duration},
                                    {"tempo", synth_cfg.tempo}})}};
      std::ofstream f(fs::path(synth_out) / "corpus.json");
      f << index.dump(2) << "\n";
      std::printf("wrote %zu clips under %s\n", ids.size(), synth_out.c_str());
    }

    if (*triplets) {
      ME_CHECK(!tri_out.empty(), "triplets: --out is required");
      TaskMix mix;
      if (!tri_mix.empty()) {
        double v[5];
        ME_CHECK(sscanf(tri_mix.c_str(), "%lf,%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2],
                        &v[3], &v[4]) == 5,
                 "triplets: --mix expects five comma-separated weights");
        mix = {v[0], v[1], v[2], v[3], v[4]};
      }
      Split split = tri_split == "train" ? Split::Train
                    : tri_split == "val" ? Split::Val
                                         : Split::Test;
      auto records = manifest_for_split(tri_corpus, tri_out, split, tri_count, tri_seed, mix);
      std::printf("wrote %zu triplets under %s\n", records.size(), tri_out.c_str());
    }

    if (*tvae) {
      vae_cfg = VaeTrainConfig::from_json(section(cfg_file, "train_vae"));
      if (tvae_steps > 0) vae_cfg.steps = tvae_steps;
      if (tvae_batch > 0) vae_cfg.batch_size = tvae_batch;
      if (tvae_lr > 0) vae_cfg.lr = tvae_lr;
      if (tvae_warmup >= 0) vae_cfg.adv_warmup = tvae_warmup;
      if (tvae_min_clips > 0) vae_cfg.min_corpus_clips = tvae_min_clips;
      if (tvae_seed_set) vae_cfg.seed = tvae_seed;
      if (tvae_out.empty()) tvae_out = (fs::path(data_root()) / "runs" / "vae").string();
      auto res = train_vae(tvae_corpus, vae_cfg, tvae_out, tvae_resume);
      std::printf("vae checkpoint: %s (val_rec %.5f -> %.5f)\n",
                  res.checkpoint_path.c_str(), res.initial_val, res.final_val);
    }

    if (*tdiff) {
      diff_cfg = DiffusionTrainConfig::from_json(section(cfg_file, "train_diffusion"));
      if (tdiff_steps > 0) diff_cfg.steps = tdiff_steps;
      if (tdiff_batch > 0) diff_cfg.batch_size = tdiff_batch;
      if (tdiff_lr > 0) diff_cfg.lr = tdiff_lr;
      if (tdiff_pcfg >= 0) diff_cfg.p_cfg = tdiff_pcfg;
      if (tdiff_no_chord) diff_cfg.unet.use_chord = false;
      if (tdiff_seed_set) diff_cfg.seed = tdiff_seed;
      if (tdiff_out.empty())
        tdiff_out = (fs::path(data_root()) / "runs" / "diffusion").string();
      auto res = train_diffusion(tdiff_triplets,
                                 (fs::path(tdiff_triplets) / "manifest.jsonl").string(),
                                 (fs::path(tdiff_val) / "manifest.jsonl").string(),
                                 tdiff_vae, diff_cfg, tdiff_out, tdiff_resume);
      std::printf("diffusion checkpoint: %s (val %.5f -> %.5f)\n",
                  res.checkpoint_path.c_str(), res.initial_val, res.final_val);
    }

    if (*temb) {
      emb_cfg = EmbedderTrainConfig::from_json(section(cfg_file, "train_embedder"));
      if (temb_steps > 0) emb_cfg.steps = temb_steps;
      if (temb_batch > 0) emb_cfg.batch_size = temb_batch;
      if (temb_lr > 0) emb_cfg.lr = temb_lr;
      if (temb_out.empty())
        temb_out = (fs::path(data_root()) / "runs" / "embedder").string();
      auto res = train_embedder(temb_triplets,
                                (fs::path(temb_triplets) / "manifest.jsonl").string(),
                                (fs::path(temb_val) / "manifest.jsonl").string(),
                                temb_vae, emb_cfg, temb_out);
      std::printf("embedder checkpoint: %s (val top1 %.3f)\n",
                  res.checkpoint_path.c_str(), res.val_retrieval_top1);
    }

    if (*edit) {
      Editor editor(edit_vae, edit_diff, edit_emb);
      WavData src = read_wav(edit_src);
      auto res = editor.edit(src.samples, src.sample_rate, edit_instr, edit_g,
                             edit_steps, edit_seed);
      write_wav(edit_out, res.wave, src.sample_rate);
      std::ofstream f(edit_out + ".provenance.json");
      f << res.provenance.dump(2) << "\n";
      std::printf("wrote %s\n", edit_out.c_str());
    }

    if (*mr) {
      Editor editor(mr_vae, mr_diff, mr_emb);
      WavData src = read_wav(mr_src);
      std::vector<std::string> instrs;
      size_t pos = 0;
      while (pos <= mr_instr.size()) {
        auto semi = mr_instr.find(';', pos);
        instrs.push_back(mr_instr.substr(
            pos, semi == std::string::npos ? std::string::npos : semi - pos));
        if (semi == std::string::npos) break;
        pos = semi + 1;
      }
      fs::create_directories(mr_out);
      auto rounds =
          editor.multiround(src.samples, src.sample_rate, instrs, mr_g, mr_steps, mr_seed);
      std::vector<PlotSeries> trend{{"IA", {}, {}}, {"CRA", {}, {}}, {"PCH-OA", {}, {}},
                                    {"IOI-OA", {}, {}}};
      for (size_t k = 0; k < rounds.size(); ++k) {
        const auto base = fs::path(mr_out) / ("round_" + std::to_string(k));
        write_wav(base.string() + ".wav", rounds[k].result.wave, src.sample_rate);
        std::ofstream pf(base.string() + ".provenance.json");
        pf << rounds[k].result.provenance.dump(2) << "\n";
        std::ofstream rf(base.string() + ".report.json");
        rf << rounds[k].report.to_json().dump(2) << "\n";
        const auto& m = rounds[k].report.average;
        trend[0].x.push_back(static_cast<double>(k));
        trend[0].y.push_back(m.ia);
        trend[1].x.push_back(static_cast<double>(k));
        trend[1].y.push_back(m.cra);
        trend[2].x.push_back(static_cast<double>(k));
        trend[2].y.push_back(m.pch_oa);
        trend[3].x.push_back(static_cast<double>(k));
        trend[3].y.push_back(m.ioi_oa);
      }
      write_line_chart_svg((fs::path(mr_out) / "trend.svg").string(),
                           "multi-round consistency", "round", "metric", trend);
      std::printf("wrote %zu rounds under %s\n", rounds.size(), mr_out.c_str());
    }

    if (*ev) {
      const auto records =
          read_manifest((fs::path(ev_triplets) / "manifest.jsonl").string());
      ME_CHECK(!records.empty(), "evaluate: empty manifest");
      std::unique_ptr<Editor> editor;
      if (!ev_self) {
        ME_CHECK(!ev_vae.empty() && !ev_diff.empty(),
                 "evaluate: --vae and --diffusion are required unless --self");
        editor = std::make_unique<Editor>(ev_vae, ev_diff, ev_emb);
      }
      std::vector<EvalPair> pairs;
      const size_t n =
          ev_limit > 0 ? std::min<size_t>(records.size(), ev_limit) : records.size();
      for (size_t i = 0; i < n; ++i) {
        EditTriplet t = load_triplet(records[i], ev_triplets);
        Vec edited;
        if (ev_self) {
          edited = t.target;
        } else {
          edited = editor->edit(t.source, t.sample_rate, t.instruction, ev_g, ev_steps,
                                ev_seed + i)
                       .wave;
        }
        pairs.push_back(eval_pair_from_record(records[i], ev_triplets, ev_corpus, edited));
      }
      MetricReport report = evaluate_suite(pairs);
      report.config_digest = config_digest({{"w", ev_g.w},
                                            {"s", ev_g.s},
                                            {"steps", ev_steps},
                                            {"seed", ev_seed},
                                            {"self", ev_self}});
      fs::create_directories(ev_out);
      std::ofstream jf(fs::path(ev_out) / "report.json");
      jf << report.to_json().dump(2) << "\n";
      std::ofstream cf(fs::path(ev_out) / "report.csv");
      cf << report.to_csv();
      std::printf("%s\n", report.to_json().dump(2).c_str());
    }

    if (*bench) {
      fs::create_directories(bench_out);
      std::ofstream csv(fs::path(bench_out) / "bench.csv");
      csv << "T,K,paper_chunk_ops,full_ops,measured_score_elements,wall_ms\n";
      std::vector<PlotSeries> series;
      Rng rng(1234);
      for (int K : bench_K) {
        PlotSeries s{"K=" + std::to_string(K), {}, {}};
        nn::ParamStore ps;
        Rng init(42);
        ChunkTransformerLayer layer(ps, "bench", bench_dim, 16, 2, ChunkSpec{K}, init);
        for (int T : bench_T) {
          Mat x(bench_dim, T);
          for (int c = 0; c < T; ++c)
            for (int r = 0; r < bench_dim; ++r) x(r, c) = rng.gaussian();
          const auto t0 = std::chrono::steady_clock::now();
          for (int rep = 0; rep < bench_reps; ++rep) {
            nn::Tape t(ps, nullptr);
            (void)t.value(layer(t, t.input(x)));
          }
          const auto t1 = std::chrono::steady_clock::now();
          const double ms =
              std::chrono::duration<double, std::milli>(t1 - t0).count() / bench_reps;
          AttentionCost c = attention_cost(T, K);
          csv << T << "," << K << "," << c.paper_chunk_ops << "," << c.full_ops << ","
              << c.measured_score_elements << "," << ms << "\n";
          s.x.push_back(T);
          s.y.push_back(ms);
        }
        series.push_back(std::move(s));
      }
      write_line_chart_svg((fs::path(bench_out) / "bench.svg").string(),
                           "chunk attention wall time", "T (frames)", "ms", series);
      std::printf("wrote %s/bench.csv\n", bench_out.c_str());
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
