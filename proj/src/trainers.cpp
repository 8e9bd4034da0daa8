#include "musedit/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "musedit/checkpoint.hpp"
#include "musedit/conditioners.hpp"
#include "musedit/nn/optim.hpp"
#include "musedit/svg_plot.hpp"

namespace fs = std::filesystem;

namespace musedit {

using nn::GradSink;
using nn::Tape;
using nn::V;

namespace {

void save_adam(Checkpoint& ck, const nn::Adam& adam, const nn::ParamStore& ps,
               const std::string& prefix) {
  auto& a = const_cast<nn::Adam&>(adam);
  for (size_t j = 0; j < adam.ids().size(); ++j) {
    ck.add_tensor(prefix + ".m." + ps.name(adam.ids()[j]), a.m()[j]);
    ck.add_tensor(prefix + ".v." + ps.name(adam.ids()[j]), a.v()[j]);
  }
}

void load_adam(const Checkpoint& ck, nn::Adam& adam, const nn::ParamStore& ps,
               const std::string& prefix, int64_t step) {
  for (size_t j = 0; j < adam.ids().size(); ++j) {
    const Mat* m = ck.find_tensor(prefix + ".m." + ps.name(adam.ids()[j]));
    const Mat* v = ck.find_tensor(prefix + ".v." + ps.name(adam.ids()[j]));
    ME_CHECK(m && v, "checkpoint: missing optimizer state " + prefix);
    adam.m()[j] = *m;
    adam.v()[j] = *v;
  }
  adam.set_step_count(step);
}

struct CsvLogger {
  std::ofstream f;
  std::string path;
  std::vector<PlotSeries> series;

  CsvLogger(const std::string& p, const std::vector<std::string>& cols) : path(p) {
    const bool fresh = !fs::exists(p) || fs::file_size(p) == 0;
    f.open(p, std::ios::app);
    ME_CHECK(f.good(), "cannot open loss csv " + p);
    if (fresh) {
      f << "step";
      for (const auto& c : cols) f << "," << c;
      f << "\n";
    }
    for (const auto& c : cols) series.push_back({c, {}, {}});
  }
  void row(int64_t step, const std::vector<double>& vals) {
    f << step;
    for (size_t i = 0; i < vals.size(); ++i) {
      f << "," << vals[i];
      if (std::isfinite(vals[i])) {
        series[i].x.push_back(static_cast<double>(step));
        series[i].y.push_back(vals[i]);
      }
    }
    f << "\n";
    f.flush();
  }
  void plot(const std::string& svg_path, const std::string& title) {
    write_line_chart_svg(svg_path, title, "step", "loss", series, /*log_y=*/false);
  }
};

int resolve_threads(int requested) {
#ifdef _OPENMP
  return std::max(1, requested);
#else
  (void)requested;
  return 1;
#endif
}

}  // namespace

// --------------------------------------------------------------------- VAE

nlohmann::json VaeTrainConfig::to_json() const {
  return {{"codec", codec.to_json()},
          {"steps", steps},
          {"batch_size", batch_size},
          {"lr", lr},
          {"adv_warmup", adv_warmup},
          {"val_every", val_every},
          {"checkpoint_every", checkpoint_every},
          {"min_corpus_clips", min_corpus_clips},
          {"seed", seed},
          {"threads", threads}};
}

VaeTrainConfig VaeTrainConfig::from_json(const nlohmann::json& j) {
  VaeTrainConfig c;
  if (j.contains("codec")) c.codec = CodecConfig::from_json(j["codec"]);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.adv_warmup = j.value("adv_warmup", c.adv_warmup);
  c.val_every = j.value("val_every", c.val_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.min_corpus_clips = j.value("min_corpus_clips", c.min_corpus_clips);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  return c;
}

namespace {

// Training examples are random stem sub-mixes; that is exactly the
// distribution the editor later feeds through the codec.
struct VaeData {
  std::vector<StemSet> train_clips;
  std::vector<Vec> val_waves;

  Vec sample_wave(Rng& rng) const {
    const StemSet& clip =
        train_clips[rng.uniform_int(0, static_cast<int>(train_clips.size()) - 1)];
    auto names = clip.stem_names();
    const int n = static_cast<int>(rng.uniform_int(1, static_cast<int>(names.size())));
    for (int i = static_cast<int>(names.size()) - 1; i > 0; --i)
      std::swap(names[i], names[rng.uniform_int(0, i)]);
    names.resize(n);
    return clip.mix_subset(names);
  }
};

VaeData load_vae_data(const std::string& corpus_root, int min_clips) {
  const auto ids = list_clip_ids(corpus_root);
  ME_CHECK(static_cast<int>(ids.size()) >= min_clips,
           "train_vae: corpus has " + std::to_string(ids.size()) + " clips, need >= " +
               std::to_string(min_clips));
  VaeData data;
  for (const auto& id : ids) {
    StemSet clip = load_clip(corpus_root, id);
    if (clip_split(id) == Split::Train) {
      data.train_clips.push_back(std::move(clip));
    } else if (clip_split(id) == Split::Val) {
      data.val_waves.push_back(clip.mix());
      const auto names = clip.stem_names();
      data.val_waves.push_back(clip.mix_subset({names[0]}));
    }
  }
  ME_CHECK(!data.train_clips.empty(), "train_vae: empty train split");
  ME_CHECK(!data.val_waves.empty(), "train_vae: empty val split");
  return data;
}

Mat pad_wave(const Vec& wave, int r) {
  const int frames = static_cast<int>((wave.size() + r - 1) / r);
  Mat x = Mat::Zero(1, frames * r);
  x.row(0).head(wave.size()) = wave.transpose();
  return x;
}

double val_rec_loss(const VaeModel& model, const std::vector<Vec>& val_waves) {
  double rec = 0.0;
  for (const Vec& w : val_waves) {
    Mat x = pad_wave(w, model.config().r());
    Tape t(model.params(), nullptr);
    V moments = model.encode_graph(t, t.constant(x));
    const int c = model.config().latent_channels;
    Mat mean = t.value(moments).topRows(c);
    Tape td(model.params(), nullptr);
    V xhat = model.decode_graph(td, td.constant(mean));
    rec += (td.value(xhat) - x).squaredNorm() / x.size();
  }
  return rec / static_cast<double>(val_waves.size());
}

}  // namespace

TrainResult train_vae(const std::string& corpus_root, const VaeTrainConfig& cfg,
                      const std::string& out_dir, const std::string& resume_path) {
  fs::create_directories(out_dir);
  VaeData data = load_vae_data(corpus_root, cfg.min_corpus_clips);

  VaeModel model(cfg.codec, cfg.seed ^ 0xc0dec);
  nn::Adam gen_opt(model.params(), model.gen_param_ids(), cfg.lr);
  nn::Adam disc_opt(model.params(), model.disc_param_ids(), cfg.lr);
  Rng rng(cfg.seed);
  int64_t start_step = 0;

  if (!resume_path.empty()) {
    Checkpoint ck = Checkpoint::load(resume_path);
    ME_CHECK(ck.meta.value("kind", "") == "vae", "resume: not a vae checkpoint");
    ck.get_params(model.params(), "p.");
    start_step = ck.meta["step"].get<int64_t>();
    load_adam(ck, gen_opt, model.params(), "adam_g", start_step);
    load_adam(ck, disc_opt, model.params(), "adam_d",
              ck.meta.value("disc_step", int64_t{0}));
    rng.load_state(ck.meta["rng_state"].get<std::string>());
  }

  const int threads = resolve_threads(cfg.threads);
  const int B = cfg.batch_size;
  // separate per-item sinks for the generator and discriminator phases so
  // the adversarial term's gradients through D never leak into D's update
  std::vector<GradSink> sinks_g(B, GradSink(model.params()));
  std::vector<GradSink> sinks_d(B, GradSink(model.params()));
  GradSink total_g(model.params()), total_d(model.params());

  if (resume_path.empty()) {
    std::error_code ec;
    fs::remove(out_dir + "/vae_loss.csv", ec);
  }
  CsvLogger log(out_dir + "/vae_loss.csv", {"rec", "adv", "kl", "total", "val_rec"});
  const std::string ckpt_path = out_dir + "/vae.ckpt";

  auto save = [&](int64_t step) {
    Checkpoint ck;
    ck.meta["format_version"] = kCheckpointFormatVersion;
    ck.meta["kind"] = "vae";
    ck.meta["config"] = cfg.codec.to_json();
    ck.meta["train_config"] = cfg.to_json();
    ck.meta["step"] = step;
    ck.meta["disc_step"] = disc_opt.step_count();
    ck.meta["rng_state"] = rng.save_state();
    ck.meta["config_digest"] = config_digest(cfg.codec.to_json());
    ck.put_params(model.params(), "p.");
    save_adam(ck, gen_opt, model.params(), "adam_g");
    save_adam(ck, disc_opt, model.params(), "adam_d");
    ck.save(ckpt_path);
  };

  TrainResult result;
  result.loss_csv_path = log.path;
  double initial_loss = -1.0;
  const int c_lat = cfg.codec.latent_channels;

  for (int64_t step = start_step; step < cfg.steps; ++step) {
    const bool adv_on = step >= cfg.adv_warmup;
    // draw the batch up front so parallel workers stay deterministic
    std::vector<Mat> xs(B);
    std::vector<Mat> eps(B);
    for (int b = 0; b < B; ++b) {
      xs[b] = pad_wave(data.sample_wave(rng), cfg.codec.r());
      const int frames = static_cast<int>(xs[b].cols()) / cfg.codec.r();
      eps[b].resize(c_lat, frames);
      for (int fc = 0; fc < frames; ++fc)
        for (int rr = 0; rr < c_lat; ++rr) eps[b](rr, fc) = rng.gaussian();
    }

    Vec rec_v(B), kl_v(B), adv_v(B);
#ifdef _OPENMP
#pragma omp parallel for num_threads(threads) schedule(static)
#endif
    for (int b = 0; b < B; ++b) {
      sinks_g[b].zero();
      Tape t(model.params(), &sinks_g[b]);
      V x = t.constant(xs[b]);
      V moments = model.encode_graph(t, x);
      V mean = t.slice_rows(moments, 0, c_lat);
      V logvar = t.slice_rows(moments, c_lat, c_lat);
      V z = t.add(mean, t.mul(t.exp_(t.scale(logvar, 0.5)), t.constant(eps[b])));
      V xhat = model.decode_graph(t, z);
      V l_rec = t.mse(xhat, x);
      // mean over latent dims of (mu^2 + sigma^2 - 1 - log sigma^2)/2
      V kl_terms = t.sub(t.sub(t.add(t.square(mean), t.exp_(logvar)),
                               t.constant(Mat::Ones(c_lat, t.value(mean).cols()))),
                         logvar);
      V l_kl = t.scale(t.mean(kl_terms), 0.5);
      V loss = t.add(t.scale(l_rec, cfg.codec.w_rec), t.scale(l_kl, cfg.codec.w_kl));
      double adv_b = 0.0;
      if (adv_on) {
        V d_fake = model.disc_graph(t, xhat);
        V l_adv = t.scale(d_fake, -1.0);
        loss = t.add(loss, t.scale(l_adv, cfg.codec.w_adv));
        adv_b = t.value(l_adv)(0, 0);
      }
      t.backward(loss);
      rec_v[b] = t.value(l_rec)(0, 0);
      kl_v[b] = t.value(l_kl)(0, 0);
      adv_v[b] = adv_b;

      if (adv_on) {
        // discriminator hinge update on (real, fake)
        sinks_d[b].zero();
        Tape td(model.params(), &sinks_d[b]);
        V d_real = model.disc_graph(td, td.constant(xs[b]));
        V d_fake = model.disc_graph(td, td.constant(t.value(xhat)));
        V ld = td.add(td.relu(td.add_scalar(td.scale(d_real, -1.0), 1.0)),
                      td.relu(td.add_scalar(d_fake, 1.0)));
        td.backward(ld);
      }
    }
    const double rec_sum = rec_v.sum(), kl_sum = kl_v.sum(), adv_sum = adv_v.sum();
    const double denom = static_cast<double>(B);
    total_g.zero();
    for (int b = 0; b < B; ++b) total_g.accumulate(sinks_g[b]);
    for (int id = 0; id < model.params().count(); ++id) total_g.grad(id) /= denom;
    gen_opt.step(total_g);
    if (adv_on) {
      total_d.zero();
      for (int b = 0; b < B; ++b) total_d.accumulate(sinks_d[b]);
      for (int id = 0; id < model.params().count(); ++id) total_d.grad(id) /= denom;
      disc_opt.step(total_d);
    }

    const double rec = rec_sum / B, kl = kl_sum / B, adv = adv_sum / B;
    const double loss_now = cfg.codec.w_rec * rec + cfg.codec.w_adv * adv +
                            cfg.codec.w_kl * kl;
    ME_CHECK(std::isfinite(loss_now), "train_vae: non-finite loss at step " +
                                          std::to_string(step));
    if (initial_loss < 0) initial_loss = std::abs(loss_now) + 1e-9;
    ME_CHECK(std::abs(loss_now) <= 10.0 * initial_loss + 1.0,
             "train_vae: divergence (loss " + std::to_string(loss_now) + ")");

    if (step % cfg.val_every == 0 || step + 1 == cfg.steps) {
      const double vr = val_rec_loss(model, data.val_waves);
      if (result.initial_val == 0.0) result.initial_val = vr;
      result.final_val = vr;
      log.row(step, {rec, adv, kl, loss_now, vr});
      std::printf("[vae] step %lld rec %.5f kl %.4f adv %.4f val_rec %.5f\n",
                  static_cast<long long>(step), rec, kl, adv, vr);
      std::fflush(stdout);
    } else {
      log.row(step, {rec, adv, kl, loss_now,
                     std::numeric_limits<double>::quiet_NaN()});
    }
    if ((step + 1) % cfg.checkpoint_every == 0) save(step + 1);
  }
  save(cfg.steps);
  log.plot(out_dir + "/vae_loss.svg", "VAE training");
  result.checkpoint_path = ckpt_path;
  result.steps_done = cfg.steps;
  return result;
}

std::unique_ptr<VaeModel> load_vae_checkpoint(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  ME_CHECK(ck.meta.value("kind", "") == "vae", "not a vae checkpoint: " + path);
  auto model = std::make_unique<VaeModel>(CodecConfig::from_json(ck.meta["config"]));
  ck.get_params(model->params(), "p.");
  return model;
}

// --------------------------------------------------------------- diffusion

nlohmann::json DiffusionTrainConfig::to_json() const {
  return {{"unet", unet.to_json()},
          {"t_steps", t_steps},
          {"beta_start", beta_start},
          {"beta_end", beta_end},
          {"steps", steps},
          {"batch_size", batch_size},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"p_cfg", p_cfg},
          {"val_every", val_every},
          {"checkpoint_every", checkpoint_every},
          {"seed", seed},
          {"threads", threads}};
}

DiffusionTrainConfig DiffusionTrainConfig::from_json(const nlohmann::json& j) {
  DiffusionTrainConfig c;
  if (j.contains("unet")) c.unet = UNetConfig::from_json(j["unet"]);
  c.t_steps = j.value("t_steps", c.t_steps);
  c.beta_start = j.value("beta_start", c.beta_start);
  c.beta_end = j.value("beta_end", c.beta_end);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.p_cfg = j.value("p_cfg", c.p_cfg);
  c.val_every = j.value("val_every", c.val_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  return c;
}

double compute_latent_scale(const std::vector<TripletRecord>& records,
                            const std::string& base_dir, const VaeModel& vae,
                            int max_items) {
  ME_CHECK(!records.empty(), "compute_latent_scale: no records");
  double sq = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < records.size() && static_cast<int>(i) < max_items; ++i) {
    EditTriplet t = load_triplet(records[i], base_dir);
    Mat z = vae.encode(t.target).cf;
    sq += z.squaredNorm();
    n += z.size();
  }
  const double scale = std::sqrt(sq / static_cast<double>(n));
  ME_CHECK(scale > 1e-9, "compute_latent_scale: degenerate latents");
  return scale;
}

std::vector<LatentTriplet> prepare_latents(const std::vector<TripletRecord>& records,
                                           const std::string& base_dir,
                                           const VaeModel& vae, double latent_scale) {
  std::vector<LatentTriplet> out(records.size());
  const double inv = 1.0 / latent_scale;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t i = 0; i < static_cast<int64_t>(records.size()); ++i) {
    EditTriplet t = load_triplet(records[i], base_dir);
    LatentTriplet lt;
    lt.z_source = vae.encode(t.source).cf * inv;
    lt.z_target = vae.encode(t.target).cf * inv;
    lt.chord = extract_chords(t.source, t.sample_rate).probs;
    lt.tokens = Grammar::get().tokenize(t.task);
    lt.task_kind = edit_kind_name(t.task.kind);
    out[i] = std::move(lt);
  }
  return out;
}

double diffusion_loss_batch(const UNetModel& model, const NoiseSchedule& sched,
                            const std::vector<const LatentTriplet*>& batch,
                            double p_cfg, Rng& rng, GradSink* sink, int threads) {
  ME_CHECK(!batch.empty(), "diffusion_loss_batch: empty batch");
  const int B = static_cast<int>(batch.size());
  // pre-draw all randomness in a fixed order
  std::vector<int> ts(B);
  std::vector<bool> drop(B);
  std::vector<Mat> eps(B);
  for (int b = 0; b < B; ++b) {
    ts[b] = static_cast<int>(rng.uniform_int(1, sched.t_steps));
    drop[b] = rng.uniform() < p_cfg;
    const auto& z0 = batch[b]->z_target;
    eps[b].resize(z0.rows(), z0.cols());
    for (Eigen::Index c = 0; c < z0.cols(); ++c)
      for (Eigen::Index r = 0; r < z0.rows(); ++r) eps[b](r, c) = rng.gaussian();
  }
  std::vector<GradSink> sinks;
  if (sink)
    for (int b = 0; b < B; ++b) sinks.emplace_back(model.params());
  Vec losses(B);
#ifdef _OPENMP
#pragma omp parallel for num_threads(threads) schedule(static)
#endif
  for (int b = 0; b < B; ++b) {
    const LatentTriplet& lt = *batch[b];
    Tape t(model.params(), sink ? &sinks[b] : nullptr);
    Mat zt = q_sample(lt.z_target, ts[b], eps[b], sched);
    V chord = model.config().use_chord ? t.constant(lt.chord) : V{};
    V out = model.forward_graph(t, ts[b], drop[b] ? nullptr : &lt.tokens, chord,
                                t.constant(lt.z_source), t.constant(zt));
    V loss = t.mse(out, t.constant(eps[b]));
    losses[b] = t.value(loss)(0, 0);
    if (sink) t.backward(loss);
  }
  if (sink) {
    for (int b = 0; b < B; ++b) sink->accumulate(sinks[b]);
    for (int id = 0; id < model.params().count(); ++id)
      sink->grad(id) /= static_cast<double>(B);
  }
  const double mean_loss = losses.mean();
  ME_CHECK(std::isfinite(mean_loss), "diffusion loss is non-finite");
  return mean_loss;
}

TrainResult train_diffusion(const std::string& triplet_dir, const std::string& manifest,
                            const std::string& val_manifest,
                            const std::string& vae_checkpoint,
                            const DiffusionTrainConfig& cfg, const std::string& out_dir,
                            const std::string& resume_path) {
  fs::create_directories(out_dir);
  ME_CHECK(fs::exists(vae_checkpoint),
           "train_diffusion: missing VAE checkpoint " + vae_checkpoint +
               " (train the VAE first)");
  auto vae = load_vae_checkpoint(vae_checkpoint);
  const auto records = read_manifest(manifest);
  ME_CHECK(!records.empty(), "train_diffusion: empty manifest");
  const auto val_records = read_manifest(val_manifest);

  const double latent_scale = compute_latent_scale(records, triplet_dir, *vae);
  std::printf("[diffusion] latent scale %.4f; preparing %zu train / %zu val latents\n",
              latent_scale, records.size(), val_records.size());
  std::fflush(stdout);
  const auto train_data = prepare_latents(records, triplet_dir, *vae, latent_scale);
  const auto val_data = prepare_latents(val_records, triplet_dir, *vae, latent_scale);

  UNetModel model(cfg.unet, cfg.seed ^ 0xd1ffu);
  NoiseSchedule sched = make_schedule(cfg.t_steps, cfg.beta_start, cfg.beta_end);
  nn::Adam opt(model.params(), cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
  Rng rng(cfg.seed);
  int64_t start_step = 0;

  if (!resume_path.empty()) {
    Checkpoint ck = Checkpoint::load(resume_path);
    ME_CHECK(ck.meta.value("kind", "") == "diffusion", "resume: not a diffusion ckpt");
    ck.get_params(model.params(), "p.");
    start_step = ck.meta["step"].get<int64_t>();
    load_adam(ck, opt, model.params(), "adam", start_step);
    rng.load_state(ck.meta["rng_state"].get<std::string>());
  }

  if (resume_path.empty()) {
    std::error_code ec;
    fs::remove(out_dir + "/diffusion_loss.csv", ec);
  }
  CsvLogger log(out_dir + "/diffusion_loss.csv", {"train", "val"});
  const std::string ckpt_path = out_dir + "/diffusion.ckpt";
  const std::string vae_digest = config_digest(vae->config().to_json());

  auto save = [&](int64_t step) {
    Checkpoint ck;
    ck.meta["format_version"] = kCheckpointFormatVersion;
    ck.meta["kind"] = "diffusion";
    ck.meta["config"] = cfg.unet.to_json();
    ck.meta["train_config"] = cfg.to_json();
    ck.meta["t_steps"] = cfg.t_steps;
    ck.meta["beta_start"] = cfg.beta_start;
    ck.meta["beta_end"] = cfg.beta_end;
    ck.meta["latent_scale"] = latent_scale;
    ck.meta["p_cfg"] = cfg.p_cfg;
    ck.meta["step"] = step;
    ck.meta["rng_state"] = rng.save_state();
    ck.meta["vae_digest"] = vae_digest;
    ck.meta["config_digest"] = config_digest(cfg.to_json());
    ck.put_params(model.params(), "p.");
    save_adam(ck, opt, model.params(), "adam");
    ck.save(ckpt_path);
  };

  // fixed validation draws so the val curve is comparable across steps
  Rng val_rng(cfg.seed ^ 0x7a1u);
  std::vector<const LatentTriplet*> val_batch;
  for (const auto& lt : val_data) val_batch.push_back(&lt);

  GradSink total(model.params());
  TrainResult result;
  result.loss_csv_path = log.path;
  const int threads = resolve_threads(cfg.threads);
  double initial_loss = -1.0;

  for (int64_t step = start_step; step < cfg.steps; ++step) {
    std::vector<const LatentTriplet*> batch;
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(
          &train_data[rng.uniform_int(0, static_cast<int>(train_data.size()) - 1)]);
    total.zero();
    const double loss =
        diffusion_loss_batch(model, sched, batch, cfg.p_cfg, rng, &total, threads);
    opt.step(total);
    if (initial_loss < 0) initial_loss = loss + 1e-9;
    ME_CHECK(loss <= 10.0 * initial_loss + 1.0,
             "train_diffusion: divergence at step " + std::to_string(step));

    if (step % cfg.val_every == 0 || step + 1 == cfg.steps) {
      Rng vq = val_rng;  // same draws every evaluation
      const double vl = val_batch.empty()
                            ? std::numeric_limits<double>::quiet_NaN()
                            : diffusion_loss_batch(model, sched, val_batch, 0.0, vq,
                                                   nullptr, threads);
      if (result.initial_val == 0.0 && std::isfinite(vl)) result.initial_val = vl;
      if (std::isfinite(vl)) result.final_val = vl;
      log.row(step, {loss, vl});
      std::printf("[diffusion] step %lld loss %.5f val %.5f\n",
                  static_cast<long long>(step), loss, vl);
      std::fflush(stdout);
    } else {
      log.row(step, {loss, std::numeric_limits<double>::quiet_NaN()});
    }
    if ((step + 1) % cfg.checkpoint_every == 0) save(step + 1);
  }
  save(cfg.steps);
  log.plot(out_dir + "/diffusion_loss.svg", "Diffusion training");
  result.checkpoint_path = ckpt_path;
  result.steps_done = cfg.steps;
  return result;
}

DiffusionBundle load_diffusion_checkpoint(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  ME_CHECK(ck.meta.value("kind", "") == "diffusion", "not a diffusion ckpt: " + path);
  DiffusionBundle b;
  b.unet = std::make_unique<UNetModel>(UNetConfig::from_json(ck.meta["config"]));
  ck.get_params(b.unet->params(), "p.");
  b.schedule = make_schedule(ck.meta["t_steps"].get<int>(),
                             ck.meta["beta_start"].get<double>(),
                             ck.meta["beta_end"].get<double>());
  b.latent_scale = ck.meta["latent_scale"].get<double>();
  b.p_cfg = ck.meta.value("p_cfg", 0.1);
  b.vae_digest = ck.meta.value("vae_digest", "");
  return b;
}

// ---------------------------------------------------------------- embedder

nlohmann::json EmbedderTrainConfig::to_json() const {
  return {{"embedder", embedder.to_json()},
          {"steps", steps},
          {"batch_size", batch_size},
          {"lr", lr},
          {"val_every", val_every},
          {"seed", seed},
          {"threads", threads},
          {"min_pairs", min_pairs}};
}

EmbedderTrainConfig EmbedderTrainConfig::from_json(const nlohmann::json& j) {
  EmbedderTrainConfig c;
  if (j.contains("embedder")) c.embedder = EmbedderConfig::from_json(j["embedder"]);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.val_every = j.value("val_every", c.val_every);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.min_pairs = j.value("min_pairs", c.min_pairs);
  return c;
}

double contrastive_loss_batch(const GuidanceEmbedder& model,
                              const std::vector<const LatentTriplet*>& batch,
                              GradSink* sink) {
  const int B = static_cast<int>(batch.size());
  ME_CHECK(B >= 2, "contrastive_loss_batch: need at least 2 pairs");
  Tape t(model.params(), sink);
  std::vector<V> et, ea;
  for (const LatentTriplet* lt : batch) {
    et.push_back(model.text_graph(t, lt->tokens));
    ea.push_back(model.audio_graph(t, t.constant(lt->z_target)));
  }
  // logits(i, j) = <text_i, audio_j> / tau
  std::vector<V> text_rows, audio_rows;
  for (int i = 0; i < B; ++i) {
    text_rows.push_back(t.transpose(et[i]));   // 1 x D
    audio_rows.push_back(t.transpose(ea[i]));  // 1 x D
  }
  V tm = t.concat_rows(text_rows);   // B x D
  V am = t.concat_rows(audio_rows);  // B x D
  V logits = t.scale(t.matmul_nt(tm, am), 1.0 / model.config().temperature);  // B x B
  V lse_rows = t.row_logsumexp(logits);
  V lse_cols = t.row_logsumexp(t.transpose(logits));
  V diag = t.diag_as_col(logits);
  V loss = t.scale(
      t.add(t.mean(t.sub(lse_rows, diag)), t.mean(t.sub(lse_cols, diag))), 0.5);
  const double lv = t.value(loss)(0, 0);
  if (sink) t.backward(loss);
  ME_CHECK(std::isfinite(lv), "contrastive loss non-finite");
  return lv;
}

double retrieval_top1(const GuidanceEmbedder& model,
                      const std::vector<const LatentTriplet*>& batch) {
  const int B = static_cast<int>(batch.size());
  ME_CHECK(B >= 2, "retrieval_top1: need at least 2 pairs");
  Mat et(model.config().dim, B), ea(model.config().dim, B);
  for (int i = 0; i < B; ++i) {
    et.col(i) = model.embed_text_tokens(batch[i]->tokens);
    ea.col(i) = model.embed_audio(batch[i]->z_target);
  }
  int hits = 0;
  for (int i = 0; i < B; ++i) {
    Eigen::Index best;
    (et.col(i).transpose() * ea).maxCoeff(&best);
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / B;
}

EmbedderTrainResult train_embedder(const std::string& triplet_dir,
                                   const std::string& manifest,
                                   const std::string& val_manifest,
                                   const std::string& vae_checkpoint,
                                   const EmbedderTrainConfig& cfg,
                                   const std::string& out_dir) {
  fs::create_directories(out_dir);
  ME_CHECK(fs::exists(vae_checkpoint),
           "train_embedder: missing VAE checkpoint " + vae_checkpoint);
  auto vae = load_vae_checkpoint(vae_checkpoint);
  const auto records = read_manifest(manifest);
  ME_CHECK(static_cast<int>(records.size()) >= cfg.min_pairs,
           "train_embedder: need >= " + std::to_string(cfg.min_pairs) + " pairs, got " +
               std::to_string(records.size()));
  const auto val_records = read_manifest(val_manifest);
  const double latent_scale = compute_latent_scale(records, triplet_dir, *vae);
  const auto train_data = prepare_latents(records, triplet_dir, *vae, latent_scale);
  const auto val_data = prepare_latents(val_records, triplet_dir, *vae, latent_scale);

  GuidanceEmbedder model(cfg.embedder, cfg.seed ^ 0xe3bedu);
  nn::Adam opt(model.params(), cfg.lr);
  Rng rng(cfg.seed);
  GradSink sink(model.params());
  {
    std::error_code ec;
    fs::remove(out_dir + "/embedder_loss.csv", ec);
  }
  CsvLogger log(out_dir + "/embedder_loss.csv", {"train", "val_top1"});

  EmbedderTrainResult result;
  result.loss_csv_path = log.path;
  std::vector<const LatentTriplet*> val_batch;
  {
    // held-out batch of 16 distinct pairs
    Rng pick(cfg.seed ^ 0x77);
    std::vector<int> idx(val_data.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
      std::swap(idx[i], idx[pick.uniform_int(0, i)]);
    const int vb = std::min<int>(16, static_cast<int>(val_data.size()));
    for (int i = 0; i < vb; ++i) val_batch.push_back(&val_data[idx[i]]);
  }

  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<const LatentTriplet*> batch;
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(
          &train_data[rng.uniform_int(0, static_cast<int>(train_data.size()) - 1)]);
    sink.zero();
    const double loss = contrastive_loss_batch(model, batch, &sink);
    opt.step(sink);

    if (step % cfg.val_every == 0 || step + 1 == cfg.steps) {
      const double top1 = val_batch.size() >= 2 ? retrieval_top1(model, val_batch)
                                                : std::numeric_limits<double>::quiet_NaN();
      result.val_retrieval_top1 = top1;
      log.row(step, {loss, top1});
      std::printf("[embedder] step %lld loss %.4f val_top1 %.3f\n",
                  static_cast<long long>(step), loss, top1);
      std::fflush(stdout);
      // collapse detection: every audio embedding within 1e-3 cosine
      if (val_batch.size() >= 2) {
        Mat ea(model.config().dim, static_cast<int>(val_batch.size()));
        for (size_t i = 0; i < val_batch.size(); ++i)
          ea.col(static_cast<Eigen::Index>(i)) = model.embed_audio(val_batch[i]->z_target);
        double min_cos = 1.0;
        for (Eigen::Index i = 0; i < ea.cols(); ++i)
          for (Eigen::Index j = i + 1; j < ea.cols(); ++j)
            min_cos = std::min(min_cos, ea.col(i).dot(ea.col(j)));
        ME_CHECK(!(step > cfg.steps / 4 && min_cos > 1.0 - 1e-3),
                 "train_embedder: representation collapse detected");
      }
    } else {
      log.row(step, {loss, std::numeric_limits<double>::quiet_NaN()});
    }
  }

  Checkpoint ck;
  ck.meta["format_version"] = kCheckpointFormatVersion;
  ck.meta["kind"] = "embedder";
  ck.meta["config"] = cfg.embedder.to_json();
  ck.meta["train_config"] = cfg.to_json();
  ck.meta["latent_scale"] = latent_scale;
  ck.meta["step"] = cfg.steps;
  ck.meta["val_top1"] = result.val_retrieval_top1;
  ck.meta["config_digest"] = config_digest(cfg.to_json());
  ck.put_params(model.params(), "p.");
  const std::string ckpt_path = out_dir + "/embedder.ckpt";
  ck.save(ckpt_path);
  log.plot(out_dir + "/embedder_loss.svg", "Embedder training");
  result.checkpoint_path = ckpt_path;
  result.steps_done = cfg.steps;
  return result;
}

std::unique_ptr<GuidanceEmbedder> load_embedder_checkpoint(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  ME_CHECK(ck.meta.value("kind", "") == "embedder", "not an embedder ckpt: " + path);
  auto model =
      std::make_unique<GuidanceEmbedder>(EmbedderConfig::from_json(ck.meta["config"]));
  ck.get_params(model->params(), "p.");
  return model;
}

}  // namespace musedit
