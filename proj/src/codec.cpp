#include "musedit/codec.hpp"

#include <cmath>

#include "musedit/rng.hpp"

namespace musedit {

using nn::Tape;
using nn::V;

nlohmann::json CodecConfig::to_json() const {
  return {{"sample_rate", sample_rate},
          {"strides", strides},
          {"enc_channels", enc_channels},
          {"stem_channels", stem_channels},
          {"latent_channels", latent_channels},
          {"resblocks", resblocks},
          {"disc_scales", disc_scales},
          {"disc_channels", disc_channels},
          {"w_rec", w_rec},
          {"w_adv", w_adv},
          {"w_kl", w_kl},
          {"use_spectral_loss", use_spectral_loss},
          {"w_spec", w_spec}};
}

CodecConfig CodecConfig::from_json(const nlohmann::json& j) {
  CodecConfig c;
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.strides = j.value("strides", c.strides);
  c.enc_channels = j.value("enc_channels", c.enc_channels);
  c.stem_channels = j.value("stem_channels", c.stem_channels);
  c.latent_channels = j.value("latent_channels", c.latent_channels);
  c.resblocks = j.value("resblocks", c.resblocks);
  c.disc_scales = j.value("disc_scales", c.disc_scales);
  c.disc_channels = j.value("disc_channels", c.disc_channels);
  c.w_rec = j.value("w_rec", c.w_rec);
  c.w_adv = j.value("w_adv", c.w_adv);
  c.w_kl = j.value("w_kl", c.w_kl);
  c.use_spectral_loss = j.value("use_spectral_loss", c.use_spectral_loss);
  c.w_spec = j.value("w_spec", c.w_spec);
  return c;
}

namespace {

// kernel/pad pairs that keep lengths exact multiples of the stride
void stride_kernel(int s, int& k, int& pad) {
  if (s % 2 == 0) {
    k = 2 * s;
    pad = s / 2;
  } else {
    k = 2 * s - 1;
    pad = (s - 1) / 2;
  }
}

}  // namespace

VaeModel::VaeModel(const CodecConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  ME_CHECK(cfg.strides.size() == cfg.enc_channels.size(),
           "codec: strides/channels size mismatch");
  Rng rng(init_seed);
  auto res_of = [&](nn::ParamStore& ps, const std::string& name, int ch) {
    Res r;
    r.ln1 = nn::LayerNorm(ps, name + ".ln1", ch);
    r.c1 = nn::Conv1d(ps, name + ".c1", ch, ch, 3, 1, 1, rng);
    r.ln2 = nn::LayerNorm(ps, name + ".ln2", ch);
    r.c2 = nn::Conv1d(ps, name + ".c2", ch, ch, 3, 1, 1, rng);
    return r;
  };

  const int L = static_cast<int>(cfg.strides.size());
  enc_stem_ = nn::Conv1d(params_, "enc.stem", 1, cfg.stem_channels, 7, 1, 3, rng);
  int prev = cfg.stem_channels;
  for (int i = 0; i < L; ++i) {
    int k, pad;
    stride_kernel(cfg.strides[i], k, pad);
    enc_down_.emplace_back(params_, "enc.down" + std::to_string(i), prev,
                           cfg.enc_channels[i], k, cfg.strides[i], pad, rng);
    for (int rblk = 0; rblk < cfg.resblocks; ++rblk)
      enc_res_.push_back(res_of(params_,
                                "enc.res" + std::to_string(i) + "_" + std::to_string(rblk),
                                cfg.enc_channels[i]));
    prev = cfg.enc_channels[i];
  }
  enc_head_ln_ = nn::LayerNorm(params_, "enc.head_ln", prev);
  enc_head_ = nn::Conv1d(params_, "enc.head", prev, 2 * cfg.latent_channels, 3, 1, 1, rng);

  dec_head_ = nn::Conv1d(params_, "dec.head", cfg.latent_channels, cfg.enc_channels.back(),
                         3, 1, 1, rng);
  for (int i = L - 1; i >= 0; --i) {
    const int in_ch = cfg.enc_channels[i];
    const int out_ch = i == 0 ? cfg.stem_channels : cfg.enc_channels[i - 1];
    for (int rblk = 0; rblk < cfg.resblocks; ++rblk)
      dec_res_.push_back(res_of(params_,
                                "dec.res" + std::to_string(i) + "_" + std::to_string(rblk),
                                in_ch));
    int k, pad;
    stride_kernel(cfg.strides[i], k, pad);
    dec_up_.emplace_back(params_, "dec.up" + std::to_string(i), in_ch, out_ch, k,
                         cfg.strides[i], pad, rng);
  }
  dec_out_ln_ = nn::LayerNorm(params_, "dec.out_ln", cfg.stem_channels);
  dec_out_ = nn::Conv1d(params_, "dec.out", cfg.stem_channels, 1, 7, 1, 3, rng);

  // multi-scale discriminator: input pooled by 2^scale
  first_disc_param_ = params_.count();
  for (int sidx = 0; sidx < cfg.disc_scales; ++sidx) {
    DiscScale ds;
    int dprev = 1;
    for (size_t c = 0; c < cfg.disc_channels.size(); ++c) {
      const int k = c + 1 < cfg.disc_channels.size() ? 15 : 9;
      ds.convs.emplace_back(params_,
                            "disc" + std::to_string(sidx) + ".c" + std::to_string(c),
                            dprev, cfg.disc_channels[c], k, 4, (k - 1) / 2, rng);
      dprev = cfg.disc_channels[c];
    }
    ds.out = nn::Conv1d(params_, "disc" + std::to_string(sidx) + ".out", dprev, 1, 3,
                        1, 1, rng);
    disc_.push_back(std::move(ds));
  }
}

std::vector<int> VaeModel::gen_param_ids() const {
  std::vector<int> ids;
  for (int i = 0; i < first_disc_param_; ++i) ids.push_back(i);
  return ids;
}

std::vector<int> VaeModel::disc_param_ids() const {
  std::vector<int> ids;
  for (int i = first_disc_param_; i < params_.count(); ++i) ids.push_back(i);
  return ids;
}

V VaeModel::apply_res(Tape& t, const Res& r, V x) const {
  V h = r.c1(t, t.silu(r.ln1(t, x)));
  h = r.c2(t, t.silu(r.ln2(t, h)));
  return t.add(x, h);
}

V VaeModel::encode_graph(Tape& t, V x) const {
  ME_CHECK(t.value(x).rows() == 1, "encode: expects 1 x T waveform");
  ME_CHECK(t.value(x).cols() > 0, "encode: empty waveform");
  ME_CHECK(t.value(x).cols() % cfg_.r() == 0,
           "encode: length must be divisible by r (pad first)");
  V h = enc_stem_(t, x);
  int ridx = 0;
  for (size_t i = 0; i < enc_down_.size(); ++i) {
    h = enc_down_[i](t, h);
    for (int rblk = 0; rblk < cfg_.resblocks; ++rblk) h = apply_res(t, enc_res_[ridx++], h);
  }
  return enc_head_(t, t.silu(enc_head_ln_(t, h)));
}

V VaeModel::decode_graph(Tape& t, V z) const {
  ME_CHECK(t.value(z).rows() == cfg_.latent_channels,
           "decode: latent channel mismatch");
  V h = dec_head_(t, z);
  int ridx = 0;
  for (size_t i = 0; i < dec_up_.size(); ++i) {
    for (int rblk = 0; rblk < cfg_.resblocks; ++rblk) h = apply_res(t, dec_res_[ridx++], h);
    h = dec_up_[i](t, h);
  }
  return t.tanh_(dec_out_(t, t.silu(dec_out_ln_(t, h))));
}

V VaeModel::disc_graph(Tape& t, V x) const {
  std::vector<V> scores;
  V cur = x;
  for (size_t sidx = 0; sidx < disc_.size(); ++sidx) {
    if (sidx > 0) cur = t.avg_pool1d(cur, 2, 2);
    V h = cur;
    for (const auto& conv : disc_[sidx].convs) h = t.leaky_relu(conv(t, h), 0.2);
    scores.push_back(t.mean(disc_[sidx].out(t, h)));
  }
  V total = scores[0];
  for (size_t i = 1; i < scores.size(); ++i) total = t.add(total, scores[i]);
  return t.scale(total, 1.0 / static_cast<double>(scores.size()));
}

std::pair<Mat, Mat> VaeModel::encode_moments(const Vec& wave) const {
  ME_CHECK(wave.size() > 0, "encode: empty waveform");
  const int r = cfg_.r();
  const int frames = static_cast<int>((wave.size() + r - 1) / r);
  Mat x = Mat::Zero(1, frames * r);
  x.row(0).head(wave.size()) = wave.transpose();
  Tape t(params_, nullptr);
  V m = encode_graph(t, t.constant(std::move(x)));
  const Mat& mm = t.value(m);
  const int c = cfg_.latent_channels;
  return {mm.topRows(c), mm.bottomRows(c)};
}

LatentSeq VaeModel::encode(const Vec& wave) const {
  LatentSeq z;
  z.cf = encode_moments(wave).first;
  z.frame_rate = static_cast<double>(cfg_.sample_rate) / cfg_.r();
  return z;
}

Vec VaeModel::decode(const LatentSeq& z) const {
  ME_CHECK(z.channels() == cfg_.latent_channels, "decode: latent shape mismatch");
  Tape t(params_, nullptr);
  V x = decode_graph(t, t.constant(z.cf));
  return t.value(x).row(0).transpose();
}

double kl_gaussian(const Mat& mean, const Mat& logvar) {
  ME_CHECK(mean.rows() == logvar.rows() && mean.cols() == logvar.cols(),
           "kl_gaussian: shape mismatch");
  // per-dim KL(N(mu, sigma^2) || N(0,1)) = (mu^2 + sigma^2 - 1 - log sigma^2)/2
  const auto var = logvar.array().exp();
  return 0.5 * (mean.array().square() + var - 1.0 - logvar.array()).mean();
}

VaeLossTerms vae_loss_terms(double rec, double adv, double kl, const CodecConfig& cfg,
                            bool adv_active) {
  VaeLossTerms t;
  t.rec = rec;
  t.adv = adv_active ? adv : 0.0;
  t.kl = kl;
  t.total = cfg.w_rec * t.rec + cfg.w_adv * t.adv + cfg.w_kl * t.kl;
  ME_CHECK(std::isfinite(t.total), "vae_loss: non-finite total (rec=" +
                                       std::to_string(rec) + " adv=" + std::to_string(adv) +
                                       " kl=" + std::to_string(kl) + ")");
  return t;
}

VaeLossTerms vae_loss(const VaeModel& model, const std::vector<Vec>& batch,
                      bool adv_active) {
  ME_CHECK(!batch.empty(), "vae_loss: empty batch");
  double rec = 0.0, adv = 0.0, kl = 0.0;
  const int c = model.config().latent_channels;
  for (const Vec& wave : batch) {
    const int r = model.config().r();
    const int frames = static_cast<int>((wave.size() + r - 1) / r);
    Mat x = Mat::Zero(1, frames * r);
    x.row(0).head(wave.size()) = wave.transpose();
    Tape t(model.params(), nullptr);
    V xin = t.constant(x);
    V moments = model.encode_graph(t, xin);
    const Mat& mm = t.value(moments);
    Mat mean = mm.topRows(c), logvar = mm.bottomRows(c);
    V xhat = model.decode_graph(t, t.constant(mean));
    rec += (t.value(xhat) - x).squaredNorm() / x.size();
    kl += kl_gaussian(mean, logvar);
    if (adv_active) adv += -t.value(model.disc_graph(t, xhat))(0, 0);
  }
  const double n = static_cast<double>(batch.size());
  return vae_loss_terms(rec / n, adv / n, kl / n, model.config(), adv_active);
}

}  // namespace musedit
