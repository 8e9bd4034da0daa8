#include "musedit/unet.hpp"

#include "musedit/instructions.hpp"

namespace musedit {

using nn::Tape;
using nn::V;

nlohmann::json UNetConfig::to_json() const {
  return {{"latent_channels", latent_channels},
          {"channels", channels},
          {"resblocks", resblocks},
          {"head_dim", head_dim},
          {"text_dim", text_dim},
          {"chord_classes", chord_classes},
          {"chunk_k", chunk_k},
          {"time_dim", time_dim},
          {"ff_mult", ff_mult},
          {"use_chord", use_chord},
          {"input_concat_source", input_concat_source},
          {"text_vocab", text_vocab}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
  UNetConfig c;
  c.latent_channels = j.value("latent_channels", c.latent_channels);
  c.channels = j.value("channels", c.channels);
  c.resblocks = j.value("resblocks", c.resblocks);
  c.head_dim = j.value("head_dim", c.head_dim);
  c.text_dim = j.value("text_dim", c.text_dim);
  c.chord_classes = j.value("chord_classes", c.chord_classes);
  c.chunk_k = j.value("chunk_k", c.chunk_k);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.ff_mult = j.value("ff_mult", c.ff_mult);
  c.use_chord = j.value("use_chord", c.use_chord);
  c.input_concat_source = j.value("input_concat_source", c.input_concat_source);
  c.text_vocab = j.value("text_vocab", c.text_vocab);
  return c;
}

UNetModel::Res UNetModel::make_res(const std::string& name, int cin, int cout, Rng& rng) {
  Res r;
  r.ln1 = nn::LayerNorm(params_, name + ".ln1", cin);
  r.c1 = nn::Conv1d(params_, name + ".c1", cin, cout, 3, 1, 1, rng);
  r.temb = nn::Linear(params_, name + ".temb", cfg_.time_dim, cout, rng);
  r.ln2 = nn::LayerNorm(params_, name + ".ln2", cout);
  r.c2 = nn::Conv1d(params_, name + ".c2", cout, cout, 3, 1, 1, rng);
  if (cin != cout) {
    r.skip = nn::Conv1d(params_, name + ".skip", cin, cout, 1, 1, 0, rng);
    r.has_skip = true;
  }
  return r;
}

V UNetModel::apply_res(Tape& t, const Res& r, V x, V temb) const {
  V h = r.c1(t, t.silu(r.ln1(t, x)));
  h = t.add_col(h, r.temb(t, temb));
  h = r.c2(t, t.silu(r.ln2(t, h)));
  V skip = r.has_skip ? r.skip(t, x) : x;
  return t.add(skip, h);
}

UNetModel::Stage UNetModel::make_stage(const std::string& name, int ch, int level,
                                       bool with_msa, Rng& rng) {
  Stage s;
  if (with_msa) {
    s.msa_proj = nn::Conv1d(params_, name + ".msa_proj", 2 * ch, ch, 1, 1, 0, rng);
    s.has_msa = true;
  }
  s.chunk = ChunkTransformerLayer(params_, name + ".chunk", ch, cfg_.head_dim,
                                  cfg_.ff_mult, ChunkSpec{cfg_.chunk_k[level]}, rng);
  s.ln_cross = nn::LayerNorm(params_, name + ".ln_cross", ch);
  s.cross_text = nn::Attention(params_, name + ".cross_text", ch, cfg_.text_dim,
                               cfg_.head_dim, rng);
  return s;
}

V UNetModel::apply_stage(Tape& t, const Stage& s, V h, V msa_feat, V text_ctx) const {
  if (s.has_msa) {
    ME_CHECK(msa_feat.valid(), "unet: stage expects an MSA feature");
    ME_CHECK(t.value(msa_feat).cols() == t.value(h).cols(),
             "unet: MSA feature frame count mismatch");
    h = s.msa_proj(t, t.concat_rows({h, msa_feat}));
  }
  h = s.chunk(t, h);
  h = t.add(h, s.cross_text(t, s.ln_cross(t, h), text_ctx, nullptr));
  return h;
}

UNetModel::UNetModel(const UNetConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  ME_CHECK(cfg_.levels() >= 2, "unet: needs at least 2 levels");
  ME_CHECK(cfg_.chunk_k.size() == cfg_.channels.size(),
           "unet: chunk_k must match levels");
  if (cfg_.text_vocab == 0) cfg_.text_vocab = Grammar::get().vocab_size();
  Rng rng(init_seed);

  time1_ = nn::Linear(params_, "time1", cfg_.time_dim, cfg_.time_dim, rng);
  time2_ = nn::Linear(params_, "time2", cfg_.time_dim, cfg_.time_dim, rng);
  text_table_ = nn::Embedding(params_, "text", cfg_.text_dim, cfg_.text_vocab, rng);

  const int L = cfg_.levels();
  const int in_ch =
      cfg_.input_concat_source ? 2 * cfg_.latent_channels : cfg_.latent_channels;
  in_conv_ = nn::Conv1d(params_, "in", in_ch, cfg_.channels[0], 3, 1, 1, rng);

  // MSA pyramid (bias-free so zero source gives exactly zero features)
  for (int l = 0; l < L; ++l) {
    const int cin = l == 0 ? cfg_.latent_channels : cfg_.channels[l - 1];
    const int stride = l == 0 ? 1 : 2;
    const int k = l == 0 ? 3 : 4;
    msa_convs_.emplace_back(params_, "msa" + std::to_string(l), cin, cfg_.channels[l], k,
                            stride, 1, rng, /*bias=*/false);
  }

  for (int l = 0; l < L; ++l) {
    const std::string base = "down" + std::to_string(l);
    std::vector<Res> rs;
    for (int r = 0; r < cfg_.resblocks; ++r)
      rs.push_back(make_res(base + ".res" + std::to_string(r), cfg_.channels[l],
                            cfg_.channels[l], rng));
    down_res_.push_back(std::move(rs));
    down_stage_.push_back(make_stage(base + ".stage", cfg_.channels[l], l, true, rng));
    if (l + 1 < L)
      down_conv_.emplace_back(params_, base + ".down", cfg_.channels[l],
                              cfg_.channels[l + 1], 4, 2, 1, rng);
  }

  const int cb = cfg_.channels.back();
  bottleneck_res_ = make_res("mid.res", cb, cb, rng);
  if (cfg_.use_chord) {
    chord_ln_ = nn::LayerNorm(params_, "mid.ln_chord", cb);
    chord_cross_ = nn::Attention(params_, "mid.cross_chord", cb, cfg_.chord_classes,
                                 cfg_.head_dim, rng);
  }

  for (int l = L - 2; l >= 0; --l) {
    const std::string base = "up" + std::to_string(l);
    up_conv_.emplace_back(params_, base + ".up", cfg_.channels[l + 1], cfg_.channels[l],
                          4, 2, 1, rng);
    std::vector<Res> rs;
    for (int r = 0; r < cfg_.resblocks; ++r) {
      const int cin = r == 0 ? 2 * cfg_.channels[l] : cfg_.channels[l];
      rs.push_back(make_res(base + ".res" + std::to_string(r), cin, cfg_.channels[l], rng));
    }
    up_res_.push_back(std::move(rs));
    up_stage_.push_back(make_stage(base + ".stage", cfg_.channels[l], l, false, rng));
  }

  head_ln_ = nn::LayerNorm(params_, "head_ln", cfg_.channels[0]);
  head_ = nn::Conv1d(params_, "head", cfg_.channels[0], cfg_.latent_channels, 3, 1, 1, rng);
  params_.value(head_.w).setZero();  // start as the zero denoiser
}

std::vector<V> UNetModel::msa_graph(Tape& t, V z_s) const {
  std::vector<V> feats;
  V h = z_s;
  for (size_t l = 0; l < msa_convs_.size(); ++l) {
    h = msa_convs_[l](t, l == 0 ? h : t.silu(h));
    feats.push_back(h);
  }
  return feats;
}

V UNetModel::forward_graph(Tape& t, int tstep, const std::vector<int>* tokens, V chord,
                           V z_s, V z_t, UnetTrace* trace) const {
  ME_CHECK(t.value(z_t).rows() == cfg_.latent_channels, "unet: z_t channel mismatch");
  ME_CHECK(t.value(z_s).rows() == cfg_.latent_channels, "unet: z_s channel mismatch");
  ME_CHECK(t.value(z_s).cols() == t.value(z_t).cols(), "unet: z_s/z_t frame mismatch");
  const int L = cfg_.levels();
  const int T = static_cast<int>(t.value(z_t).cols());
  ME_CHECK(T % (1 << (L - 1)) == 0, "unet: frames must be divisible by 2^(levels-1)");
  if (chord.valid())
    ME_CHECK(t.value(chord).rows() == cfg_.chord_classes, "unet: chord rows != d_p");

  // time conditioning
  V temb = t.constant(nn::sinusoidal_embedding(static_cast<double>(tstep), cfg_.time_dim));
  temb = time2_(t, t.silu(time1_(t, temb)));

  // text context: the learned null token stands in when text is absent
  std::vector<int> ids = tokens ? *tokens : std::vector<int>{Grammar::get().null_id()};
  ME_CHECK(!ids.empty(), "unet: empty token sequence");
  V text_ctx = text_table_(t, ids);

  std::vector<V> msa = msa_graph(t, z_s);

  V h = cfg_.input_concat_source ? in_conv_(t, t.concat_rows({z_t, z_s}))
                                 : in_conv_(t, z_t);
  std::vector<V> skips;
  for (int l = 0; l < L; ++l) {
    for (const auto& r : down_res_[l]) h = apply_res(t, r, h, temb);
    h = apply_stage(t, down_stage_[l], h, msa[l], text_ctx);
    if (trace) trace->down_stage_out.push_back(t.value(h));  // all pre-chord
    if (l + 1 < L) {
      skips.push_back(h);
      h = down_conv_[l](t, h);
    }
  }

  // bottleneck: chord conditions attach here and only here
  if (cfg_.use_chord && chord.valid())
    h = t.add(h, chord_cross_(t, chord_ln_(t, h), chord, nullptr));
  h = apply_res(t, bottleneck_res_, h, temb);
  if (trace) trace->bottleneck_out = t.value(h);

  for (int u = 0; u < L - 1; ++u) {
    h = up_conv_[u](t, h);
    V skip = skips[skips.size() - 1 - u];
    h = t.concat_rows({h, skip});
    for (const auto& r : up_res_[u]) h = apply_res(t, r, h, temb);
    h = apply_stage(t, up_stage_[u], h, V{}, text_ctx);
  }
  return head_(t, t.silu(head_ln_(t, h)));
}

Mat UNetModel::predict_eps(int tstep, const std::vector<int>* tokens, const Mat* chord,
                           const Mat& z_s, const Mat& z_t, UnetTrace* trace) const {
  Tape t(params_, nullptr);
  V chord_v = chord ? t.constant(*chord) : V{};
  V out = forward_graph(t, tstep, tokens, chord_v, t.constant(z_s), t.constant(z_t), trace);
  check_finite(t.value(out), "unet output");
  return t.value(out);
}

MSAFeatures UNetModel::msa_encode(const Mat& z_s) const {
  Tape t(params_, nullptr);
  MSAFeatures f;
  for (V v : msa_graph(t, t.constant(z_s))) f.levels.push_back(t.value(v));
  return f;
}

}  // namespace musedit
