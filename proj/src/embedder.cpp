#include "musedit/embedder.hpp"

#include "musedit/instructions.hpp"

namespace musedit {

using nn::Tape;
using nn::V;

nlohmann::json EmbedderConfig::to_json() const {
  return {{"dim", dim},
          {"hidden", hidden},
          {"conv_channels", conv_channels},
          {"latent_channels", latent_channels},
          {"temperature", temperature},
          {"text_vocab", text_vocab}};
}

EmbedderConfig EmbedderConfig::from_json(const nlohmann::json& j) {
  EmbedderConfig c;
  c.dim = j.value("dim", c.dim);
  c.hidden = j.value("hidden", c.hidden);
  c.conv_channels = j.value("conv_channels", c.conv_channels);
  c.latent_channels = j.value("latent_channels", c.latent_channels);
  c.temperature = j.value("temperature", c.temperature);
  c.text_vocab = j.value("text_vocab", c.text_vocab);
  return c;
}

GuidanceEmbedder::GuidanceEmbedder(const EmbedderConfig& cfg, uint64_t init_seed)
    : cfg_(cfg) {
  if (cfg_.text_vocab == 0) cfg_.text_vocab = Grammar::get().vocab_size();
  Rng rng(init_seed);
  table_ = nn::Embedding(params_, "text", cfg_.hidden, cfg_.text_vocab, rng);
  t1_ = nn::Linear(params_, "t1", cfg_.hidden, cfg_.hidden, rng);
  t2_ = nn::Linear(params_, "t2", cfg_.hidden, cfg_.dim, rng);
  a1_ = nn::Conv1d(params_, "a1", cfg_.latent_channels, cfg_.conv_channels, 5, 2, 2, rng);
  a2_ = nn::Conv1d(params_, "a2", cfg_.conv_channels, cfg_.conv_channels, 5, 2, 2, rng);
  am1_ = nn::Linear(params_, "am1", cfg_.conv_channels, cfg_.hidden, rng);
  am2_ = nn::Linear(params_, "am2", cfg_.hidden, cfg_.dim, rng);
}

V GuidanceEmbedder::text_graph(Tape& t, const std::vector<int>& tokens) const {
  ME_CHECK(!tokens.empty(), "embedder: empty token sequence");
  V e = table_(t, tokens);  // hidden x L
  // mean-pool over tokens
  V pooled = t.scale(
      t.matmul(e, t.constant(Mat::Ones(static_cast<Eigen::Index>(tokens.size()), 1))),
      1.0 / static_cast<double>(tokens.size()));
  V h = t2_(t, t.silu(t1_(t, pooled)));
  return t.l2_normalize_col(h);
}

V GuidanceEmbedder::audio_graph(Tape& t, V z) const {
  ME_CHECK(t.value(z).rows() == cfg_.latent_channels, "embedder: latent channels");
  V h = t.silu(a1_(t, z));
  h = t.silu(a2_(t, h));
  const int frames = static_cast<int>(t.value(h).cols());
  V pooled = t.scale(t.matmul(h, t.constant(Mat::Ones(frames, 1))),
                     1.0 / static_cast<double>(frames));
  V out = am2_(t, t.silu(am1_(t, pooled)));
  return t.l2_normalize_col(out);
}

Vec GuidanceEmbedder::embed_text(const std::string& instruction) const {
  return embed_text_tokens(Grammar::get().tokenize(parse_instruction(instruction)));
}

Vec GuidanceEmbedder::embed_text_tokens(const std::vector<int>& tokens) const {
  Tape t(params_, nullptr);
  return t.value(text_graph(t, tokens)).col(0);
}

Vec GuidanceEmbedder::embed_audio(const Mat& z) const {
  Tape t(params_, nullptr);
  return t.value(audio_graph(t, t.constant(z))).col(0);
}

double GuidanceEmbedder::guidance_value(const Mat& z, const std::string& instruction) const {
  const Vec et = embed_text(instruction);
  const Vec ea = embed_audio(z);
  return (et - ea).squaredNorm();
}

Mat GuidanceEmbedder::guidance_grad(const Mat& z, const std::string& instruction) const {
  const Vec et = embed_text(instruction);
  Tape t(params_, nullptr);
  V zin = t.input(z);
  V ea = audio_graph(t, zin);
  V diff = t.sub(t.constant(et), ea);
  V f = t.sum(t.square(diff));
  t.backward(f);
  return t.grad_of(zin);
}

}  // namespace musedit
