#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "musedit/common.hpp"
#include "musedit/nn/modules.hpp"

namespace musedit {

struct EmbedderConfig {
  int dim = 32;            // joint embedding width
  int hidden = 48;
  int conv_channels = 32;  // audio tower
  int latent_channels = 4;
  double temperature = 0.07;
  int text_vocab = 0;  // 0 -> grammar vocabulary size

  nlohmann::json to_json() const;
  static EmbedderConfig from_json(const nlohmann::json& j);
};

// Toy joint text-audio embedding: E_L over instruction tokens, E_M over
// latents. Both towers emit unit-norm vectors, so
// F = ||E_L - E_M||^2 = 2 - 2 cos.
class GuidanceEmbedder {
 public:
  explicit GuidanceEmbedder(const EmbedderConfig& cfg, uint64_t init_seed = 0xbeef);

  const EmbedderConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  nn::V text_graph(nn::Tape& t, const std::vector<int>& tokens) const;  // dim x 1
  nn::V audio_graph(nn::Tape& t, nn::V z) const;                        // dim x 1

  Vec embed_text(const std::string& instruction) const;
  Vec embed_text_tokens(const std::vector<int>& tokens) const;
  Vec embed_audio(const Mat& z) const;  // z: latent channels x frames

  // F(x,y) and its gradient w.r.t. the latent
  double guidance_value(const Mat& z, const std::string& instruction) const;
  Mat guidance_grad(const Mat& z, const std::string& instruction) const;

 private:
  EmbedderConfig cfg_;
  nn::ParamStore params_;
  nn::Embedding table_;
  nn::Linear t1_, t2_;
  nn::Conv1d a1_, a2_;
  nn::Linear am1_, am2_;
};

}  // namespace musedit
