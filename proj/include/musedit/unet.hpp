#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "musedit/chunk.hpp"
#include "musedit/common.hpp"
#include "musedit/nn/modules.hpp"

namespace musedit {

struct UNetConfig {
  int latent_channels = 4;
  std::vector<int> channels{32, 64, 64};  // per level; last level is the bottleneck
  int resblocks = 2;
  int head_dim = 16;
  int text_dim = 64;
  int chord_classes = 25;
  std::vector<int> chunk_k{16, 16, 16};  // chunk length per level
  int time_dim = 64;
  int ff_mult = 2;
  bool use_chord = true;
  bool input_concat_source = false;  // optional source concat at the input, off
  int text_vocab = 0;                // 0 -> grammar vocabulary size

  int levels() const { return static_cast<int>(channels.size()); }
  nlohmann::json to_json() const;
  static UNetConfig from_json(const nlohmann::json& j);
};

// Per-resolution source features from the multi-scale aggregation encoder.
struct MSAFeatures {
  std::vector<Mat> levels;  // level l: channels[l] x (T >> l)
};

// Captured activations for conditioning-locality checks.
struct UnetTrace {
  std::vector<Mat> down_stage_out;  // after each pre-bottleneck stage
  Mat bottleneck_out;
};

class UNetModel {
 public:
  explicit UNetModel(const UNetConfig& cfg, uint64_t init_seed = 0xdecaf);

  const UNetConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Tape-level forward. tokens == nullptr means ABSENT text (the learned
  // null token is used); chord invalid means ABSENT chord (the bottleneck
  // cross-attention is skipped).
  nn::V forward_graph(nn::Tape& t, int tstep, const std::vector<int>* tokens,
                      nn::V chord, nn::V z_s, nn::V z_t,
                      UnetTrace* trace = nullptr) const;

  std::vector<nn::V> msa_graph(nn::Tape& t, nn::V z_s) const;

  // Eval-mode prediction (no gradients); z: channels x frames.
  Mat predict_eps(int tstep, const std::vector<int>* tokens, const Mat* chord,
                  const Mat& z_s, const Mat& z_t, UnetTrace* trace = nullptr) const;

  MSAFeatures msa_encode(const Mat& z_s) const;

 private:
  UNetConfig cfg_;
  nn::ParamStore params_;

  struct Res {
    nn::LayerNorm ln1, ln2;
    nn::Conv1d c1, c2;
    nn::Linear temb;
    nn::Conv1d skip;  // 1x1 when cin != cout
    bool has_skip = false;
  };
  Res make_res(const std::string& name, int cin, int cout, Rng& rng);
  nn::V apply_res(nn::Tape& t, const Res& r, nn::V x, nn::V temb) const;

  struct Stage {
    nn::Conv1d msa_proj;  // 1x1 over concat(h, msa), down path only
    bool has_msa = false;
    ChunkTransformerLayer chunk;
    nn::LayerNorm ln_cross;
    nn::Attention cross_text;
  };
  Stage make_stage(const std::string& name, int ch, int level, bool with_msa, Rng& rng);
  nn::V apply_stage(nn::Tape& t, const Stage& s, nn::V h, nn::V msa_feat,
                    nn::V text_ctx) const;

  nn::Linear time1_, time2_;
  nn::Embedding text_table_;
  nn::Conv1d in_conv_;
  std::vector<nn::Conv1d> msa_convs_;

  std::vector<std::vector<Res>> down_res_;  // per level
  std::vector<Stage> down_stage_;
  std::vector<nn::Conv1d> down_conv_;       // between levels

  Res bottleneck_res_;
  nn::LayerNorm chord_ln_;
  nn::Attention chord_cross_;

  std::vector<nn::ConvT1d> up_conv_;
  std::vector<std::vector<Res>> up_res_;
  std::vector<Stage> up_stage_;

  nn::LayerNorm head_ln_;
  nn::Conv1d head_;
};

}  // namespace musedit
