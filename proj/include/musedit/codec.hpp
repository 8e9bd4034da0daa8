#pragma once

#include <utility>
#include <vector>

#include <json.hpp>

#include "musedit/common.hpp"
#include "musedit/nn/modules.hpp"

namespace musedit {

struct CodecConfig {
  int sample_rate = 8000;
  std::vector<int> strides{4, 4, 3, 2};       // encoder; decoder mirrors
  std::vector<int> enc_channels{16, 32, 64, 128};
  int stem_channels = 16;
  int latent_channels = 4;
  int resblocks = 1;
  // discriminator (multi-scale 1-D conv stack, hinge loss)
  int disc_scales = 3;
  std::vector<int> disc_channels{16, 32, 64};
  // loss weights
  double w_rec = 1.0;
  double w_adv = 0.1;
  double w_kl = 1e-4;
  bool use_spectral_loss = false;  // optional multi-resolution STFT term
  double w_spec = 1.0;

  int r() const {
    int p = 1;
    for (int s : strides) p *= s;
    return p;
  }
  double compression_ratio() const { return static_cast<double>(r()) / latent_channels; }

  nlohmann::json to_json() const;
  static CodecConfig from_json(const nlohmann::json& j);
};

// 2-D latent: channels x frames internally; the public/serialized layout is
// frames x channels.
struct LatentSeq {
  Mat cf;
  double frame_rate = 0.0;
  int channels() const { return static_cast<int>(cf.rows()); }
  int frames() const { return static_cast<int>(cf.cols()); }
};

class VaeModel {
 public:
  explicit VaeModel(const CodecConfig& cfg, uint64_t init_seed = 0x5eed);

  const CodecConfig& config() const { return cfg_; }
  // one store for generator and discriminator so adversarial gradients can
  // flow through the discriminator into the decoder on a single tape
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::vector<int> gen_param_ids() const;
  std::vector<int> disc_param_ids() const;

  // graph builders, shared by training, gradient checks and inference
  nn::V encode_graph(nn::Tape& t, nn::V x) const;  // 1 x T -> 2C x F (mean, logvar)
  nn::V decode_graph(nn::Tape& t, nn::V z) const;  // C x F -> 1 x T
  nn::V disc_graph(nn::Tape& t, nn::V x) const;    // 1 x T -> mean logit (1x1)

  // eval-mode paths; encode pads to a multiple of r (zeros on the right)
  std::pair<Mat, Mat> encode_moments(const Vec& wave) const;
  LatentSeq encode(const Vec& wave) const;  // mean only
  Vec decode(const LatentSeq& z) const;

 private:
  CodecConfig cfg_;
  nn::ParamStore params_;
  int first_disc_param_ = 0;

  struct Res {
    nn::LayerNorm ln1, ln2;
    nn::Conv1d c1, c2;
  };
  nn::V apply_res(nn::Tape& t, const Res& r, nn::V x) const;

  nn::Conv1d enc_stem_;
  std::vector<nn::Conv1d> enc_down_;
  std::vector<Res> enc_res_;
  nn::LayerNorm enc_head_ln_;
  nn::Conv1d enc_head_;

  nn::Conv1d dec_head_;
  std::vector<Res> dec_res_;
  std::vector<nn::ConvT1d> dec_up_;
  nn::LayerNorm dec_out_ln_;
  nn::Conv1d dec_out_;

  struct DiscScale {
    std::vector<nn::Conv1d> convs;
    nn::Conv1d out;
  };
  std::vector<DiscScale> disc_;
};

// Closed-form loss pieces (unit-testable without a trained model).
double kl_gaussian(const Mat& mean, const Mat& logvar);  // mean over dims

struct VaeLossTerms {
  double rec = 0.0, adv = 0.0, kl = 0.0, total = 0.0;
};

VaeLossTerms vae_loss_terms(double rec, double adv, double kl, const CodecConfig& cfg,
                            bool adv_active);

// Mean losses over a batch with the current model (no gradients); aborts on
// non-finite terms.
VaeLossTerms vae_loss(const VaeModel& model, const std::vector<Vec>& batch,
                      bool adv_active);

}  // namespace musedit
