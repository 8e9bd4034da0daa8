#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "musedit/codec.hpp"
#include "musedit/corpus_io.hpp"
#include "musedit/diffusion.hpp"
#include "musedit/embedder.hpp"
#include "musedit/unet.hpp"

namespace musedit {

inline constexpr int kCheckpointFormatVersion = 1;

// ------------------------------------------------------------------- VAE

struct VaeTrainConfig {
  CodecConfig codec;
  int steps = 20000;
  int batch_size = 8;
  double lr = 2e-4;
  int adv_warmup = 10000;  // adversarial term activates after this step
  int val_every = 250;
  int checkpoint_every = 5000;
  int min_corpus_clips = 500;
  uint64_t seed = 1;
  int threads = 2;

  nlohmann::json to_json() const;
  static VaeTrainConfig from_json(const nlohmann::json& j);
};

struct TrainResult {
  std::string checkpoint_path;
  std::string loss_csv_path;
  double initial_val = 0.0;
  double final_val = 0.0;
  int64_t steps_done = 0;
};

TrainResult train_vae(const std::string& corpus_root, const VaeTrainConfig& cfg,
                      const std::string& out_dir, const std::string& resume_path = "");

std::unique_ptr<VaeModel> load_vae_checkpoint(const std::string& path);

// --------------------------------------------------------------- diffusion

struct DiffusionTrainConfig {
  UNetConfig unet;
  int t_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int steps = 30000;
  int batch_size = 8;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double p_cfg = 0.1;
  int val_every = 250;
  int checkpoint_every = 5000;
  uint64_t seed = 2;
  int threads = 2;

  nlohmann::json to_json() const;
  static DiffusionTrainConfig from_json(const nlohmann::json& j);
};

TrainResult train_diffusion(const std::string& triplet_dir, const std::string& manifest,
                            const std::string& val_manifest,
                            const std::string& vae_checkpoint,
                            const DiffusionTrainConfig& cfg, const std::string& out_dir,
                            const std::string& resume_path = "");

struct DiffusionBundle {
  std::unique_ptr<UNetModel> unet;
  NoiseSchedule schedule;
  double latent_scale = 1.0;
  double p_cfg = 0.1;
  std::string vae_digest;
};

DiffusionBundle load_diffusion_checkpoint(const std::string& path);

// A single training example prepared for the diffusion model.
struct LatentTriplet {
  Mat z_source;  // scaled source latent
  Mat z_target;  // scaled target latent
  Mat chord;     // 25 x T_p chord matrix of the source
  std::vector<int> tokens;
  std::string task_kind;
};

std::vector<LatentTriplet> prepare_latents(const std::vector<TripletRecord>& records,
                                           const std::string& base_dir,
                                           const VaeModel& vae, double latent_scale);

// Scale factor such that target latents have unit variance (computed on a
// sample of training latents).
double compute_latent_scale(const std::vector<TripletRecord>& records,
                            const std::string& base_dir, const VaeModel& vae,
                            int max_items = 256);

// One-batch diffusion loss (shared by training and tests).
double diffusion_loss_batch(const UNetModel& model, const NoiseSchedule& sched,
                            const std::vector<const LatentTriplet*>& batch,
                            double p_cfg, Rng& rng, nn::GradSink* sink, int threads);

// ---------------------------------------------------------------- embedder

struct EmbedderTrainConfig {
  EmbedderConfig embedder;
  int steps = 3000;
  int batch_size = 16;
  double lr = 1e-3;
  int val_every = 250;
  uint64_t seed = 3;
  int threads = 2;
  int min_pairs = 500;

  nlohmann::json to_json() const;
  static EmbedderTrainConfig from_json(const nlohmann::json& j);
};

struct EmbedderTrainResult {
  std::string checkpoint_path;
  std::string loss_csv_path;
  double val_retrieval_top1 = 0.0;  // on a held-out batch
  int64_t steps_done = 0;
};

EmbedderTrainResult train_embedder(const std::string& triplet_dir,
                                   const std::string& manifest,
                                   const std::string& val_manifest,
                                   const std::string& vae_checkpoint,
                                   const EmbedderTrainConfig& cfg,
                                   const std::string& out_dir);

std::unique_ptr<GuidanceEmbedder> load_embedder_checkpoint(const std::string& path);

// in-batch symmetric InfoNCE; returns loss (and grads when sink != nullptr)
double contrastive_loss_batch(const GuidanceEmbedder& model,
                              const std::vector<const LatentTriplet*>& batch,
                              nn::GradSink* sink);

double retrieval_top1(const GuidanceEmbedder& model,
                      const std::vector<const LatentTriplet*>& batch);

}  // namespace musedit
