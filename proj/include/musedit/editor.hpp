#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "musedit/diffusion.hpp"
#include "musedit/embedder.hpp"
#include "musedit/metrics.hpp"
#include "musedit/trainers.hpp"

namespace musedit {

// Frozen-checkpoint editing pipeline: encode source, extract chords, run the
// guided DDIM sampler, decode, trim to the input length.
class Editor {
 public:
  Editor(const std::string& vae_checkpoint, const std::string& diffusion_checkpoint,
         const std::string& embedder_checkpoint = "");

  struct Result {
    Vec wave;
    nlohmann::json provenance;
  };

  Result edit(const Vec& source, int sample_rate, const std::string& instruction,
              const GuidanceConfig& guidance, int steps, uint64_t seed) const;

  // Chains edit() k times, feeding round k's output in as round k+1's source.
  // Emits a MetricReport per round comparing that round's output with its own
  // source (consistency view).
  struct RoundResult {
    Result result;
    MetricReport report;
  };
  std::vector<RoundResult> multiround(const Vec& source, int sample_rate,
                                      const std::vector<std::string>& instructions,
                                      const GuidanceConfig& guidance, int steps,
                                      uint64_t seed) const;

  const VaeModel& vae() const { return *vae_; }
  const UNetModel& unet() const { return *diffusion_.unet; }
  const NoiseSchedule& schedule() const { return diffusion_.schedule; }
  double latent_scale() const { return diffusion_.latent_scale; }
  const GuidanceEmbedder* embedder() const { return embedder_.get(); }

 private:
  std::unique_ptr<VaeModel> vae_;
  DiffusionBundle diffusion_;
  std::unique_ptr<GuidanceEmbedder> embedder_;
  std::string vae_path_, diff_path_, emb_path_;
};

}  // namespace musedit
