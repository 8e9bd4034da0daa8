#pragma once

#include <optional>
#include <string>
#include <vector>

#include "musedit/common.hpp"
#include "musedit/embedder_fwd.hpp"
#include "musedit/unet.hpp"

namespace musedit {

struct NoiseSchedule {
  int t_steps = 1000;
  Vec beta;       // beta[t-1] for t in [1, T]
  Vec alpha;      // 1 - beta
  Vec alpha_bar;  // running product

  // alpha_bar with the convention alpha_bar(0) = 1
  double alpha_bar_at(int t) const {
    ME_CHECK(t >= 0 && t <= t_steps, "schedule: t out of range");
    return t == 0 ? 1.0 : alpha_bar[t - 1];
  }
  double beta_at(int t) const {
    ME_CHECK(t >= 1 && t <= t_steps, "schedule: t out of range");
    return beta[t - 1];
  }
};

NoiseSchedule make_schedule(int t_steps, double beta_start = 1e-4,
                            double beta_end = 0.02, const std::string& kind = "linear");

// z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps
Mat q_sample(const Mat& z0, int t, const Mat& eps, const NoiseSchedule& sched);

struct GuidanceConfig {
  double w = 2.0;      // CFG weight
  double s = 0.0;      // CG scale (signed; negative descends F)
  double p_cfg = 0.1;  // training-time text drop probability
  int cg_stride = 1;   // apply CG every n-th sampling step
};

void validate_guidance(const GuidanceConfig& g);

// (1-w) * eps(no text) + w * eps(text); the no-text branch keeps chord and
// source conditions.
Mat cfg_predict(const UNetModel& model, int tstep, const std::vector<int>* tokens,
                const Mat* chord, const Mat& z_s, const Mat& z_t, double w);

// x_hat = x + s * dF/dx with F(x, y) = ||E_L(y) - E_M(x)||^2.
Mat classifier_guide(const Mat& x_t, const std::string& instruction, double s,
                     const GuidanceEmbedder& embedder);

struct SampleCond {
  const std::vector<int>* tokens = nullptr;  // null = unconditional text
  const Mat* chord = nullptr;                // null = no chord condition
  Mat z_s;                                   // source latent (channels x frames)
  std::string instruction;                   // used by classifier guidance
};

// Deterministic DDIM (eta = 0) from Gaussian init; CFG applied at every step,
// CG applied every cg_stride steps when s != 0 and an embedder is given.
Mat ddim_sample(const UNetModel& model, const NoiseSchedule& sched,
                const SampleCond& cond, int steps, const GuidanceConfig& guidance,
                uint64_t seed, const GuidanceEmbedder* embedder = nullptr);

// Decreasing timestep sequence used by ddim_sample (exposed for tests).
std::vector<int> ddim_timesteps(int t_steps, int steps);

}  // namespace musedit
