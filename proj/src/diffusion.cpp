#include "musedit/diffusion.hpp"

#include <cmath>

#include "musedit/embedder.hpp"
#include "musedit/rng.hpp"

namespace musedit {

NoiseSchedule make_schedule(int t_steps, double beta_start, double beta_end,
                            const std::string& kind) {
  ME_CHECK(t_steps >= 1, "schedule: t_steps must be >= 1");
  ME_CHECK(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
           "schedule: need 0 < beta_start <= beta_end < 1");
  ME_CHECK(kind == "linear", "schedule: unknown kind " + kind);
  NoiseSchedule s;
  s.t_steps = t_steps;
  s.beta.resize(t_steps);
  s.alpha.resize(t_steps);
  s.alpha_bar.resize(t_steps);
  double prod = 1.0;
  for (int i = 0; i < t_steps; ++i) {
    const double b =
        t_steps == 1 ? beta_start
                     : beta_start + (beta_end - beta_start) * i / (t_steps - 1);
    s.beta[i] = b;
    s.alpha[i] = 1.0 - b;
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  return s;
}

Mat q_sample(const Mat& z0, int t, const Mat& eps, const NoiseSchedule& sched) {
  ME_CHECK(t >= 1 && t <= sched.t_steps, "q_sample: t out of range");
  ME_CHECK(z0.rows() == eps.rows() && z0.cols() == eps.cols(),
           "q_sample: shape mismatch");
  const double ab = sched.alpha_bar_at(t);
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

void validate_guidance(const GuidanceConfig& g) {
  ME_CHECK(g.p_cfg >= 0.0 && g.p_cfg < 1.0, "guidance: p_cfg in [0,1)");
  ME_CHECK(std::isfinite(g.w) && std::isfinite(g.s), "guidance: w, s must be finite");
  ME_CHECK(g.cg_stride >= 1, "guidance: cg_stride >= 1");
}

Mat cfg_predict(const UNetModel& model, int tstep, const std::vector<int>* tokens,
                const Mat* chord, const Mat& z_s, const Mat& z_t, double w) {
  const Mat cond = model.predict_eps(tstep, tokens, chord, z_s, z_t);
  if (w == 1.0) return cond;  // (1-1)*uncond + 1*cond
  const Mat uncond = model.predict_eps(tstep, nullptr, chord, z_s, z_t);
  return (1.0 - w) * uncond + w * cond;
}

Mat classifier_guide(const Mat& x_t, const std::string& instruction, double s,
                     const GuidanceEmbedder& embedder) {
  ME_CHECK(std::isfinite(s), "classifier_guide: s must be finite");
  if (s == 0.0) return x_t;
  return x_t + s * embedder.guidance_grad(x_t, instruction);
}

std::vector<int> ddim_timesteps(int t_steps, int steps) {
  ME_CHECK(steps >= 1 && steps <= t_steps, "ddim: steps must be in [1, t_steps]");
  std::vector<int> taus;
  for (int i = 0; i < steps; ++i) {
    const int t = steps == 1
                      ? t_steps
                      : 1 + static_cast<int>(std::lround(
                                static_cast<double>(i) * (t_steps - 1) / (steps - 1)));
    if (taus.empty() || taus.back() != t) taus.push_back(t);
  }
  std::reverse(taus.begin(), taus.end());  // decreasing
  return taus;
}

Mat ddim_sample(const UNetModel& model, const NoiseSchedule& sched,
                const SampleCond& cond, int steps, const GuidanceConfig& guidance,
                uint64_t seed, const GuidanceEmbedder* embedder) {
  validate_guidance(guidance);
  Rng rng(seed);
  Mat z(cond.z_s.rows(), cond.z_s.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c)
    for (Eigen::Index r = 0; r < z.rows(); ++r) z(r, c) = rng.gaussian();

  const std::vector<int> taus = ddim_timesteps(sched.t_steps, steps);
  const bool use_cg = guidance.s != 0.0 && embedder != nullptr;
  int step_idx = 0;
  for (size_t i = 0; i < taus.size(); ++i, ++step_idx) {
    const int t = taus[i];
    const int t_prev = i + 1 < taus.size() ? taus[i + 1] : 0;
    if (use_cg && step_idx % guidance.cg_stride == 0)
      z = classifier_guide(z, cond.instruction, guidance.s, *embedder);
    const Mat eps = cfg_predict(model, t, cond.tokens, cond.chord, cond.z_s, z,
                                guidance.w);
    const double ab_t = sched.alpha_bar_at(t);
    const double ab_prev = sched.alpha_bar_at(t_prev);
    const Mat z0_pred = (z - std::sqrt(1.0 - ab_t) * eps) / std::sqrt(ab_t);
    z = std::sqrt(ab_prev) * z0_pred + std::sqrt(1.0 - ab_prev) * eps;
    ME_CHECK(z.allFinite() && z.cwiseAbs().maxCoeff() < 1e3,
             "ddim_sample: trajectory diverged at t=" + std::to_string(t));
  }
  return z;
}

}  // namespace musedit
