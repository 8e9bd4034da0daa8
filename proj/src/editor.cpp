#include "musedit/editor.hpp"

#include "musedit/checkpoint.hpp"
#include "musedit/conditioners.hpp"
#include "musedit/instructions.hpp"

namespace musedit {

Editor::Editor(const std::string& vae_checkpoint, const std::string& diffusion_checkpoint,
               const std::string& embedder_checkpoint)
    : vae_path_(vae_checkpoint), diff_path_(diffusion_checkpoint),
      emb_path_(embedder_checkpoint) {
  vae_ = load_vae_checkpoint(vae_checkpoint);
  diffusion_ = load_diffusion_checkpoint(diffusion_checkpoint);
  if (!embedder_checkpoint.empty())
    embedder_ = load_embedder_checkpoint(embedder_checkpoint);
}

Editor::Result Editor::edit(const Vec& source, int sample_rate,
                            const std::string& instruction,
                            const GuidanceConfig& guidance, int steps,
                            uint64_t seed) const {
  ME_CHECK(source.size() > 0, "edit: empty source");
  ME_CHECK(sample_rate == vae_->config().sample_rate,
           "edit: sample rate does not match the codec");
  validate_guidance(guidance);
  const EditTask task = parse_instruction(instruction);
  const std::vector<int> tokens = Grammar::get().tokenize(task);

  const double inv = 1.0 / diffusion_.latent_scale;
  Mat z_s = vae_->encode(source).cf * inv;
  ChordMatrix chords = extract_chords(source, sample_rate);

  SampleCond cond;
  cond.tokens = &tokens;
  cond.chord = diffusion_.unet->config().use_chord ? &chords.probs : nullptr;
  cond.z_s = z_s;
  cond.instruction = instruction;
  const GuidanceEmbedder* emb = guidance.s != 0.0 ? embedder_.get() : nullptr;
  ME_CHECK(guidance.s == 0.0 || emb != nullptr,
           "edit: classifier guidance requested but no embedder checkpoint loaded");

  Mat z0 = ddim_sample(*diffusion_.unet, diffusion_.schedule, cond, steps, guidance,
                       seed, emb);
  LatentSeq z;
  z.cf = z0 * diffusion_.latent_scale;
  z.frame_rate = static_cast<double>(sample_rate) / vae_->config().r();
  Vec decoded = vae_->decode(z);
  ME_CHECK(decoded.size() >= source.size(), "edit: decoded output too short");

  Result r;
  r.wave = decoded.head(source.size());
  r.provenance = {{"instruction", instruction},
                  {"seed", seed},
                  {"steps", steps},
                  {"cfg_w", guidance.w},
                  {"cg_s", guidance.s},
                  {"cg_stride", guidance.cg_stride},
                  {"sample_rate", sample_rate},
                  {"vae_checkpoint", vae_path_},
                  {"diffusion_checkpoint", diff_path_},
                  {"embedder_checkpoint", emb_path_},
                  {"vae_config_digest", config_digest(vae_->config().to_json())},
                  {"unet_config_digest",
                   config_digest(diffusion_.unet->config().to_json())},
                  {"latent_scale", diffusion_.latent_scale}};
  return r;
}

std::vector<Editor::RoundResult> Editor::multiround(
    const Vec& source, int sample_rate, const std::vector<std::string>& instructions,
    const GuidanceConfig& guidance, int steps, uint64_t seed) const {
  ME_CHECK(!instructions.empty(), "multiround: no instructions");
  std::vector<RoundResult> rounds;
  Vec current = source;
  for (size_t k = 0; k < instructions.size(); ++k) {
    RoundResult rr;
    rr.result = edit(current, sample_rate, instructions[k], guidance, steps,
                     seed + static_cast<uint64_t>(k));
    rr.result.provenance["round"] = k;

    // consistency report of this round's output against its own source
    EvalPair pair;
    pair.task_kind = edit_kind_name(parse_instruction(instructions[k]).kind);
    pair.edited = rr.result.wave;
    pair.target = current;
    pair.sample_rate = sample_rate;
    pair.target_tags = oracle_tags(current, sample_rate);
    pair.target_chords = extract_chords(current, sample_rate).argmax_labels();
    pair.target_notes = detect_notes(current, sample_rate);
    pair.bar_duration = 1.0;
    rr.report = evaluate_suite({pair});
    rounds.push_back(std::move(rr));
    current = rounds.back().result.wave;
  }
  return rounds;
}

}  // namespace musedit
