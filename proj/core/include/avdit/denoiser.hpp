#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <vector>

#include "avdit/backbone.hpp"
#include "avdit/params.hpp"
#include "avdit/sequence.hpp"

namespace avdit {

struct Conditioning {
  std::vector<int> text_ids;
  std::optional<LatentGrid> ref_image;

  // Same conditioning with the text block emptied.
  Conditioning without_text() const { return {{}, ref_image}; }
};

// The jointly denoised state: one video latent and one audio latent.
struct JointLatent {
  LatentGrid video;
  AudioLatent audio;
};

// Embeds and packs text | ref image | video | audio into one sequence.
TokenSequence embed_inputs(const ModelParams& params, const Conditioning& cond, const JointLatent& x);

// Maps velocity tokens back to latent layout using the video coordinates of seq.
JointLatent tokens_to_latents(const VelocityTokens& v, const TokenSequence& seq, const ModelParams& params,
                              GridShape video_grid);

JointLatent predict_velocity(const ModelParams& params, const Conditioning& cond, const JointLatent& x,
                             const AttentionPlan& plan);

// A velocity field over the joint latent. There is no time argument; the
// denoising state has to be read off x itself.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual JointLatent velocity(const JointLatent& x, const Conditioning& cond) const = 0;
};

class TransformerDenoiser final : public Denoiser {
 public:
  using PlanBuilder = std::function<AttentionPlan(const TokenSequence&)>;
  using Observer = std::function<void(const TokenSequence&)>;

  // params must outlive the denoiser. Without a plan builder every layer
  // attends globally.
  explicit TransformerDenoiser(const ModelParams& params, PlanBuilder plan = {});

  JointLatent velocity(const JointLatent& x, const Conditioning& cond) const override;

  // Called with every packed input sequence before the forward pass.
  void set_observer(Observer observer) { observer_ = std::move(observer); }
  std::size_t evaluations() const { return evaluations_.load(); }
  const ModelParams& params() const { return *params_; }

 private:
  const ModelParams* params_;
  PlanBuilder plan_;
  Observer observer_;
  mutable std::atomic<std::size_t> evaluations_{0};
};

}  // namespace avdit
