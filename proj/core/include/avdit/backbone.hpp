#pragma once

#include <memory>
#include <span>
#include <vector>

#include "avdit/numerics.hpp"
#include "avdit/params.hpp"
#include "avdit/sequence.hpp"

namespace avdit {

// Per-layer additive attention bias ([n, n], entries 0 or -inf). A null
// entry means full bidirectional attention for that layer.
struct AttentionPlan {
  std::vector<std::shared_ptr<const Tensor>> layer_bias;

  static AttentionPlan global(std::size_t n_layers);
  std::size_t size() const { return layer_bias.size(); }
};

// Multi-head self-attention over already-normalized x with rotary q/k; head
// h's output is scaled by sigmoid(head_gates[h]) before the output
// projection. The head count is head_gates.size().
Tensor gated_attention(const Tensor& x, const RopeTable& rope, const Tensor* bias, const BlockWeights& w,
                       const Tensor& head_gates);

// Pre-norm residual block: x + attn(norm(x)), then + glu_mlp(norm(.)).
Tensor block_forward(const Tensor& x, const RopeTable& rope, const Tensor* bias, const BlockWeights& w,
                     const Tensor& head_gates, float eps = kDefaultNormEps);

// Block where each token uses the bank of its modality tag for every
// projection and norm gain; attention is one softmax over the whole sequence.
// Shared layers (single bank) route every token to that bank.
Tensor routed_block_forward(const TokenSequence& seq, const LayerParams& layer, const RopeTable& rope,
                            const Tensor* bias, float eps = kDefaultNormEps);

struct BlockGrads {
  BlockWeights weights;
  Tensor head_gates;
};

// Backward of block_forward for an upstream gradient dy. Accumulates
// parameter gradients into grads (which must match w's shapes) and returns
// the gradient with respect to x.
Tensor block_backward(const Tensor& x, const RopeTable& rope, const Tensor* bias, const BlockWeights& w,
                      const Tensor& head_gates, const Tensor& dy, BlockGrads& grads, float eps = kDefaultNormEps);

// Velocity predictions in latent units: video tokens as flattened patches,
// audio tokens as frames.
struct VelocityTokens {
  Tensor video;  // [n_video, patch_dim]
  Tensor audio;  // [n_audio, audio_channels]
};

// Runs B routed layers, the shared middle, B routed layers, then the
// per-modality output heads. There is deliberately no noise-level input:
// the state is inferred from the tokens.
VelocityTokens model_forward(const TokenSequence& seq, const ModelParams& params, const AttentionPlan& plan);

// Mean squared error of model_forward against targets over all video and
// audio elements.
double velocity_loss(const TokenSequence& seq, const ModelParams& params, const AttentionPlan& plan,
                     const VelocityTokens& target);

// Adds scale * d(loss)/d(params) into grad and, when d_feats is non-null,
// stores scale * d(loss)/d(seq.feats). Returns the unscaled loss.
double velocity_loss_backward(const TokenSequence& seq, const ModelParams& params, const AttentionPlan& plan,
                              const VelocityTokens& target, ModelParams& grad, float scale, Tensor* d_feats);

}  // namespace avdit
