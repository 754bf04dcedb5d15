#include "avdit/training.hpp"

#include <cmath>

#include "avdit/backbone.hpp"
#include "avdit/error.hpp"

namespace avdit {

namespace {

VelocityTokens target_tokens(const ModelParams& params, const FlowSample& s) {
  return {extract_patches(s.velocity.video, params.config.patch).feats, s.velocity.audio.frames};
}

void accumulate_projection(const Tensor& inputs, const Tensor& d_out, std::size_t row0, Projection& g) {
  const std::size_t n = inputs.rows(), k = inputs.cols(), d = g.weight.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const float* xi = inputs.data() + i * k;
    const float* di = d_out.data() + (row0 + i) * d;
    for (std::size_t p = 0; p < k; ++p) {
      const float a = xi[p];
      float* gw = g.weight.data() + p * d;
      for (std::size_t j = 0; j < d; ++j) gw[j] += a * di[j];
    }
    for (std::size_t j = 0; j < d; ++j) g.bias[j] += di[j];
  }
}

// Chains the gradient of the packed features into the embedding table and
// the input projections.
void embedding_backward(const ModelParams& params, const FlowSample& s, const TokenSequence& seq,
                        const Tensor& d_feats, ModelParams& grad) {
  const std::size_t d = d_feats.cols();
  const auto [tb, te] = seq.range(Modality::Text);
  for (std::size_t i = tb; i < te; ++i) {
    const auto id = static_cast<std::size_t>(s.cond.text_ids[i - tb]);
    float* row = grad.text_embedding.data() + id * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += d_feats(i, j);
  }
  if (s.cond.ref_image && seq.count(Modality::RefImage) > 0) {
    const Tensor raw = extract_patches(*s.cond.ref_image, params.config.patch).feats;
    accumulate_projection(raw, d_feats, seq.range(Modality::RefImage).first, grad.video_in);
  }
  const Tensor video_raw = extract_patches(s.x_t.video, params.config.patch).feats;
  accumulate_projection(video_raw, d_feats, seq.range(Modality::Video).first, grad.video_in);
  accumulate_projection(s.x_t.audio.frames, d_feats, seq.range(Modality::Audio).first, grad.audio_in);
}

}  // namespace

AdamState AdamState::for_params(const ModelParams& params, AdamConfig config) {
  return {config, zeros_like(params), zeros_like(params), 0};
}

double flow_loss(const ModelParams& params, const FlowSample& sample) {
  const TokenSequence seq = embed_inputs(params, sample.cond, sample.x_t);
  return velocity_loss(seq, params, AttentionPlan::global(params.layers.size()), target_tokens(params, sample));
}

double flow_loss(const ModelParams& params, const FlowBatch& batch) {
  if (batch.samples.empty()) throw ConfigError("flow_loss: empty batch");
  double total = 0.0;
  for (const auto& s : batch.samples) total += flow_loss(params, s);
  return total / static_cast<double>(batch.samples.size());
}

double flow_loss_and_grad(const ModelParams& params, const FlowBatch& batch, ModelParams& grad) {
  if (batch.samples.empty()) throw ConfigError("flow_loss_and_grad: empty batch");
  const float scale = 1.0f / static_cast<float>(batch.samples.size());
  const AttentionPlan plan = AttentionPlan::global(params.layers.size());
  double total = 0.0;
  for (const auto& s : batch.samples) {
    const TokenSequence seq = embed_inputs(params, s.cond, s.x_t);
    Tensor d_feats;
    total += velocity_loss_backward(seq, params, plan, target_tokens(params, s), grad, scale, &d_feats);
    embedding_backward(params, s, seq, d_feats, grad);
  }
  return total / static_cast<double>(batch.samples.size());
}

double training_step(ModelParams& params, const FlowBatch& batch, AdamState& state) {
  ModelParams grad = zeros_like(params);
  const double loss = flow_loss_and_grad(params, batch, grad);
  if (!std::isfinite(loss)) throw DivergenceError("training_step", static_cast<int>(state.step));

  ++state.step;
  const AdamConfig& c = state.config;
  const double bc1 = 1.0 - std::pow(static_cast<double>(c.beta1), static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(static_cast<double>(c.beta2), static_cast<double>(state.step));
  const auto step_size = static_cast<float>(c.lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));

  std::vector<Tensor*> p_arrays, g_arrays, m_arrays, v_arrays;
  auto collect = [](std::vector<Tensor*>& out) {
    return [&out](const std::string&, Tensor& t, ParamCategory) { out.push_back(&t); };
  };
  params.for_each_array(collect(p_arrays));
  grad.for_each_array(collect(g_arrays));
  state.m.for_each_array(collect(m_arrays));
  state.v.for_each_array(collect(v_arrays));
  for (std::size_t a = 0; a < p_arrays.size(); ++a) {
    Tensor& p = *p_arrays[a];
    const Tensor& g = *g_arrays[a];
    Tensor& m = *m_arrays[a];
    Tensor& v = *v_arrays[a];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0f - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0f - c.beta2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + c.eps);
    }
  }
  return loss;
}

FlowBatch toy_eval_batch(const ToyDatasetConfig& data, std::uint64_t seed, int n) {
  CounterRng rng(seed, 0xe7a1);
  std::vector<DataSample> samples;
  for (int i = 0; i < n; ++i) samples.push_back(draw_toy_sample(data, rng));
  SamplerConfig sc;
  sc.cond_drop_prob = 0.0f;
  return make_training_batch(samples, sc, rng);
}

ToyTrainResult train_toy(ModelParams& params, const ToyDatasetConfig& data, const ToyTrainOptions& opt,
                         const TrainObserver& on_step) {
  if (opt.steps < 0 || opt.batch < 1 || opt.eval_samples < 1) throw ConfigError("train_toy: bad options");
  SamplerConfig sc;
  sc.cond_drop_prob = opt.cond_drop_prob;
  sc.validate();
  const FlowBatch eval = toy_eval_batch(data, opt.seed, opt.eval_samples);
  ToyTrainResult r;
  r.eval_initial = flow_loss(params, eval);
  AdamState adam = AdamState::for_params(params, opt.adam);
  CounterRng rng(opt.seed, 0x7a41);
  for (int step = 1; step <= opt.steps; ++step) {
    std::vector<DataSample> samples;
    for (int i = 0; i < opt.batch; ++i) samples.push_back(draw_toy_sample(data, rng));
    const FlowBatch batch = make_training_batch(samples, sc, rng);
    const double loss = training_step(params, batch, adam);
    r.batch_losses.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  r.eval_final = opt.steps > 0 ? flow_loss(params, eval) : r.eval_initial;
  return r;
}

}  // namespace avdit
