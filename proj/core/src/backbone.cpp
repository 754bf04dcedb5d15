#include "avdit/backbone.hpp"

#include <cmath>
#include <string>

#include "avdit/error.hpp"

namespace avdit {

AttentionPlan AttentionPlan::global(std::size_t n_layers) { return {std::vector<std::shared_ptr<const Tensor>>(n_layers)}; }

namespace {

using Route = std::vector<std::size_t>;
using WeightField = Tensor BlockWeights::*;

Route route_tokens(const LayerParams& layer, std::span<const Modality> tags) {
  if (layer.banks.empty()) throw RoutingError("layer has no parameter banks");
  Route r(tags.size(), 0);
  if (!layer.routed()) {
    if (!layer.banks[0].present()) throw RoutingError("shared layer bank is empty");
    return r;
  }
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::size_t b = index_of(tags[i]);
    if (b >= layer.banks.size() || !layer.banks[b].present()) {
      throw RoutingError("no parameter bank for modality " + std::string(to_string(tags[i])));
    }
    r[i] = b;
  }
  return r;
}

// y[i] = x[i] * W_{route[i]}
Tensor routed_linear(const Tensor& x, const Route& route, const std::vector<BlockWeights>& banks, WeightField field) {
  const std::size_t n = x.rows(), k = x.cols();
  const std::size_t out = (banks[route.empty() ? 0 : route[0]].*field).cols();
  Tensor y = Tensor::matrix(n, out);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& w = banks[route[i]].*field;
    if (w.rows() != k || w.cols() != out) {
      throw DimensionError("routed_linear: weight " + shape_to_string(w.shape()) + " does not fit input " +
                           shape_to_string(x.shape()));
    }
    const float* xi = x.data() + i * k;
    float* yi = y.data() + i * out;
    for (std::size_t p = 0; p < k; ++p) {
      const float a = xi[p];
      if (a == 0.0f) continue;
      const float* wp = w.data() + p * out;
      for (std::size_t j = 0; j < out; ++j) yi[j] += a * wp[j];
    }
  }
  return y;
}

// Returns dx; accumulates dW into grad banks when given.
Tensor routed_linear_backward(const Tensor& x, const Tensor& dy, const Route& route,
                              const std::vector<BlockWeights>& banks, std::vector<BlockWeights>* grad_banks,
                              WeightField field) {
  const std::size_t n = x.rows(), k = x.cols(), out = dy.cols();
  Tensor dx = Tensor::matrix(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& w = banks[route[i]].*field;
    const float* xi = x.data() + i * k;
    const float* dyi = dy.data() + i * out;
    float* dxi = dx.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float* wp = w.data() + p * out;
      float s = 0.0f;
      for (std::size_t j = 0; j < out; ++j) s += dyi[j] * wp[j];
      dxi[p] = s;
    }
    if (grad_banks) {
      Tensor& gw = (*grad_banks)[route[i]].*field;
      for (std::size_t p = 0; p < k; ++p) {
        const float a = xi[p];
        if (a == 0.0f) continue;
        float* gp = gw.data() + p * out;
        for (std::size_t j = 0; j < out; ++j) gp[j] += a * dyi[j];
      }
    }
  }
  return dx;
}

Tensor routed_rms_norm(const Tensor& x, const Route& route, const std::vector<BlockWeights>& banks,
                       WeightField field, float eps, std::vector<float>* inv_rms) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor y = Tensor::matrix(n, d);
  if (inv_rms) inv_rms->assign(n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& g = banks[route[i]].*field;
    if (g.size() != d) throw DimensionError("rms_norm: gain length does not match width " + std::to_string(d));
    const float* xi = x.data() + i * d;
    float ss = 0.0f;
    for (std::size_t j = 0; j < d; ++j) ss += xi[j] * xi[j];
    const float r = 1.0f / std::sqrt(ss / static_cast<float>(d) + eps);
    if (inv_rms) (*inv_rms)[i] = r;
    float* yi = y.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) yi[j] = xi[j] * r * g[j];
  }
  return y;
}

// y_j = g_j x_j r, r = (mean(x^2) + eps)^(-1/2)
Tensor routed_rms_norm_backward(const Tensor& x, const std::vector<float>& inv_rms, const Tensor& dy,
                                const Route& route, const std::vector<BlockWeights>& banks,
                                std::vector<BlockWeights>* grad_banks, WeightField field) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor dx = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& g = banks[route[i]].*field;
    const float r = inv_rms[i];
    const float* xi = x.data() + i * d;
    const float* dyi = dy.data() + i * d;
    float dot = 0.0f;
    for (std::size_t j = 0; j < d; ++j) dot += g[j] * dyi[j] * xi[j];
    const float coef = r * r * r * dot / static_cast<float>(d);
    float* dxi = dx.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) dxi[j] = r * g[j] * dyi[j] - xi[j] * coef;
    if (grad_banks) {
      Tensor& gg = (*grad_banks)[route[i]].*field;
      for (std::size_t j = 0; j < d; ++j) gg[j] += dyi[j] * xi[j] * r;
    }
  }
  return dx;
}

struct AttentionCache {
  Tensor input;  // normalized x
  Tensor q, k, v;  // q, k after rotary
  std::vector<Tensor> probs;  // per head [n, n]
  Tensor heads;  // ungated head outputs [n, d]
  Tensor gated;  // gated head outputs [n, d]
};

struct LayerCache {
  Route route;
  Tensor x_in;
  std::vector<float> inv_rms1;
  AttentionCache attn;
  Tensor x_mid;
  Tensor xn2;
  std::vector<float> inv_rms2;
  Tensor mlp_pre;  // [n, 2*d_ff]
  Tensor mlp_act;  // [n, d_ff]
};

void check_bias(const Tensor* bias, std::size_t n) {
  if (bias && (bias->rank() != 2 || bias->dim(0) != n || bias->dim(1) != n)) {
    throw DimensionError("attention bias " + shape_to_string(bias->shape()) + " does not match sequence length " +
                         std::to_string(n));
  }
}

Tensor attention_forward(const Tensor& xn, const Route& route, const std::vector<BlockWeights>& banks,
                         const Tensor& gates, const RopeTable& rope, const Tensor* bias, AttentionCache* cache) {
  const std::size_t n = xn.rows(), d = xn.cols(), H = gates.size();
  if (H == 0 || d % H != 0) {
    throw DimensionError("gated_attention: width " + std::to_string(d) + " not divisible by " + std::to_string(H) +
                         " heads");
  }
  const std::size_t dh = d / H;
  check_bias(bias, n);
  const Tensor qkv = routed_linear(xn, route, banks, &BlockWeights::qkv);
  if (qkv.cols() != 3 * d) throw DimensionError("gated_attention: qkv projection must have width 3*d");
  Tensor q = Tensor::matrix(n, d), k = Tensor::matrix(n, d), v = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const float* src = qkv.data() + i * 3 * d;
    std::copy(src, src + d, q.data() + i * d);
    std::copy(src + d, src + 2 * d, k.data() + i * d);
    std::copy(src + 2 * d, src + 3 * d, v.data() + i * d);
  }
  apply_rope(q, rope, H);
  apply_rope(k, rope, H);

  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  Tensor heads = Tensor::matrix(n, d);
  Tensor gated = Tensor::matrix(n, d);
  if (cache) cache->probs.assign(H, Tensor());
  Tensor scores = Tensor::matrix(n, n);
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < n; ++i) {
      const float* qi = q.data() + i * d + off;
      for (std::size_t j = 0; j < n; ++j) {
        const float* kj = k.data() + j * d + off;
        float s = 0.0f;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        scores(i, j) = s * scale;
      }
    }
    Tensor probs = bias ? softmax_rows(scores, *bias) : softmax_rows(scores);
    const float gate = sigmoid(gates[h]);
    for (std::size_t i = 0; i < n; ++i) {
      float* oi = heads.data() + i * d + off;
      const float* pi = probs.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const float pij = pi[j];
        if (pij == 0.0f) continue;
        const float* vj = v.data() + j * d + off;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += pij * vj[c];
      }
      float* gi = gated.data() + i * d + off;
      for (std::size_t c = 0; c < dh; ++c) gi[c] = gate * oi[c];
    }
    if (cache) cache->probs[h] = std::move(probs);
  }
  Tensor out = routed_linear(gated, route, banks, &BlockWeights::attn_out);
  if (cache) {
    cache->input = xn;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->heads = std::move(heads);
    cache->gated = std::move(gated);
  }
  return out;
}

// Returns d(input) of attention_forward.
Tensor attention_backward(const AttentionCache& c, const Tensor& dout, const Route& route,
                          const std::vector<BlockWeights>& banks, const Tensor& gates, const RopeTable& rope,
                          std::vector<BlockWeights>* grad_banks, Tensor* grad_gates) {
  const std::size_t n = c.input.rows(), d = c.input.cols(), H = gates.size(), dh = d / H;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const Tensor dgated = routed_linear_backward(c.gated, dout, route, banks, grad_banks, &BlockWeights::attn_out);

  Tensor dq = Tensor::matrix(n, d), dk = Tensor::matrix(n, d), dv = Tensor::matrix(n, d);
  Tensor dheads = Tensor::matrix(n, d);
  Tensor dp = Tensor::matrix(n, n);
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t off = h * dh;
    const float s = sigmoid(gates[h]);
    double dgate = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* dg = dgated.data() + i * d + off;
      const float* o = c.heads.data() + i * d + off;
      float* dho = dheads.data() + i * d + off;
      for (std::size_t e = 0; e < dh; ++e) {
        dgate += static_cast<double>(dg[e]) * o[e];
        dho[e] = s * dg[e];
      }
    }
    if (grad_gates) (*grad_gates)[h] += static_cast<float>(dgate * s * (1.0 - s));

    const Tensor& P = c.probs[h];
    // dP = dO V^T, dV = P^T dO
    for (std::size_t i = 0; i < n; ++i) {
      const float* doi = dheads.data() + i * d + off;
      const float* pi = P.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const float* vj = c.v.data() + j * d + off;
        float acc = 0.0f;
        for (std::size_t e = 0; e < dh; ++e) acc += doi[e] * vj[e];
        dp(i, j) = acc;
        const float pij = pi[j];
        if (pij == 0.0f) continue;
        float* dvj = dv.data() + j * d + off;
        for (std::size_t e = 0; e < dh; ++e) dvj[e] += pij * doi[e];
      }
    }
    // dS = P * (dP - rowsum(P * dP)); then dq = scale dS k, dk = scale dS^T q
    for (std::size_t i = 0; i < n; ++i) {
      const float* pi = P.data() + i * n;
      float* dpi = dp.data() + i * n;
      float rowdot = 0.0f;
      for (std::size_t j = 0; j < n; ++j) rowdot += pi[j] * dpi[j];
      float* dqi = dq.data() + i * d + off;
      const float* qi = c.q.data() + i * d + off;
      for (std::size_t j = 0; j < n; ++j) {
        const float ds = pi[j] * (dpi[j] - rowdot) * scale;
        if (ds == 0.0f) continue;
        const float* kj = c.k.data() + j * d + off;
        float* dkj = dk.data() + j * d + off;
        for (std::size_t e = 0; e < dh; ++e) {
          dqi[e] += ds * kj[e];
          dkj[e] += ds * qi[e];
        }
      }
    }
  }
  apply_rope(dq, rope, H, /*inverse=*/true);
  apply_rope(dk, rope, H, /*inverse=*/true);
  Tensor dqkv = Tensor::matrix(n, 3 * d);
  for (std::size_t i = 0; i < n; ++i) {
    float* dst = dqkv.data() + i * 3 * d;
    std::copy(dq.data() + i * d, dq.data() + (i + 1) * d, dst);
    std::copy(dk.data() + i * d, dk.data() + (i + 1) * d, dst + d);
    std::copy(dv.data() + i * d, dv.data() + (i + 1) * d, dst + 2 * d);
  }
  return routed_linear_backward(c.input, dqkv, route, banks, grad_banks, &BlockWeights::qkv);
}

float silu_grad(float a) {
  const float s = sigmoid(a);
  return s * (1.0f + a * (1.0f - s));
}

Tensor layer_forward(const Tensor& x, Route route, const std::vector<BlockWeights>& banks, const Tensor& gates,
                     const RopeTable& rope, const Tensor* bias, float eps, LayerCache* cache) {
  if (x.rows() != route.size()) throw DimensionError("block: token count does not match routing");
  std::vector<float> inv1, inv2;
  const Tensor xn1 = routed_rms_norm(x, route, banks, &BlockWeights::attn_norm, eps, cache ? &inv1 : nullptr);
  AttentionCache* ac = cache ? &cache->attn : nullptr;
  Tensor x1 = x + attention_forward(xn1, route, banks, gates, rope, bias, ac);
  Tensor xn2 = routed_rms_norm(x1, route, banks, &BlockWeights::mlp_norm, eps, cache ? &inv2 : nullptr);
  Tensor pre = routed_linear(xn2, route, banks, &BlockWeights::mlp_in);
  const std::size_t n = x.rows(), ff = pre.cols() / 2;
  Tensor act = Tensor::matrix(n, ff);
  for (std::size_t i = 0; i < n; ++i) {
    const float* u = pre.data() + i * 2 * ff;
    float* a = act.data() + i * ff;
    for (std::size_t j = 0; j < ff; ++j) a[j] = silu(u[j]) * u[ff + j];
  }
  Tensor y = x1 + routed_linear(act, route, banks, &BlockWeights::mlp_out);
  if (cache) {
    cache->route = std::move(route);
    cache->x_in = x;
    cache->inv_rms1 = std::move(inv1);
    cache->x_mid = std::move(x1);
    cache->xn2 = std::move(xn2);
    cache->inv_rms2 = std::move(inv2);
    cache->mlp_pre = std::move(pre);
    cache->mlp_act = std::move(act);
  }
  return y;
}

Tensor layer_backward(const LayerCache& c, const Tensor& dy, const std::vector<BlockWeights>& banks,
                      const Tensor& gates, const RopeTable& rope, std::vector<BlockWeights>* grad_banks,
                      Tensor* grad_gates) {
  const std::size_t n = dy.rows(), ff = c.mlp_act.cols();
  const Tensor dact = routed_linear_backward(c.mlp_act, dy, c.route, banks, grad_banks, &BlockWeights::mlp_out);
  Tensor dpre = Tensor::matrix(n, 2 * ff);
  for (std::size_t i = 0; i < n; ++i) {
    const float* u = c.mlp_pre.data() + i * 2 * ff;
    const float* da = dact.data() + i * ff;
    float* du = dpre.data() + i * 2 * ff;
    for (std::size_t j = 0; j < ff; ++j) {
      du[j] = da[j] * u[ff + j] * silu_grad(u[j]);
      du[ff + j] = da[j] * silu(u[j]);
    }
  }
  const Tensor dxn2 = routed_linear_backward(c.xn2, dpre, c.route, banks, grad_banks, &BlockWeights::mlp_in);
  Tensor dx1 = dy + routed_rms_norm_backward(c.x_mid, c.inv_rms2, dxn2, c.route, banks, grad_banks,
                                             &BlockWeights::mlp_norm);
  const Tensor dxn1 = attention_backward(c.attn, dx1, c.route, banks, gates, rope, grad_banks, grad_gates);
  return dx1 + routed_rms_norm_backward(c.x_in, c.inv_rms1, dxn1, c.route, banks, grad_banks,
                                        &BlockWeights::attn_norm);
}

std::vector<BlockWeights> single_bank(const BlockWeights& w) { return {w}; }

void validate_plan(const AttentionPlan& plan, const ModelParams& params, const TokenSequence& seq) {
  const auto L = static_cast<std::size_t>(params.config.n_layers);
  if (plan.size() != L) {
    throw ConfigError("attention plan has " + std::to_string(plan.size()) + " entries, model has " +
                      std::to_string(L) + " layers");
  }
  if (params.layers.size() != L) throw ConfigError("model params do not match config layer count");
  if (seq.size() > 0 && seq.d_model() != static_cast<std::size_t>(params.config.d_model)) {
    throw DimensionError("sequence width " + std::to_string(seq.d_model()) + " does not match d_model " +
                         std::to_string(params.config.d_model));
  }
}

struct ForwardTrace {
  RopeTable rope;
  std::vector<LayerCache> layers;
  Tensor hidden;  // final hidden states
  std::pair<std::size_t, std::size_t> video_range, audio_range;
  Tensor video_h, audio_h;  // rows of hidden per output head
  std::vector<float> video_inv, audio_inv;
  Tensor video_n, audio_n;  // normalized rows
};

Tensor take_rows(const Tensor& x, std::pair<std::size_t, std::size_t> r) {
  const std::size_t d = x.cols();
  Tensor out = Tensor::matrix(r.second - r.first, d);
  std::copy(x.data() + r.first * d, x.data() + r.second * d, out.data());
  return out;
}

Tensor head_norm(const Tensor& x, const Tensor& gain, float eps, std::vector<float>* inv) {
  BlockWeights holder;
  holder.attn_norm = gain;
  const std::vector<BlockWeights> banks{holder};
  return routed_rms_norm(x, Route(x.rows(), 0), banks, &BlockWeights::attn_norm, eps, inv);
}

VelocityTokens forward_impl(const TokenSequence& seq, const ModelParams& params, const AttentionPlan& plan,
                            ForwardTrace* trace) {
  validate_plan(plan, params, seq);
  const ModelConfig& cfg = params.config;
  RopeTable rope = rope_table(seq, static_cast<std::size_t>(cfg.d_head()), cfg.axis_split, cfg.rope_base);
  Tensor x = seq.feats;
  if (trace) trace->layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams& layer = params.layers[l];
    x = layer_forward(x, route_tokens(layer, seq.tags), layer.banks, layer.head_gates, rope,
                      plan.layer_bias[l].get(), cfg.norm_eps, trace ? &trace->layers[l] : nullptr);
  }
  const auto vr = seq.range(Modality::Video);
  const auto ar = seq.range(Modality::Audio);
  Tensor vh = take_rows(x, vr), ah = take_rows(x, ar);
  std::vector<float> vinv, ainv;
  Tensor vn = head_norm(vh, params.video_out_norm, cfg.norm_eps, &vinv);
  Tensor an = head_norm(ah, params.audio_out_norm, cfg.norm_eps, &ainv);
  VelocityTokens out{params.video_out.apply(vn), params.audio_out.apply(an)};
  if (trace) {
    trace->rope = std::move(rope);
    trace->hidden = std::move(x);
    trace->video_range = vr;
    trace->audio_range = ar;
    trace->video_h = std::move(vh);
    trace->audio_h = std::move(ah);
    trace->video_inv = std::move(vinv);
    trace->audio_inv = std::move(ainv);
    trace->video_n = std::move(vn);
    trace->audio_n = std::move(an);
  }
  return out;
}

double squared_error(const Tensor& pred, const Tensor& target, const char* what) {
  if (pred.shape() != target.shape() && !(pred.empty() && target.empty())) {
    throw DimensionError(std::string("velocity target for ") + what + " has shape " +
                         shape_to_string(target.shape()) + ", prediction " + shape_to_string(pred.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = static_cast<double>(pred[i]) - target[i];
    s += e * e;
  }
  return s;
}

// Backward of an output head: returns d(hidden rows).
Tensor head_backward(const Tensor& h, const Tensor& hn, const std::vector<float>& inv, const Tensor& gain,
                     const Projection& proj, const Tensor& dout, Tensor& g_gain, Projection& g_proj) {
  if (h.rows() == 0) return Tensor::matrix(0, h.cols());
  const Tensor gw = matmul_tn(hn, dout);
  axpy(1.0f, gw, g_proj.weight);
  for (std::size_t i = 0; i < dout.rows(); ++i)
    for (std::size_t j = 0; j < dout.cols(); ++j) g_proj.bias[j] += dout(i, j);
  const Tensor dhn = matmul_nt(dout, proj.weight);
  BlockWeights holder, gholder;
  holder.attn_norm = gain;
  gholder.attn_norm = Tensor(gain.shape());
  const std::vector<BlockWeights> banks{holder};
  std::vector<BlockWeights> gbanks{gholder};
  Tensor dh = routed_rms_norm_backward(h, inv, dhn, Route(h.rows(), 0), banks, &gbanks, &BlockWeights::attn_norm);
  axpy(1.0f, gbanks[0].attn_norm, g_gain);
  return dh;
}

}  // namespace

Tensor gated_attention(const Tensor& x, const RopeTable& rope, const Tensor* bias, const BlockWeights& w,
                       const Tensor& head_gates) {
  return attention_forward(x, Route(x.rows(), 0), single_bank(w), head_gates, rope, bias, nullptr);
}

Tensor block_forward(const Tensor& x, const RopeTable& rope, const Tensor* bias, const BlockWeights& w,
                     const Tensor& head_gates, float eps) {
  return layer_forward(x, Route(x.rows(), 0), single_bank(w), head_gates, rope, bias, eps, nullptr);
}

Tensor routed_block_forward(const TokenSequence& seq, const LayerParams& layer, const RopeTable& rope,
                            const Tensor* bias, float eps) {
  return layer_forward(seq.feats, route_tokens(layer, seq.tags), layer.banks, layer.head_gates, rope, bias, eps,
                       nullptr);
}

Tensor block_backward(const Tensor& x, const RopeTable& rope, const Tensor* bias, const BlockWeights& w,
                      const Tensor& head_gates, const Tensor& dy, BlockGrads& grads, float eps) {
  const auto banks = single_bank(w);
  LayerCache cache;
  layer_forward(x, Route(x.rows(), 0), banks, head_gates, rope, bias, eps, &cache);
  std::vector<BlockWeights> gbanks{grads.weights};
  Tensor dx = layer_backward(cache, dy, banks, head_gates, rope, &gbanks, &grads.head_gates);
  grads.weights = std::move(gbanks[0]);
  return dx;
}

VelocityTokens model_forward(const TokenSequence& seq, const ModelParams& params, const AttentionPlan& plan) {
  return forward_impl(seq, params, plan, nullptr);
}

double velocity_loss(const TokenSequence& seq, const ModelParams& params, const AttentionPlan& plan,
                     const VelocityTokens& target) {
  const VelocityTokens pred = model_forward(seq, params, plan);
  const double n = static_cast<double>(pred.video.size() + pred.audio.size());
  if (n == 0) throw DimensionError("velocity_loss: sequence has no video or audio tokens");
  return (squared_error(pred.video, target.video, "video") + squared_error(pred.audio, target.audio, "audio")) / n;
}

double velocity_loss_backward(const TokenSequence& seq, const ModelParams& params, const AttentionPlan& plan,
                              const VelocityTokens& target, ModelParams& grad, float scale, Tensor* d_feats) {
  ForwardTrace trace;
  const VelocityTokens pred = forward_impl(seq, params, plan, &trace);
  const std::size_t count = pred.video.size() + pred.audio.size();
  if (count == 0) throw DimensionError("velocity_loss: sequence has no video or audio tokens");
  const double loss =
      (squared_error(pred.video, target.video, "video") + squared_error(pred.audio, target.audio, "audio")) /
      static_cast<double>(count);

  const float coef = 2.0f * scale / static_cast<float>(count);
  Tensor dv = pred.video - target.video;
  for (auto& e : dv.values()) e *= coef;
  Tensor da = pred.audio.empty() ? Tensor(pred.audio.shape()) : pred.audio - target.audio;
  for (auto& e : da.values()) e *= coef;

  const std::size_t d = trace.hidden.cols();
  Tensor dx = Tensor::matrix(trace.hidden.rows(), d);
  const Tensor dvh = head_backward(trace.video_h, trace.video_n, trace.video_inv, params.video_out_norm,
                                   params.video_out, dv, grad.video_out_norm, grad.video_out);
  const Tensor dah = head_backward(trace.audio_h, trace.audio_n, trace.audio_inv, params.audio_out_norm,
                                   params.audio_out, da, grad.audio_out_norm, grad.audio_out);
  std::copy(dvh.data(), dvh.data() + dvh.size(), dx.data() + trace.video_range.first * d);
  std::copy(dah.data(), dah.data() + dah.size(), dx.data() + trace.audio_range.first * d);

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const LayerParams& layer = params.layers[l];
    LayerParams& glayer = grad.layers[l];
    dx = layer_backward(trace.layers[l], dx, layer.banks, layer.head_gates, trace.rope, &glayer.banks,
                        &glayer.head_gates);
  }
  if (d_feats) *d_feats = std::move(dx);
  return loss;
}

}  // namespace avdit
