#pragma once

#include <functional>
#include <vector>

#include "avdit/dataset.hpp"
#include "avdit/params.hpp"
#include "avdit/sampler.hpp"

namespace avdit {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamState {
  AdamConfig config;
  ModelParams m;
  ModelParams v;
  long step = 0;

  static AdamState for_params(const ModelParams& params, AdamConfig config = {});
};

// Flow-matching loss of one sample: mean squared velocity error over all
// video and audio latent elements.
double flow_loss(const ModelParams& params, const FlowSample& sample);
// Batch mean of flow_loss.
double flow_loss(const ModelParams& params, const FlowBatch& batch);

// Adds d(batch loss)/d(params) into grad and returns the batch loss.
double flow_loss_and_grad(const ModelParams& params, const FlowBatch& batch, ModelParams& grad);

// One Adam step on the batch flow loss. Throws DivergenceError when the loss
// is not finite; params are untouched in that case.
double training_step(ModelParams& params, const FlowBatch& batch, AdamState& state);

struct ToyTrainOptions {
  int steps = 200;
  int batch = 4;
  AdamConfig adam;
  std::uint64_t seed = 0;
  float cond_drop_prob = 0.1f;
  int eval_samples = 16;  // fixed held-out batch
};

struct ToyTrainResult {
  std::vector<double> batch_losses;  // one per step, before the update
  double eval_initial = 0.0;
  double eval_final = 0.0;
};

using TrainObserver = std::function<void(int step, double batch_loss)>;

// Adam on freshly drawn toy clips. The held-out batch (clips, noise and t)
// is fixed by the seed and never trained on.
ToyTrainResult train_toy(ModelParams& params, const ToyDatasetConfig& data, const ToyTrainOptions& opt,
                         const TrainObserver& on_step = {});

// Held-out evaluation batch used by train_toy (text never dropped).
FlowBatch toy_eval_batch(const ToyDatasetConfig& data, std::uint64_t seed, int n);

}  // namespace avdit
