#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avdit/model_config.hpp"
#include "avdit/params.hpp"
#include "avdit/sampler.hpp"
#include "avdit/superres.hpp"

namespace avdit {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct GradCheckOptions {
  float h = 1e-2f;
  double tolerance = 1e-2;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  int checked = 0;
  int failed = 0;
  double max_rel_error = 0.0;
  std::string worst_array;
};

// Per array: analytic directional derivatives along the unit gradient and a
// random unit direction against fourth-order central differences of
// flow_loss, with the error measured relative to the gradient norm. Arrays
// whose analytic gradient is exactly zero must have a vanishing slope.
GradCheckReport gradient_check(const ModelParams& params, const FlowBatch& batch, const GradCheckOptions& opt = {});

// Small model sharing cfg's vocabulary, channels and patch size, with
// non-zero output projections so every gradient path is live.
ModelParams gradcheck_model(const ModelConfig& cfg, std::uint64_t seed);

// The built-in battery: census, trilinear oracle, gradients, timestep-free
// determinism, local=global equivalence, frozen auxiliary audio.
// sr_params may be null, in which case a random model of `model` is used.
std::vector<CheckResult> run_self_checks(const ModelConfig& model, const SRConfig& sr, const ModelParams* sr_params,
                                         std::uint64_t seed);

}  // namespace avdit
