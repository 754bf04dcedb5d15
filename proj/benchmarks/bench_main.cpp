#include <benchmark/benchmark.h>

#include "avdit/backbone.hpp"
#include "avdit/denoiser.hpp"
#include "avdit/numerics.hpp"
#include "avdit/pipeline.hpp"
#include "avdit/rng.hpp"
#include "avdit/training.hpp"

using namespace avdit;

namespace {

ModelParams toy_params(std::uint64_t seed) {
  InitOptions o;
  o.seed = seed;
  o.zero_output_projections = false;
  return init_params(ModelConfig::toy(), o);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = gaussian_noise({n, n}, 1), b = gaussian_noise({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_GatedAttention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 128, H = 4;
  BlockWeights w;
  w.qkv = 0.05f * gaussian_noise({d, 3 * d}, 3);
  w.attn_out = 0.05f * gaussian_noise({d, d}, 4);
  const Tensor x = gaussian_noise({n, d}, 5);
  std::vector<Coord> pos;
  for (std::size_t i = 0; i < n; ++i) pos.push_back({static_cast<int>(i / 16), static_cast<int>(i % 16 / 4), static_cast<int>(i % 4)});
  const RopeTable rope = rope_table(pos, d / H, ModelConfig::default_axis_split(d / H));
  const Tensor gates = Tensor::vector(H, 1.0f);
  for (auto _ : state) benchmark::DoNotOptimize(gated_attention(x, rope, nullptr, w, gates));
}
BENCHMARK(BM_GatedAttention)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
  const ModelParams p = toy_params(6);
  TransformerDenoiser model(p);
  const JointLatent x{LatentGrid(gaussian_noise({4, 8, 8, 4}, 7)), AudioLatent(gaussian_noise({16, 4}, 8))};
  const Conditioning cond{{1, 5}, {}};
  for (auto _ : state) benchmark::DoNotOptimize(model.velocity(x, cond));
}
BENCHMARK(BM_ModelForward)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
  ModelParams p = toy_params(9);
  AdamState adam = AdamState::for_params(p);
  const FlowBatch batch = toy_eval_batch(ToyDatasetConfig{}, 10, 4);
  for (auto _ : state) benchmark::DoNotOptimize(training_step(p, batch, adam));
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_Pipeline(benchmark::State& state) {
  const ModelParams base = toy_params(11), sr = toy_params(12);
  const DecoderParams dec = DecoderParams::zeros(4);
  PipelineConfig cfg;
  cfg.sr_enabled = state.range(0) > 0;
  if (cfg.sr_enabled) cfg.sr.scale = {1.0, static_cast<double>(state.range(0)), static_cast<double>(state.range(0))};
  for (auto _ : state) {
    const PipelineResult r = run_pipeline({&base, &sr, &dec}, cfg, {{1, 5}, {}});
    state.counters["base_s"] = r.report.base_s;
    state.counters["sr_s"] = r.report.sr_s.value_or(0.0);
    state.counters["decode_s"] = r.report.decode_s;
  }
}
BENCHMARK(BM_Pipeline)->Arg(0)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->Iterations(1);

}  // namespace
BENCHMARK_MAIN();
