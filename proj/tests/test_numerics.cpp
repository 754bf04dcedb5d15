#include <cmath>
#include <numeric>

#include "avdit/error.hpp"
#include "avdit/numerics.hpp"
#include "avdit/params.hpp"
#include "avdit/rng.hpp"
#include "avdit/training.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace avdit;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) { return gaussian_noise({r, c}, seed); }

LatentGrid random_grid(GridShape g, std::size_t c, std::uint64_t seed) {
  return LatentGrid(gaussian_noise({g.t, g.h, g.w, c}, seed));
}

}  // namespace

TEST_CASE("matmul small cases") {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor b = Tensor::from_rows({{0, 1}, {1, 0}});
  CHECK(matmul(a, b).identical(Tensor::from_rows({{2, 1}, {4, 3}})));

  const Tensor m = random_matrix(3, 5, 1);
  CHECK(matmul(Tensor::identity(3), m).identical(m));
  CHECK(max_abs(matmul(Tensor::matrix(4, 3), m)) == 0.0f);
}

TEST_CASE("matmul variants agree with the naive triple loop") {
  const Tensor a = random_matrix(7, 5, 2), b = random_matrix(5, 6, 3);
  const Tensor ref = oracle::naive_matmul(a, b);
  CHECK(max_abs_diff(matmul(a, b), ref) < 1e-5f);

  Tensor at = Tensor::matrix(5, 7), bt = Tensor::matrix(6, 5);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t k = 0; k < 5; ++k) at(k, i) = a(i, k);
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t j = 0; j < 6; ++j) bt(j, k) = b(k, j);
  CHECK(max_abs_diff(matmul_tn(at, b), ref) < 1e-5f);
  CHECK(max_abs_diff(matmul_nt(a, bt), ref) < 1e-5f);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    (void)matmul(Tensor::matrix(2, 3), Tensor::matrix(4, 2));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("softmax rows") {
  const Tensor u = softmax_rows(Tensor::from_rows({{1, 1, 1, 1}}));
  for (std::size_t j = 0; j < 4; ++j) CHECK(u(0, j) == doctest::Approx(0.25f).epsilon(1e-7));

  const Tensor p = softmax_rows(Tensor::from_rows({{0.0f, std::log(3.0f)}}));
  CHECK(p(0, 0) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(p(0, 1) == doctest::Approx(0.75).epsilon(1e-6));

  // Logits on a 1/1024 lattice so the integer shifts below are exact in f32.
  Tensor z = random_matrix(6, 9, 4);
  for (float& v : z.values()) v = std::round(v * 1024.0f) / 1024.0f;
  Tensor shifted = z;
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 9; ++c) shifted(r, c) += 100.0f * static_cast<float>(r) - 37.0f;
  const Tensor s0 = softmax_rows(z), s1 = softmax_rows(shifted);
  CHECK(max_abs_diff(s0, s1) < 1e-6f);
  for (std::size_t r = 0; r < 6; ++r) {
    double sum = 0.0;
    std::vector<double> row;
    for (std::size_t c = 0; c < 9; ++c) {
      sum += s0(r, c);
      row.push_back(z(r, c));
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
    const auto ref = oracle::softmax(row);
    for (std::size_t c = 0; c < 9; ++c) CHECK(std::abs(s0(r, c) - ref[c]) < 1e-6);
  }
}

TEST_CASE("softmax masking") {
  const float ninf = -INFINITY;
  const Tensor logits = Tensor::from_rows({{1, 2, 3}, {0, 0, 0}});
  const Tensor bias = Tensor::from_rows({{0, ninf, 0}, {ninf, ninf, 0}});
  const Tensor p = softmax_rows(logits, bias);
  CHECK(p(0, 1) == 0.0f);
  CHECK(p(1, 0) == 0.0f);
  CHECK(p(1, 1) == 0.0f);
  CHECK(p(1, 2) == 1.0f);

  const Tensor dead = Tensor::from_rows({{0, 0}, {ninf, ninf}});
  try {
    (void)softmax_rows(Tensor::matrix(2, 2), dead);
    FAIL("expected DegenerateRowError");
  } catch (const DegenerateRowError& e) {
    CHECK(e.row() == 1);
  }
}

TEST_CASE("rms_norm") {
  const Tensor ones = Tensor::matrix(2, 5, 1.0f);
  CHECK(max_abs_diff(rms_norm(ones, Tensor::vector(5, 1.0f)), ones) < 1e-5f);

  const Tensor x = random_matrix(4, 16, 5);
  const Tensor g = random_matrix(1, 16, 6).reshaped({16});
  const Tensor y = rms_norm(x, g);
  CHECK(max_abs_diff(rms_norm(3.5f * x, g), y) < 1e-5f);

  for (std::size_t r = 0; r < 4; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < 16; ++c) ss += static_cast<double>(x(r, c)) * x(r, c);
    const double inv = 1.0 / std::sqrt(ss / 16.0 + 1e-6);
    for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(y(r, c) - x(r, c) * inv * g[c]) < 1e-6);
  }
  CHECK_THROWS_AS(rms_norm(x, Tensor::vector(15)), DimensionError);
}

TEST_CASE("trilinear resample") {
  const LatentGrid flat({2, 3, 2}, 2, 1.25f);
  const LatentGrid up = trilinear_resample(flat, {3, 5, 7});
  CHECK(up.grid() == GridShape{3, 5, 7});
  for (float v : up.tensor().values()) CHECK(v == doctest::Approx(1.25f).epsilon(1e-7));

  const LatentGrid src = random_grid({2, 2, 2}, 1, 7);
  CHECK(max_abs_diff(trilinear_resample(src, {3, 3, 3}).tensor(), oracle::trilinear(src, {3, 3, 3}).tensor()) <
        1e-6f);

  // Linear field a t + b y + c x sampled on the source lattice.
  LatentGrid lin({3, 4, 2}, 1);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 2; ++x) lin.at(t, y, x, 0) = 0.7f * t - 1.3f * y + 2.1f * x + 0.4f;
  const GridShape tgt{5, 7, 4};
  const LatentGrid out = trilinear_resample(lin, tgt);
  for (std::size_t t = 0; t < tgt.t; ++t)
    for (std::size_t y = 0; y < tgt.h; ++y)
      for (std::size_t x = 0; x < tgt.w; ++x) {
        const double expect = 0.7 * oracle::align_corners(t, 5, 3) - 1.3 * oracle::align_corners(y, 7, 4) +
                              2.1 * oracle::align_corners(x, 4, 2) + 0.4;
        CHECK(std::abs(out.at(t, y, x, 0) - expect) < 1e-5);
      }

  // Length-one target axis samples the center.
  const LatentGrid mid = trilinear_resample(lin, {1, 4, 2});
  CHECK(mid.at(0, 0, 0, 0) == doctest::Approx(lin.at(1, 0, 0, 0)));
  CHECK_THROWS_AS(trilinear_resample(lin, {0, 1, 1}), DimensionError);
}

TEST_CASE("gaussian noise") {
  const Tensor a = gaussian_noise({100000}, 11);
  CHECK(a.identical(gaussian_noise({100000}, 11)));
  const Tensor b = gaussian_noise({100000}, 12);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differ += a[i] != b[i];
  CHECK(differ >= 99000);

  double mean = 0.0, sq = 0.0;
  for (float v : a.values()) mean += v;
  mean /= static_cast<double>(a.size());
  for (float v : a.values()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(a.size()));
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(sd - 1.0) < 0.05);

  // Streams are independent draws, not shifted copies.
  CHECK_FALSE(gaussian_noise({64}, 11, 1).identical(gaussian_noise({64}, 11, 2)));
}

TEST_CASE("finite differences on closed forms") {
  const Tensor x = random_matrix(3, 4, 8);
  const Tensor g = finite_diff_grad(
      [](const Tensor& v) {
        double s = 0.0;
        for (float e : v.values()) s += static_cast<double>(e) * e;
        return s;
      },
      x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(g[i] - 2.0 * x[i]) <= 1e-4 * std::abs(2.0 * x[i]) + 1e-6);

  const Tensor w = random_matrix(3, 4, 9);
  const Tensor ga = finite_diff_grad(
      [&](const Tensor& v) {
        double s = 3.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += static_cast<double>(w[i]) * v[i];
        return s;
      },
      x);
  CHECK(max_abs_diff(ga, w) < 1e-4f);
}

TEST_CASE("finite differences of a tiny model's loss match backprop") {
  ModelConfig cfg;
  cfg.n_layers = 3;
  cfg.n_boundary = 1;
  cfg.n_heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.vocab_size = 10;
  cfg.video_channels = 2;
  cfg.audio_channels = 2;
  cfg.axis_split = ModelConfig::default_axis_split(cfg.d_head());
  cfg.validate();
  InitOptions init;
  init.seed = 3;
  init.weight_std = 0.3f;
  init.gate_init = 0.5f;
  init.zero_output_projections = false;
  ModelParams params = init_params(cfg, init);

  FlowSample s;
  s.cond.text_ids = {1, 4, 7};
  s.x_t.video = LatentGrid(gaussian_noise({2, 2, 4, 2}, 21));
  s.x_t.audio = AudioLatent(gaussian_noise({3, 2}, 22));
  s.velocity.video = LatentGrid(gaussian_noise({2, 2, 4, 2}, 23));
  s.velocity.audio = AudioLatent(gaussian_noise({3, 2}, 24));
  FlowBatch batch{{s}};

  ModelParams grad = zeros_like(params);
  flow_loss_and_grad(params, batch, grad);

  // Probe the head gates of the first two layers and the audio output bias.
  for (int which = 0; which < 3; ++which) {
    Tensor* target = which < 2 ? &params.layers[static_cast<std::size_t>(which)].head_gates : &params.audio_out.bias;
    const Tensor& analytic = which < 2 ? grad.layers[static_cast<std::size_t>(which)].head_gates : grad.audio_out.bias;
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& v) {
          const Tensor saved = *target;
          *target = v;
          const double l = flow_loss(params, batch);
          *target = saved;
          return l;
        },
        *target, 1e-2f);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      num += std::pow(static_cast<double>(numeric[i]) - analytic[i], 2);
      den += std::pow(static_cast<double>(analytic[i]), 2);
    }
    INFO("array " << which);
    CHECK(den > 0.0);
    CHECK(std::sqrt(num / den) < 1e-2);
  }
}
