#include <filesystem>
#include <fstream>
#include <sstream>

#include "avdit/checkpoint.hpp"
#include "avdit/config_file.hpp"
#include "avdit/error.hpp"
#include "avdit/selfcheck.hpp"
#include "avdit/tensor_io.hpp"
#include "doctest.h"

using namespace avdit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(AVDIT_TEST_TMP);
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

ModelConfig small_config() {
  ModelConfig c;
  c.n_layers = 4;
  c.n_boundary = 1;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.vocab_size = 10;
  c.axis_split = ModelConfig::default_axis_split(c.d_head());
  return c;
}

ModelParams random_params(std::uint64_t seed) {
  InitOptions o;
  o.seed = seed;
  o.zero_output_projections = false;
  return init_params(small_config(), o);
}

CheckpointErrorKind load_kind(const fs::path& p, const ModelConfig* expected = nullptr) {
  try {
    (void)load_checkpoint(p, expected);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("checkpoint loaded without error");
  return CheckpointErrorKind::Io;
}

std::string header_of(const std::string& bytes) { return bytes.substr(0, bytes.find("\nbody ") + 1); }

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig c = parse_config(
      "# toy run\n"
      "model.n_layers = 6\n"
      "model.d_model = 64   # four heads of 16\n"
      "model.n_heads = 4\n"
      "\n"
      "sampler.steps = 12\n"
      "sampler.guidance = false\n"
      "sr.scale = 1 4 4\n"
      "sr.window = global\n"
      "sr.local_layers = 1 2\n"
      "sr.renoise_t = 0.25\n"
      "pipeline.prompt = 2 7\n"
      "pipeline.sr = true\n"
      "train.lr = 0.002\n");
  CHECK(c.model.n_layers == 6);
  CHECK(c.model.d_model == 64);
  CHECK(c.model.axis_split == ModelConfig::default_axis_split(16));
  CHECK(c.sampler.n_steps == 12);
  CHECK_FALSE(c.sampler.guidance);
  CHECK(c.sr.scale == std::array<double, 3>{1, 4, 4});
  CHECK_FALSE(c.sr.window.has_value());
  CHECK(c.sr.local_layers.kind == LocalLayerSet::Kind::Explicit);
  CHECK(c.sr.local_layers.layers == std::vector<int>{1, 2});
  CHECK(c.sr.renoise_t == 0.25);
  CHECK(c.pipeline.prompt == std::vector<int>{2, 7});
  CHECK(c.pipeline.sr);
  CHECK(c.train.lr == doctest::Approx(0.002f));

  const RunConfig d = parse_config("");
  CHECK(d.model == ModelConfig::toy());
  CHECK(d.sr.n_steps == 5);
}

TEST_CASE("config errors carry line numbers") {
  auto message = [](const std::string& text) {
    try {
      (void)parse_config(text, "run.cfg");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  const std::string unknown = message("model.n_layers = 8\nmodel.n_layerz = 8\n");
  CHECK(unknown.find("run.cfg:2:") != std::string::npos);
  CHECK(unknown.find("model.n_layerz") != std::string::npos);
  CHECK(message("sampler.steps 5\n").find("run.cfg:1:") != std::string::npos);
  CHECK(message("\n\nsampler.steps = five\n").find("run.cfg:3:") != std::string::npos);
  CHECK(message("sr.scale = 1 2\n").find("sr.scale") != std::string::npos);
  CHECK(message("sampler.guidance = maybe\n").find("run.cfg:1:") != std::string::npos);
  CHECK(message("sr.renoise_t = 1\n") != "no error");
  CHECK(message("model.n_layers = 4\nmodel.n_boundary = 2\n").find("n_boundary") != std::string::npos);
  CHECK(message("sr.local_layers = 0 9\n").find("9") != std::string::npos);

  const fs::path p = scratch("bad.cfg");
  spit(p, "model.n_heads = 4\nbogus.key = 1\n");
  try {
    (void)load_config(p);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad.cfg:2: unknown key 'bogus.key'") != std::string::npos);
  }
}

TEST_CASE("model fields round trip") {
  ModelConfig m = small_config();
  m.rope_base = 5000.0f;
  m.norm_eps = 1e-5f;
  CHECK(model_config_from_fields(model_config_fields(m)) == m);
}

TEST_CASE("checkpoint round trip is bitwise") {
  const ModelParams p = random_params(1);
  const fs::path path = scratch("rt.ckpt");
  save_checkpoint(p, path);
  CHECK(identical(load_checkpoint(path), p));
  const ModelConfig expected = p.config;
  CHECK(identical(load_checkpoint(path, &expected), p));

  // Every array appears exactly once in the index.
  const Checkpoint c = read_checkpoint(path);
  CHECK(c.role == "base");
  std::size_t n = 0;
  p.for_each_array([&](const std::string& name, const Tensor& t, ParamCategory) {
    ++n;
    REQUIRE(c.array(name) != nullptr);
    CHECK(c.array(name)->identical(t));
  });
  CHECK(c.arrays.size() == n);
}

TEST_CASE("checkpoints of one config differ only in body bytes") {
  const fs::path a = scratch("a.ckpt"), b = scratch("b.ckpt");
  save_checkpoint(random_params(2), a);
  save_checkpoint(random_params(3), b);
  const std::string sa = slurp(a), sb = slurp(b);
  CHECK(sa.size() == sb.size());
  const std::string ha = header_of(sa), hb = header_of(sb);
  CHECK(ha == hb);
  const std::size_t body_at = sa.find('\n', sa.find("\nbody ") + 1) + 1;
  CHECK(sa.substr(0, body_at) == sb.substr(0, body_at));
  CHECK(sa.substr(body_at) != sb.substr(body_at));
}

TEST_CASE("checkpoint error kinds") {
  const ModelParams p = random_params(4);
  const fs::path good = scratch("good.ckpt");
  save_checkpoint(p, good);
  const std::string bytes = slurp(good);

  SUBCASE("truncated body") {
    const fs::path t = scratch("trunc.ckpt");
    spit(t, bytes.substr(0, bytes.size() - 10));
    CHECK(load_kind(t) == CheckpointErrorKind::Truncated);
  }
  SUBCASE("wrong version") {
    std::string v = bytes;
    v.replace(0, std::string("avdit-checkpoint 1").size(), "avdit-checkpoint 9");
    const fs::path t = scratch("version.ckpt");
    spit(t, v);
    CHECK(load_kind(t) == CheckpointErrorKind::Version);
  }
  SUBCASE("array shape edited in the header") {
    std::string s = bytes;
    const std::string from = "array layers.0.text.qkv f32 2 16 48 ";
    const auto at = s.find(from);
    REQUIRE(at != std::string::npos);
    s.replace(at, from.size(), "array layers.0.text.qkv f32 2 48 16 ");
    const fs::path t = scratch("shape.ckpt");
    spit(t, s);
    CHECK(load_kind(t) == CheckpointErrorKind::ShapeMismatch);
  }
  SUBCASE("config differs from the expected model") {
    ModelConfig other = p.config;
    other.vocab_size = 11;
    CHECK(load_kind(good, &other) == CheckpointErrorKind::ShapeMismatch);
  }
  SUBCASE("missing array") {
    Checkpoint c = to_checkpoint(p);
    c.arrays.erase(c.arrays.begin() + 3);
    const fs::path t = scratch("missing.ckpt");
    write_checkpoint(c, t);
    CHECK(load_kind(t) == CheckpointErrorKind::MissingArray);
  }
  SUBCASE("trailing bytes") {
    const fs::path t = scratch("trailing.ckpt");
    spit(t, bytes + "xx");
    CHECK(load_kind(t) == CheckpointErrorKind::Format);
  }
  SUBCASE("missing file") { CHECK(load_kind(scratch("nope.ckpt")) == CheckpointErrorKind::Io); }
}

TEST_CASE("decoder checkpoints") {
  DecoderParams d = DecoderParams::zeros(4, {2, 4, 4});
  d.weight = gaussian_noise(d.weight.shape(), 5);
  d.bias = gaussian_noise(d.bias.shape(), 6);
  const fs::path path = scratch("dec.ckpt");
  save_decoder(d, path);
  const DecoderParams back = load_decoder(path);
  CHECK(back.factors == d.factors);
  CHECK(back.weight.identical(d.weight));
  CHECK(back.bias.identical(d.bias));
  try {
    (void)load_checkpoint(path);
    FAIL("decoder loaded as a model");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointErrorKind::Format);
  }
}

TEST_CASE("tensor files") {
  const Tensor t = gaussian_noise({2, 3, 4, 3}, 7);
  const fs::path path = scratch("x.tensor");
  write_tensor(path, t, "thwc");
  const TensorFile back = read_tensor(path);
  CHECK(back.tensor.identical(t));
  CHECK(back.axes == "thwc");
  const std::string bytes = slurp(path);
  CHECK(bytes.rfind("avdit-tensor 1\ndtype f32\nshape 2 3 4 3\naxes thwc\nend\n", 0) == 0);
  CHECK(bytes.size() == std::string("avdit-tensor 1\ndtype f32\nshape 2 3 4 3\naxes thwc\nend\n").size() + 4 * 72);
  CHECK_THROWS_AS(write_tensor(path, t, "thw"), DimensionError);
  spit(scratch("short.tensor"), bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(read_tensor(scratch("short.tensor")), Error);

  const fs::path frames = scratch("frames");
  fs::remove_all(frames);
  Tensor px({2, 3, 5, 3}, 0.5f);
  px[0] = 1.0f;
  CHECK(write_ppm_frames(frames, px) == 2);
  const std::string f0 = slurp(frames / "frame_0000.ppm");
  CHECK(f0.rfind("P6\n5 3\n255\n", 0) == 0);
  CHECK(f0.size() == std::string("P6\n5 3\n255\n").size() + 45);
  CHECK(static_cast<unsigned char>(f0[std::string("P6\n5 3\n255\n").size()]) == 255);
  CHECK(fs::exists(frames / "frame_0001.ppm"));
}

TEST_CASE("self-check battery on a fresh model") {
  ModelConfig m = ModelConfig::toy();
  m.d_model = 32;
  m.n_heads = 2;
  m.d_ff = 64;
  m.axis_split = ModelConfig::default_axis_split(m.d_head());
  const auto results = run_self_checks(m, SRConfig{}, nullptr, 0);
  CHECK(results.size() >= 6);
  for (const auto& r : results) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.passed);
  }
  bool census_named = false;
  for (const auto& r : results)
    if (r.detail.find("4 shared middle layers") != std::string::npos) census_named = true;
  CHECK(census_named);
}
