#include "avdit/config_file.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "avdit/error.hpp"

namespace avdit {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ' ' || ch == '\t' || ch == ',') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const char* b = text.data();
  const char* e = text.data() + text.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key));
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

template <class T, std::size_t N>
std::array<T, N> parse_tuple(std::string_view key, std::string_view text) {
  const auto words = split_words(text);
  if (words.size() != N) {
    throw ConfigError(std::string(key) + " expects " + std::to_string(N) + " values, got '" + std::string(text) + "'");
  }
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_number<T>(key, words[i]);
  return out;
}

GridShape parse_grid(std::string_view key, std::string_view text) {
  const auto a = parse_tuple<std::size_t, 3>(key, text);
  return {a[0], a[1], a[2]};
}

std::vector<int> parse_ints(std::string_view key, std::string_view text) {
  std::vector<int> out;
  for (const auto& w : split_words(text)) out.push_back(parse_number<int>(key, w));
  return out;
}

std::string grid_text(GridShape g) {
  return std::to_string(g.t) + " " + std::to_string(g.h) + " " + std::to_string(g.w);
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto int_field = [](int ModelConfig::*f) {
      return [f](RunConfig& c, std::string_view k, std::string_view v) { c.model.*f = parse_number<int>(k, v); };
    };
    t["model.n_layers"] = int_field(&ModelConfig::n_layers);
    t["model.n_boundary"] = int_field(&ModelConfig::n_boundary);
    t["model.n_heads"] = int_field(&ModelConfig::n_heads);
    t["model.d_model"] = int_field(&ModelConfig::d_model);
    t["model.d_ff"] = int_field(&ModelConfig::d_ff);
    t["model.vocab_size"] = int_field(&ModelConfig::vocab_size);
    t["model.video_channels"] = int_field(&ModelConfig::video_channels);
    t["model.audio_channels"] = int_field(&ModelConfig::audio_channels);
    t["model.patch"] = [](RunConfig& c, auto k, auto v) { c.model.patch = parse_grid(k, v); };
    t["model.axis_split"] = [](RunConfig& c, auto k, auto v) { c.model.axis_split = parse_tuple<int, 3>(k, v); };
    t["model.rope_base"] = [](RunConfig& c, auto k, auto v) { c.model.rope_base = parse_number<float>(k, v); };
    t["model.norm_eps"] = [](RunConfig& c, auto k, auto v) { c.model.norm_eps = parse_number<float>(k, v); };

    t["sampler.steps"] = [](RunConfig& c, auto k, auto v) { c.sampler.n_steps = parse_number<int>(k, v); };
    t["sampler.guidance"] = [](RunConfig& c, auto k, auto v) { c.sampler.guidance = parse_bool(k, v); };
    t["sampler.guidance_scale"] = [](RunConfig& c, auto k, auto v) {
      c.sampler.guidance_scale = parse_number<float>(k, v);
    };
    t["sampler.cond_drop_prob"] = [](RunConfig& c, auto k, auto v) {
      c.sampler.cond_drop_prob = parse_number<float>(k, v);
    };

    t["sr.scale"] = [](RunConfig& c, auto k, auto v) { c.sr.scale = parse_tuple<double, 3>(k, v); };
    t["sr.renoise_t"] = [](RunConfig& c, auto k, auto v) { c.sr.renoise_t = parse_number<double>(k, v); };
    t["sr.steps"] = [](RunConfig& c, auto k, auto v) { c.sr.n_steps = parse_number<int>(k, v); };
    t["sr.window"] = [](RunConfig& c, auto k, auto v) {
      if (v == "global") {
        c.sr.window.reset();
      } else {
        c.sr.window = parse_tuple<int, 3>(k, v);
      }
    };
    t["sr.local_layers"] = [](RunConfig& c, auto k, auto v) {
      if (v == "middle") {
        c.sr.local_layers = LocalLayerSet::middle();
      } else if (v == "none") {
        c.sr.local_layers = LocalLayerSet::none();
      } else if (v == "all") {
        c.sr.local_layers = LocalLayerSet::all();
      } else {
        c.sr.local_layers = LocalLayerSet::explicit_layers(parse_ints(k, v));
      }
    };

    t["pipeline.base_grid"] = [](RunConfig& c, auto k, auto v) { c.pipeline.base_grid = parse_grid(k, v); };
    t["pipeline.audio_frames"] = [](RunConfig& c, auto k, auto v) {
      c.pipeline.audio_frames = parse_number<std::size_t>(k, v);
    };
    t["pipeline.prompt"] = [](RunConfig& c, auto k, auto v) { c.pipeline.prompt = parse_ints(k, v); };
    t["pipeline.checkpoint_dir"] = [](RunConfig& c, auto, auto v) { c.pipeline.checkpoint_dir = std::string(v); };
    t["pipeline.distilled"] = [](RunConfig& c, auto k, auto v) { c.pipeline.distilled = parse_bool(k, v); };
    t["pipeline.sr"] = [](RunConfig& c, auto k, auto v) { c.pipeline.sr = parse_bool(k, v); };
    t["pipeline.seed"] = [](RunConfig& c, auto k, auto v) { c.pipeline.seed = parse_number<std::uint64_t>(k, v); };
    t["pipeline.decoder_factors"] = [](RunConfig& c, auto k, auto v) {
      c.pipeline.decoder_factors = parse_grid(k, v);
    };
    t["pipeline.frames"] = [](RunConfig& c, auto k, auto v) { c.pipeline.frames = parse_bool(k, v); };

    t["train.steps"] = [](RunConfig& c, auto k, auto v) { c.train.steps = parse_number<int>(k, v); };
    t["train.batch"] = [](RunConfig& c, auto k, auto v) { c.train.batch = parse_number<int>(k, v); };
    t["train.lr"] = [](RunConfig& c, auto k, auto v) { c.train.lr = parse_number<float>(k, v); };
    t["train.seed"] = [](RunConfig& c, auto k, auto v) { c.train.seed = parse_number<std::uint64_t>(k, v); };
    t["train.sr"] = [](RunConfig& c, auto k, auto v) { c.train.sr = parse_bool(k, v); };
    t["train.log_every"] = [](RunConfig& c, auto k, auto v) { c.train.log_every = parse_number<int>(k, v); };
    t["train.decoder_samples"] = [](RunConfig& c, auto k, auto v) {
      c.train.decoder_samples = parse_number<int>(k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  sampler.validate();
  sr.validate();
  sr.local_layers.resolve(model);
  if (pipeline.audio_frames < 1) throw ConfigError("pipeline.audio_frames must be >= 1");
  patch_grid(pipeline.base_grid, model.patch);
  if (pipeline.sr) patch_grid(sr.target_grid(pipeline.base_grid), model.patch);
  for (int id : pipeline.prompt) {
    if (id < 0 || id >= model.vocab_size) {
      throw ConfigError("pipeline.prompt id " + std::to_string(id) + " outside vocabulary");
    }
  }
  if (pipeline.decoder_factors.cells() == 0) throw ConfigError("pipeline.decoder_factors must be >= 1");
  if (train.steps < 0) throw ConfigError("train.steps must be >= 0");
  if (train.batch < 1) throw ConfigError("train.batch must be >= 1");
  if (!(train.lr >= 0.0f)) throw ConfigError("train.lr must be >= 0");
  if (train.log_every < 1) throw ConfigError("train.log_every must be >= 1");
  if (train.decoder_samples < 1) throw ConfigError("train.decoder_samples must be >= 1");
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  it->second(cfg, key, trim(value));
}

RunConfig parse_config(std::string_view text, std::string_view source) {
  RunConfig cfg;
  bool axis_split_given = false;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value', got '" + std::string(line) + "'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key");
    if (value.empty()) throw ConfigError(where + "missing value for '" + std::string(key) + "'");
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    if (key == "model.axis_split") axis_split_given = true;
  }
  if (!axis_split_given && cfg.model.n_heads > 0) {
    cfg.model.axis_split = ModelConfig::default_axis_split(cfg.model.d_head());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> model_config_fields(const ModelConfig& m) {
  std::ostringstream rope, eps;
  rope.precision(9);
  eps.precision(9);
  rope << m.rope_base;
  eps << m.norm_eps;
  return {
      {"model.n_layers", std::to_string(m.n_layers)},
      {"model.n_boundary", std::to_string(m.n_boundary)},
      {"model.n_heads", std::to_string(m.n_heads)},
      {"model.d_model", std::to_string(m.d_model)},
      {"model.d_ff", std::to_string(m.d_ff)},
      {"model.vocab_size", std::to_string(m.vocab_size)},
      {"model.video_channels", std::to_string(m.video_channels)},
      {"model.audio_channels", std::to_string(m.audio_channels)},
      {"model.patch", grid_text(m.patch)},
      {"model.axis_split", std::to_string(m.axis_split[0]) + " " + std::to_string(m.axis_split[1]) + " " +
                               std::to_string(m.axis_split[2])},
      {"model.rope_base", rope.str()},
      {"model.norm_eps", eps.str()},
  };
}

ModelConfig model_config_from_fields(const std::vector<std::pair<std::string, std::string>>& fields) {
  RunConfig cfg;
  const auto expected = model_config_fields(cfg.model);
  for (const auto& [key, _] : expected) {
    bool found = false;
    for (const auto& [k, v] : fields) {
      if (k == key) {
        set_config_value(cfg, k, v);
        found = true;
      }
    }
    if (!found) throw ConfigError("missing field " + key);
  }
  cfg.model.validate();
  return cfg.model;
}

}  // namespace avdit
