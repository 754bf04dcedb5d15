#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "avdit/model_config.hpp"
#include "avdit/sampler.hpp"
#include "avdit/superres.hpp"

namespace avdit {

struct PipelineSettings {
  GridShape base_grid{4, 8, 8};
  std::size_t audio_frames = 16;
  std::vector<int> prompt{1, 5};
  std::string checkpoint_dir = "checkpoints";
  bool distilled = false;
  bool sr = false;
  std::uint64_t seed = 0;
  PatchSize decoder_factors{4, 8, 8};
  bool frames = true;  // dump per-frame PPM files
};

struct TrainSettings {
  int steps = 200;
  int batch = 4;
  float lr = 1e-3f;
  std::uint64_t seed = 0;
  bool sr = false;  // also train an SR checkpoint
  int log_every = 10;
  int decoder_samples = 32;
};

struct RunConfig {
  ModelConfig model;
  SamplerConfig sampler;
  SRConfig sr;
  PipelineSettings pipeline;
  TrainSettings train;

  // Checks every section's invariants; throws ConfigError.
  void validate() const;
};

// Parses flat "section.key = value" lines. '#' starts a comment. Unknown
// keys and malformed lines raise ConfigError with "<source>:<line>:".
RunConfig parse_config(std::string_view text, std::string_view source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Sets one key; throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

// model.* fields in canonical order, as written to checkpoint headers.
std::vector<std::pair<std::string, std::string>> model_config_fields(const ModelConfig& model);
// Rebuilds a ModelConfig from model.* fields; every field must be present.
ModelConfig model_config_from_fields(const std::vector<std::pair<std::string, std::string>>& fields);

}  // namespace avdit
