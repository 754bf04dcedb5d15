#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "avdit/decoder.hpp"
#include "avdit/params.hpp"

namespace avdit {

inline constexpr int kCheckpointVersion = 1;

// In-memory form of the container: ordered header fields plus named arrays.
struct Checkpoint {
  std::string role;  // base | sr | decoder
  std::vector<std::pair<std::string, std::string>> fields;
  std::vector<std::pair<std::string, Tensor>> arrays;

  const std::string* field(const std::string& key) const;
  const Tensor* array(const std::string& name) const;
};

std::string checkpoint_header(const Checkpoint& ckpt);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const ModelParams& params, const std::string& role = "base");
// Throws CheckpointError(ShapeMismatch) when expected is given and differs,
// or when an array's shape disagrees with the config.
ModelParams model_from_checkpoint(const Checkpoint& ckpt, const ModelConfig* expected = nullptr);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path, const std::string& role = "base");
ModelParams load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

void save_decoder(const DecoderParams& dec, const std::filesystem::path& path);
DecoderParams load_decoder(const std::filesystem::path& path);

}  // namespace avdit
