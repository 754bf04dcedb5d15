#include "avdit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "avdit/config_file.hpp"
#include "avdit/error.hpp"

namespace avdit {

namespace {

constexpr const char* kMagic = "avdit-checkpoint";

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

void append_f32(std::string& out, std::span<const float> values) {
  const std::size_t base = out.size();
  out.resize(base + values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t le = to_le(std::bit_cast<std::uint32_t>(values[i]));
    std::memcpy(out.data() + base + i * 4, &le, 4);
  }
}

void read_f32(const char* src, std::span<float> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t le;
    std::memcpy(&le, src + i * 4, 4);
    values[i] = std::bit_cast<float>(to_le(le));
  }
}

std::string shape_text(const Shape& s) {
  std::string out = std::to_string(s.size());
  for (auto d : s) out += " " + std::to_string(d);
  return out;
}

Checkpoint decoder_checkpoint(const DecoderParams& dec) {
  Checkpoint c;
  c.role = "decoder";
  c.fields = {{"decoder.factors", std::to_string(dec.factors.t) + " " + std::to_string(dec.factors.h) + " " +
                                      std::to_string(dec.factors.w)},
              {"decoder.channels", std::to_string(dec.channels())}};
  c.arrays = {{"decoder.weight", dec.weight}, {"decoder.bias", dec.bias}};
  return c;
}

}  // namespace

const std::string* Checkpoint::field(const std::string& key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return &v;
  }
  return nullptr;
}

const Tensor* Checkpoint::array(const std::string& name) const {
  for (const auto& [k, v] : arrays) {
    if (k == name) return &v;
  }
  return nullptr;
}

std::string checkpoint_header(const Checkpoint& ckpt) {
  std::ostringstream h;
  h << kMagic << " " << kCheckpointVersion << "\n";
  h << "role " << ckpt.role << "\n";
  for (const auto& [k, v] : ckpt.fields) h << "field " << k << " " << v << "\n";
  h << "arrays " << ckpt.arrays.size() << "\n";
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.arrays) {
    h << "array " << name << " f32 " << shape_text(t.shape()) << " " << offset << "\n";
    offset += t.size() * 4;
  }
  h << "body " << offset << "\n";
  return h.str();
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string body;
  for (const auto& [_, t] : ckpt.arrays) append_f32(body, t.values());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::Io, "cannot write " + path.string());
  const std::string header = checkpoint_header(ckpt);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::Io, "write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::Io, "cannot open " + path.string());
  const std::string where = path.string() + ": ";
  auto format_error = [&](const std::string& msg) {
    return CheckpointError(CheckpointErrorKind::Format, where + msg);
  };

  std::string line;
  if (!std::getline(in, line)) throw CheckpointError(CheckpointErrorKind::Truncated, where + "empty file");
  {
    std::istringstream ls(line);
    std::string magic;
    int version = -1;
    ls >> magic >> version;
    if (magic != kMagic) throw format_error("not a checkpoint");
    if (version != kCheckpointVersion) {
      throw CheckpointError(CheckpointErrorKind::Version, where + "version " + std::to_string(version) +
                                                              ", expected " + std::to_string(kCheckpointVersion));
    }
  }

  Checkpoint ckpt;
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  std::size_t body_bytes = 0;
  std::size_t declared_arrays = 0;
  bool have_body = false;
  while (!have_body) {
    if (!std::getline(in, line)) throw CheckpointError(CheckpointErrorKind::Truncated, where + "header cut short");
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "role") {
      ls >> ckpt.role;
    } else if (tag == "field") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      const auto b = value.find_first_not_of(' ');
      ckpt.fields.emplace_back(key, b == std::string::npos ? "" : value.substr(b));
    } else if (tag == "arrays") {
      ls >> declared_arrays;
    } else if (tag == "array") {
      Entry e;
      std::string dtype;
      std::size_t rank = 0;
      ls >> e.name >> dtype >> rank;
      if (dtype != "f32") throw format_error("unsupported dtype '" + dtype + "' for " + e.name);
      e.shape.resize(rank);
      for (auto& d : e.shape) ls >> d;
      ls >> e.offset;
      if (!ls) throw format_error("malformed array line '" + line + "'");
      entries.push_back(std::move(e));
    } else if (tag == "body") {
      ls >> body_bytes;
      if (!ls) throw format_error("malformed body line");
      have_body = true;
    } else {
      throw format_error("unexpected header line '" + line + "'");
    }
  }
  if (ckpt.role.empty()) throw format_error("missing role");
  if (entries.size() != declared_arrays) throw format_error("array count does not match index");

  std::string body(body_bytes, '\0');
  in.read(body.data(), static_cast<std::streamsize>(body_bytes));
  if (static_cast<std::size_t>(in.gcount()) != body_bytes) {
    throw CheckpointError(CheckpointErrorKind::Truncated, where + "body has " + std::to_string(in.gcount()) +
                                                              " of " + std::to_string(body_bytes) + " bytes");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw format_error("trailing bytes after body");

  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.name).second) throw format_error("duplicate array " + e.name);
    const std::size_t bytes = shape_size(e.shape) * 4;
    if (e.offset > body_bytes || bytes > body_bytes - e.offset) {
      throw CheckpointError(CheckpointErrorKind::Truncated, where + "array " + e.name + " runs past the body");
    }
    Tensor t(e.shape);
    read_f32(body.data() + e.offset, t.values());
    ckpt.arrays.emplace_back(e.name, std::move(t));
  }
  return ckpt;
}

Checkpoint to_checkpoint(const ModelParams& params, const std::string& role) {
  Checkpoint c;
  c.role = role;
  c.fields = model_config_fields(params.config);
  params.for_each_array([&](const std::string& name, const Tensor& t, ParamCategory) { c.arrays.emplace_back(name, t); });
  return c;
}

ModelParams model_from_checkpoint(const Checkpoint& ckpt, const ModelConfig* expected) {
  if (ckpt.role != "base" && ckpt.role != "sr") {
    throw CheckpointError(CheckpointErrorKind::Format, "role '" + ckpt.role + "' is not a model checkpoint");
  }
  ModelConfig config;
  try {
    config = model_config_from_fields(ckpt.fields);
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointErrorKind::Format, std::string("bad model header: ") + e.what());
  }
  if (expected != nullptr && !(*expected == config)) {
    throw CheckpointError(CheckpointErrorKind::ShapeMismatch, "checkpoint config does not match the expected model");
  }
  ModelParams params = zeros_like(init_params(config));
  std::size_t matched = 0;
  params.for_each_array([&](const std::string& name, Tensor& t, ParamCategory) {
    const Tensor* src = ckpt.array(name);
    if (src == nullptr) throw CheckpointError(CheckpointErrorKind::MissingArray, "missing array " + name);
    if (src->shape() != t.shape()) {
      throw CheckpointError(CheckpointErrorKind::ShapeMismatch,
                            "array " + name + " has shape [" + shape_text(src->shape()) + "], expected [" +
                                shape_text(t.shape()) + "]");
    }
    t = *src;
    ++matched;
  });
  if (matched != ckpt.arrays.size()) {
    throw CheckpointError(CheckpointErrorKind::Format, "checkpoint holds arrays the model does not use");
  }
  return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path, const std::string& role) {
  write_checkpoint(to_checkpoint(params, role), path);
}

ModelParams load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  return model_from_checkpoint(read_checkpoint(path), expected);
}

void save_decoder(const DecoderParams& dec, const std::filesystem::path& path) {
  write_checkpoint(decoder_checkpoint(dec), path);
}

DecoderParams load_decoder(const std::filesystem::path& path) {
  const Checkpoint c = read_checkpoint(path);
  if (c.role != "decoder") throw CheckpointError(CheckpointErrorKind::Format, "role '" + c.role + "' is not a decoder");
  const std::string* factors = c.field("decoder.factors");
  const std::string* channels = c.field("decoder.channels");
  if (factors == nullptr || channels == nullptr) {
    throw CheckpointError(CheckpointErrorKind::Format, "decoder header incomplete");
  }
  DecoderParams dec;
  std::istringstream fs(*factors);
  fs >> dec.factors.t >> dec.factors.h >> dec.factors.w;
  const std::size_t ch = std::stoul(*channels);
  if (!fs || dec.factors.cells() == 0 || ch == 0) {
    throw CheckpointError(CheckpointErrorKind::Format, "bad decoder header");
  }
  dec = DecoderParams::zeros(ch, dec.factors);
  for (auto [name, dst] : {std::pair{"decoder.weight", &dec.weight}, std::pair{"decoder.bias", &dec.bias}}) {
    const Tensor* src = c.array(name);
    if (src == nullptr) throw CheckpointError(CheckpointErrorKind::MissingArray, std::string("missing array ") + name);
    if (src->shape() != dst->shape()) {
      throw CheckpointError(CheckpointErrorKind::ShapeMismatch, std::string("array ") + name + " has wrong shape");
    }
    *dst = *src;
  }
  return dec;
}

}  // namespace avdit
