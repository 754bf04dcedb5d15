#include "avdit/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "avdit/error.hpp"

namespace avdit {

namespace {

constexpr const char* kMagic = "avdit-tensor 1";

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& t, const std::string& axes) {
  if (axes.size() != t.rank()) {
    throw DimensionError("axes '" + axes + "' do not match rank " + std::to_string(t.rank()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << kMagic << "\ndtype f32\nshape";
  for (auto d : t.shape()) out << ' ' << d;
  out << "\naxes " << axes << "\nend\n";
  std::string body(t.size() * 4, '\0');
  const auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::uint32_t le = to_le(std::bit_cast<std::uint32_t>(v[i]));
    std::memcpy(body.data() + i * 4, &le, 4);
  }
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw Error("write failed for " + path.string());
}

TensorFile read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw Error(path.string() + ": not a tensor file");
  Shape shape;
  std::string axes;
  while (std::getline(in, line) && line != "end") {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "dtype") {
      std::string dt;
      ls >> dt;
      if (dt != "f32") throw Error(path.string() + ": unsupported dtype " + dt);
    } else if (tag == "shape") {
      std::size_t d;
      while (ls >> d) shape.push_back(d);
    } else if (tag == "axes") {
      ls >> axes;
    } else {
      throw Error(path.string() + ": unexpected header line '" + line + "'");
    }
  }
  if (line != "end") throw Error(path.string() + ": header cut short");
  Tensor t(shape);
  std::string body(t.size() * 4, '\0');
  in.read(body.data(), static_cast<std::streamsize>(body.size()));
  if (static_cast<std::size_t>(in.gcount()) != body.size()) throw Error(path.string() + ": body cut short");
  auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t le;
    std::memcpy(&le, body.data() + i * 4, 4);
    v[i] = std::bit_cast<float>(to_le(le));
  }
  return {std::move(t), axes};
}

std::size_t write_ppm_frames(const std::filesystem::path& dir, const Tensor& pixels) {
  if (pixels.rank() != 4 || pixels.shape()[3] != 3) {
    throw DimensionError("PPM dump needs pixels [T, H, W, 3]");
  }
  std::filesystem::create_directories(dir);
  const std::size_t T = pixels.shape()[0], H = pixels.shape()[1], W = pixels.shape()[2];
  const auto v = pixels.values();
  for (std::size_t f = 0; f < T; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.ppm", f);
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / name).string());
    out << "P6\n" << W << ' ' << H << "\n255\n";
    std::string row(H * W * 3, '\0');
    for (std::size_t i = 0; i < H * W * 3; ++i) {
      const float x = std::clamp(v[f * H * W * 3 + i], 0.0f, 1.0f);
      row[i] = static_cast<char>(static_cast<unsigned char>(std::lround(x * 255.0f)));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  return T;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace avdit
