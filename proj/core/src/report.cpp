#include <cmath>
#include <iomanip>
#include <sstream>
#include <vector>

#include "avdit/pipeline.hpp"

namespace avdit {

namespace {

std::string fixed(long long units, int decimals) {
  std::ostringstream os;
  long long scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  os << std::fixed << std::setprecision(decimals) << static_cast<double>(units) / static_cast<double>(scale);
  return os.str();
}

long long to_units(double seconds, int decimals) { return std::llround(seconds * std::pow(10.0, decimals)); }

}  // namespace

std::string format_report(std::span<const StageReport> rows, int decimals) {
  const std::vector<std::string> header = {"Resolution", "Base", "SR", "Decode", "Total"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    const long long base = to_units(r.base_s, decimals);
    const long long decode = to_units(r.decode_s, decimals);
    const long long sr = r.sr_s ? to_units(*r.sr_s, decimals) : 0;
    cells.push_back({r.resolution, fixed(base, decimals), r.sr_s ? fixed(sr, decimals) : "--",
                     fixed(decode, decimals), fixed(base + sr + decode, decimals)});
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) os << " | ";
      if (c + 1 < row.size()) {
        os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      } else {
        os << row[c];
      }
    }
    os << '\n';
  };
  emit(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.emplace_back(w, '-');
  emit(rule);
  for (const auto& row : cells) emit(row);
  return os.str();
}

std::string format_report(const StageReport& row, int decimals) { return format_report(std::span(&row, 1), decimals); }

std::string report_to_kv(const StageReport& r) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "resolution = " << r.resolution << '\n';
  os << "base_s = " << r.base_s << '\n';
  os << "sr_s = ";
  if (r.sr_s) {
    os << *r.sr_s << '\n';
  } else {
    os << "--\n";
  }
  os << "decode_s = " << r.decode_s << '\n';
  os << "total_s = " << r.total_s << '\n';
  os << "base_steps = " << r.base_steps << '\n';
  os << "base_evaluations = " << r.base_evaluations << '\n';
  os << "sr_steps = " << (r.sr_steps ? std::to_string(*r.sr_steps) : "--") << '\n';
  os << "sr_evaluations = " << (r.sr_evaluations ? std::to_string(*r.sr_evaluations) : "--") << '\n';
  os << "base_latent = " << to_string(r.base_latent) << '\n';
  os << "output_latent = " << to_string(r.output_latent) << '\n';
  return os.str();
}

}  // namespace avdit
