#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "collabrl/domain.hpp"

namespace collabrl {

inline constexpr const char* kMetricsSchema = "# metrics-v1";
inline constexpr const char* kMetricsHeader =
    "iteration,mean_reward,call_ratio,device_accuracy,collab_accuracy,"
    "d1_size,d2_size,cloud_queries,updated";

// Shortest round-trip decimal form; locale-independent and stable across
// runs, which keeps emitted files byte-identical.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error("bad numeric field: '" + s + "'");
  return v;
}

inline void write_metrics_csv(const std::string& path, const RunMetrics& metrics) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << kMetricsSchema << '\n' << kMetricsHeader << '\n';
  for (const MetricsRow& r : metrics) {
    out << r.iteration << ',' << format_double(r.mean_reward) << ','
        << format_double(r.call_ratio) << ',' << format_double(r.device_accuracy) << ','
        << format_double(r.collab_accuracy) << ',' << r.d1_size << ',' << r.d2_size << ','
        << r.cloud_queries << ',' << (r.updated ? 1 : 0) << '\n';
  }
}

inline RunMetrics read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsSchema)
    throw std::runtime_error(path + ": unknown metrics schema: '" + line + "'");
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw std::runtime_error(path + ": unexpected metrics header");
  RunMetrics metrics;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 9) throw std::runtime_error(path + ": malformed row: " + line);
    MetricsRow r;
    r.iteration = static_cast<int>(parse_double(fields[0]));
    r.mean_reward = parse_double(fields[1]);
    r.call_ratio = parse_double(fields[2]);
    r.device_accuracy = parse_double(fields[3]);
    r.collab_accuracy = parse_double(fields[4]);
    r.d1_size = static_cast<int>(parse_double(fields[5]));
    r.d2_size = static_cast<int>(parse_double(fields[6]));
    r.cloud_queries = static_cast<int>(parse_double(fields[7]));
    r.updated = parse_double(fields[8]) != 0.0;
    metrics.push_back(r);
  }
  return metrics;
}

}  // namespace collabrl
