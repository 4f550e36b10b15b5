#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "expsgd/errors.hpp"
#include "expsgd/optimizer.hpp"
#include "expsgd/synthdata.hpp"

namespace expsgd {

/// Shortest exact decimal form: 17 significant digits round-trip a double.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline constexpr const char* kTraceHeader =
    "iter,train_loss,test_loss,train_err,test_err,excess_err,excess_risk,ratio,norm";

/// Floor below which the excess risk is treated as zero and the ratio field
/// is left empty in CSV output.
inline constexpr double kExcessRiskFloor = 1e-12;

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace) {
    out << r.iter << ',' << format_g17(r.train_loss) << ',' << format_g17(r.test_loss) << ','
        << format_g17(r.train_err) << ',' << format_g17(r.test_err) << ','
        << format_g17(r.excess_err) << ',' << format_g17(r.excess_risk) << ',';
    if (r.excess_risk > kExcessRiskFloor && std::isfinite(r.ratio)) out << format_g17(r.ratio);
    out << ',' << format_g17(r.norm) << '\n';
  }
}

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  write_trace_csv(out, trace);
}

inline std::vector<TraceRow> read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty trace: " + path);
  if (line != kTraceHeader) throw ConfigError("unexpected trace header in " + path);
  std::vector<TraceRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    TraceRow r;
    auto next = [&]() {
      if (!std::getline(ss, field, ',')) throw ConfigError("short trace row in " + path);
      return field;
    };
    r.iter = std::stoll(next());
    r.train_loss = std::stod(next());
    r.test_loss = std::stod(next());
    r.train_err = std::stod(next());
    r.test_err = std::stod(next());
    r.excess_err = std::stod(next());
    r.excess_risk = std::stod(next());
    const std::string ratio = next();
    r.ratio = ratio.empty() ? std::nan("") : std::stod(ratio);
    r.norm = std::stod(next());
    rows.push_back(r);
  }
  return rows;
}

inline void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << "x1,x2,y\n";
  for (const auto& s : data) {
    out << format_g17(s.x(0)) << ',' << format_g17(s.x(1)) << ',' << s.y << '\n';
  }
}

/// Reads rows x1,...,xd,y (header optional); labels must be -1 or +1.
inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset: " + path);
  Dataset data;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.find("x1") != std::string::npos) continue;  // header
    }
    std::stringstream ss(line);
    std::string field;
    std::vector<double> vals;
    while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
    if (vals.size() < 3) throw ConfigError("dataset row needs x1,x2,y: " + path);
    Sample s;
    s.x = Eigen::Vector2d(vals[0], vals[1]);
    s.y = static_cast<int>(vals.back());
    if (s.y != 1 && s.y != -1) throw ConfigError("dataset label must be -1 or +1");
    data.push_back(s);
  }
  return data;
}

}  // namespace expsgd
