#pragma once

// One JSON object per glimpse:
//   {"t":1,"top":40,"left":96,"loss_local":...,"loss_global":...,"loss_final":...,"acc":...,"budget_px":590}

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "aseg/agent.hpp"

namespace aseg {

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string trace_line(const StepRecord& s) {
  nlohmann::ordered_json j{{"t", s.t},
                           {"top", s.glimpse.top},
                           {"left", s.glimpse.left},
                           {"loss_local", s.loss.local},
                           {"loss_global", s.loss.global},
                           {"loss_final", s.loss.final},
                           {"acc", s.accuracy},
                           {"budget_px", s.budget_px}};
  return j.dump();
}

inline void write_trace(std::ostream& out, const std::vector<StepRecord>& steps) {
  for (const auto& s : steps) out << trace_line(s) << '\n';
}

inline void write_trace(const std::string& path, const std::vector<StepRecord>& steps) {
  std::ofstream out(path);
  if (!out) throw TraceError("cannot open trace '" + path + "' for writing");
  write_trace(out, steps);
}

/// Parses a trace; `glimpse_size` fills GlimpseSpec::size, which the file does not store.
inline std::vector<StepRecord> read_trace(std::istream& in, int glimpse_size) {
  std::vector<StepRecord> steps;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      StepRecord s;
      s.t = j.at("t").get<int>();
      s.glimpse = {j.at("top").get<int>(), j.at("left").get<int>(), glimpse_size};
      s.loss = {j.at("loss_local").get<double>(), j.at("loss_global").get<double>(),
                j.at("loss_final").get<double>()};
      s.accuracy = j.at("acc").get<double>();
      s.budget_px = j.at("budget_px").get<long>();
      steps.push_back(s);
    } catch (const nlohmann::json::exception& e) {
      throw TraceError("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].t != static_cast<int>(i) + 1) throw TraceError("trace steps are not numbered 1..T");
  }
  return steps;
}

inline std::vector<StepRecord> read_trace(const std::string& path, int glimpse_size) {
  std::ifstream in(path);
  if (!in) throw TraceError("cannot open trace '" + path + "'");
  return read_trace(in, glimpse_size);
}

}  // namespace aseg
