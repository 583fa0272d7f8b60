#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fedsample::bench {

/// One benchmark measurement. `value` is a relative error or seconds.
/// A poisoned record marks a failed or non-finite measurement; its value
/// is NaN.
struct ExperimentRecord {
  std::string experiment;
  std::string method;
  std::size_t dim = 0;
  std::size_t iteration = 0;
  double value = 0.0;
  std::uint64_t seed = 0;
  std::size_t repetition = 0;
  bool poisoned = false;

  friend bool operator==(const ExperimentRecord& a, const ExperimentRecord& b) {
    const bool same_value = (std::isnan(a.value) && std::isnan(b.value)) || a.value == b.value;
    return a.experiment == b.experiment && a.method == b.method && a.dim == b.dim &&
           a.iteration == b.iteration && same_value && a.seed == b.seed &&
           a.repetition == b.repetition && a.poisoned == b.poisoned;
  }
};

struct SummaryRow {
  std::string experiment;
  std::string method;
  std::size_t dim = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

inline constexpr const char* kRecordCsvHeader =
    "experiment,method,dim,iteration,value,seed,repetition,poisoned";

inline void write_record_csv(std::ostream& os, const ExperimentRecord& r) {
  std::ostringstream v;
  v << std::setprecision(17) << r.value;
  os << r.experiment << ',' << r.method << ',' << r.dim << ',' << r.iteration << ','
     << (r.poisoned ? std::string("nan") : v.str()) << ',' << r.seed << ',' << r.repetition << ','
     << (r.poisoned ? 1 : 0) << '\n';
}

inline void write_records_csv(std::ostream& os, const std::vector<ExperimentRecord>& records) {
  os << kRecordCsvHeader << '\n';
  for (const auto& r : records) write_record_csv(os, r);
}

inline std::vector<ExperimentRecord> read_records_csv(std::istream& is) {
  std::vector<ExperimentRecord> out;
  std::string line;
  if (!std::getline(is, line) || line != kRecordCsvHeader) {
    throw std::runtime_error("records csv: missing or unexpected header");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[8];
    for (auto& cell : f) std::getline(ss, cell, ',');
    ExperimentRecord r;
    r.experiment = f[0];
    r.method = f[1];
    r.dim = std::stoul(f[2]);
    r.iteration = std::stoul(f[3]);
    r.poisoned = f[7] == "1";
    r.value = r.poisoned ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[4]);
    r.seed = std::stoull(f[5]);
    r.repetition = std::stoul(f[6]);
    out.push_back(std::move(r));
  }
  return out;
}

inline nlohmann::ordered_json to_json(const ExperimentRecord& r) {
  nlohmann::ordered_json j;
  j["experiment"] = r.experiment;
  j["method"] = r.method;
  j["dim"] = r.dim;
  j["iteration"] = r.iteration;
  if (r.poisoned) {
    j["value"] = nullptr;
  } else {
    j["value"] = r.value;
  }
  j["seed"] = r.seed;
  j["repetition"] = r.repetition;
  j["poisoned"] = r.poisoned;
  return j;
}

inline nlohmann::ordered_json to_json(const SummaryRow& s) {
  nlohmann::ordered_json j;
  j["experiment"] = s.experiment;
  j["method"] = s.method;
  j["d"] = s.dim;
  j["mean"] = s.mean;
  j["std"] = s.std;
  j["n"] = s.n;
  return j;
}

/// Mean and sample standard deviation of the finite values.
inline SummaryRow summarize(const std::string& experiment, const std::string& method, std::size_t dim,
                            const std::vector<double>& values) {
  SummaryRow s{experiment, method, dim, 0.0, 0.0, 0};
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    sum += v;
    ++s.n;
  }
  if (s.n == 0) return s;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values)
      if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

inline std::string record_file_name(const std::string& experiment, std::size_t dim, std::uint64_t seed,
                                    const std::string& extension = "csv") {
  return experiment + "_" + std::to_string(dim) + "_" + std::to_string(seed) + "." + extension;
}

}  // namespace fedsample::bench
