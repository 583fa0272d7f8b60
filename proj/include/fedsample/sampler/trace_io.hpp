#pragma once

// Decision traces are JSON lines, one object per observation:
//   {"t":1,"p_raw":0.006,"p":0.006,"q":0.006,"selected":false,"sample_id":0}
// A batch is one JSON object:
//   {"client_id":0,"k":60,"selected":[17,302,...],"fill":58}

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsample/sampler/sampler.hpp"

namespace fedsample::io {

inline nlohmann::ordered_json to_json(const SelectionDecision& d) {
  nlohmann::ordered_json j;
  j["t"] = d.t;
  j["p_raw"] = d.raw_probability;
  j["p"] = d.probability;
  j["q"] = d.q;
  j["selected"] = d.selected;
  j["sample_id"] = d.sample_id;
  return j;
}

inline SelectionDecision decision_from_json(const nlohmann::json& j) {
  SelectionDecision d;
  d.t = j.at("t").get<std::uint64_t>();
  d.raw_probability = j.at("p_raw").get<double>();
  d.probability = j.at("p").get<double>();
  d.q = j.at("q").get<double>();
  d.selected = j.at("selected").get<bool>();
  d.sample_id = j.at("sample_id").get<std::uint64_t>();
  return d;
}

inline void write_decision_jsonl(std::ostream& os, const SelectionDecision& d) {
  os << to_json(d).dump() << '\n';
}

inline std::vector<SelectionDecision> read_decision_trace(std::istream& is) {
  std::vector<SelectionDecision> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(decision_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

inline nlohmann::ordered_json batch_to_json(std::uint32_t client_id, const Batch& batch) {
  nlohmann::ordered_json j;
  j["client_id"] = client_id;
  j["k"] = batch.budget;
  std::vector<std::uint64_t> ids;
  ids.reserve(batch.size());
  for (const auto& s : batch.samples) ids.push_back(s.sample_id);
  j["selected"] = ids;
  j["fill"] = batch.size();
  return j;
}

}  // namespace fedsample::io
