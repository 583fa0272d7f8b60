#pragma once

// Multi-client orchestration: each client runs its own sampler over its
// own stream, independently of every other client.
//
// Federation spec (JSON):
// {
//   "seed": 7,                       // root seed, default 0
//   "parallel": true,                // default true
//   "clients": [
//     { "client_id": 0,
//       "stream": { "type": "synthetic", "dim": 64, "classes": 10,
//                   "length": 10000, "skew": 0.9, "drift": 1e-4,
//                   "noise": 0.5, "seed": 11 },
//       "sampler": { "budget": 60, "lambda": 1.0, "seed": 12 } },
//     { "client_id": 1,
//       "stream": { "type": "file", "path": "client1.embs" },
//       "sampler": { "budget": 60 } }
//   ]
// }
// Omitted stream/sampler seeds derive from the root seed with the labels
// "client/<id>/stream" and "client/<id>/sampler". The sampler's dim and
// stream_length default to the stream's; "length_estimate" is required
// for streams of unknown length (CSV files).

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fedsample/sampler/trace_io.hpp"
#include "fedsample/stream/client.hpp"
#include "fedsample/stream/drift.hpp"
#include "fedsample/stream/embedding_io.hpp"

namespace fedsample {

struct SamplerSettings {
  std::size_t budget = 0;
  double lambda = 1.0;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> stream_length;
  std::optional<double> length_estimate;
  std::optional<std::uint64_t> seed;
};

struct ClientSpec {
  std::uint32_t client_id = 0;
  std::variant<DriftStreamSpec, std::string> stream;
  SamplerSettings sampler;
};

struct FederationSpec {
  std::uint64_t seed = 0;
  bool parallel = true;
  std::vector<ClientSpec> clients;
};

inline std::string client_label(std::uint32_t client_id, const char* part) {
  return "client/" + std::to_string(client_id) + "/" + part;
}

inline FederationSpec federation_from_json(const nlohmann::json& j) {
  FederationSpec spec;
  spec.seed = j.value("seed", std::uint64_t{0});
  spec.parallel = j.value("parallel", true);
  const auto& clients = j.at("clients");
  if (!clients.is_array() || clients.empty()) throw InvalidSpec("federation: need at least one client");
  for (const auto& c : clients) {
    ClientSpec cs;
    cs.client_id = c.at("client_id").get<std::uint32_t>();
    const auto& st = c.at("stream");
    const std::string type = st.at("type").get<std::string>();
    if (type == "synthetic") {
      DriftStreamSpec d;
      d.dim = st.value("dim", d.dim);
      d.num_classes = st.value("classes", d.num_classes);
      d.length = st.value("length", d.length);
      d.skew = st.value("skew", d.skew);
      d.drift = st.value("drift", d.drift);
      d.noise = st.value("noise", d.noise);
      d.seed = st.contains("seed") ? st.at("seed").get<std::uint64_t>()
                                   : derive_seed(spec.seed, client_label(cs.client_id, "stream"));
      d.client_id = cs.client_id;
      cs.stream = d;
    } else if (type == "file") {
      cs.stream = st.at("path").get<std::string>();
    } else {
      throw InvalidSpec("federation: unknown stream type '" + type + "'");
    }
    const auto& sm = c.at("sampler");
    cs.sampler.budget = sm.at("budget").get<std::size_t>();
    cs.sampler.lambda = sm.value("lambda", 1.0);
    if (sm.contains("dim")) cs.sampler.dim = sm.at("dim").get<std::size_t>();
    if (sm.contains("stream_length")) cs.sampler.stream_length = sm.at("stream_length").get<std::size_t>();
    if (sm.contains("length_estimate")) cs.sampler.length_estimate = sm.at("length_estimate").get<double>();
    cs.sampler.seed = sm.contains("seed") ? sm.at("seed").get<std::uint64_t>()
                                          : derive_seed(spec.seed, client_label(cs.client_id, "sampler"));
    spec.clients.push_back(std::move(cs));
  }
  for (std::size_t a = 0; a < spec.clients.size(); ++a)
    for (std::size_t b = a + 1; b < spec.clients.size(); ++b)
      if (spec.clients[a].client_id == spec.clients[b].client_id)
        throw InvalidSpec("federation: duplicate client_id " + std::to_string(spec.clients[a].client_id));
  return spec;
}

inline std::unique_ptr<SampleSource> open_client_stream(const ClientSpec& spec) {
  if (const auto* d = std::get_if<DriftStreamSpec>(&spec.stream)) return std::make_unique<DriftStream>(*d);
  return io::load_embedding_stream(std::get<std::string>(spec.stream), spec.client_id);
}

/// Fills in the sampler config from the settings and the opened stream.
inline SamplerConfig resolve_sampler_config(const SamplerSettings& s, const SampleSource& source) {
  SamplerConfig c;
  c.dim = s.dim.value_or(source.dim());
  linalg::require_same_dim(c.dim, source.dim(), "client stream vs sampler dim");
  c.budget = s.budget;
  c.lambda = s.lambda;
  c.seed = s.seed.value_or(0);
  c.stream_length = s.stream_length ? s.stream_length : source.length();
  if (!c.stream_length) {
    if (!s.length_estimate) throw InvalidConfig("stream length unknown; set length_estimate");
    c.length_estimate = *s.length_estimate;
  }
  return c;
}

inline std::filesystem::path client_trace_path(const std::filesystem::path& dir, std::uint32_t id) {
  return dir / ("client_" + std::to_string(id) + "_trace.jsonl");
}

inline std::filesystem::path client_batch_path(const std::filesystem::path& dir, std::uint32_t id) {
  return dir / ("client_" + std::to_string(id) + "_batch.json");
}

/// Runs one client end to end. With an output directory the trace is
/// streamed to client_<id>_trace.jsonl (and not kept in memory) and the
/// batch goes to client_<id>_batch.json.
inline ClientReport run_client_spec(const ClientSpec& spec,
                                    const std::optional<std::filesystem::path>& output_dir) {
  auto source = open_client_stream(spec);
  const SamplerConfig config = resolve_sampler_config(spec.sampler, *source);

  ClientRunOptions options;
  if (const auto* d = std::get_if<DriftStreamSpec>(&spec.stream)) options.num_classes = d->num_classes;
  if (!output_dir) return run_client(*source, config, spec.client_id, options);

  std::ofstream trace(client_trace_path(*output_dir, spec.client_id));
  if (!trace) throw std::runtime_error("cannot write trace for client " + std::to_string(spec.client_id));
  options.keep_trace = false;
  options.on_decision = [&trace](const SelectionDecision& d) { io::write_decision_jsonl(trace, d); };
  ClientReport report = run_client(*source, config, spec.client_id, options);

  std::ofstream batch(client_batch_path(*output_dir, spec.client_id));
  batch << io::batch_to_json(spec.client_id, report.batch).dump(2) << '\n';
  if (!trace || !batch) throw std::runtime_error("write failed for client " + std::to_string(spec.client_id));
  return report;
}

struct ClientOutcome {
  std::uint32_t client_id = 0;
  std::optional<ClientReport> report;
  std::string error;

  bool ok() const noexcept { return report.has_value(); }
};

struct FederationReport {
  std::vector<ClientOutcome> clients;

  std::size_t failed() const noexcept {
    std::size_t n = 0;
    for (const auto& c : clients) n += c.ok() ? 0 : 1;
    return n;
  }
};

/// Runs every client; a failing client is recorded and the rest carry on.
/// Outcomes are ordered as in the spec regardless of scheduling.
inline FederationReport run_federation(const FederationSpec& spec,
                                       const std::optional<std::filesystem::path>& output_dir = std::nullopt) {
  FederationReport report;
  report.clients.resize(spec.clients.size());

  auto run_one = [&](std::size_t i) {
    ClientOutcome& out = report.clients[i];
    out.client_id = spec.clients[i].client_id;
    try {
      out.report = run_client_spec(spec.clients[i], output_dir);
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  };

  if (spec.parallel && spec.clients.size() > 1) {
    std::vector<std::jthread> workers;
    workers.reserve(spec.clients.size());
    for (std::size_t i = 0; i < spec.clients.size(); ++i) workers.emplace_back(run_one, i);
  } else {
    for (std::size_t i = 0; i < spec.clients.size(); ++i) run_one(i);
  }
  return report;
}

inline nlohmann::ordered_json federation_summary_json(const FederationReport& report) {
  nlohmann::ordered_json j;
  j["clients"] = nlohmann::ordered_json::array();
  for (const auto& c : report.clients) {
    nlohmann::ordered_json e;
    e["client_id"] = c.client_id;
    e["status"] = c.ok() ? "ok" : "failed";
    if (c.ok()) {
      const auto& s = c.report->summary;
      e["observed"] = s.observed;
      e["fill"] = s.selected;
      e["k"] = s.budget;
      e["fill_ratio"] = s.fill_ratio;
      if (s.class_coverage) e["class_coverage"] = *s.class_coverage;
      e["nan_count"] = s.nan_count;
    } else {
      e["error"] = c.error;
    }
    j["clients"].push_back(e);
  }
  j["failed"] = report.failed();
  return j;
}

}  // namespace fedsample
