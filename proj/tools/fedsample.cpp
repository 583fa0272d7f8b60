// fedsample: command-line driver for the stream sampler and its benchmarks.
//
// Exit status: 0 success, 1 usage or configuration error, 2 completed with
// findings (poisoned benchmark records or failed federation clients).

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedsample/fedsample.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFindings = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string format = "csv";
};

struct SyntheticOptions {
  std::size_t dim = 64;
  std::size_t length = 10000;
  std::size_t classes = 10;
  double skew = 0.9;
  double drift = 1e-4;
  double noise = 0.5;
};

void add_synthetic_flags(CLI::App* cmd, SyntheticOptions& s) {
  cmd->add_option("--dim", s.dim, "Embedding dimension d")->capture_default_str();
  cmd->add_option("--n", s.length, "Stream length N")->capture_default_str();
  cmd->add_option("--classes", s.classes, "Number of classes C")->capture_default_str();
  cmd->add_option("--skew", s.skew, "Block skew in [0, 1)")->capture_default_str();
  cmd->add_option("--drift", s.drift, "Mean shift per step")->capture_default_str();
  cmd->add_option("--noise", s.noise, "Noise norm")->capture_default_str();
}

fedsample::DriftStreamSpec to_drift_spec(const SyntheticOptions& s, std::uint64_t seed,
                                         std::uint32_t client_id) {
  fedsample::DriftStreamSpec d;
  d.dim = s.dim;
  d.length = s.length;
  d.num_classes = s.classes;
  d.skew = s.skew;
  d.drift = s.drift;
  d.noise = s.noise;
  d.seed = seed;
  d.client_id = client_id;
  return d;
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  const fs::path probe = p / ".fedsample_write_probe";
  std::ofstream f(probe);
  if (!f) throw UsageError("output directory '" + dir + "' is not writable");
  f.close();
  fs::remove(probe, ec);
  return p;
}

std::string file_checksum(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fedsample::fnv1a64(ss.str())));
  return buf;
}

/// Resolved configuration plus a checksum of every artifact, enough to
/// rerun the command and compare outputs.
void write_manifest(const fs::path& dir, const std::string& command, const CLI::App& app,
                    const CommonOptions& common, const std::vector<fs::path>& artifacts) {
  ordered_json m;
  m["tool"] = "fedsample";
  m["command"] = command;
  m["seed"] = common.seed;
  // Global options plus the options of the command that ran.
  ordered_json config = ordered_json::object();
  std::istringstream lines(app.config_to_str(true, false));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    const auto dot = key.find('.');
    if (dot != std::string::npos) {
      if (key.compare(0, dot, command) != 0) continue;
      key = key.substr(dot + 1);
    }
    const std::string value = line.substr(eq + 1);
    config[key] = ordered_json::accept(value) ? ordered_json::parse(value) : ordered_json(value);
  }
  m["resolved_config"] = config;
  m["artifacts"] = ordered_json::array();
  for (const auto& a : artifacts) {
    m["artifacts"].push_back({{"file", a.filename().string()}, {"fnv1a64", file_checksum(a)}});
  }
  std::ofstream(dir / (command + "_manifest.json")) << m.dump(2) << '\n';
}

std::string record_extension(const std::string& format) {
  if (format == "csv" || format == "json" || format == "jsonl") return format;
  throw UsageError("--format must be csv, json or jsonl");
}

void write_records(const fs::path& path, const std::string& format,
                   const std::vector<fedsample::bench::ExperimentRecord>& records) {
  std::ofstream os(path);
  if (format == "csv") {
    fedsample::bench::write_records_csv(os, records);
  } else if (format == "jsonl") {
    for (const auto& r : records) os << fedsample::bench::to_json(r).dump() << '\n';
  } else {
    ordered_json arr = ordered_json::array();
    for (const auto& r : records) arr.push_back(fedsample::bench::to_json(r));
    os << arr.dump(2) << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

void require_positive_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw UsageError("--dims needs at least one value");
  for (auto d : dims)
    if (d == 0) throw UsageError("--dims values must be positive");
}

// ---------------------------------------------------------------- stability

struct StabilityOptions {
  std::vector<std::size_t> dims{256, 1024, 2048};
  std::size_t iterations = 1000;
  double lambda = 1e-3;
};

int cmd_stability(const CLI::App& app, const CommonOptions& common, const StabilityOptions& opt) {
  require_positive_dims(opt.dims);
  if (opt.iterations == 0) throw UsageError("--iters must be positive");
  if (!(opt.lambda > 0.0)) throw UsageError("--lambda must be positive");
  const std::string ext = record_extension(common.format);
  const fs::path dir = prepare_out_dir(common.out_dir);

  std::vector<fs::path> artifacts;
  ordered_json summary = ordered_json::array();
  bool poisoned = false;
  std::printf("%-8s %-9s %12s %12s %12s %9s\n", "d", "method", "mean", "max", "last", "poisoned");
  for (std::size_t d : opt.dims) {
    const auto result =
        fedsample::bench::stability_experiment({d, opt.iterations, opt.lambda, common.seed});
    poisoned = poisoned || result.poisoned();
    const fs::path file = dir / fedsample::bench::record_file_name("stability", d, common.seed, ext);
    write_records(file, common.format, result.records);
    artifacts.push_back(file);

    for (const char* method : {"woodbury", "cholesky"}) {
      const auto trace = result.trace(method);
      std::vector<double> updates(trace.begin() + 1, trace.end());
      const auto row = fedsample::bench::summarize("stability", method, d, updates);
      double max_err = 0.0;
      std::size_t bad = 0;
      for (double v : updates) {
        if (std::isfinite(v)) max_err = std::max(max_err, v);
        else ++bad;
      }
      std::printf("%-8zu %-9s %12.4e %12.4e %12.4e %9zu\n", d, method, row.mean, max_err,
                  trace.back(), bad);
      summary.push_back(fedsample::bench::to_json(row));
    }
  }
  const fs::path sfile = dir / "stability_summary.json";
  std::ofstream(sfile) << summary.dump(2) << '\n';
  artifacts.push_back(sfile);
  write_manifest(dir, "stability", app, common, artifacts);
  return poisoned ? kExitFindings : kExitOk;
}

// ------------------------------------------------------------------- timing

struct TimingOptions {
  std::vector<std::size_t> dims{256, 1024, 2048};
  std::size_t iterations = 100;
  std::size_t warmup = 10;
  std::size_t repetitions = 3;
  double lambda = 1.0;
};

int cmd_timing(const CLI::App& app, const CommonOptions& common, const TimingOptions& opt) {
  require_positive_dims(opt.dims);
  if (opt.repetitions == 0) throw UsageError("--reps must be positive");
  if (opt.iterations == 0) throw UsageError("--iters must be positive");
  const std::string ext = record_extension(common.format);
  const fs::path dir = prepare_out_dir(common.out_dir);

  fedsample::bench::TimingRunSpec spec;
  spec.dims = opt.dims;
  spec.iterations = opt.iterations;
  spec.warmup = opt.warmup;
  spec.repetitions = opt.repetitions;
  spec.lambda = opt.lambda;
  spec.seed = common.seed;
  const auto result = fedsample::bench::timing_experiment(spec);

  std::vector<fs::path> artifacts;
  for (std::size_t d : opt.dims) {
    std::vector<fedsample::bench::ExperimentRecord> cell;
    for (const auto& r : result.records)
      if (r.dim == d) cell.push_back(r);
    const fs::path file = dir / fedsample::bench::record_file_name("timing", d, common.seed, ext);
    write_records(file, common.format, cell);
    artifacts.push_back(file);
  }
  ordered_json summary = ordered_json::array();
  std::printf("%-9s %-8s %22s\n", "method", "d", "time per update (ms)");
  for (const auto& row : result.summary) {
    std::printf("%-9s %-8zu %10.3f +- %8.3f\n", row.method.c_str(), row.dim, row.mean * 1e3,
                row.std * 1e3);
    summary.push_back(fedsample::bench::to_json(row));
  }
  const fs::path sfile = dir / "timing_summary.json";
  std::ofstream(sfile) << summary.dump(2) << '\n';
  artifacts.push_back(sfile);
  write_manifest(dir, "timing", app, common, artifacts);
  return kExitOk;
}

// ------------------------------------------------------------------- sample

struct SampleOptions {
  bool synthetic = false;
  std::string input;
  SyntheticOptions stream;
  std::size_t budget = 60;
  double lambda = 1.0;
  std::optional<std::size_t> stream_length;
  std::optional<double> length_estimate;
  std::optional<std::size_t> dim;
  std::uint32_t client_id = 0;
};

void print_client_summary(const fedsample::ClientReport& r) {
  const auto& s = r.summary;
  std::printf("client %u: observed %llu, selected %zu of %zu (fill %.3f)", r.client_id,
              static_cast<unsigned long long>(s.observed), s.selected, s.budget, s.fill_ratio);
  if (s.class_coverage) std::printf(", class coverage %.3f", *s.class_coverage);
  if (s.nan_count) std::printf(", NaN probabilities %llu", static_cast<unsigned long long>(s.nan_count));
  std::printf("\n");
}

int cmd_sample(const CLI::App& app, const CommonOptions& common, const SampleOptions& opt) {
  if (opt.synthetic == !opt.input.empty()) throw UsageError("give exactly one of --synthetic or --input");
  const fs::path dir = prepare_out_dir(common.out_dir);

  fedsample::ClientSpec spec;
  spec.client_id = opt.client_id;
  if (opt.synthetic) {
    spec.stream = to_drift_spec(
        opt.stream, fedsample::derive_seed(common.seed, fedsample::client_label(opt.client_id, "stream")),
        opt.client_id);
  } else {
    spec.stream = opt.input;
  }
  spec.sampler.budget = opt.budget;
  spec.sampler.lambda = opt.lambda;
  spec.sampler.dim = opt.dim;
  spec.sampler.stream_length = opt.stream_length;
  spec.sampler.length_estimate = opt.length_estimate;
  spec.sampler.seed =
      fedsample::derive_seed(common.seed, fedsample::client_label(opt.client_id, "sampler"));

  // Configuration problems surface before any output is produced.
  {
    auto source = fedsample::open_client_stream(spec);
    try {
      fedsample::resolve_sampler_config(spec.sampler, *source).validate();
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  const auto report = fedsample::run_client_spec(spec, dir);
  print_client_summary(report);
  write_manifest(dir, "sample", app, common,
                 {fedsample::client_trace_path(dir, opt.client_id),
                  fedsample::client_batch_path(dir, opt.client_id)});
  return kExitOk;
}

// ----------------------------------------------------------------- federate

struct FederateOptions {
  std::string spec_path;
  bool serial = false;
};

int cmd_federate(const CLI::App& app, CommonOptions common,
                 const FederateOptions& opt) {
  std::ifstream in(opt.spec_path);
  if (!in) throw UsageError("cannot open federation spec '" + opt.spec_path + "'");
  nlohmann::json j;
  fedsample::FederationSpec spec;
  try {
    j = nlohmann::json::parse(in);
    if (app.count("--seed")) j["seed"] = common.seed;
    spec = fedsample::federation_from_json(j);
  } catch (const std::exception& e) {
    throw UsageError(std::string("federation spec: ") + e.what());
  }
  common.seed = spec.seed;
  if (opt.serial) spec.parallel = false;
  const fs::path dir = prepare_out_dir(common.out_dir);

  const auto report = fedsample::run_federation(spec, dir);
  std::vector<fs::path> artifacts;
  for (const auto& c : report.clients) {
    if (c.ok()) {
      print_client_summary(*c.report);
      artifacts.push_back(fedsample::client_trace_path(dir, c.client_id));
      artifacts.push_back(fedsample::client_batch_path(dir, c.client_id));
    } else {
      std::fprintf(stderr, "client %u failed: %s\n", c.client_id, c.error.c_str());
    }
  }
  const fs::path sfile = dir / "federation_summary.json";
  std::ofstream(sfile) << fedsample::federation_summary_json(report).dump(2) << '\n';
  artifacts.push_back(sfile);
  write_manifest(dir, "federate", app, common, artifacts);
  return report.failed() ? kExitFindings : kExitOk;
}

// ----------------------------------------------------------------- generate

struct GenerateOptions {
  SyntheticOptions stream;
  std::string output;
  bool csv = false;
  bool labels = true;
  std::uint32_t client_id = 0;
};

int cmd_generate(const CommonOptions& common, const GenerateOptions& opt) {
  if (opt.output.empty()) throw UsageError("--output is required");
  fedsample::DriftStream stream(to_drift_spec(
      opt.stream, fedsample::derive_seed(common.seed, fedsample::client_label(opt.client_id, "stream")),
      opt.client_id));
  std::ofstream os(opt.output, std::ios::binary);
  if (!os) throw UsageError("cannot write '" + opt.output + "'");
  if (opt.csv) {
    fedsample::io::write_embeddings_csv(os, stream, opt.labels);
  } else {
    fedsample::io::write_embeddings(os, stream, opt.labels);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming volume sampling under a labeling budget, with inverse-covariance "
               "maintenance benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file with option defaults; flags override it");

  CommonOptions common;
  app.add_option("--seed", common.seed, "Root seed for every random component")->capture_default_str();
  app.add_option("--out", common.out_dir, "Output directory")
      ->envname("FEDSAMPLE_OUT_DIR")
      ->capture_default_str();
  app.add_option("--format", common.format, "Record format: csv, json or jsonl")
      ->check(CLI::IsMember({"csv", "json", "jsonl"}))
      ->capture_default_str();

  auto* stability = app.add_subcommand("stability", "Relative error of incremental inverses vs direct inversion");
  StabilityOptions stability_opt;
  stability->add_option("--dims", stability_opt.dims, "Dimensions, comma separated")->delimiter(',')->capture_default_str();
  stability->add_option("--iters", stability_opt.iterations, "Rank-1 updates per run")->capture_default_str();
  stability->add_option("--lambda", stability_opt.lambda, "Initial matrix lambda I")->capture_default_str();

  auto* timing = app.add_subcommand("timing", "Wall-clock time per update of direct, Woodbury and Cholesky paths");
  TimingOptions timing_opt;
  timing->add_option("--dims", timing_opt.dims, "Dimensions, comma separated")->delimiter(',')->capture_default_str();
  timing->add_option("--iters", timing_opt.iterations, "Timed updates per repetition")->capture_default_str();
  timing->add_option("--warmup", timing_opt.warmup, "Untimed updates before measuring")->capture_default_str();
  timing->add_option("--reps", timing_opt.repetitions, "Repetitions")->capture_default_str();
  timing->add_option("--lambda", timing_opt.lambda, "Initial matrix lambda I")->capture_default_str();

  auto* sample = app.add_subcommand("sample", "Run the sampler over one stream and export trace and batch");
  SampleOptions sample_opt;
  sample->add_flag("--synthetic", sample_opt.synthetic, "Generate a drifting synthetic stream");
  sample->add_option("--input", sample_opt.input, "Embedding file (EMBS binary or CSV)");
  add_synthetic_flags(sample, sample_opt.stream);
  sample->add_option("--budget", sample_opt.budget, "Labeling budget k")->capture_default_str();
  sample->add_option("--lambda", sample_opt.lambda, "Regularization lambda")->capture_default_str();
  sample->add_option("--stream-length", sample_opt.stream_length, "Override |U| used by the adaptive rate");
  sample->add_option("--length-estimate", sample_opt.length_estimate, "Length estimate for streams of unknown length");
  sample->add_option("--expect-dim", sample_opt.dim, "Fail unless the input has this dimension");
  sample->add_option("--client-id", sample_opt.client_id, "Client id used in file names and seeds")->capture_default_str();

  auto* federate = app.add_subcommand("federate", "Run independent samplers for several clients");
  FederateOptions federate_opt;
  federate->add_option("--spec", federate_opt.spec_path, "Federation spec JSON")->required();
  federate->add_flag("--serial", federate_opt.serial, "Run clients one after another");

  auto* generate = app.add_subcommand("generate", "Write a synthetic drifting stream to an embedding file");
  GenerateOptions generate_opt;
  add_synthetic_flags(generate, generate_opt.stream);
  generate->add_option("--output", generate_opt.output, "Output path")->required();
  generate->add_flag("--csv", generate_opt.csv, "Write CSV instead of EMBS binary");
  generate->add_flag("!--no-labels", generate_opt.labels, "Omit class tags");
  generate->add_option("--client-id", generate_opt.client_id, "Client id used for the stream seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*stability) return cmd_stability(app, common, stability_opt);
    if (*timing) return cmd_timing(app, common, timing_opt);
    if (*sample) return cmd_sample(app, common, sample_opt);
    if (*federate) return cmd_federate(app, common, federate_opt);
    if (*generate) return cmd_generate(common, generate_opt);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fedsample::linalg::DimensionMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fedsample::InvalidConfig& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fedsample::InvalidSpec& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
