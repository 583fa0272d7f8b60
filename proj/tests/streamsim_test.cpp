#include <sys/resource.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fedsample/sampler/trace_io.hpp"
#include "fedsample/stream/client.hpp"
#include "fedsample/stream/drift.hpp"
#include "fedsample/stream/embedding_io.hpp"
#include "fedsample/stream/federation.hpp"

namespace {

using namespace fedsample;
namespace fs = std::filesystem;

DriftStreamSpec small_spec(std::uint64_t seed = 1, std::size_t n = 500) {
  DriftStreamSpec s;
  s.dim = 8;
  s.num_classes = 5;
  s.length = n;
  s.seed = seed;
  return s;
}

SamplerConfig sampler_for(const DriftStreamSpec& s, std::size_t k, std::uint64_t seed) {
  SamplerConfig c;
  c.dim = s.dim;
  c.budget = k;
  c.stream_length = s.length;
  c.seed = seed;
  return c;
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("fedsample_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

long peak_rss_kb() {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  return ru.ru_maxrss;
}

TEST(DriftStream, DeterministicAndSeedSensitive) {
  const auto a = generate_drift_stream(small_spec(3));
  const auto b = generate_drift_stream(small_spec(3));
  const auto c = generate_drift_stream(small_spec(4));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  ASSERT_EQ(a.size(), 500u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].index, i);
    EXPECT_EQ(a[i].embedding.size(), 8u);
    ASSERT_TRUE(a[i].class_tag);
    EXPECT_LT(*a[i].class_tag, 5);
  }
}

TEST(DriftStream, InvalidSpec) {
  auto s = small_spec();
  s.num_classes = 1;
  EXPECT_THROW(DriftStream{s}, InvalidSpec);
  s = small_spec();
  s.skew = 1.0;
  EXPECT_THROW(DriftStream{s}, InvalidSpec);
  s = small_spec();
  s.noise = 0.0;
  EXPECT_THROW(DriftStream{s}, InvalidSpec);
  s = small_spec();
  s.dim = 0;
  EXPECT_THROW(DriftStream{s}, InvalidSpec);
  s = small_spec();
  s.drift = -1;
  EXPECT_THROW(DriftStream{s}, InvalidSpec);
}

double mean_run_length(const std::vector<StreamSample>& xs) {
  std::size_t runs = 1;
  for (std::size_t i = 1; i < xs.size(); ++i) runs += xs[i].class_tag != xs[i - 1].class_tag;
  return static_cast<double>(xs.size()) / static_cast<double>(runs);
}

TEST(DriftStream, SkewZeroIsExchangeableMixture) {
  auto s = small_spec(5, 20000);
  s.skew = 0.0;
  s.drift = 0.0;
  const auto xs = generate_drift_stream(s);
  std::map<std::uint16_t, int> counts;
  for (const auto& x : xs) ++counts[*x.class_tag];
  ASSERT_EQ(counts.size(), 5u);
  for (const auto& [c, n] : counts) EXPECT_NEAR(n / 20000.0, 0.2, 0.02) << "class " << c;
  // Uniform i.i.d. over 5 classes: expected run length 1 / (1 - 1/5).
  EXPECT_NEAR(mean_run_length(xs), 1.25, 0.05);
}

TEST(DriftStream, SkewProducesRunsAndUnevenClasses) {
  auto s = small_spec(6, 20000);
  s.skew = 0.9;
  const auto xs = generate_drift_stream(s);
  EXPECT_GT(mean_run_length(xs), 8.0);
  std::map<std::uint16_t, int> counts;
  for (const auto& x : xs) ++counts[*x.class_tag];
  EXPECT_GT(counts[0], 3 * counts[4]);
}

TEST(DriftStream, MeansShiftLinearly) {
  auto s = small_spec(7, 4000);
  s.noise = 1e-6;
  s.drift = 1e-3;
  const auto xs = generate_drift_stream(s);
  // Two samples of the same class, n apart, differ by ~drift * n along a unit direction.
  std::map<std::uint16_t, const StreamSample*> first;
  int checked = 0;
  for (const auto& x : xs) {
    auto [it, inserted] = first.emplace(*x.class_tag, &x);
    if (inserted || x.index - it->second->index < 1000) continue;
    double d2 = 0.0;
    for (std::size_t j = 0; j < s.dim; ++j) {
      const double diff = x.embedding[j] - it->second->embedding[j];
      d2 += diff * diff;
    }
    const double expected = s.drift * static_cast<double>(x.index - it->second->index);
    EXPECT_NEAR(std::sqrt(d2), expected, 1e-3 * expected + 1e-5);
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(EmbeddingFile, BinaryRoundTripIsExact) {
  const auto spec = small_spec(8, 300);
  std::stringstream ss;
  DriftStream src(spec);
  io::write_embeddings(ss, src, true);
  EXPECT_EQ(ss.str().size(), 17u + 300u * (8u * 4u + 2u));

  io::EmbeddingReader reader(std::make_unique<std::stringstream>(ss.str()), spec.client_id);
  EXPECT_EQ(reader.dim(), 8u);
  EXPECT_EQ(reader.length(), 300u);
  EXPECT_EQ(collect(reader), generate_drift_stream(spec));
}

TEST(EmbeddingFile, UnlabeledRoundTrip) {
  const auto spec = small_spec(9, 20);
  std::stringstream ss;
  DriftStream src(spec);
  io::write_embeddings(ss, src, false);
  io::EmbeddingReader reader(std::make_unique<std::stringstream>(ss.str()), 0);
  const auto back = collect(reader);
  const auto orig = generate_drift_stream(spec);
  ASSERT_EQ(back.size(), orig.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].embedding, orig[i].embedding);
    EXPECT_FALSE(back[i].class_tag);
  }
}

TEST(EmbeddingFile, EmptyPayload) {
  std::stringstream ss;
  io::EmbeddingWriter(ss, {0, 4, false}).finish();
  io::EmbeddingReader reader(std::make_unique<std::stringstream>(ss.str()), 0);
  StreamSample s;
  EXPECT_FALSE(reader.next(s));
  EXPECT_EQ(reader.length(), 0u);
}

TEST(EmbeddingFile, MalformedInputs) {
  auto open = [](const std::string& bytes) {
    return io::EmbeddingReader(std::make_unique<std::stringstream>(bytes), 0);
  };
  EXPECT_THROW(open("EMBX\1\0\0\0\1\0\0\0\1\0\0\0\0"), io::FormatError);
  EXPECT_THROW(open(std::string("EMBS\2\0\0\0\1\0\0\0\1\0\0\0\0", 17)), io::FormatError);
  EXPECT_THROW(open(std::string("EMBS\1\0\0\0\1\0\0\0\0\0\0\0\0", 17)), io::FormatError);
  EXPECT_THROW(open("EMB"), io::TruncatedFile);
  EXPECT_THROW(open(std::string("EMBS\1\0\0\0\1\0", 10)), io::TruncatedFile);

  std::stringstream ss;
  DriftStream src(small_spec(10, 5));
  io::write_embeddings(ss, src, true);
  std::string cut = ss.str();
  cut.resize(cut.size() - 3);
  auto reader = open(cut);
  StreamSample s;
  for (int i = 0; i < 4; ++i) ASSERT_TRUE(reader.next(s));
  EXPECT_THROW(reader.next(s), io::TruncatedFile);

  std::stringstream nan_file;
  io::EmbeddingWriter w(nan_file, {1, 1, false});
  StreamSample bad;
  bad.embedding = {std::nan("")};
  w.write(bad);
  w.finish();
  auto nan_reader = open(nan_file.str());
  EXPECT_THROW(nan_reader.next(s), io::FormatError);
}

TEST(EmbeddingFile, WriterChecksRecordCount) {
  std::stringstream ss;
  io::EmbeddingWriter w(ss, {2, 1, false});
  StreamSample s;
  s.embedding = {1.0};
  w.write(s);
  EXPECT_THROW(w.finish(), io::FormatError);
  w.write(s);
  EXPECT_THROW(w.write(s), io::FormatError);
  s.embedding = {1.0, 2.0};
  EXPECT_THROW(io::EmbeddingWriter(ss, {1, 1, false}).write(s), linalg::DimensionMismatch);
}

TEST(EmbeddingFile, CsvRoundTrip) {
  const auto spec = small_spec(11, 50);
  std::stringstream ss;
  DriftStream src(spec);
  io::write_embeddings_csv(ss, src, true);
  io::CsvEmbeddingReader reader(std::make_unique<std::stringstream>(ss.str()), 0);
  EXPECT_FALSE(reader.length());
  EXPECT_EQ(collect(reader), generate_drift_stream(spec));
}

TEST(EmbeddingFile, CsvErrors) {
  auto read_all = [](const std::string& text) {
    io::CsvEmbeddingReader r(std::make_unique<std::stringstream>(text), 0);
    return collect(r);
  };
  EXPECT_THROW(read_all("1,2\n"), io::FormatError);
  EXPECT_THROW(read_all(""), io::TruncatedFile);
  EXPECT_THROW(read_all("dim=2\n1,2,3,4\n"), io::FormatError);
  EXPECT_THROW(read_all("dim=2\n1,x\n"), io::FormatError);
  EXPECT_THROW(read_all("dim=2\n1,2,0.5\n"), io::FormatError);
  EXPECT_THROW(read_all("dim=2\n1,inf\n"), io::FormatError);
  const auto ok = read_all("dim=2\r\n1,2\r\n\r\n3,4,7\r\n");
  ASSERT_EQ(ok.size(), 2u);
  EXPECT_FALSE(ok[0].class_tag);
  EXPECT_EQ(ok[1].class_tag, 7);
}

TEST(EmbeddingFile, LoadSniffsFormat) {
  TempDir dir;
  const auto spec = small_spec(12, 40);
  {
    std::ofstream bin(dir.path() / "a.embs", std::ios::binary);
    DriftStream src(spec);
    io::write_embeddings(bin, src, true);
    std::ofstream csv(dir.path() / "a.csv");
    DriftStream src2(spec);
    io::write_embeddings_csv(csv, src2, true);
  }
  auto bin = io::load_embedding_stream((dir.path() / "a.embs").string(), 3);
  auto csv = io::load_embedding_stream((dir.path() / "a.csv").string(), 3);
  EXPECT_EQ(bin->length(), 40u);
  EXPECT_FALSE(csv->length());
  const auto a = collect(*bin);
  EXPECT_EQ(a, collect(*csv));
  EXPECT_EQ(a.front().client_id, 3u);
  EXPECT_THROW(io::load_embedding_stream((dir.path() / "missing").string(), 0), std::runtime_error);
}

TEST(RunClient, DimensionMismatchFailsBeforeReading) {
  DriftStream src(small_spec(13, 10));
  SamplerConfig c = sampler_for(small_spec(), 3, 1);
  c.dim = 9;
  EXPECT_THROW(run_client(src, c, 0), linalg::DimensionMismatch);
  StreamSample s;
  EXPECT_TRUE(src.next(s));
  EXPECT_EQ(s.index, 0u);
}

TEST(RunClient, ShortStreamAndBudgetCap) {
  const auto spec = small_spec(14, 3);
  DriftStream src(spec);
  const auto report = run_client(src, sampler_for(spec, 5, 2), 0);
  EXPECT_LE(report.batch.size(), 3u);
  EXPECT_EQ(report.trace.size(), 3u);

  const auto big = small_spec(15, 10000);
  DriftStream src2(big);
  const auto r2 = run_client(src2, sampler_for(big, 60, 3), 0);
  EXPECT_LE(r2.batch.size(), 60u);
  EXPECT_EQ(r2.summary.observed, 10000u);
  EXPECT_DOUBLE_EQ(r2.summary.fill_ratio, r2.batch.size() / 60.0);
}

TEST(RunClient, DeterministicAndCallbackMatchesTrace) {
  const auto spec = small_spec(16, 2000);
  DriftStream a(spec), b(spec);
  std::vector<SelectionDecision> spilled;
  ClientRunOptions opt;
  opt.on_decision = [&](const SelectionDecision& d) { spilled.push_back(d); };
  const auto ra = run_client(a, sampler_for(spec, 20, 5), 0, opt);
  const auto rb = run_client(b, sampler_for(spec, 20, 5), 0);
  EXPECT_EQ(ra.trace, rb.trace);
  EXPECT_EQ(spilled, ra.trace);
  EXPECT_EQ(ra.batch.samples.size(), rb.batch.samples.size());
  ASSERT_TRUE(ra.summary.class_coverage);
}

// Uniform random subset of the same size, drawn with an independent RNG.
double random_subset_coverage(const std::vector<StreamSample>& xs, std::size_t size, std::size_t classes,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(xs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  std::set<std::uint16_t> tags;
  for (std::size_t i = 0; i < size; ++i) tags.insert(*xs[idx[i]].class_tag);
  return static_cast<double>(tags.size()) / static_cast<double>(classes);
}

TEST(RunClient, CoverageBeatsRandomOnSkewedStreams) {
  int wins = 0;
  double mean_fill = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DriftStreamSpec spec;  // d = 64, C = 10, N = 10000, skew 0.9
    spec.seed = derive_seed(seed, "coverage-test/stream");
    const auto xs = generate_drift_stream(spec);
    VectorSource src(xs, spec.dim);
    ClientRunOptions opt;
    opt.keep_trace = false;
    opt.num_classes = spec.num_classes;
    const auto r = run_client(src, sampler_for(spec, 60, derive_seed(seed, "coverage-test/sampler")), 0, opt);
    const double random = random_subset_coverage(xs, r.batch.size(), spec.num_classes, seed);
    wins += *r.summary.class_coverage >= random;
    mean_fill += r.summary.fill_ratio / 10.0;
  }
  EXPECT_GE(wins, 7);
  EXPECT_GE(mean_fill, 0.8);
}

TEST(RunClient, BoundedMemoryOnLargeFile) {
  TempDir dir;
  const fs::path file = dir.path() / "large.embs";
  DriftStreamSpec spec;
  spec.dim = 16;
  spec.length = 1'000'000;  // 64 MB of float payload
  spec.seed = 17;
  {
    std::ofstream os(file, std::ios::binary);
    DriftStream src(spec);
    io::write_embeddings(os, src, true);
  }
  ASSERT_GT(fs::file_size(file), 60'000'000u);

  const long before = peak_rss_kb();
  auto source = io::load_embedding_stream(file.string(), 0);
  ClientRunOptions opt;
  opt.keep_trace = false;
  std::uint64_t decisions = 0;
  opt.on_decision = [&](const SelectionDecision&) { ++decisions; };
  const auto r = run_client(*source, sampler_for(spec, 60, 1), 0, opt);
  const long growth_kb = peak_rss_kb() - before;
  EXPECT_EQ(decisions, spec.length);
  EXPECT_EQ(r.summary.observed, spec.length);
  EXPECT_LT(growth_kb, 8 * 1024) << "peak RSS grew by " << growth_kb << " kB while streaming";
}

std::vector<ClientSpec> four_clients(const fs::path& dir, bool one_malformed) {
  std::vector<ClientSpec> clients;
  for (std::uint32_t id = 0; id < 4; ++id) {
    ClientSpec c;
    c.client_id = id;
    DriftStreamSpec s = small_spec(100 + id, 1500);
    s.client_id = id;
    c.stream = s;
    c.sampler.budget = 15;
    c.sampler.seed = 200 + id;
    clients.push_back(c);
  }
  if (one_malformed) {
    const fs::path bad = dir / "bad.embs";
    std::ofstream(bad, std::ios::binary) << "EMBS\1\0\0\0garbage";
    clients[2].stream = bad.string();
  }
  return clients;
}

TEST(Federation, ParallelSerialAndStandaloneAgree) {
  TempDir dir;
  FederationSpec spec;
  spec.clients = four_clients(dir.path(), false);
  spec.parallel = true;
  const auto parallel = run_federation(spec);
  spec.parallel = false;
  const auto serial = run_federation(spec);
  ASSERT_EQ(parallel.failed(), 0u);
  ASSERT_EQ(serial.failed(), 0u);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& c = spec.clients[i];
    DriftStream src(std::get<DriftStreamSpec>(c.stream));
    SamplerConfig cfg = resolve_sampler_config(c.sampler, src);
    const auto standalone = run_client(src, cfg, c.client_id);
    EXPECT_EQ(parallel.clients[i].client_id, c.client_id);
    EXPECT_EQ(parallel.clients[i].report->trace, standalone.trace);
    EXPECT_EQ(serial.clients[i].report->trace, standalone.trace);
    EXPECT_EQ(io::batch_to_json(c.client_id, parallel.clients[i].report->batch),
              io::batch_to_json(c.client_id, standalone.batch));
  }
}

TEST(Federation, OutputFilesIdenticalAcrossScheduling) {
  TempDir a, b;
  FederationSpec spec;
  spec.clients = four_clients(a.path(), false);
  spec.parallel = true;
  run_federation(spec, a.path());
  spec.parallel = false;
  run_federation(spec, b.path());
  for (std::uint32_t id = 0; id < 4; ++id) {
    EXPECT_EQ(slurp(client_trace_path(a.path(), id)), slurp(client_trace_path(b.path(), id)));
    EXPECT_EQ(slurp(client_batch_path(a.path(), id)), slurp(client_batch_path(b.path(), id)));
    EXPECT_FALSE(slurp(client_trace_path(a.path(), id)).empty());
  }
}

TEST(Federation, MalformedClientIsIsolated) {
  TempDir dir;
  FederationSpec spec;
  spec.clients = four_clients(dir.path(), true);
  const auto report = run_federation(spec);
  EXPECT_EQ(report.failed(), 1u);
  EXPECT_FALSE(report.clients[2].ok());
  EXPECT_FALSE(report.clients[2].error.empty());
  for (std::size_t i : {0, 1, 3}) EXPECT_TRUE(report.clients[i].ok());
  const auto summary = federation_summary_json(report);
  EXPECT_EQ(summary["failed"], 1);
  EXPECT_EQ(summary["clients"][2]["status"], "failed");
}

TEST(Federation, JsonSpecParsingAndSeedDerivation) {
  const auto j = nlohmann::json::parse(R"({
    "seed": 7,
    "clients": [
      {"client_id": 0, "stream": {"type": "synthetic", "dim": 4, "length": 100}, "sampler": {"budget": 5}},
      {"client_id": 3, "stream": {"type": "synthetic", "seed": 9}, "sampler": {"budget": 6, "seed": 10, "lambda": 0.5}},
      {"client_id": 4, "stream": {"type": "file", "path": "x.csv"}, "sampler": {"budget": 2, "length_estimate": 50}}
    ]})");
  const auto spec = federation_from_json(j);
  ASSERT_EQ(spec.clients.size(), 3u);
  EXPECT_TRUE(spec.parallel);
  const auto& s0 = std::get<DriftStreamSpec>(spec.clients[0].stream);
  EXPECT_EQ(s0.dim, 4u);
  EXPECT_EQ(s0.seed, derive_seed(7, "client/0/stream"));
  EXPECT_EQ(spec.clients[0].sampler.seed, derive_seed(7, "client/0/sampler"));
  EXPECT_EQ(std::get<DriftStreamSpec>(spec.clients[1].stream).seed, 9u);
  EXPECT_EQ(spec.clients[1].sampler.seed, 10u);
  EXPECT_EQ(spec.clients[1].sampler.lambda, 0.5);
  EXPECT_EQ(std::get<std::string>(spec.clients[2].stream), "x.csv");
  EXPECT_EQ(spec.clients[2].sampler.length_estimate, 50.0);

  EXPECT_THROW(federation_from_json(nlohmann::json::parse(R"({"clients": []})")), InvalidSpec);
  EXPECT_THROW(federation_from_json(nlohmann::json::parse(
                   R"({"clients": [{"client_id": 1, "stream": {"type": "x"}, "sampler": {"budget": 1}}]})")),
               InvalidSpec);
  EXPECT_THROW(federation_from_json(nlohmann::json::parse(R"({"clients": [
                   {"client_id": 1, "stream": {"type": "synthetic"}, "sampler": {"budget": 1}},
                   {"client_id": 1, "stream": {"type": "synthetic"}, "sampler": {"budget": 1}}]})")),
               InvalidSpec);
}

TEST(Federation, UnknownLengthNeedsEstimate) {
  TempDir dir;
  const fs::path csv = dir.path() / "s.csv";
  {
    std::ofstream os(csv);
    DriftStream src(small_spec(20, 30));
    io::write_embeddings_csv(os, src, true);
  }
  ClientSpec c;
  c.stream = csv.string();
  c.sampler.budget = 3;
  EXPECT_THROW(run_client_spec(c, std::nullopt), InvalidConfig);
  c.sampler.length_estimate = 30;
  const auto r = run_client_spec(c, std::nullopt);
  EXPECT_EQ(r.summary.observed, 30u);
  EXPECT_LE(r.batch.size(), 3u);
}

}  // namespace
