#pragma once

// Embedding stream files.
//
// Binary, little-endian:
//   char[4] "EMBS" | u32 version (= 1) | u32 N | u32 d | u8 has_labels
//   then N records of d float32 values, each followed by a u16 class tag
//   when has_labels = 1.
// CSV: a header line "dim=d", then one sample per line with d values and,
// optionally, a final integer label column.
//
// Readers pull one record at a time and keep only the current record.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>

#include "fedsample/linalg/serialize.hpp"
#include "fedsample/stream/source.hpp"

namespace fedsample::io {

inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

struct EmbeddingHeader {
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
  bool has_labels = false;
};

class EmbeddingWriter {
 public:
  EmbeddingWriter(std::ostream& os, EmbeddingHeader header) : os_(os), header_(header) {
    if (header.dim == 0) throw FormatError("EmbeddingWriter: dim must be >= 1");
    os_.write("EMBS", 4);
    le::write<std::uint32_t>(os_, kEmbeddingFormatVersion);
    le::write<std::uint32_t>(os_, header.count);
    le::write<std::uint32_t>(os_, header.dim);
    le::write<std::uint8_t>(os_, header.has_labels ? 1 : 0);
  }

  void write(const StreamSample& s) {
    if (written_ >= header_.count) throw FormatError("EmbeddingWriter: more records than declared");
    linalg::require_same_dim(header_.dim, s.embedding.size(), "EmbeddingWriter");
    for (double x : s.embedding) le::write<float>(os_, static_cast<float>(x));
    if (header_.has_labels) le::write<std::uint16_t>(os_, s.class_tag.value_or(0));
    ++written_;
  }

  /// Checks that exactly N records were written.
  void finish() {
    if (written_ != header_.count) {
      throw FormatError("EmbeddingWriter: wrote " + std::to_string(written_) + " of " +
                        std::to_string(header_.count) + " declared records");
    }
    os_.flush();
    if (!os_) throw std::runtime_error("EmbeddingWriter: stream error");
  }

 private:
  std::ostream& os_;
  EmbeddingHeader header_;
  std::uint32_t written_ = 0;
};

/// Streaming reader for the binary format.
class EmbeddingReader final : public SampleSource {
 public:
  EmbeddingReader(std::unique_ptr<std::istream> is, std::uint32_t client_id)
      : is_(std::move(is)), client_id_(client_id) {
    char magic[4] = {};
    is_->read(magic, 4);
    if (is_->gcount() != 4) throw TruncatedFile("embedding file: missing header");
    if (std::string(magic, 4) != "EMBS") throw FormatError("embedding file: bad magic");
    const auto version = le::read<std::uint32_t>(*is_, "version");
    if (version != kEmbeddingFormatVersion) {
      throw FormatError("embedding file: unsupported version " + std::to_string(version));
    }
    header_.count = le::read<std::uint32_t>(*is_, "count");
    header_.dim = le::read<std::uint32_t>(*is_, "dim");
    const auto labels = le::read<std::uint8_t>(*is_, "has_labels");
    if (header_.dim == 0) throw FormatError("embedding file: dim must be >= 1");
    if (labels > 1) throw FormatError("embedding file: has_labels must be 0 or 1");
    header_.has_labels = labels == 1;
  }

  const EmbeddingHeader& header() const noexcept { return header_; }
  std::size_t dim() const override { return header_.dim; }
  std::optional<std::size_t> length() const override { return header_.count; }

  bool next(StreamSample& out) override {
    if (read_ >= header_.count) return false;
    out.embedding.resize(header_.dim);
    for (auto& x : out.embedding) {
      x = static_cast<double>(le::read<float>(*is_, "embedding record"));
      if (!std::isfinite(x)) {
        throw FormatError("embedding file: non-finite value in record " + std::to_string(read_));
      }
    }
    out.class_tag.reset();
    if (header_.has_labels) out.class_tag = le::read<std::uint16_t>(*is_, "class tag");
    out.index = read_;
    out.client_id = client_id_;
    ++read_;
    return true;
  }

 private:
  std::unique_ptr<std::istream> is_;
  std::uint32_t client_id_;
  EmbeddingHeader header_;
  std::uint32_t read_ = 0;
};

/// Streaming reader for the CSV format. The length is not known up front.
class CsvEmbeddingReader final : public SampleSource {
 public:
  CsvEmbeddingReader(std::unique_ptr<std::istream> is, std::uint32_t client_id)
      : is_(std::move(is)), client_id_(client_id) {
    std::string line;
    if (!std::getline(*is_, line)) throw TruncatedFile("embedding csv: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("dim=", 0) != 0) throw FormatError("embedding csv: header must be 'dim=<d>'");
    try {
      dim_ = std::stoul(line.substr(4));
    } catch (const std::exception&) {
      throw FormatError("embedding csv: bad dim in header");
    }
    if (dim_ == 0) throw FormatError("embedding csv: dim must be >= 1");
  }

  std::size_t dim() const override { return dim_; }
  std::optional<std::size_t> length() const override { return std::nullopt; }

  bool next(StreamSample& out) override {
    std::string line;
    do {
      if (!std::getline(*is_, line)) return false;
      if (!line.empty() && line.back() == '\r') line.pop_back();
    } while (line.empty());

    out.embedding.clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v;
      try {
        v = std::stod(cell);
      } catch (const std::exception&) {
        throw FormatError("embedding csv: bad number '" + cell + "' in record " + std::to_string(read_));
      }
      out.embedding.push_back(v);
    }
    out.class_tag.reset();
    if (out.embedding.size() == dim_ + 1) {
      const double tag = out.embedding.back();
      if (tag < 0 || tag > 65535 || tag != std::floor(tag)) {
        throw FormatError("embedding csv: label must be an integer in [0, 65535]");
      }
      out.class_tag = static_cast<std::uint16_t>(tag);
      out.embedding.pop_back();
    } else if (out.embedding.size() != dim_) {
      throw FormatError("embedding csv: record " + std::to_string(read_) + " has " +
                        std::to_string(out.embedding.size()) + " values, expected " +
                        std::to_string(dim_));
    }
    if (!linalg::all_finite(out.embedding)) {
      throw FormatError("embedding csv: non-finite value in record " + std::to_string(read_));
    }
    out.index = read_++;
    out.client_id = client_id_;
    return true;
  }

 private:
  std::unique_ptr<std::istream> is_;
  std::uint32_t client_id_;
  std::size_t dim_ = 0;
  std::uint64_t read_ = 0;
};

inline void write_embeddings_csv(std::ostream& os, SampleSource& source, bool with_labels) {
  os << "dim=" << source.dim() << '\n';
  const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
  StreamSample s;
  while (source.next(s)) {
    for (std::size_t j = 0; j < s.embedding.size(); ++j) {
      if (j) os << ',';
      os << s.embedding[j];
    }
    if (with_labels) os << ',' << s.class_tag.value_or(0);
    os << '\n';
  }
  os.precision(old_precision);
}

/// Drains `source` into the binary format. The source must know its length.
inline void write_embeddings(std::ostream& os, SampleSource& source, bool with_labels) {
  const auto n = source.length();
  if (!n) throw FormatError("write_embeddings: source length unknown");
  EmbeddingWriter w(os, {static_cast<std::uint32_t>(*n), static_cast<std::uint32_t>(source.dim()),
                         with_labels});
  StreamSample s;
  while (source.next(s)) w.write(s);
  w.finish();
}

/// Opens an embedding file, binary or CSV, chosen by its first four bytes.
inline std::unique_ptr<SampleSource> load_embedding_stream(const std::string& path,
                                                           std::uint32_t client_id) {
  auto in = std::make_unique<std::ifstream>(path, std::ios::binary);
  if (!*in) throw std::runtime_error("cannot open embedding file '" + path + "'");
  char magic[4] = {};
  in->read(magic, 4);
  const bool binary = in->gcount() == 4 && std::string(magic, 4) == "EMBS";
  in->clear();
  in->seekg(0);
  if (binary) return std::make_unique<EmbeddingReader>(std::move(in), client_id);
  return std::make_unique<CsvEmbeddingReader>(std::move(in), client_id);
}

}  // namespace fedsample::io
