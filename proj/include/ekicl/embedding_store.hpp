#pragma once
// Per-token embedding vectors: the JSON Lines ingest format written by the extractor
// sidecar, a deterministic synthetic embedder for fixtures, and the join against a parsed
// corpus.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ekicl/chat_corpus.hpp"
#include "ekicl/common.hpp"
#include "ekicl/rng.hpp"

namespace ekicl {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct EmbeddedTranscript {
  std::string transcript_id;
  std::optional<Label> gold_label;
  std::vector<std::string> tokens;
  Matrix vectors;  // tokens.size() x D
  std::optional<std::vector<std::string>> pos_tags;

  std::size_t dim() const noexcept { return vectors.cols(); }

  friend bool operator==(const EmbeddedTranscript&, const EmbeddedTranscript&) = default;
};

inline void validate(const EmbeddedTranscript& r) {
  if (r.vectors.rows() != r.tokens.size()) {
    throw data_error("transcript '" + r.transcript_id + "': " + std::to_string(r.tokens.size()) +
                     " tokens but " + std::to_string(r.vectors.rows()) + " vector rows");
  }
  if (r.pos_tags && r.pos_tags->size() != r.tokens.size()) {
    throw data_error("transcript '" + r.transcript_id + "': pos_tags length differs from token count");
  }
  for (double v : r.vectors.flat()) {
    if (!std::isfinite(v)) throw data_error("transcript '" + r.transcript_id + "': non-finite vector value");
  }
}

inline EmbeddedTranscript record_from_json(const nlohmann::json& j) {
  EmbeddedTranscript r;
  r.transcript_id = j.at("transcript_id").get<std::string>();
  const auto& label = j.at("label");
  if (!label.is_null()) {
    const auto parsed = parse_label(label.get<std::string>());
    if (!parsed) throw data_error("transcript '" + r.transcript_id + "': label must be AD, HC or null");
    r.gold_label = parsed;
  }
  r.tokens = j.at("tokens").get<std::vector<std::string>>();
  if (auto it = j.find("pos_tags"); it != j.end() && !it->is_null()) {
    r.pos_tags = it->get<std::vector<std::string>>();
  }
  const auto& rows = j.at("vectors");
  if (!rows.is_array()) throw data_error("transcript '" + r.transcript_id + "': vectors must be an array");
  std::vector<double> values;
  for (const auto& row : rows) {
    row.get_to(values);
    if (r.vectors.rows() > 0 && values.size() != r.vectors.cols()) {
      throw data_error("transcript '" + r.transcript_id + "': ragged vector rows");
    }
    r.vectors.append_row(values);
  }
  return r;
}

inline nlohmann::json record_to_json(const EmbeddedTranscript& r) {
  nlohmann::json j;
  j["transcript_id"] = r.transcript_id;
  j["label"] = r.gold_label ? nlohmann::json(std::string(to_string(*r.gold_label))) : nlohmann::json(nullptr);
  j["tokens"] = r.tokens;
  j["pos_tags"] = r.pos_tags ? nlohmann::json(*r.pos_tags) : nlohmann::json(nullptr);
  auto rows = nlohmann::json::array();
  for (std::size_t i = 0; i < r.vectors.rows(); ++i) {
    const auto row = r.vectors.row(i);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["vectors"] = std::move(rows);
  return j;
}

inline std::vector<EmbeddedTranscript> parse_ingest(std::istream& in, const std::string& source = "ingest") {
  std::vector<EmbeddedTranscript> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    EmbeddedTranscript r;
    try {
      r = record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw data_error(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    validate(r);
    if (!out.empty() && r.dim() != out.front().dim()) {
      throw data_error("inconsistent dimension: transcript '" + r.transcript_id + "' has D=" +
                       std::to_string(r.dim()) + ", expected " + std::to_string(out.front().dim()));
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<EmbeddedTranscript> read_ingest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot read " + path.string());
  return parse_ingest(in, path.string());
}

inline void write_ingest(std::ostream& out, std::span<const EmbeddedTranscript> records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

inline void write_ingest(const std::filesystem::path& path, std::span<const EmbeddedTranscript> records) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  write_ingest(out, records);
}

// Deterministic pseudo-embedding: FNV-1a of the token bytes is mixed with the seed to
// start a splitmix64 stream; each component is uniform on [-1, 1] from the top 53 bits.
inline std::vector<double> synth_embed(std::string_view token, std::size_t dim, std::uint64_t seed) {
  std::uint64_t state = mix_seed(fnv1a64(token), seed);
  std::vector<double> v(dim);
  for (auto& x : v) {
    const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    x = 2.0 * u - 1.0;
  }
  return v;
}

inline EmbeddedTranscript embed_synthetic(const Transcript& t, std::size_t dim, std::uint64_t seed) {
  EmbeddedTranscript r;
  r.transcript_id = t.id;
  r.gold_label = t.gold_label;
  r.tokens = t.tokens;
  r.vectors = Matrix(0, dim);
  for (const auto& tok : t.tokens) r.vectors.append_row(synth_embed(tok, dim, seed));
  return r;
}

// Joins embedding records to parsed transcripts by id; tokens must match exactly.
inline std::vector<EmbeddedTranscript> attach(std::span<const Transcript> corpus,
                                              std::span<const EmbeddedTranscript> records) {
  std::map<std::string, const Transcript*> by_id;
  for (const auto& t : corpus) by_id.emplace(t.id, &t);
  std::map<std::string, const EmbeddedTranscript*> joined;
  for (const auto& r : records) {
    const auto it = by_id.find(r.transcript_id);
    if (it == by_id.end()) throw data_error("unknown transcript '" + r.transcript_id + "'");
    const auto& tokens = it->second->tokens;
    const std::size_t common = std::min(tokens.size(), r.tokens.size());
    for (std::size_t i = 0; i <= common; ++i) {
      if (i == common) {
        if (tokens.size() != r.tokens.size()) {
          throw data_error("transcript '" + r.transcript_id + "': token mismatch at " + std::to_string(i));
        }
        break;
      }
      if (tokens[i] != r.tokens[i]) {
        throw data_error("transcript '" + r.transcript_id + "': token mismatch at " + std::to_string(i));
      }
    }
    if (!joined.emplace(r.transcript_id, &r).second) {
      throw data_error("duplicate embeddings for transcript '" + r.transcript_id + "'");
    }
  }
  std::vector<EmbeddedTranscript> out;
  for (const auto& t : corpus) {
    const auto it = joined.find(t.id);
    if (it == joined.end()) throw data_error("no embeddings for transcript '" + t.id + "'");
    EmbeddedTranscript r = *it->second;
    if (t.gold_label) r.gold_label = t.gold_label;
    out.push_back(std::move(r));
  }
  return out;
}

// Corpus JSON consumed by the extractor sidecar: [{"transcript_id", "label", "tokens"}].
inline nlohmann::json corpus_to_json(std::span<const Transcript> corpus) {
  auto arr = nlohmann::json::array();
  for (const auto& t : corpus) {
    arr.push_back({{"transcript_id", t.id},
                   {"label", t.gold_label ? nlohmann::json(std::string(to_string(*t.gold_label)))
                                          : nlohmann::json(nullptr)},
                   {"tokens", t.tokens}});
  }
  return arr;
}

}  // namespace ekicl
