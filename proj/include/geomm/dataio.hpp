#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geomm/manifolds.hpp"
#include "geomm/model.hpp"

namespace geomm {

// Vocabulary (frequency order) plus a d x n matrix holding one word per column.
class Embeddings {
 public:
  Embeddings() = default;
  // Throws DataError on duplicate words or a vocab/column count mismatch.
  Embeddings(std::vector<std::string> vocab, Matrix vectors);

  const std::vector<std::string>& vocab() const { return vocab_; }
  const Matrix& vectors() const { return vectors_; }
  Index dim() const { return vectors_.rows(); }
  Index size() const { return vectors_.cols(); }

  std::optional<Index> find(const std::string& word) const;
  bool contains(const std::string& word) const { return find(word).has_value(); }

  // The n most frequent words (all of them when n <= 0 or n >= size()).
  Embeddings head(Index n) const;

 private:
  std::vector<std::string> vocab_;
  Matrix vectors_;
  std::unordered_map<std::string, Index> index_;
};

// Parses the word2vec text format: header "n d", then "word v1 ... vd" per line.
// Keeps the first `max_vocab` distinct words (0 = all); later duplicates of a
// word are dropped with a warning. Errors name the offending line.
Embeddings load_embeddings(const std::string& path, std::size_t max_vocab = 0);

enum class Preprocess { unit, unit_center_unit };

std::string_view to_string(Preprocess p);
Preprocess parse_preprocess(std::string_view name);

// unit: L2-normalize columns. unit_center_unit: normalize, subtract the mean
// column, normalize again. Zero columns are dropped with a warning; throws
// DataError if nothing survives.
Embeddings preprocess(const Embeddings& raw, Preprocess scheme);

struct WordPair {
  std::string src;
  std::string tgt;
  friend bool operator==(const WordPair&, const WordPair&) = default;
  friend auto operator<=>(const WordPair&, const WordPair&) = default;
};

struct LoadedDictionary {
  std::vector<WordPair> pairs;             // file order, duplicates removed
  std::vector<std::size_t> skipped_lines;  // 1-based line numbers without exactly two tokens
};

// One "src<ws>tgt" pair per line. Blank lines are ignored.
LoadedDictionary load_dictionary(const std::string& path);
void save_dictionary(const std::string& path, const std::vector<WordPair>& pairs);

// Order-preserving removal of repeated pairs.
std::vector<WordPair> dedupe_pairs(const std::vector<WordPair>& pairs);

struct ScoredPair {
  std::string src;
  std::string tgt;
  double score = 0.0;
};

// "src tgt score" per line; malformed lines are skipped with a warning.
std::vector<ScoredPair> load_scored_pairs(const std::string& path);

// Versioned binary model container:
//   "GEOMMMDL" | u32 version | u32 d | u32 n_lang | n_lang x (u32 len, bytes)
//   | u32 len, preprocessing name | u32 len, variant name
//   | n_lang x d*d f64 (U_i, row-major) | d*d f64 (B, row-major) | u32 crc32
// All integers and floats little-endian.
struct ModelFile {
  static constexpr std::uint32_t kVersion = 1;

  GeommParams params;
  Preprocess preprocessing = Preprocess::unit;
  ModelVariant variant = ModelVariant::full;
};

void save_model(const std::string& path, const ModelFile& model);
// Throws IntegrityError on bad magic, version mismatch, truncation or checksum failure.
ModelFile load_model(const std::string& path);

std::vector<unsigned char> serialize_model(const ModelFile& model);
ModelFile deserialize_model(const std::vector<unsigned char>& bytes);

}  // namespace geomm
