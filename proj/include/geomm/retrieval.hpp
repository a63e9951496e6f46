#pragma once

// Latent-space mapping x -> B^{1/2} U^T x, nearest-neighbour and CSLS
// retrieval, and BLI / word-similarity evaluation.
//
// Vectors are normalized before CSLS penalties are computed. Rankings break
// ties by ascending target index.

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geomm/dataio.hpp"
#include "geomm/model.hpp"

namespace geomm {

enum class RetrievalMode { nn, csls };
enum class InferenceSpace { latent, target_space };

std::string_view to_string(RetrievalMode m);
std::string_view to_string(InferenceSpace s);
RetrievalMode parse_retrieval_mode(std::string_view name);
InferenceSpace parse_inference_space(std::string_view name);

inline constexpr int kDefaultCslsK = 10;

// Unique SPD square root via eigendecomposition; eigenvalues below 1e-12 are
// clamped to 1e-12 with a warning.
Matrix spd_sqrt(const SpdPoint& b);

// B^{1/2} U_lang^T X, columns not normalized.
Matrix to_latent(const GeommParams& params, std::string_view lang, const Matrix& x);

// Unit-normalized vectors for one side of a retrieval problem.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  // Normalizes columns; zero columns are dropped with a warning.
  RetrievalIndex(Matrix vectors, std::vector<std::string> vocab);

  const Matrix& latent() const { return latent_; }
  const std::vector<std::string>& vocab() const { return vocab_; }
  Index size() const { return latent_.cols(); }
  std::optional<Index> find(const std::string& word) const;

  bool has_penalties() const { return !penalty_.empty(); }
  int csls_k() const { return csls_k_; }
  const std::vector<double>& csls_penalty() const { return penalty_; }
  void set_penalties(std::vector<double> penalty, int k);

 private:
  Matrix latent_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, Index> index_;
  std::vector<double> penalty_;
  int csls_k_ = 0;
};

// r(w): mean cosine between w and its k nearest neighbours in `against`.
// Requires 1 <= k <= against.size().
std::vector<double> csls_penalties(const RetrievalIndex& of, const RetrievalIndex& against, int k);

// Latent index of `emb` for language `lang`. When `opposing` is given, CSLS
// penalties against it are cached with neighbourhood size k.
RetrievalIndex build_index(const GeommParams& params, std::string_view lang, const Embeddings& emb,
                           const RetrievalIndex* opposing = nullptr, int k = kDefaultCslsK);

// 2 cos(x, z) - r_T(x) - r_S(z)
double csls_score(const RetrievalIndex& query, Index qi, const RetrievalIndex& target, Index tj);

struct Candidate {
  Index index = 0;
  std::string word;
  double score = 0.0;
};

// Query/target index pair with penalties cached on both sides.
class Translator {
 public:
  // csls_k = 0 disables CSLS.
  Translator(RetrievalIndex query, RetrievalIndex target, int csls_k = kDefaultCslsK);

  const RetrievalIndex& query_index() const { return query_; }
  const RetrievalIndex& target_index() const { return target_; }

  // Same indexes and penalties with the roles of query and target swapped.
  Translator reversed() const;

  double score(Index qi, Index tj, RetrievalMode mode) const;
  std::vector<Candidate> rank(Index qi, std::size_t top_k, RetrievalMode mode) const;
  std::vector<std::vector<Candidate>> rank_many(const std::vector<Index>& queries, std::size_t top_k,
                                                RetrievalMode mode) const;

 private:
  RetrievalIndex query_;
  RetrievalIndex target_;
};

// Both sides in the shared latent space.
Translator latent_translator(const GeommParams& params, std::string_view src, std::string_view tgt,
                             const Embeddings& src_emb, const Embeddings& tgt_emb, int csls_k = kDefaultCslsK);

// Queries mapped by `w` into the target's original space; targets as given.
Translator target_space_translator(const Matrix& w, const Embeddings& src_emb, const Embeddings& tgt_emb,
                                   int csls_k = kDefaultCslsK);

Translator make_translator(const GeommParams& params, std::string_view src, std::string_view tgt,
                           const Embeddings& src_emb, const Embeddings& tgt_emb, InferenceSpace space,
                           int csls_k = kDefaultCslsK);

struct QueryResult {
  std::string word;
  bool in_vocabulary = false;
  std::vector<Candidate> candidates;
};

// Out-of-vocabulary queries come back with in_vocabulary = false.
std::vector<QueryResult> translate(const Translator& translator, const std::vector<std::string>& words,
                                   std::size_t top_k, RetrievalMode mode);
std::vector<QueryResult> translate(const GeommParams& params, std::string_view src, std::string_view tgt,
                                   const Embeddings& src_emb, const Embeddings& tgt_emb,
                                   const std::vector<std::string>& words, std::size_t top_k, RetrievalMode mode,
                                   InferenceSpace space, int csls_k = kDefaultCslsK);

struct BliReport {
  double p_at_1 = 0.0;  // percent
  double p_at_5 = 0.0;
  double p_at_10 = 0.0;
  std::size_t evaluated = 0;       // distinct source words with an in-vocabulary gold translation
  std::size_t source_words = 0;    // distinct source words in the test dictionary
  std::size_t oov_source = 0;      // source word missing from the query vocabulary
  std::size_t oov_gold = 0;        // source present but every gold translation missing
  double coverage = 0.0;           // percent of source words evaluated
};

// A source word is correct at rank r if any gold translation is among its
// top r candidates. Throws DataError if no source word can be evaluated.
BliReport evaluate_bli(const Translator& translator, const std::vector<WordPair>& test, RetrievalMode mode);

// Ranks the given in-vocabulary source words (top 10 or more per word).
using BatchRanker = std::function<std::vector<std::vector<Candidate>>(const std::vector<std::string>& sources)>;
using WordFilter = std::function<bool(const std::string&)>;

// Generic P@{1,5,10} scoring; gold is matched by candidate word.
BliReport evaluate_rankings(const std::vector<WordPair>& test, const WordFilter& source_known,
                            const WordFilter& target_known, const BatchRanker& rank);

std::string format_report(const BliReport& report);

struct SimilarityReport {
  double pearson = 0.0;
  std::size_t used = 0;
  std::size_t total = 0;
  double coverage = 0.0;  // percent
};

// Pearson correlation between gold scores and latent-space cosines. Pairs with
// an out-of-vocabulary word are skipped; throws DataError with fewer than 3 left.
SimilarityReport evaluate_word_similarity(const GeommParams& params, std::string_view src, std::string_view tgt,
                                          const Embeddings& src_emb, const Embeddings& tgt_emb,
                                          const std::vector<ScoredPair>& pairs);

std::string format_report(const SimilarityReport& report);

double pearson_correlation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace geomm
