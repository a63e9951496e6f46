#pragma once

// Supervised bilingual training, joint multilingual training over a language
// graph, and one-hop (pivot) translation strategies.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "geomm/dataio.hpp"
#include "geomm/model.hpp"
#include "geomm/optimizer.hpp"
#include "geomm/retrieval.hpp"

namespace geomm {

struct TrainConfig {
  std::vector<double> lambdas{10.0, 1e2, 1e3, 1e4};
  double validation_fraction = 0.2;
  SolverOptions solver;
  Preprocess preprocessing = Preprocess::unit;  // recorded in the model, not applied here
  std::uint64_t seed = 0;
  int csls_k = kDefaultCslsK;
  Index retrieval_vocab = 200000;  // validation retrieval uses this many most frequent words
  ModelVariant variant = ModelVariant::full;
  int threads = 0;  // 0: GEOMM_NUM_THREADS, else hardware concurrency

  void validate() const;
};

struct LambdaCandidate {
  double lambda = 0.0;
  double validation_p1 = 0.0;  // percent, CSLS
  double train_cost = 0.0;
  int iterations = 0;
  Termination termination = Termination::max_iterations;
};

struct TrainReport {
  std::vector<LambdaCandidate> candidates;
  double selected_lambda = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  Termination termination = Termination::max_iterations;
  std::size_t pairs_total = 0;
  std::size_t pairs_dropped = 0;  // out-of-vocabulary pairs
  std::size_t train_pairs = 0;    // used for lambda selection
  std::size_t validation_pairs = 0;
  double seconds = 0.0;
};

std::string format_report(const TrainReport& report);

struct TrainResult {
  GeommParams params;
  TrainReport report;
};

// Deterministic value in [0, 1) derived from a word and a seed, stable across
// platforms. Drives validation splits and disjoint-pivot sampling.
double split_key(std::string_view word, std::uint64_t seed);

struct PairSplit {
  std::vector<WordPair> train;
  std::vector<WordPair> validation;
};

// Splits by source word, so every translation of a word lands on the same side.
PairSplit split_pairs(const std::vector<WordPair>& pairs, double validation_fraction, std::uint64_t seed);

struct BuiltDictionary {
  DictionaryData data;
  std::vector<WordPair> used;
  std::size_t dropped = 0;
};

// Looks the pairs up in the embeddings (out-of-vocabulary pairs are dropped and
// counted). Throws DataError when nothing usable remains.
BuiltDictionary build_dictionary_data(const Embeddings& src_emb, const Embeddings& tgt_emb,
                                      const std::vector<WordPair>& pairs);

// Validation P@1 (percent, CSLS, latent space) over the `retrieval_vocab` most
// frequent words; 0 when no validation pair is in vocabulary.
double validation_p1(const GeommParams& params, const std::string& src, const std::string& tgt,
                     const Embeddings& src_emb, const Embeddings& tgt_emb, const std::vector<WordPair>& validation,
                     const TrainConfig& config);

struct FitResult {
  GeommParams params;
  SolverReport solver;
};

// One solver run from the identity initialization at a fixed lambda.
FitResult fit_bilingual(const DictionaryData& data, double lambda, ModelVariant variant, const SolverOptions& opts,
                        const std::string& src = "src", const std::string& tgt = "tgt");

// Selects lambda by validation P@1 (CSLS) over the grid, then retrains on the
// full dictionary with the selected value.
TrainResult train_bilingual(const Embeddings& src_emb, const Embeddings& tgt_emb, const std::vector<WordPair>& pairs,
                            const TrainConfig& config, const std::string& src = "src",
                            const std::string& tgt = "tgt");

struct GraphEdge {
  std::string lang_i;
  std::string lang_j;
  std::vector<WordPair> pairs;  // lang_i word -> lang_j word
};

// Undirected, connected, no self-loops.
struct LanguageGraph {
  std::vector<std::string> languages;
  std::map<std::string, Embeddings> embeddings;
  std::vector<GraphEdge> edges;
};

// Throws DataError naming the offending component when the graph is not connected.
void validate_graph(const LanguageGraph& graph);

// Edges are processed in canonical order (sorted by unordered language pair),
// so permuting the input edge list gives identical results.
FitResult fit_multilingual(const std::vector<std::string>& languages, const std::vector<MultilingualEdge>& edges,
                           double lambda, const SolverOptions& opts);

TrainResult train_multilingual(const LanguageGraph& graph, const TrainConfig& config);

// --- one-hop translation -------------------------------------------------------

enum class BilingualMethod { geomm, procrustes };

std::string_view to_string(BilingualMethod m);

struct DisjointPivotResult {
  std::vector<WordPair> src_pvt;
  std::vector<WordPair> pvt_tgt;
  std::size_t dropped_src_pvt = 0;
  std::size_t dropped_pvt_tgt = 0;
};

// Drops entries so the two dictionaries share no pivot word. Each shared pivot
// word is kept in exactly one dictionary, chosen by split_key(word, seed).
DisjointPivotResult make_disjoint_pivot(const std::vector<WordPair>& src_pvt, const std::vector<WordPair>& pvt_tgt,
                                        std::uint64_t seed);

struct OneHopSetup {
  std::string src, pvt, tgt;
  const Embeddings& src_emb;
  const Embeddings& pvt_emb;
  const Embeddings& tgt_emb;
  std::vector<WordPair> src_pvt;
  std::vector<WordPair> pvt_tgt;
  std::vector<WordPair> test;  // src -> tgt gold
  bool disjoint_pivot = false;
  RetrievalMode mode = RetrievalMode::csls;
};

struct OneHopResult {
  BliReport report;
  Matrix src_to_tgt;  // composed map (composition / pipeline), empty for joint
};

// Learns W1 (src->pvt) and W2 (pvt->tgt) independently and ranks target words
// against normalize(W2 W1 x) in the target's original space.
OneHopResult one_hop_composition(BilingualMethod method, const OneHopSetup& setup, const TrainConfig& config);

// Retrieves the top pivot word z for x with the first model, then ranks target
// words against normalize(W2 z) in the target's original space.
OneHopResult one_hop_pipeline(BilingualMethod method, const OneHopSetup& setup, const TrainConfig& config);

struct JointResult {
  OneHopResult result;
  GeommParams params;
  TrainReport train;
};

// Joint multilingual model over {src, pvt, tgt} with edges src-pvt and
// pvt-tgt; src -> tgt evaluated in the shared latent space.
JointResult one_hop_joint(const OneHopSetup& setup, const TrainConfig& config);

// Worker count resolved from `requested`, GEOMM_NUM_THREADS, then hardware.
int resolve_threads(int requested);

}  // namespace geomm
