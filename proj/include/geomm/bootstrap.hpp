#pragma once

// Semi-supervised training: alternate supervised fitting with dictionary
// induction over the most frequent words until validation P@1 stops improving.

#include <functional>
#include <string>
#include <vector>

#include "geomm/pipelines.hpp"

namespace geomm {

enum class InductionDirection { forward, backward, bidirectional };

std::string_view to_string(InductionDirection d);
InductionDirection parse_induction_direction(std::string_view name);

struct BootstrapRound {
  int round = 0;  // 0 is the seed-only model
  std::size_t dict_size = 0;
  std::size_t induced = 0;
  double lambda = 0.0;
  double val_p1 = 0.0;
  double cost = 0.0;
  int iterations = 0;
  Termination termination = Termination::max_iterations;
};

struct BootstrapConfig {
  Index vocab_cutoff = 25000;
  double validation_fraction = 0.2;
  int max_rounds = 20;
  int patience = 1;
  InductionDirection direction = InductionDirection::bidirectional;
  bool mutual_best = false;    // keep only pairs found in both directions
  bool retune_lambda = false;  // re-select lambda every round
  RetrievalMode induction_mode = RetrievalMode::csls;
  TrainConfig train;  // lambda grid, solver, csls_k, threads, seed
  std::function<void(const BootstrapRound&)> on_round;

  void validate() const;
};

// One pair per query word: its top-1 target under `mode`. `translator` should
// already be restricted to the capped vocabularies. Backward pairs are
// returned in (source, target) orientation. Bidirectional results are the
// union (or the intersection with mutual_best), forward pairs first.
std::vector<WordPair> induce_dictionary(const Translator& translator, InductionDirection direction,
                                        RetrievalMode mode = RetrievalMode::csls, bool mutual_best = false);

// Builds latent indexes over the `cutoff` most frequent words of each side.
std::vector<WordPair> induce_dictionary(const GeommParams& params, const std::string& src, const std::string& tgt,
                                        const Embeddings& src_emb, const Embeddings& tgt_emb, Index cutoff,
                                        InductionDirection direction, int csls_k = kDefaultCslsK,
                                        RetrievalMode mode = RetrievalMode::csls, bool mutual_best = false);

struct BootstrapReport {
  std::vector<BootstrapRound> rounds;
  int best_round = 0;
  double best_val_p1 = 0.0;
  double selected_lambda = 0.0;
  std::size_t seed_pairs = 0;
  std::size_t validation_pairs = 0;
  std::vector<WordPair> final_dictionary;  // training dictionary of the best round
  bool aborted = false;
  std::string diagnostic;
  double seconds = 0.0;
};

std::string format_round(const BootstrapRound& r);
std::string format_report(const BootstrapReport& report);

struct BootstrapResult {
  GeommParams params;  // validation-best round
  BootstrapReport report;
};

// Splits the seed dictionary into seed and validation parts by source word,
// selects lambda on the validation part, then iterates: induce from the
// current model, train on seed plus induced pairs, score on validation.
// A numerical failure in a round stops the loop and returns the best params
// so far with report.aborted set.
BootstrapResult bootstrap_train(const Embeddings& src_emb, const Embeddings& tgt_emb,
                                const std::vector<WordPair>& seed_dictionary, const BootstrapConfig& config,
                                const std::string& src = "src", const std::string& tgt = "tgt");

}  // namespace geomm
