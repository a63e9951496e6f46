#include "geomm/bootstrap.hpp"

#include <chrono>
#include <future>
#include <iomanip>
#include <set>
#include <sstream>

#include "geomm/error.hpp"
#include "geomm/log.hpp"

namespace geomm {
namespace {

std::vector<WordPair> top1_pairs(const Translator& tr, RetrievalMode mode, bool swap_sides) {
  const Index n = tr.query_index().size();
  std::vector<Index> queries(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) queries[static_cast<std::size_t>(i)] = i;
  const auto ranked = tr.rank_many(queries, 1, mode);
  std::vector<WordPair> out;
  out.reserve(ranked.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].empty()) continue;
    const std::string& q = tr.query_index().vocab()[i];
    const std::string& t = ranked[i].front().word;
    out.push_back(swap_sides ? WordPair{t, q} : WordPair{q, t});
  }
  return out;
}

struct RoundFit {
  GeommParams params;
  double lambda = 0.0;
  double val_p1 = 0.0;
  SolverReport solver;
};

RoundFit fit_and_score(const Embeddings& src_emb, const Embeddings& tgt_emb, const std::vector<WordPair>& dict,
                        const std::vector<WordPair>& validation, double lambda, const BootstrapConfig& c,
                        const std::string& src, const std::string& tgt) {
  const BuiltDictionary built = build_dictionary_data(src_emb, tgt_emb, dict);
  FitResult fit = fit_bilingual(built.data, lambda, c.train.variant, c.train.solver, src, tgt);
  const double p1 = validation_p1(fit.params, src, tgt, src_emb, tgt_emb, validation, c.train);
  return {std::move(fit.params), lambda, p1, std::move(fit.solver)};
}

// Best of the lambda grid by validation P@1; the first wins ties.
RoundFit select_lambda(const Embeddings& src_emb, const Embeddings& tgt_emb, const std::vector<WordPair>& dict,
                        const std::vector<WordPair>& validation, const BootstrapConfig& c, const std::string& src,
                        const std::string& tgt) {
  std::optional<RoundFit> best;
  for (double lambda : c.train.lambdas) {
    RoundFit cand = fit_and_score(src_emb, tgt_emb, dict, validation, lambda, c, src, tgt);
    if (!best || cand.val_p1 > best->val_p1) best = std::move(cand);
  }
  return std::move(*best);
}

}  // namespace

std::string_view to_string(InductionDirection d) {
  switch (d) {
    case InductionDirection::forward: return "forward";
    case InductionDirection::backward: return "backward";
    case InductionDirection::bidirectional: return "bidirectional";
  }
  return "?";
}

InductionDirection parse_induction_direction(std::string_view name) {
  if (name == "forward") return InductionDirection::forward;
  if (name == "backward") return InductionDirection::backward;
  if (name == "bidirectional") return InductionDirection::bidirectional;
  throw PreconditionViolation("unknown induction direction: " + std::string(name));
}

void BootstrapConfig::validate() const {
  if (vocab_cutoff < 1) throw PreconditionViolation("BootstrapConfig: vocab_cutoff must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw PreconditionViolation("BootstrapConfig: validation_fraction must lie in (0, 1)");
  if (max_rounds < 0) throw PreconditionViolation("BootstrapConfig: max_rounds must be >= 0");
  if (patience < 1) throw PreconditionViolation("BootstrapConfig: patience must be >= 1");
  train.validate();
}

std::vector<WordPair> induce_dictionary(const Translator& translator, InductionDirection direction,
                                        RetrievalMode mode, bool mutual_best) {
  if (direction == InductionDirection::forward) return top1_pairs(translator, mode, false);
  if (direction == InductionDirection::backward) return top1_pairs(translator.reversed(), mode, true);

  auto backward = std::async(std::launch::async, [&] { return top1_pairs(translator.reversed(), mode, true); });
  std::vector<WordPair> fwd = top1_pairs(translator, mode, false);
  std::vector<WordPair> bwd = backward.get();
  if (mutual_best) {
    const std::set<WordPair> in_bwd(bwd.begin(), bwd.end());
    std::vector<WordPair> out;
    for (const auto& p : fwd)
      if (in_bwd.count(p)) out.push_back(p);
    return out;
  }
  fwd.insert(fwd.end(), bwd.begin(), bwd.end());
  return dedupe_pairs(fwd);
}

std::vector<WordPair> induce_dictionary(const GeommParams& params, const std::string& src, const std::string& tgt,
                                        const Embeddings& src_emb, const Embeddings& tgt_emb, Index cutoff,
                                        InductionDirection direction, int csls_k, RetrievalMode mode,
                                        bool mutual_best) {
  if (cutoff < 1) throw PreconditionViolation("induce_dictionary: cutoff must be >= 1");
  const Embeddings s = src_emb.head(cutoff);
  const Embeddings t = tgt_emb.head(cutoff);
  int k = 0;
  if (mode == RetrievalMode::csls) k = static_cast<int>(std::min<Index>({static_cast<Index>(csls_k), s.size(), t.size()}));
  return induce_dictionary(latent_translator(params, src, tgt, s, t, k), direction, mode, mutual_best);
}

std::string format_round(const BootstrapRound& r) {
  std::ostringstream os;
  os << "round=" << r.round << " dict_size=" << r.dict_size << " induced=" << r.induced << " lambda=" << r.lambda
     << " val_p1=" << std::fixed << std::setprecision(2) << r.val_p1 << std::defaultfloat
     << " iterations=" << r.iterations << " termination=" << to_string(r.termination);
  return os.str();
}

std::string format_report(const BootstrapReport& r) {
  std::ostringstream os;
  for (const auto& round : r.rounds) os << format_round(round) << '\n';
  os << "best_round=" << r.best_round << '\n'
     << "best_val_p1=" << std::fixed << std::setprecision(2) << r.best_val_p1 << std::defaultfloat << '\n'
     << "selected_lambda=" << r.selected_lambda << '\n'
     << "seed_pairs=" << r.seed_pairs << '\n'
     << "validation_pairs=" << r.validation_pairs << '\n'
     << "final_dict_size=" << r.final_dictionary.size() << '\n'
     << "aborted=" << (r.aborted ? 1 : 0) << '\n'
     << "seconds=" << std::fixed << std::setprecision(3) << r.seconds << '\n';
  return os.str();
}

BootstrapResult bootstrap_train(const Embeddings& src_emb, const Embeddings& tgt_emb,
                                const std::vector<WordPair>& seed_dictionary, const BootstrapConfig& config,
                                const std::string& src, const std::string& tgt) {
  config.validate();
  if (seed_dictionary.empty()) throw DataError("bootstrap: seed dictionary is empty");
  const auto t0 = std::chrono::steady_clock::now();

  const BuiltDictionary usable = build_dictionary_data(src_emb, tgt_emb, seed_dictionary);
  if (usable.dropped > 0) warn(std::to_string(usable.dropped) + " seed pairs dropped (out of vocabulary)");
  PairSplit split = split_pairs(usable.used, config.validation_fraction, config.train.seed);
  if (split.train.empty() || split.validation.empty()) {
    warn("bootstrap: validation split left one side empty; validating on the seed dictionary");
    split.train = usable.used;
    split.validation = usable.used;
  }

  BootstrapReport report;
  report.seed_pairs = split.train.size();
  report.validation_pairs = split.validation.size();

  auto record = [&](int round, const RoundFit& c, std::size_t dict_size, std::size_t induced) {
    BootstrapRound r{round, dict_size, induced, c.lambda, c.val_p1, c.solver.cost, c.solver.iterations,
                     c.solver.termination};
    report.rounds.push_back(r);
    if (config.on_round) config.on_round(r);
  };

  RoundFit current = select_lambda(src_emb, tgt_emb, split.train, split.validation, config, src, tgt);
  report.selected_lambda = current.lambda;
  record(0, current, split.train.size(), 0);
  GeommParams best_params = current.params;
  report.best_val_p1 = current.val_p1;
  report.final_dictionary = split.train;

  int stale = 0;
  for (int round = 1; round <= config.max_rounds; ++round) {
    try {
      const std::vector<WordPair> induced =
          induce_dictionary(current.params, src, tgt, src_emb, tgt_emb, config.vocab_cutoff, config.direction,
                            config.train.csls_k, config.induction_mode, config.mutual_best);
      std::vector<WordPair> dict = split.train;
      dict.insert(dict.end(), induced.begin(), induced.end());
      dict = dedupe_pairs(dict);
      current = config.retune_lambda
                    ? select_lambda(src_emb, tgt_emb, dict, split.validation, config, src, tgt)
                    : fit_and_score(src_emb, tgt_emb, dict, split.validation, report.selected_lambda, config, src,
                                    tgt);
      record(round, current, dict.size(), induced.size());
      if (current.val_p1 > report.best_val_p1) {
        report.best_val_p1 = current.val_p1;
        report.best_round = round;
        best_params = current.params;
        report.final_dictionary = std::move(dict);
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    } catch (const NumericalError& e) {
      report.aborted = true;
      report.diagnostic = "round " + std::to_string(round) + ": " + e.what();
      warn("bootstrap aborted in " + report.diagnostic + "; returning the best params so far");
      break;
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(best_params), std::move(report)};
}

}  // namespace geomm
