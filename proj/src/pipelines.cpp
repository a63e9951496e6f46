#include "geomm/pipelines.hpp"

#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "geomm/error.hpp"
#include "geomm/log.hpp"
#include "parallel.hpp"

namespace geomm {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<std::string> pivot_words(const std::vector<WordPair>& pairs, bool target_side) {
  std::vector<std::string> out;
  for (const auto& p : pairs) out.push_back(target_side ? p.tgt : p.src);
  return out;
}

// Hits at rank 1 recovered from a report, for pooling across edges.
double hits_at_1(const BliReport& r) { return std::round(r.p_at_1 * static_cast<double>(r.evaluated) / 100.0); }

struct ValidationScore {
  double hits = 0.0;
  double evaluated = 0.0;
  double percent() const { return evaluated > 0.0 ? 100.0 * hits / evaluated : 0.0; }
};

ValidationScore validate_pair(const GeommParams& params, const std::string& src, const std::string& tgt,
                              const Embeddings& src_emb, const Embeddings& tgt_emb,
                              const std::vector<WordPair>& validation, const TrainConfig& config) {
  const Embeddings s = src_emb.head(config.retrieval_vocab);
  const Embeddings t = tgt_emb.head(config.retrieval_vocab);
  const int k = static_cast<int>(std::min<Index>({static_cast<Index>(config.csls_k), s.size(), t.size()}));
  const Translator tr = latent_translator(params, src, tgt, s, t, k);
  try {
    const BliReport r = evaluate_bli(tr, validation, RetrievalMode::csls);
    return {hits_at_1(r), static_cast<double>(r.evaluated)};
  } catch (const DataError&) {
    return {};
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (lambdas.empty()) throw PreconditionViolation("TrainConfig: lambda grid is empty");
  for (double l : lambdas)
    if (!(l > 0.0) || !std::isfinite(l)) throw PreconditionViolation("TrainConfig: lambda values must be > 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw PreconditionViolation("TrainConfig: validation_fraction must lie in (0, 1)");
  if (csls_k < 1) throw PreconditionViolation("TrainConfig: csls_k must be >= 1");
  solver.validate();
}

double validation_p1(const GeommParams& params, const std::string& src, const std::string& tgt,
                     const Embeddings& src_emb, const Embeddings& tgt_emb, const std::vector<WordPair>& validation,
                     const TrainConfig& config) {
  return validate_pair(params, src, tgt, src_emb, tgt_emb, validation, config).percent();
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GEOMM_NUM_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::string format_report(const TrainReport& r) {
  std::ostringstream os;
  for (const auto& c : r.candidates) {
    os << "lambda=" << c.lambda << " val_p1=" << std::fixed << std::setprecision(2) << c.validation_p1
       << std::defaultfloat << " cost=" << c.train_cost << " iterations=" << c.iterations
       << " termination=" << to_string(c.termination) << '\n';
  }
  os << "selected_lambda=" << r.selected_lambda << '\n'
     << "final_cost=" << std::setprecision(10) << r.final_cost << std::setprecision(6) << '\n'
     << "iterations=" << r.iterations << '\n'
     << "termination=" << to_string(r.termination) << '\n'
     << "pairs_total=" << r.pairs_total << '\n'
     << "pairs_dropped=" << r.pairs_dropped << '\n'
     << "train_pairs=" << r.train_pairs << '\n'
     << "validation_pairs=" << r.validation_pairs << '\n'
     << "seconds=" << std::fixed << std::setprecision(3) << r.seconds << '\n';
  return os.str();
}

double split_key(std::string_view word, std::uint64_t seed) {
  unsigned char seed_bytes[8];
  for (int i = 0; i < 8; ++i) seed_bytes[i] = static_cast<unsigned char>(seed >> (8 * i));
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, seed_bytes, sizeof seed_bytes);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(word.data()), static_cast<uInt>(word.size()));
  const std::uint64_t h = splitmix64((static_cast<std::uint64_t>(crc) << 32) ^ splitmix64(seed) ^ word.size());
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

PairSplit split_pairs(const std::vector<WordPair>& pairs, double validation_fraction, std::uint64_t seed) {
  PairSplit s;
  for (const auto& p : pairs) {
    if (split_key(p.src, seed) < validation_fraction) s.validation.push_back(p);
    else s.train.push_back(p);
  }
  return s;
}

BuiltDictionary build_dictionary_data(const Embeddings& src_emb, const Embeddings& tgt_emb,
                                      const std::vector<WordPair>& pairs) {
  if (src_emb.dim() != tgt_emb.dim()) throw DataError("source and target embeddings have different dimensions");
  std::unordered_map<Index, Index> src_col, tgt_col;
  std::vector<Index> src_rows, tgt_rows;
  std::vector<IndexPair> omega;
  std::vector<WordPair> used;
  std::size_t dropped = 0;
  for (const auto& p : dedupe_pairs(pairs)) {
    auto i = src_emb.find(p.src);
    auto j = tgt_emb.find(p.tgt);
    if (!i || !j) {
      ++dropped;
      continue;
    }
    auto [si, s_new] = src_col.try_emplace(*i, static_cast<Index>(src_rows.size()));
    if (s_new) src_rows.push_back(*i);
    auto [ti, t_new] = tgt_col.try_emplace(*j, static_cast<Index>(tgt_rows.size()));
    if (t_new) tgt_rows.push_back(*j);
    omega.push_back({si->second, ti->second});
    used.push_back(p);
  }
  if (omega.empty()) throw DataError("no dictionary pair has both words in the embeddings");
  Matrix xs(src_emb.dim(), static_cast<Index>(src_rows.size()));
  for (std::size_t k = 0; k < src_rows.size(); ++k) xs.col(static_cast<Index>(k)) = src_emb.vectors().col(src_rows[k]);
  Matrix xt(tgt_emb.dim(), static_cast<Index>(tgt_rows.size()));
  for (std::size_t k = 0; k < tgt_rows.size(); ++k) xt.col(static_cast<Index>(k)) = tgt_emb.vectors().col(tgt_rows[k]);
  const std::size_t raw = pairs.size();
  return {DictionaryData(std::move(xs), std::move(xt), std::move(omega), raw), std::move(used), dropped};
}

FitResult fit_bilingual(const DictionaryData& data, double lambda, ModelVariant variant, const SolverOptions& opts,
                        const std::string& src, const std::string& tgt) {
  const Problem problem = make_bilingual_problem(variant, data, lambda);
  SolverReport rep = rcg_minimize(problem, variant_initial_point(variant, data), opts);
  GeommParams params = variant_to_params(variant, rep.point, src, tgt);
  return {std::move(params), std::move(rep)};
}

TrainResult train_bilingual(const Embeddings& src_emb, const Embeddings& tgt_emb, const std::vector<WordPair>& pairs,
                            const TrainConfig& config, const std::string& src, const std::string& tgt) {
  config.validate();
  const auto t0 = Clock::now();
  BuiltDictionary full = build_dictionary_data(src_emb, tgt_emb, pairs);
  TrainReport report;
  report.pairs_total = pairs.size();
  report.pairs_dropped = full.dropped;
  if (full.dropped > 0) warn(std::to_string(full.dropped) + " dictionary pairs dropped (out of vocabulary)");

  PairSplit split = split_pairs(full.used, config.validation_fraction, config.seed);
  if (split.train.empty() || split.validation.empty()) {
    warn("validation split left one side empty; selecting lambda on the full dictionary");
    split.train = full.used;
    split.validation = full.used;
  }
  report.train_pairs = split.train.size();
  report.validation_pairs = split.validation.size();
  const BuiltDictionary train_part = build_dictionary_data(src_emb, tgt_emb, split.train);

  report.candidates.resize(config.lambdas.size());
  detail::parallel_for(config.lambdas.size(), resolve_threads(config.threads), [&](std::size_t i) {
    const double lambda = config.lambdas[i];
    FitResult fit = fit_bilingual(train_part.data, lambda, config.variant, config.solver, src, tgt);
    const ValidationScore v = validate_pair(fit.params, src, tgt, src_emb, tgt_emb, split.validation, config);
    report.candidates[i] = {lambda, v.percent(), fit.solver.cost, fit.solver.iterations, fit.solver.termination};
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < report.candidates.size(); ++i)
    if (report.candidates[i].validation_p1 > report.candidates[best].validation_p1) best = i;
  report.selected_lambda = report.candidates[best].lambda;

  FitResult final_fit = fit_bilingual(full.data, report.selected_lambda, config.variant, config.solver, src, tgt);
  report.final_cost = final_fit.solver.cost;
  report.iterations = final_fit.solver.iterations;
  report.termination = final_fit.solver.termination;
  report.seconds = seconds_since(t0);
  return {std::move(final_fit.params), std::move(report)};
}

void validate_graph(const LanguageGraph& graph) {
  if (graph.languages.empty()) throw DataError("language graph has no nodes");
  std::set<std::string> nodes;
  for (const auto& l : graph.languages) {
    if (!nodes.insert(l).second) throw DataError("language graph lists " + l + " twice");
    if (!graph.embeddings.count(l)) throw DataError("no embeddings for language " + l);
  }
  const Index d = graph.embeddings.at(graph.languages.front()).dim();
  for (const auto& [l, e] : graph.embeddings)
    if (e.dim() != d) throw DataError("embedding dimension of " + l + " differs from the other languages");
  std::set<std::pair<std::string, std::string>> seen;
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& e : graph.edges) {
    if (!nodes.count(e.lang_i)) throw UnknownLanguage(e.lang_i);
    if (!nodes.count(e.lang_j)) throw UnknownLanguage(e.lang_j);
    if (e.lang_i == e.lang_j) throw DataError("self-loop edge on language " + e.lang_i);
    auto key = std::minmax(e.lang_i, e.lang_j);
    if (!seen.emplace(key.first, key.second).second)
      throw DataError("duplicate edge between " + e.lang_i + " and " + e.lang_j);
    adj[e.lang_i].push_back(e.lang_j);
    adj[e.lang_j].push_back(e.lang_i);
  }
  std::set<std::string> reached{graph.languages.front()};
  std::vector<std::string> stack{graph.languages.front()};
  while (!stack.empty()) {
    const std::string l = stack.back();
    stack.pop_back();
    for (const auto& m : adj[l])
      if (reached.insert(m).second) stack.push_back(m);
  }
  if (reached.size() != nodes.size()) {
    std::ostringstream os;
    os << "language graph is disconnected; unreachable from " << graph.languages.front() << ":";
    for (const auto& l : graph.languages)
      if (!reached.count(l)) os << ' ' << l;
    throw DataError(os.str());
  }
}

namespace {

std::vector<const GraphEdge*> canonical_edges(const LanguageGraph& graph) {
  std::vector<const GraphEdge*> out;
  for (const auto& e : graph.edges) out.push_back(&e);
  std::sort(out.begin(), out.end(), [](const GraphEdge* a, const GraphEdge* b) {
    return std::minmax(a->lang_i, a->lang_j) < std::minmax(b->lang_i, b->lang_j);
  });
  return out;
}

std::vector<MultilingualEdge> build_edges(const LanguageGraph& graph, const std::vector<const GraphEdge*>& edges,
                                          const std::vector<std::vector<WordPair>>& pairs,
                                          std::size_t* dropped = nullptr) {
  std::vector<MultilingualEdge> out;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const GraphEdge& e = *edges[k];
    BuiltDictionary b = build_dictionary_data(graph.embeddings.at(e.lang_i), graph.embeddings.at(e.lang_j), pairs[k]);
    if (dropped) *dropped += b.dropped;
    out.push_back({e.lang_i, e.lang_j, std::move(b.data)});
  }
  return out;
}

}  // namespace

FitResult fit_multilingual(const std::vector<std::string>& languages, const std::vector<MultilingualEdge>& edges,
                           double lambda, const SolverOptions& opts) {
  std::vector<const MultilingualEdge*> order;
  for (const auto& e : edges) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const MultilingualEdge* a, const MultilingualEdge* b) {
    return std::minmax(a->lang_i, a->lang_j) < std::minmax(b->lang_i, b->lang_j);
  });
  std::vector<MultilingualEdge> sorted;
  sorted.reserve(edges.size());
  for (const auto* e : order) sorted.push_back(*e);
  if (edges.empty()) throw DataError("multilingual training needs at least one edge");
  const Problem problem = make_multilingual_problem(languages, sorted, lambda);
  SolverReport rep = rcg_minimize(problem, GeommParams::oriented_identity(languages, sorted).to_point(), opts);
  GeommParams params = GeommParams::from_point(languages, rep.point);
  return {std::move(params), std::move(rep)};
}

TrainResult train_multilingual(const LanguageGraph& graph, const TrainConfig& config) {
  config.validate();
  validate_graph(graph);
  const auto t0 = Clock::now();
  const auto edges = canonical_edges(graph);
  if (edges.empty()) throw DataError("multilingual training needs at least one edge");

  TrainReport report;
  std::vector<std::vector<WordPair>> full_pairs, train_pairs, val_pairs;
  for (const auto* e : edges) {
    report.pairs_total += e->pairs.size();
    full_pairs.push_back(e->pairs);
    PairSplit s = split_pairs(e->pairs, config.validation_fraction, config.seed);
    if (s.train.empty() || s.validation.empty()) {
      warn("validation split of edge " + e->lang_i + "-" + e->lang_j + " left one side empty; using the full edge");
      s.train = e->pairs;
      s.validation = e->pairs;
    }
    report.train_pairs += s.train.size();
    report.validation_pairs += s.validation.size();
    train_pairs.push_back(std::move(s.train));
    val_pairs.push_back(std::move(s.validation));
  }
  std::vector<MultilingualEdge> full_edges = build_edges(graph, edges, full_pairs, &report.pairs_dropped);
  if (report.pairs_dropped > 0) warn(std::to_string(report.pairs_dropped) + " dictionary pairs dropped (out of vocabulary)");
  const std::vector<MultilingualEdge> train_edges = build_edges(graph, edges, train_pairs);

  report.candidates.resize(config.lambdas.size());
  detail::parallel_for(config.lambdas.size(), resolve_threads(config.threads), [&](std::size_t i) {
    const double lambda = config.lambdas[i];
    FitResult fit = fit_multilingual(graph.languages, train_edges, lambda, config.solver);
    ValidationScore pooled;
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const GraphEdge& e = *edges[k];
      const ValidationScore v = validate_pair(fit.params, e.lang_i, e.lang_j, graph.embeddings.at(e.lang_i),
                                              graph.embeddings.at(e.lang_j), val_pairs[k], config);
      pooled.hits += v.hits;
      pooled.evaluated += v.evaluated;
    }
    report.candidates[i] = {lambda, pooled.percent(), fit.solver.cost, fit.solver.iterations, fit.solver.termination};
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < report.candidates.size(); ++i)
    if (report.candidates[i].validation_p1 > report.candidates[best].validation_p1) best = i;
  report.selected_lambda = report.candidates[best].lambda;

  FitResult final_fit = fit_multilingual(graph.languages, full_edges, report.selected_lambda, config.solver);
  report.final_cost = final_fit.solver.cost;
  report.iterations = final_fit.solver.iterations;
  report.termination = final_fit.solver.termination;
  report.seconds = seconds_since(t0);
  return {std::move(final_fit.params), std::move(report)};
}

std::string_view to_string(BilingualMethod m) { return m == BilingualMethod::geomm ? "geomm" : "procrustes"; }

DisjointPivotResult make_disjoint_pivot(const std::vector<WordPair>& src_pvt, const std::vector<WordPair>& pvt_tgt,
                                        std::uint64_t seed) {
  const auto a = pivot_words(src_pvt, true);
  const auto b = pivot_words(pvt_tgt, false);
  const std::set<std::string> in_a(a.begin(), a.end());
  std::set<std::string> shared;
  for (const auto& w : b)
    if (in_a.count(w)) shared.insert(w);
  DisjointPivotResult r;
  // A shared pivot word stays in src_pvt when its key is below one half.
  for (const auto& p : src_pvt) {
    if (shared.count(p.tgt) && split_key(p.tgt, seed) >= 0.5) ++r.dropped_src_pvt;
    else r.src_pvt.push_back(p);
  }
  for (const auto& p : pvt_tgt) {
    if (shared.count(p.src) && split_key(p.src, seed) < 0.5) ++r.dropped_pvt_tgt;
    else r.pvt_tgt.push_back(p);
  }
  return r;
}

namespace {

struct HopModels {
  Matrix w1, w2;                       // src->pvt, pvt->tgt in original spaces
  std::optional<GeommParams> first;    // GeoMM model for src-pvt (pipeline retrieval)
};

std::pair<std::vector<WordPair>, std::vector<WordPair>> hop_dictionaries(const OneHopSetup& s, const TrainConfig& c) {
  if (s.src_pvt.empty() || s.pvt_tgt.empty()) throw DataError("one-hop translation needs both pivot dictionaries");
  if (!s.disjoint_pivot) return {s.src_pvt, s.pvt_tgt};
  DisjointPivotResult d = make_disjoint_pivot(s.src_pvt, s.pvt_tgt, c.seed);
  return {std::move(d.src_pvt), std::move(d.pvt_tgt)};
}

Matrix procrustes_map(const Embeddings& a, const Embeddings& b, const std::vector<WordPair>& pairs) {
  BuiltDictionary built = build_dictionary_data(a, b, pairs);
  const auto& omega = built.data.omega();
  Matrix ps(a.dim(), static_cast<Index>(omega.size())), pt(b.dim(), static_cast<Index>(omega.size()));
  for (std::size_t k = 0; k < omega.size(); ++k) {
    ps.col(static_cast<Index>(k)) = built.data.xs().col(omega[k].src);
    pt.col(static_cast<Index>(k)) = built.data.xt().col(omega[k].tgt);
  }
  ProcrustesResult r = procrustes_fit(ps, pt);
  if (!r.unique) warn("procrustes: cross-covariance is rank deficient; solution is not unique");
  return r.w;
}

HopModels train_hops(BilingualMethod method, const OneHopSetup& s, const TrainConfig& config) {
  auto [d1, d2] = hop_dictionaries(s, config);
  HopModels m;
  if (method == BilingualMethod::procrustes) {
    m.w1 = procrustes_map(s.src_emb, s.pvt_emb, d1);
    m.w2 = procrustes_map(s.pvt_emb, s.tgt_emb, d2);
    return m;
  }
  TrainResult first = train_bilingual(s.src_emb, s.pvt_emb, d1, config, s.src, s.pvt);
  TrainResult second = train_bilingual(s.pvt_emb, s.tgt_emb, d2, config, s.pvt, s.tgt);
  m.w1 = compose_transform(first.params, s.src, s.pvt);
  m.w2 = compose_transform(second.params, s.pvt, s.tgt);
  m.first = std::move(first.params);
  return m;
}

int hop_k(const TrainConfig& c, const Embeddings& a, const Embeddings& b) {
  return static_cast<int>(std::min<Index>({static_cast<Index>(c.csls_k), a.size(), b.size()}));
}

}  // namespace

OneHopResult one_hop_composition(BilingualMethod method, const OneHopSetup& setup, const TrainConfig& config) {
  config.validate();
  HopModels m = train_hops(method, setup, config);
  OneHopResult r;
  r.src_to_tgt = m.w2 * m.w1;
  const Translator tr =
      target_space_translator(r.src_to_tgt, setup.src_emb, setup.tgt_emb, hop_k(config, setup.src_emb, setup.tgt_emb));
  r.report = evaluate_bli(tr, setup.test, setup.mode);
  return r;
}

OneHopResult one_hop_pipeline(BilingualMethod method, const OneHopSetup& setup, const TrainConfig& config) {
  config.validate();
  HopModels m = train_hops(method, setup, config);
  const int k1 = hop_k(config, setup.src_emb, setup.pvt_emb);
  const Translator first = m.first ? latent_translator(*m.first, setup.src, setup.pvt, setup.src_emb, setup.pvt_emb, k1)
                                   : target_space_translator(m.w1, setup.src_emb, setup.pvt_emb, k1);
  const Translator second =
      target_space_translator(m.w2, setup.pvt_emb, setup.tgt_emb, hop_k(config, setup.pvt_emb, setup.tgt_emb));
  OneHopResult r;
  r.report = evaluate_rankings(
      setup.test, [&](const std::string& w) { return first.query_index().find(w).has_value(); },
      [&](const std::string& w) { return second.target_index().find(w).has_value(); },
      [&](const std::vector<std::string>& words) {
        std::vector<Index> q;
        for (const auto& w : words) q.push_back(*first.query_index().find(w));
        const auto pivots = first.rank_many(q, 1, setup.mode);
        std::vector<Index> p;
        for (const auto& c : pivots) p.push_back(*second.query_index().find(c.front().word));
        return second.rank_many(p, 10, setup.mode);
      });
  return r;
}

JointResult one_hop_joint(const OneHopSetup& setup, const TrainConfig& config) {
  auto [d1, d2] = hop_dictionaries(setup, config);
  LanguageGraph g;
  g.languages = {setup.src, setup.pvt, setup.tgt};
  g.embeddings.emplace(setup.src, setup.src_emb);
  g.embeddings.emplace(setup.pvt, setup.pvt_emb);
  g.embeddings.emplace(setup.tgt, setup.tgt_emb);
  g.edges = {{setup.src, setup.pvt, std::move(d1)}, {setup.pvt, setup.tgt, std::move(d2)}};
  TrainResult trained = train_multilingual(g, config);
  const Translator tr = latent_translator(trained.params, setup.src, setup.tgt, setup.src_emb, setup.tgt_emb,
                                          hop_k(config, setup.src_emb, setup.tgt_emb));
  OneHopResult r;
  r.report = evaluate_bli(tr, setup.test, setup.mode);
  return {std::move(r), std::move(trained.params), std::move(trained.report)};
}

}  // namespace geomm
