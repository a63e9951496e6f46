#include "geomm/retrieval.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "geomm/error.hpp"
#include "geomm/log.hpp"

namespace geomm {
namespace {

constexpr double kSqrtEigenFloor = 1e-12;
constexpr Index kBlockElements = Index{1} << 22;

Index block_rows(Index other) { return std::max<Index>(1, kBlockElements / std::max<Index>(1, other)); }

// Indices of the top_k entries of `scores`, by descending score then ascending index.
std::vector<Index> top_indices(const Eigen::Ref<const Vector>& scores, std::size_t top_k) {
  std::vector<Index> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  const std::size_t k = std::min(top_k, idx.size());
  auto better = [&](Index a, Index b) { return scores(a) > scores(b) || (scores(a) == scores(b) && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

}  // namespace

std::string_view to_string(RetrievalMode m) { return m == RetrievalMode::nn ? "nn" : "csls"; }
std::string_view to_string(InferenceSpace s) { return s == InferenceSpace::latent ? "latent" : "target"; }

RetrievalMode parse_retrieval_mode(std::string_view name) {
  if (name == "nn") return RetrievalMode::nn;
  if (name == "csls") return RetrievalMode::csls;
  throw PreconditionViolation("unknown retrieval mode: " + std::string(name));
}

InferenceSpace parse_inference_space(std::string_view name) {
  if (name == "latent") return InferenceSpace::latent;
  if (name == "target" || name == "target_space") return InferenceSpace::target_space;
  throw PreconditionViolation("unknown inference space: " + std::string(name));
}

Matrix spd_sqrt(const SpdPoint& b) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(b.matrix());
  if (es.info() != Eigen::Success) throw NumericalError("spd_sqrt: eigendecomposition failed");
  Vector ev = es.eigenvalues();
  if (ev.minCoeff() < kSqrtEigenFloor) {
    std::ostringstream os;
    os << "spd_sqrt: clamping eigenvalue " << ev.minCoeff() << " to " << kSqrtEigenFloor;
    warn(os.str());
    ev = ev.cwiseMax(kSqrtEigenFloor);
  }
  const Matrix& v = es.eigenvectors();
  return sym(v * ev.cwiseSqrt().asDiagonal() * v.transpose());
}

Matrix to_latent(const GeommParams& params, std::string_view lang, const Matrix& x) {
  const Matrix& u = params.u(lang).matrix();
  if (x.rows() != params.dim()) throw DimensionMismatch("to_latent: embedding dimension does not match the model");
  return spd_sqrt(params.b()) * (u.transpose() * x);
}

RetrievalIndex::RetrievalIndex(Matrix vectors, std::vector<std::string> vocab) {
  if (static_cast<Index>(vocab.size()) != vectors.cols())
    throw DimensionMismatch("RetrievalIndex: vocabulary size does not match the number of vectors");
  std::vector<Index> keep;
  keep.reserve(vocab.size());
  for (Index j = 0; j < vectors.cols(); ++j) {
    const double n = vectors.col(j).norm();
    if (n > 0.0 && std::isfinite(n)) {
      vectors.col(j) /= n;
      keep.push_back(j);
    } else {
      warn("retrieval index: zero-norm vector for '" + vocab[static_cast<std::size_t>(j)] + "' rejected");
    }
  }
  if (static_cast<Index>(keep.size()) == vectors.cols()) {
    latent_ = std::move(vectors);
    vocab_ = std::move(vocab);
  } else {
    latent_.resize(vectors.rows(), static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      latent_.col(static_cast<Index>(k)) = vectors.col(keep[k]);
      vocab_.push_back(std::move(vocab[static_cast<std::size_t>(keep[k])]));
    }
  }
  index_.reserve(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) index_.emplace(vocab_[i], static_cast<Index>(i));
}

std::optional<Index> RetrievalIndex::find(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void RetrievalIndex::set_penalties(std::vector<double> penalty, int k) {
  if (static_cast<Index>(penalty.size()) != size())
    throw DimensionMismatch("RetrievalIndex: one penalty per word required");
  penalty_ = std::move(penalty);
  csls_k_ = k;
}

std::vector<double> csls_penalties(const RetrievalIndex& of, const RetrievalIndex& against, int k) {
  if (k < 1) throw PreconditionViolation("csls_penalties: k must be >= 1");
  if (k > against.size()) {
    throw PreconditionViolation("csls_penalties: k = " + std::to_string(k) + " exceeds the opposing vocabulary size " +
                                std::to_string(against.size()));
  }
  if (of.latent().rows() != against.latent().rows()) throw DimensionMismatch("csls_penalties: dimension mismatch");
  std::vector<double> r(static_cast<std::size_t>(of.size()));
  const Index rows = block_rows(against.size());
  std::vector<double> buf(static_cast<std::size_t>(against.size()));
  for (Index start = 0; start < of.size(); start += rows) {
    const Index b = std::min(rows, of.size() - start);
    const Matrix s = of.latent().middleCols(start, b).transpose() * against.latent();
    for (Index i = 0; i < b; ++i) {
      for (Index j = 0; j < s.cols(); ++j) buf[static_cast<std::size_t>(j)] = s(i, j);
      std::partial_sort(buf.begin(), buf.begin() + k, buf.end(), std::greater<>());
      double sum = 0.0;
      for (int t = 0; t < k; ++t) sum += buf[static_cast<std::size_t>(t)];
      r[static_cast<std::size_t>(start + i)] = sum / k;
    }
  }
  return r;
}

RetrievalIndex build_index(const GeommParams& params, std::string_view lang, const Embeddings& emb,
                           const RetrievalIndex* opposing, int k) {
  RetrievalIndex idx(to_latent(params, lang, emb.vectors()), emb.vocab());
  if (opposing != nullptr) idx.set_penalties(csls_penalties(idx, *opposing, k), k);
  return idx;
}

double csls_score(const RetrievalIndex& query, Index qi, const RetrievalIndex& target, Index tj) {
  if (!query.has_penalties() || !target.has_penalties())
    throw PreconditionViolation("csls_score: penalties missing on one side");
  if (query.csls_k() != target.csls_k()) throw PreconditionViolation("csls_score: penalties use different k");
  const double cos = query.latent().col(qi).dot(target.latent().col(tj));
  return 2.0 * cos - query.csls_penalty()[static_cast<std::size_t>(qi)] -
         target.csls_penalty()[static_cast<std::size_t>(tj)];
}

Translator::Translator(RetrievalIndex query, RetrievalIndex target, int csls_k)
    : query_(std::move(query)), target_(std::move(target)) {
  if (query_.latent().rows() != target_.latent().rows()) throw DimensionMismatch("Translator: dimension mismatch");
  if (csls_k > 0) {
    auto rq = csls_penalties(query_, target_, csls_k);
    auto rt = csls_penalties(target_, query_, csls_k);
    query_.set_penalties(std::move(rq), csls_k);
    target_.set_penalties(std::move(rt), csls_k);
  }
}

Translator Translator::reversed() const {
  Translator r = *this;
  std::swap(r.query_, r.target_);
  return r;
}

double Translator::score(Index qi, Index tj, RetrievalMode mode) const {
  if (mode == RetrievalMode::csls) return csls_score(query_, qi, target_, tj);
  return query_.latent().col(qi).dot(target_.latent().col(tj));
}

std::vector<Candidate> Translator::rank(Index qi, std::size_t top_k, RetrievalMode mode) const {
  return rank_many({qi}, top_k, mode).front();
}

std::vector<std::vector<Candidate>> Translator::rank_many(const std::vector<Index>& queries, std::size_t top_k,
                                                          RetrievalMode mode) const {
  if (mode == RetrievalMode::csls && !(query_.has_penalties() && target_.has_penalties()))
    throw PreconditionViolation("Translator: CSLS requested but penalties were not computed");
  std::vector<std::vector<Candidate>> out(queries.size());
  const Index rows = block_rows(target_.size());
  Matrix qblock;
  for (std::size_t start = 0; start < queries.size(); start += static_cast<std::size_t>(rows)) {
    const std::size_t b = std::min(static_cast<std::size_t>(rows), queries.size() - start);
    qblock.resize(query_.latent().rows(), static_cast<Index>(b));
    for (std::size_t i = 0; i < b; ++i) {
      const Index qi = queries[start + i];
      if (qi < 0 || qi >= query_.size()) throw PreconditionViolation("Translator: query index out of range");
      qblock.col(static_cast<Index>(i)) = query_.latent().col(qi);
    }
    Matrix s = qblock.transpose() * target_.latent();
    if (mode == RetrievalMode::csls) {
      const Eigen::Map<const Vector> rt(target_.csls_penalty().data(), target_.size());
      for (std::size_t i = 0; i < b; ++i) {
        const double rq = query_.csls_penalty()[static_cast<std::size_t>(queries[start + i])];
        s.row(static_cast<Index>(i)) = (2.0 * s.row(static_cast<Index>(i)).transpose() - rt).array() - rq;
      }
    }
    for (std::size_t i = 0; i < b; ++i) {
      const Vector row = s.row(static_cast<Index>(i)).transpose();
      auto& cands = out[start + i];
      for (Index j : top_indices(row, top_k))
        cands.push_back({j, target_.vocab()[static_cast<std::size_t>(j)], row(j)});
    }
  }
  return out;
}

Translator latent_translator(const GeommParams& params, std::string_view src, std::string_view tgt,
                             const Embeddings& src_emb, const Embeddings& tgt_emb, int csls_k) {
  return Translator(RetrievalIndex(to_latent(params, src, src_emb.vectors()), src_emb.vocab()),
                    RetrievalIndex(to_latent(params, tgt, tgt_emb.vectors()), tgt_emb.vocab()), csls_k);
}

Translator target_space_translator(const Matrix& w, const Embeddings& src_emb, const Embeddings& tgt_emb,
                                   int csls_k) {
  if (w.cols() != src_emb.dim() || w.rows() != tgt_emb.dim())
    throw DimensionMismatch("target_space_translator: map does not fit the embedding dimensions");
  return Translator(RetrievalIndex(w * src_emb.vectors(), src_emb.vocab()),
                    RetrievalIndex(tgt_emb.vectors(), tgt_emb.vocab()), csls_k);
}

Translator make_translator(const GeommParams& params, std::string_view src, std::string_view tgt,
                           const Embeddings& src_emb, const Embeddings& tgt_emb, InferenceSpace space, int csls_k) {
  if (space == InferenceSpace::latent) return latent_translator(params, src, tgt, src_emb, tgt_emb, csls_k);
  return target_space_translator(compose_transform(params, src, tgt), src_emb, tgt_emb, csls_k);
}

std::vector<QueryResult> translate(const Translator& translator, const std::vector<std::string>& words,
                                   std::size_t top_k, RetrievalMode mode) {
  std::vector<QueryResult> out(words.size());
  std::vector<Index> queries;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < words.size(); ++i) {
    out[i].word = words[i];
    if (auto q = translator.query_index().find(words[i])) {
      out[i].in_vocabulary = true;
      queries.push_back(*q);
      slots.push_back(i);
    }
  }
  auto ranked = translator.rank_many(queries, top_k, mode);
  for (std::size_t k = 0; k < slots.size(); ++k) out[slots[k]].candidates = std::move(ranked[k]);
  return out;
}

std::vector<QueryResult> translate(const GeommParams& params, std::string_view src, std::string_view tgt,
                                   const Embeddings& src_emb, const Embeddings& tgt_emb,
                                   const std::vector<std::string>& words, std::size_t top_k, RetrievalMode mode,
                                   InferenceSpace space, int csls_k) {
  const int k = mode == RetrievalMode::csls ? csls_k : 0;
  return translate(make_translator(params, src, tgt, src_emb, tgt_emb, space, k), words, top_k, mode);
}

BliReport evaluate_rankings(const std::vector<WordPair>& test, const WordFilter& source_known,
                            const WordFilter& target_known, const BatchRanker& rank) {
  // Group gold translations by source word, in order of first appearance.
  std::vector<std::string> sources;
  std::map<std::string, std::vector<std::string>> gold;
  for (const auto& p : test) {
    auto [it, inserted] = gold.try_emplace(p.src);
    if (inserted) sources.push_back(p.src);
    it->second.push_back(p.tgt);
  }
  BliReport rep;
  rep.source_words = sources.size();
  std::vector<std::string> queries;
  std::vector<std::vector<std::string>> query_gold;
  for (const auto& s : sources) {
    if (!source_known(s)) {
      ++rep.oov_source;
      continue;
    }
    std::vector<std::string> g;
    for (const auto& t : gold[s])
      if (target_known(t)) g.push_back(t);
    if (g.empty()) {
      ++rep.oov_gold;
      continue;
    }
    queries.push_back(s);
    query_gold.push_back(std::move(g));
  }
  if (queries.empty()) throw DataError("evaluate_bli: no test source word has an in-vocabulary translation");
  const auto ranked = rank(queries);
  if (ranked.size() != queries.size()) throw PreconditionViolation("evaluate_rankings: ranker returned wrong count");
  std::size_t hit1 = 0, hit5 = 0, hit10 = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const std::size_t depth = std::min<std::size_t>(10, ranked[q].size());
    std::size_t best = depth;
    for (std::size_t r = 0; r < depth; ++r) {
      if (std::find(query_gold[q].begin(), query_gold[q].end(), ranked[q][r].word) != query_gold[q].end()) {
        best = r;
        break;
      }
    }
    hit1 += best < 1;
    hit5 += best < 5;
    hit10 += best < 10;
  }
  const double n = static_cast<double>(queries.size());
  rep.evaluated = queries.size();
  rep.p_at_1 = 100.0 * static_cast<double>(hit1) / n;
  rep.p_at_5 = 100.0 * static_cast<double>(hit5) / n;
  rep.p_at_10 = 100.0 * static_cast<double>(hit10) / n;
  rep.coverage = 100.0 * n / static_cast<double>(rep.source_words);
  return rep;
}

BliReport evaluate_bli(const Translator& translator, const std::vector<WordPair>& test, RetrievalMode mode) {
  return evaluate_rankings(
      test, [&](const std::string& w) { return translator.query_index().find(w).has_value(); },
      [&](const std::string& w) { return translator.target_index().find(w).has_value(); },
      [&](const std::vector<std::string>& words) {
        std::vector<Index> q;
        q.reserve(words.size());
        for (const auto& w : words) q.push_back(*translator.query_index().find(w));
        return translator.rank_many(q, 10, mode);
      });
}

std::string format_report(const BliReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "p@1=" << r.p_at_1 << '\n'
     << "p@5=" << r.p_at_5 << '\n'
     << "p@10=" << r.p_at_10 << '\n'
     << "coverage=" << r.coverage << '\n'
     << "evaluated=" << r.evaluated << '\n'
     << "source_words=" << r.source_words << '\n'
     << "oov_source=" << r.oov_source << '\n'
     << "oov_gold=" << r.oov_gold << '\n';
  return os.str();
}

double pearson_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw PreconditionViolation("pearson_correlation: need two equal-length samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw DataError("pearson_correlation: a sample has zero variance");
  return sab / std::sqrt(saa * sbb);
}

SimilarityReport evaluate_word_similarity(const GeommParams& params, std::string_view src, std::string_view tgt,
                                          const Embeddings& src_emb, const Embeddings& tgt_emb,
                                          const std::vector<ScoredPair>& pairs) {
  const Matrix root = spd_sqrt(params.b());
  const Matrix ps = root * params.u(src).matrix().transpose();
  const Matrix pt = root * params.u(tgt).matrix().transpose();
  std::vector<double> gold, model;
  for (const auto& p : pairs) {
    auto i = src_emb.find(p.src);
    auto j = tgt_emb.find(p.tgt);
    if (!i || !j) continue;
    const Vector x = ps * src_emb.vectors().col(*i);
    const Vector z = pt * tgt_emb.vectors().col(*j);
    const double nx = x.norm(), nz = z.norm();
    if (nx == 0.0 || nz == 0.0) continue;
    gold.push_back(p.score);
    model.push_back(x.dot(z) / (nx * nz));
  }
  if (gold.size() < 3) throw DataError("evaluate_word_similarity: fewer than 3 in-vocabulary pairs");
  SimilarityReport r;
  r.pearson = pearson_correlation(gold, model);
  r.used = gold.size();
  r.total = pairs.size();
  r.coverage = 100.0 * static_cast<double>(r.used) / static_cast<double>(r.total);
  return r;
}

std::string format_report(const SimilarityReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << "pearson=" << r.pearson << '\n'
     << std::setprecision(2) << "coverage=" << r.coverage << '\n'
     << "pairs_used=" << r.used << '\n'
     << "pairs_total=" << r.total << '\n';
  return os.str();
}

}  // namespace geomm
