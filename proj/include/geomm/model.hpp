#pragma once

// GeoMM parameters, the factored square-loss objectives and their Euclidean
// gradients, the ablation variants and the Procrustes baseline.
//
// Notation used in comments: A = U_s B U_t^T, so that the score matrix is
// X_s^T A X_t and the source-to-target map is W = A^T = U_t B U_s^T.

#include <string>
#include <string_view>
#include <vector>

#include "geomm/manifolds.hpp"
#include "geomm/optimizer.hpp"

namespace geomm {

struct IndexPair {
  Index src = 0;
  Index tgt = 0;
  friend bool operator==(const IndexPair&, const IndexPair&) = default;
  friend auto operator<=>(const IndexPair&, const IndexPair&) = default;
};

// Training data for one language pair. The binary label matrix Y is never
// formed; `omega` lists its unit entries. Gram matrices needed by the
// factored objective are computed once at construction.
class DictionaryData {
 public:
  // Columns must be unit-norm (within 1e-6); omega must be non-empty and in
  // range. Duplicate omega entries are merged.
  DictionaryData(Matrix xs, Matrix xt, std::vector<IndexPair> omega, std::size_t raw_size = 0);

  const Matrix& xs() const { return xs_; }
  const Matrix& xt() const { return xt_; }
  const std::vector<IndexPair>& omega() const { return omega_; }
  std::size_t raw_size() const { return raw_size_; }
  Index dim() const { return xs_.rows(); }

  const Matrix& src_gram() const { return src_gram_; }          // X_s X_s^T
  const Matrix& tgt_gram() const { return tgt_gram_; }          // X_t X_t^T
  const Matrix& cross() const { return cross_; }                // sum_omega x_si x_tj^T
  const Matrix& pair_src_gram() const { return pair_src_gram_; }  // sum_omega x_si x_si^T
  double pair_tgt_sqnorm() const { return pair_tgt_sqnorm_; }   // sum_omega ||x_tj||^2

 private:
  Matrix xs_, xt_;
  std::vector<IndexPair> omega_;
  std::size_t raw_size_;
  Matrix src_gram_, tgt_gram_, cross_, pair_src_gram_;
  double pair_tgt_sqnorm_ = 0.0;
};

struct MultilingualEdge;

// Per-language rotations U_i and the shared metric B.
class GeommParams {
 public:
  GeommParams(std::vector<std::string> languages, std::vector<OrthPoint> u, SpdPoint b);

  // U_i = I, B = I.
  static GeommParams identity(std::vector<std::string> languages, Index d);

  // Identity start with per-language reflections chosen along a spanning
  // tree of the edges so each edge's det(U_i U_j) matches the sign of its
  // cross-covariance determinant. Languages without edges keep U = I.
  static GeommParams oriented_identity(std::vector<std::string> languages, const std::vector<MultilingualEdge>& edges);

  const std::vector<std::string>& languages() const { return languages_; }
  bool has_language(std::string_view lang) const;
  std::size_t index_of(std::string_view lang) const;
  const OrthPoint& u(std::string_view lang) const { return u_[index_of(lang)]; }
  const OrthPoint& u(std::size_t i) const { return u_.at(i); }
  const SpdPoint& b() const { return b_; }
  Index dim() const { return b_.dim(); }

  // orth = U_i in language order, spd = B.
  ProductPoint to_point() const;
  static GeommParams from_point(std::vector<std::string> languages, const ProductPoint& point);

 private:
  std::vector<std::string> languages_;
  std::vector<OrthPoint> u_;
  SpdPoint b_;
};

// z^T U_tgt B U_src^T x. Evaluated in an order fixed by the language names, so
// similarity(s, t, x, z) and similarity(t, s, z, x) are bitwise equal.
double similarity(const GeommParams& params, std::string_view src, std::string_view tgt, const Vector& x,
                  const Vector& z);

// W_{tgt,src} = U_tgt B U_src^T; compose_transform(s, t) is exactly the
// transpose of compose_transform(t, s).
Matrix compose_transform(const GeommParams& params, std::string_view src, std::string_view tgt);

// ||X_s^T U_s B U_t^T X_t - Y||_F^2 + lambda ||B||_F^2 via the trace expansion:
// tr(A^T (X_s X_s^T) A (X_t X_t^T)) + |omega| - 2 sum_omega x_si^T A x_tj.
double bilingual_cost(const Matrix& us, const Matrix& ut, const Matrix& b, const DictionaryData& data, double lambda);
double bilingual_cost(const GeommParams& params, std::string_view src, std::string_view tgt,
                      const DictionaryData& data, double lambda);

struct BilingualGradient {
  Matrix us, ut, b;
};

// With G_A = 2 (X_s X_s^T A X_t X_t^T - sum_omega x_si x_tj^T):
// G_Us = G_A U_t B, G_Ut = G_A^T U_s B, G_B = sym(U_s^T G_A U_t) + 2 lambda B.
BilingualGradient bilingual_egrad(const Matrix& us, const Matrix& ut, const Matrix& b, const DictionaryData& data,
                                  double lambda);
BilingualGradient bilingual_egrad(const GeommParams& params, std::string_view src, std::string_view tgt,
                                  const DictionaryData& data, double lambda);

// One dictionary of the language graph; data.xs belongs to lang_i.
struct MultilingualEdge {
  std::string lang_i;
  std::string lang_j;
  DictionaryData data;
};

// sum_e (1/|omega_e|) ||X_i^T U_i B U_j^T X_j - Y_ij||_F^2 + lambda ||B||_F^2,
// accumulated in edge order. Rejects self-loops, unknown languages and
// repeated unordered pairs.
double multilingual_cost(const GeommParams& params, const std::vector<MultilingualEdge>& edges, double lambda);

struct MultilingualGradient {
  std::vector<Matrix> u;  // in params.languages() order
  Matrix b;
};

MultilingualGradient multilingual_egrad(const GeommParams& params, const std::vector<MultilingualEdge>& edges,
                                        double lambda);

void validate_edges(const std::vector<std::string>& languages, const std::vector<MultilingualEdge>& edges);

// Solver problem for the multilingual objective over orth = U_i (language
// order), spd = B.
Problem make_multilingual_problem(std::vector<std::string> languages, const std::vector<MultilingualEdge>& edges,
                                  double lambda);

struct ProcrustesResult {
  Matrix w;            // orthogonal, maps source to target
  bool unique = true;  // false when the cross-covariance is rank deficient
};

// Orthogonal W maximizing tr(W^T X_t X_s^T) for column-aligned pairs.
ProcrustesResult procrustes_fit(const Matrix& xs_pairs, const Matrix& xt_pairs);

// --- ablations -----------------------------------------------------------------

enum class ModelVariant { full, unconstrained_w, metric_only, rotations_only, regression_loss };

std::string_view to_string(ModelVariant v);
ModelVariant parse_model_variant(std::string_view name);

// Solver layout per variant:
//   full, regression_loss : orth = {U_s, U_t}, spd = B
//   metric_only           : spd = B            (U_s = U_t = I frozen)
//   rotations_only        : orth = {U_s, U_t}  (B = I frozen)
//   unconstrained_w       : euclid = {W}
// Initial point is the identity in every factor.
ProductPoint variant_initial_point(ModelVariant variant, Index d);

// Retractions never leave the connected component of the starting rotation,
// so det(U_s U_t) is fixed for the whole run. This overload starts from the
// identity except that the last column of U_t is negated when the dictionary
// cross-covariance has negative determinant.
ProductPoint variant_initial_point(ModelVariant variant, const DictionaryData& data);

// Throws PreconditionViolation when the point layout does not match the variant.
double variant_cost(ModelVariant variant, const ProductPoint& point, const DictionaryData& data, double lambda);
TangentVector variant_egrad(ModelVariant variant, const ProductPoint& point, const DictionaryData& data,
                            double lambda);

Problem make_bilingual_problem(ModelVariant variant, const DictionaryData& data, double lambda);

// Expresses a trained variant as GeommParams over {src, tgt}. Frozen factors
// become identities; an unconstrained W is split by its polar factorization
// W = Q P into U_src = I, U_tgt = Q, B = P (eigenvalues clamped at 1e-12).
GeommParams variant_to_params(ModelVariant variant, const ProductPoint& point, const std::string& src,
                              const std::string& tgt);

}  // namespace geomm
