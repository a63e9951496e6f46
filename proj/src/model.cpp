#include "geomm/model.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

#include "geomm/error.hpp"

namespace geomm {
namespace {

constexpr double kUnitNormTol = 1e-6;

// tr(A^T Cs A Ct) + |omega| - 2 <A, M>
double classification_loss(const Matrix& a, const DictionaryData& data) {
  const Matrix csa = data.src_gram() * a;
  const Matrix act = a * data.tgt_gram();
  return csa.cwiseProduct(act).sum() + static_cast<double>(data.omega().size()) -
         2.0 * a.cwiseProduct(data.cross()).sum();
}

// d/dA of classification_loss
Matrix classification_grad(const Matrix& a, const DictionaryData& data) {
  return 2.0 * (data.src_gram() * a * data.tgt_gram() - data.cross());
}

// ||W P_s - P_t||_F^2 for the omega-aligned pair matrices.
double regression_loss(const Matrix& w, const DictionaryData& data) {
  return (w * data.pair_src_gram()).cwiseProduct(w).sum() - 2.0 * w.cwiseProduct(data.cross().transpose()).sum() +
         data.pair_tgt_sqnorm();
}

Matrix regression_grad(const Matrix& w, const DictionaryData& data) {
  return 2.0 * (w * data.pair_src_gram() - data.cross().transpose());
}

void check_dim(const DictionaryData& data, Index d) {
  if (data.dim() != d) {
    std::ostringstream os;
    os << "dictionary dimension " << data.dim() << " does not match model dimension " << d;
    throw DimensionMismatch(os.str());
  }
}

void require_layout(bool ok, ModelVariant v) {
  if (!ok) throw PreconditionViolation("parameter layout does not match variant " + std::string(to_string(v)));
}

}  // namespace

DictionaryData::DictionaryData(Matrix xs, Matrix xt, std::vector<IndexPair> omega, std::size_t raw_size)
    : xs_(std::move(xs)), xt_(std::move(xt)), raw_size_(raw_size) {
  if (xs_.rows() != xt_.rows()) throw DimensionMismatch("DictionaryData: source and target dimensions differ");
  if (omega.empty()) throw DataError("DictionaryData: omega is empty");
  std::sort(omega.begin(), omega.end());
  omega.erase(std::unique(omega.begin(), omega.end()), omega.end());
  for (const auto& p : omega) {
    if (p.src < 0 || p.src >= xs_.cols() || p.tgt < 0 || p.tgt >= xt_.cols())
      throw DataError("DictionaryData: omega index out of range");
  }
  for (const Matrix* m : {&xs_, &xt_}) {
    for (Index j = 0; j < m->cols(); ++j) {
      if (std::abs(m->col(j).norm() - 1.0) > kUnitNormTol)
        throw DataError("DictionaryData: embedding columns must be unit-norm");
    }
  }
  omega_ = std::move(omega);
  if (raw_size_ == 0) raw_size_ = omega_.size();

  const Index d = xs_.rows();
  src_gram_ = xs_ * xs_.transpose();
  tgt_gram_ = xt_ * xt_.transpose();
  cross_ = Matrix::Zero(d, d);
  pair_src_gram_ = Matrix::Zero(d, d);
  for (const auto& p : omega_) {
    cross_.noalias() += xs_.col(p.src) * xt_.col(p.tgt).transpose();
    pair_src_gram_.noalias() += xs_.col(p.src) * xs_.col(p.src).transpose();
    pair_tgt_sqnorm_ += xt_.col(p.tgt).squaredNorm();
  }
}

GeommParams::GeommParams(std::vector<std::string> languages, std::vector<OrthPoint> u, SpdPoint b)
    : languages_(std::move(languages)), u_(std::move(u)), b_(std::move(b)) {
  if (languages_.size() != u_.size()) throw DimensionMismatch("GeommParams: one rotation per language required");
  std::unordered_set<std::string> seen;
  for (const auto& l : languages_) {
    if (!seen.insert(l).second) throw DataError("GeommParams: duplicate language identifier " + l);
  }
  for (const auto& ui : u_) {
    if (ui.dim() != b_.dim()) throw DimensionMismatch("GeommParams: rotation and metric dimensions differ");
  }
}

GeommParams GeommParams::identity(std::vector<std::string> languages, Index d) {
  std::vector<OrthPoint> u(languages.size(), OrthPoint::identity(d));
  return GeommParams(std::move(languages), std::move(u), SpdPoint::identity(d));
}

namespace {

bool reversed_orientation(const DictionaryData& data) { return data.cross().determinant() < 0.0; }

OrthPoint reflection(Index d) {
  Matrix r = Matrix::Identity(d, d);
  r(d - 1, d - 1) = -1.0;
  return OrthPoint(r);
}

}  // namespace

GeommParams GeommParams::oriented_identity(std::vector<std::string> languages,
                                           const std::vector<MultilingualEdge>& edges) {
  if (edges.empty()) throw DataError("oriented_identity: no edges");
  const Index d = edges.front().data.dim();
  const std::size_t n = languages.size();
  auto index_of = [&](const std::string& l) {
    const auto it = std::find(languages.begin(), languages.end(), l);
    if (it == languages.end()) throw UnknownLanguage(l);
    return static_cast<std::size_t>(it - languages.begin());
  };
  // flip[i]: -1 unvisited, else 0/1. Breadth-first from each unvisited language.
  std::vector<int> flip(n, -1);
  for (std::size_t root = 0; root < n; ++root) {
    if (flip[root] >= 0) continue;
    flip[root] = 0;
    std::vector<std::size_t> queue{root};
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t cur = queue[head];
      for (const auto& e : edges) {
        const std::size_t i = index_of(e.lang_i), j = index_of(e.lang_j);
        if (i != cur && j != cur) continue;
        const std::size_t other = i == cur ? j : i;
        if (flip[other] >= 0) continue;
        flip[other] = flip[cur] ^ static_cast<int>(reversed_orientation(e.data));
        queue.push_back(other);
      }
    }
  }
  std::vector<OrthPoint> u;
  for (std::size_t i = 0; i < n; ++i) u.push_back(flip[i] ? reflection(d) : OrthPoint::identity(d));
  return GeommParams(std::move(languages), std::move(u), SpdPoint::identity(d));
}

bool GeommParams::has_language(std::string_view lang) const {
  return std::find(languages_.begin(), languages_.end(), lang) != languages_.end();
}

std::size_t GeommParams::index_of(std::string_view lang) const {
  auto it = std::find(languages_.begin(), languages_.end(), lang);
  if (it == languages_.end()) throw UnknownLanguage(std::string(lang));
  return static_cast<std::size_t>(it - languages_.begin());
}

ProductPoint GeommParams::to_point() const {
  ProductPoint p;
  p.orth = u_;
  p.spd = b_;
  return p;
}

GeommParams GeommParams::from_point(std::vector<std::string> languages, const ProductPoint& point) {
  if (!point.spd) throw PreconditionViolation("GeommParams::from_point: point has no metric factor");
  return GeommParams(std::move(languages), point.orth, *point.spd);
}

double similarity(const GeommParams& params, std::string_view src, std::string_view tgt, const Vector& x,
                  const Vector& z) {
  const Index d = params.dim();
  if (x.size() != d || z.size() != d) throw DimensionMismatch("similarity: vector dimension mismatch");
  const bool canonical = src <= tgt;
  const Vector& lo_vec = canonical ? x : z;
  const Vector& hi_vec = canonical ? z : x;
  const Matrix& u_lo = params.u(canonical ? src : tgt).matrix();
  const Matrix& u_hi = params.u(canonical ? tgt : src).matrix();
  const Vector a = u_lo.transpose() * lo_vec;
  const Vector b = u_hi.transpose() * hi_vec;
  return b.dot(params.b().matrix() * a);
}

Matrix compose_transform(const GeommParams& params, std::string_view src, std::string_view tgt) {
  if (tgt < src) return compose_transform(params, tgt, src).transpose();
  const Matrix& us = params.u(src).matrix();
  const Matrix& ut = params.u(tgt).matrix();
  return ut * params.b().matrix() * us.transpose();
}

double bilingual_cost(const Matrix& us, const Matrix& ut, const Matrix& b, const DictionaryData& data, double lambda) {
  check_dim(data, b.rows());
  const Matrix a = us * b * ut.transpose();
  return classification_loss(a, data) + lambda * b.squaredNorm();
}

double bilingual_cost(const GeommParams& params, std::string_view src, std::string_view tgt,
                      const DictionaryData& data, double lambda) {
  return bilingual_cost(params.u(src).matrix(), params.u(tgt).matrix(), params.b().matrix(), data, lambda);
}

BilingualGradient bilingual_egrad(const Matrix& us, const Matrix& ut, const Matrix& b, const DictionaryData& data,
                                  double lambda) {
  check_dim(data, b.rows());
  const Matrix a = us * b * ut.transpose();
  const Matrix ga = classification_grad(a, data);
  BilingualGradient g;
  g.us = ga * ut * b;
  g.ut = ga.transpose() * us * b;
  g.b = sym(us.transpose() * ga * ut) + 2.0 * lambda * b;
  return g;
}

BilingualGradient bilingual_egrad(const GeommParams& params, std::string_view src, std::string_view tgt,
                                  const DictionaryData& data, double lambda) {
  return bilingual_egrad(params.u(src).matrix(), params.u(tgt).matrix(), params.b().matrix(), data, lambda);
}

void validate_edges(const std::vector<std::string>& languages, const std::vector<MultilingualEdge>& edges) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& e : edges) {
    if (std::find(languages.begin(), languages.end(), e.lang_i) == languages.end()) throw UnknownLanguage(e.lang_i);
    if (std::find(languages.begin(), languages.end(), e.lang_j) == languages.end()) throw UnknownLanguage(e.lang_j);
    if (e.lang_i == e.lang_j) throw DataError("self-loop edge on language " + e.lang_i);
    auto key = std::minmax(e.lang_i, e.lang_j);
    if (!seen.emplace(key.first, key.second).second)
      throw DataError("duplicate edge between " + e.lang_i + " and " + e.lang_j);
  }
}

namespace {

double multilingual_cost_impl(const std::vector<const Matrix*>& u, const std::vector<std::size_t>& ei,
                              const std::vector<std::size_t>& ej, const Matrix& b,
                              const std::vector<MultilingualEdge>& edges, double lambda) {
  double s = 0.0;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& data = edges[k].data;
    check_dim(data, b.rows());
    const Matrix a = *u[ei[k]] * b * u[ej[k]]->transpose();
    s += classification_loss(a, data) / static_cast<double>(data.omega().size());
  }
  return s + lambda * b.squaredNorm();
}

MultilingualGradient multilingual_egrad_impl(const std::vector<const Matrix*>& u, const std::vector<std::size_t>& ei,
                                             const std::vector<std::size_t>& ej, const Matrix& b,
                                             const std::vector<MultilingualEdge>& edges, double lambda) {
  const Index d = b.rows();
  MultilingualGradient g;
  g.u.assign(u.size(), Matrix::Zero(d, d));
  g.b = Matrix::Zero(d, d);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& data = edges[k].data;
    check_dim(data, d);
    const Matrix& ui = *u[ei[k]];
    const Matrix& uj = *u[ej[k]];
    const double w = 1.0 / static_cast<double>(data.omega().size());
    const Matrix ga = w * classification_grad(ui * b * uj.transpose(), data);
    g.u[ei[k]] += ga * uj * b;
    g.u[ej[k]] += ga.transpose() * ui * b;
    g.b += sym(ui.transpose() * ga * uj);
  }
  g.b += 2.0 * lambda * b;
  return g;
}

void edge_indices(const std::vector<std::string>& languages, const std::vector<MultilingualEdge>& edges,
                  std::vector<std::size_t>& ei, std::vector<std::size_t>& ej) {
  validate_edges(languages, edges);
  auto idx = [&](const std::string& l) {
    return static_cast<std::size_t>(std::find(languages.begin(), languages.end(), l) - languages.begin());
  };
  ei.clear();
  ej.clear();
  for (const auto& e : edges) {
    ei.push_back(idx(e.lang_i));
    ej.push_back(idx(e.lang_j));
  }
}

}  // namespace

double multilingual_cost(const GeommParams& params, const std::vector<MultilingualEdge>& edges, double lambda) {
  std::vector<std::size_t> ei, ej;
  edge_indices(params.languages(), edges, ei, ej);
  std::vector<const Matrix*> u;
  for (std::size_t i = 0; i < params.languages().size(); ++i) u.push_back(&params.u(i).matrix());
  return multilingual_cost_impl(u, ei, ej, params.b().matrix(), edges, lambda);
}

MultilingualGradient multilingual_egrad(const GeommParams& params, const std::vector<MultilingualEdge>& edges,
                                        double lambda) {
  std::vector<std::size_t> ei, ej;
  edge_indices(params.languages(), edges, ei, ej);
  std::vector<const Matrix*> u;
  for (std::size_t i = 0; i < params.languages().size(); ++i) u.push_back(&params.u(i).matrix());
  return multilingual_egrad_impl(u, ei, ej, params.b().matrix(), edges, lambda);
}

Problem make_multilingual_problem(std::vector<std::string> languages, const std::vector<MultilingualEdge>& edges,
                                  double lambda) {
  std::vector<std::size_t> ei, ej;
  edge_indices(languages, edges, ei, ej);
  auto unpack = [](const ProductPoint& x) {
    std::vector<const Matrix*> u;
    for (const auto& o : x.orth) u.push_back(&o.matrix());
    return u;
  };
  const std::size_t n_lang = languages.size();
  Problem p;
  p.cost = [&edges, ei, ej, lambda, unpack, n_lang](const ProductPoint& x) {
    if (x.orth.size() != n_lang || !x.spd) throw PreconditionViolation("multilingual problem: bad point layout");
    return multilingual_cost_impl(unpack(x), ei, ej, x.spd->matrix(), edges, lambda);
  };
  p.euclidean_gradient = [&edges, ei, ej, lambda, unpack, n_lang](const ProductPoint& x) {
    if (x.orth.size() != n_lang || !x.spd) throw PreconditionViolation("multilingual problem: bad point layout");
    MultilingualGradient g = multilingual_egrad_impl(unpack(x), ei, ej, x.spd->matrix(), edges, lambda);
    TangentVector t;
    t.orth = std::move(g.u);
    t.spd = std::move(g.b);
    return t;
  };
  return p;
}

ProcrustesResult procrustes_fit(const Matrix& xs_pairs, const Matrix& xt_pairs) {
  if (xs_pairs.rows() != xt_pairs.rows() || xs_pairs.cols() != xt_pairs.cols())
    throw DimensionMismatch("procrustes_fit: pair matrices must have the same shape");
  const Matrix m = xt_pairs * xs_pairs.transpose();
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ProcrustesResult r;
  r.w = svd.matrixU() * svd.matrixV().transpose();
  const Vector& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  r.unique = s.size() > 0 && s(s.size() - 1) > static_cast<double>(m.rows()) * 1e-14 * std::max(smax, 1e-300);
  return r;
}

std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::full: return "full";
    case ModelVariant::unconstrained_w: return "unconstrained_w";
    case ModelVariant::metric_only: return "metric_only";
    case ModelVariant::rotations_only: return "rotations_only";
    case ModelVariant::regression_loss: return "regression_loss";
  }
  return "unknown";
}

ModelVariant parse_model_variant(std::string_view name) {
  for (auto v : {ModelVariant::full, ModelVariant::unconstrained_w, ModelVariant::metric_only,
                 ModelVariant::rotations_only, ModelVariant::regression_loss}) {
    if (to_string(v) == name) return v;
  }
  throw PreconditionViolation("unknown model variant: " + std::string(name));
}

ProductPoint variant_initial_point(ModelVariant variant, Index d) {
  ProductPoint p;
  switch (variant) {
    case ModelVariant::full:
    case ModelVariant::regression_loss:
      p.orth = {OrthPoint::identity(d), OrthPoint::identity(d)};
      p.spd = SpdPoint::identity(d);
      break;
    case ModelVariant::metric_only: p.spd = SpdPoint::identity(d); break;
    case ModelVariant::rotations_only: p.orth = {OrthPoint::identity(d), OrthPoint::identity(d)}; break;
    case ModelVariant::unconstrained_w: p.euclid = {Matrix::Identity(d, d)}; break;
  }
  return p;
}

ProductPoint variant_initial_point(ModelVariant variant, const DictionaryData& data) {
  ProductPoint p = variant_initial_point(variant, data.dim());
  if (p.orth.size() == 2 && reversed_orientation(data)) p.orth[1] = reflection(data.dim());
  return p;
}

namespace {

void check_variant_layout(ModelVariant v, const ProductPoint& x) {
  switch (v) {
    case ModelVariant::full:
    case ModelVariant::regression_loss:
      require_layout(x.orth.size() == 2 && x.spd && x.euclid.empty(), v);
      break;
    case ModelVariant::metric_only: require_layout(x.orth.empty() && x.spd && x.euclid.empty(), v); break;
    case ModelVariant::rotations_only: require_layout(x.orth.size() == 2 && !x.spd && x.euclid.empty(), v); break;
    case ModelVariant::unconstrained_w:
      require_layout(x.orth.empty() && !x.spd && x.euclid.size() == 1 && x.euclid[0].rows() == x.euclid[0].cols(),
                     v);
      break;
  }
}

}  // namespace

double variant_cost(ModelVariant variant, const ProductPoint& x, const DictionaryData& data, double lambda) {
  check_variant_layout(variant, x);
  switch (variant) {
    case ModelVariant::full:
      return bilingual_cost(x.orth[0].matrix(), x.orth[1].matrix(), x.spd->matrix(), data, lambda);
    case ModelVariant::metric_only: {
      const Matrix& b = x.spd->matrix();
      check_dim(data, b.rows());
      return classification_loss(b, data) + lambda * b.squaredNorm();
    }
    case ModelVariant::rotations_only: {
      const Matrix& us = x.orth[0].matrix();
      check_dim(data, us.rows());
      // B = I is frozen; its regularizer lambda * d is kept so the value matches the full model at B = I.
      return classification_loss(us * x.orth[1].matrix().transpose(), data) + lambda * static_cast<double>(us.rows());
    }
    case ModelVariant::unconstrained_w: {
      const Matrix& w = x.euclid[0];
      check_dim(data, w.rows());
      return classification_loss(w.transpose(), data) + lambda * w.squaredNorm();
    }
    case ModelVariant::regression_loss: {
      const Matrix& b = x.spd->matrix();
      check_dim(data, b.rows());
      const Matrix w = x.orth[1].matrix() * b * x.orth[0].matrix().transpose();
      return regression_loss(w, data) + lambda * b.squaredNorm();
    }
  }
  return 0.0;
}

TangentVector variant_egrad(ModelVariant variant, const ProductPoint& x, const DictionaryData& data, double lambda) {
  check_variant_layout(variant, x);
  TangentVector g;
  switch (variant) {
    case ModelVariant::full: {
      BilingualGradient bg = bilingual_egrad(x.orth[0].matrix(), x.orth[1].matrix(), x.spd->matrix(), data, lambda);
      g.orth = {std::move(bg.us), std::move(bg.ut)};
      g.spd = std::move(bg.b);
      break;
    }
    case ModelVariant::metric_only: {
      const Matrix& b = x.spd->matrix();
      check_dim(data, b.rows());
      g.spd = sym(classification_grad(b, data)) + 2.0 * lambda * b;
      break;
    }
    case ModelVariant::rotations_only: {
      const Matrix& us = x.orth[0].matrix();
      const Matrix& ut = x.orth[1].matrix();
      check_dim(data, us.rows());
      const Matrix ga = classification_grad(us * ut.transpose(), data);
      g.orth = {ga * ut, ga.transpose() * us};
      break;
    }
    case ModelVariant::unconstrained_w: {
      const Matrix& w = x.euclid[0];
      check_dim(data, w.rows());
      g.euclid = {Matrix(classification_grad(w.transpose(), data).transpose() + 2.0 * lambda * w)};
      break;
    }
    case ModelVariant::regression_loss: {
      const Matrix& us = x.orth[0].matrix();
      const Matrix& ut = x.orth[1].matrix();
      const Matrix& b = x.spd->matrix();
      check_dim(data, b.rows());
      const Matrix gw = regression_grad(ut * b * us.transpose(), data);
      g.orth = {gw.transpose() * ut * b, gw * us * b};
      g.spd = sym(ut.transpose() * gw * us) + 2.0 * lambda * b;
      break;
    }
  }
  return g;
}

Problem make_bilingual_problem(ModelVariant variant, const DictionaryData& data, double lambda) {
  Problem p;
  p.cost = [variant, &data, lambda](const ProductPoint& x) { return variant_cost(variant, x, data, lambda); };
  p.euclidean_gradient = [variant, &data, lambda](const ProductPoint& x) {
    return variant_egrad(variant, x, data, lambda);
  };
  return p;
}

GeommParams variant_to_params(ModelVariant variant, const ProductPoint& x, const std::string& src,
                              const std::string& tgt) {
  check_variant_layout(variant, x);
  Index d = 0;
  if (x.spd) d = x.spd->dim();
  else if (!x.orth.empty()) d = x.orth[0].dim();
  else d = x.euclid[0].rows();
  std::vector<std::string> langs{src, tgt};
  switch (variant) {
    case ModelVariant::full:
    case ModelVariant::regression_loss: return GeommParams(langs, x.orth, *x.spd);
    case ModelVariant::metric_only:
      return GeommParams(langs, {OrthPoint::identity(d), OrthPoint::identity(d)}, *x.spd);
    case ModelVariant::rotations_only: return GeommParams(langs, x.orth, SpdPoint::identity(d));
    case ModelVariant::unconstrained_w: {
      Eigen::JacobiSVD<Matrix> svd(x.euclid[0], Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Matrix q = svd.matrixU() * svd.matrixV().transpose();
      const Vector s = svd.singularValues().cwiseMax(1e-12);
      const Matrix p = svd.matrixV() * s.asDiagonal() * svd.matrixV().transpose();
      return GeommParams(langs, {OrthPoint::identity(d), OrthPoint(q)}, SpdPoint(p));
    }
  }
  throw PreconditionViolation("variant_to_params: unknown variant");
}

}  // namespace geomm
