#pragma once

// Shared fixtures for the unit tests and the acceptance runner: random
// generators, planted instances and dense reference implementations.

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "geomm/dataio.hpp"
#include "geomm/model.hpp"
#include "geomm/retrieval.hpp"

namespace geomm::testing {

using Rng = std::mt19937_64;

inline Matrix gaussian(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

inline Matrix normalize_columns(Matrix m) {
  for (Index j = 0; j < m.cols(); ++j) m.col(j).normalize();
  return m;
}

inline Matrix random_unit_columns(Index d, Index n, Rng& rng) { return normalize_columns(gaussian(d, n, rng)); }

inline Matrix random_orthogonal(Index d, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(d, d, rng));
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < d; ++i)
    if (r(i, i) < 0) q.col(i) *= -1.0;
  return q;
}

// Eigenvalues drawn uniformly from [lo, hi].
inline Matrix random_spd(Index d, Rng& rng, double lo = 0.5, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  const Matrix q = random_orthogonal(d, rng);
  Vector ev(d);
  for (Index i = 0; i < d; ++i) ev(i) = u(rng);
  const Matrix b = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (b + b.transpose());
}

inline Matrix random_symmetric(Index d, Rng& rng) {
  const Matrix g = gaussian(d, d, rng);
  return 0.5 * (g + g.transpose());
}

inline Matrix random_skew(Index d, Rng& rng) {
  const Matrix g = gaussian(d, d, rng);
  return 0.5 * (g - g.transpose());
}

inline std::vector<IndexPair> random_omega(Index ns, Index nt, std::size_t count, Rng& rng) {
  std::uniform_int_distribution<Index> s(0, ns - 1), t(0, nt - 1);
  std::vector<IndexPair> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back({s(rng), t(rng)});
  return out;
}

inline DictionaryData random_dictionary(Index d, Index ns, Index nt, std::size_t pairs, Rng& rng) {
  return DictionaryData(random_unit_columns(d, ns, rng), random_unit_columns(d, nt, rng),
                        random_omega(ns, nt, pairs, rng));
}

inline double pick_lambda(Rng& rng) {
  static const double grid[] = {10.0, 1e2, 1e3, 1e4};
  return grid[std::uniform_int_distribution<int>(0, 3)(rng)];
}

// --- dense references ---------------------------------------------------------

inline Matrix dense_labels(const DictionaryData& data) {
  Matrix y = Matrix::Zero(data.xs().cols(), data.xt().cols());
  for (const auto& p : data.omega()) y(p.src, p.tgt) = 1.0;
  return y;
}

// ||X_s^T A X_t - Y||_F^2 with A = U_s B U_t^T, formed explicitly.
inline double dense_classification(const Matrix& a, const DictionaryData& data) {
  return (data.xs().transpose() * a * data.xt() - dense_labels(data)).squaredNorm();
}

inline double dense_bilingual(const Matrix& us, const Matrix& ut, const Matrix& b, const DictionaryData& data,
                              double lambda) {
  return dense_classification(us * b * ut.transpose(), data) + lambda * b.squaredNorm();
}

// sum_omega ||W x_si - x_tj||^2
inline double dense_regression(const Matrix& w, const DictionaryData& data) {
  double s = 0.0;
  for (const auto& p : data.omega()) s += (w * data.xs().col(p.src) - data.xt().col(p.tgt)).squaredNorm();
  return s;
}

inline double dense_multilingual(const std::vector<std::string>& langs, const std::vector<Matrix>& u,
                                 const Matrix& b, const std::vector<MultilingualEdge>& edges, double lambda) {
  auto idx = [&](const std::string& l) {
    return static_cast<std::size_t>(std::find(langs.begin(), langs.end(), l) - langs.begin());
  };
  double s = 0.0;
  for (const auto& e : edges) {
    const Matrix a = u[idx(e.lang_i)] * b * u[idx(e.lang_j)].transpose();
    s += dense_classification(a, e.data) / static_cast<double>(e.data.omega().size());
  }
  return s + lambda * b.squaredNorm();
}

// Central differences of f at x, entry by entry. With symmetric = true each
// off-diagonal pair moves together, which yields the symmetrized gradient.
inline Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-6,
                          bool symmetric = false) {
  Matrix g(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      if (symmetric && i > j) continue;
      Matrix e = Matrix::Zero(x.rows(), x.cols());
      if (symmetric && i != j) {
        e(i, j) = 0.5;
        e(j, i) = 0.5;
      } else {
        e(i, j) = 1.0;
      }
      g(i, j) = (f(x + h * e) - f(x - h * e)) / (2.0 * h);
      if (symmetric) g(j, i) = g(i, j);
    }
  }
  return g;
}

// Factor matrices without manifold constraints, for perturbation.
struct RawPoint {
  std::vector<Matrix> orth;
  Matrix spd;
  std::vector<Matrix> euclid;
};

inline RawPoint raw(const ProductPoint& x) {
  RawPoint r;
  for (const auto& o : x.orth) r.orth.push_back(o.matrix());
  if (x.spd) r.spd = x.spd->matrix();
  r.euclid = x.euclid;
  return r;
}

// Each variant's objective written out densely.
inline double dense_variant(ModelVariant v, const RawPoint& x, const DictionaryData& data, double lambda) {
  switch (v) {
    case ModelVariant::full: return dense_bilingual(x.orth[0], x.orth[1], x.spd, data, lambda);
    case ModelVariant::metric_only: return dense_classification(x.spd, data) + lambda * x.spd.squaredNorm();
    case ModelVariant::rotations_only:
      return dense_classification(x.orth[0] * x.orth[1].transpose(), data) +
             lambda * static_cast<double>(x.orth[0].rows());
    case ModelVariant::unconstrained_w:
      return dense_classification(x.euclid[0].transpose(), data) + lambda * x.euclid[0].squaredNorm();
    case ModelVariant::regression_loss:
      return dense_regression(x.orth[1] * x.spd * x.orth[0].transpose(), data) + lambda * x.spd.squaredNorm();
  }
  return 0.0;
}

// The regularizer never depends on an orthogonal factor, so those entries are
// differenced with lambda = 0. Otherwise a large lambda * ||B||^2 swamps the
// loss change in floating point.
inline RawPoint fd_variant_gradient(ModelVariant v, const RawPoint& x, const DictionaryData& data, double lambda) {
  RawPoint g;
  for (std::size_t i = 0; i < x.orth.size(); ++i)
    g.orth.push_back(fd_gradient(
        [&](const Matrix& m) {
          RawPoint y = x;
          y.orth[i] = m;
          return dense_variant(v, y, data, 0.0);
        },
        x.orth[i]));
  if (x.spd.size() > 0)
    g.spd = fd_gradient(
        [&](const Matrix& m) {
          RawPoint y = x;
          y.spd = m;
          return dense_variant(v, y, data, lambda);
        },
        x.spd, 1e-6, true);
  for (std::size_t i = 0; i < x.euclid.size(); ++i)
    g.euclid.push_back(fd_gradient(
        [&](const Matrix& m) {
          RawPoint y = x;
          y.euclid[i] = m;
          return dense_variant(v, y, data, lambda);
        },
        x.euclid[i]));
  return g;
}

inline ProductPoint random_variant_point(ModelVariant v, Index d, Rng& rng) {
  ProductPoint x = variant_initial_point(v, d);
  for (auto& o : x.orth) o = OrthPoint(random_orthogonal(d, rng));
  if (x.spd) x.spd = SpdPoint(random_spd(d, rng));
  for (auto& e : x.euclid) e = gaussian(d, d, rng);
  return x;
}

inline const ModelVariant kAllVariants[] = {ModelVariant::full, ModelVariant::unconstrained_w,
                                            ModelVariant::metric_only, ModelVariant::rotations_only,
                                            ModelVariant::regression_loss};

inline double rel_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

// Brute-force CSLS pieces over raw (unnormalized) matrices.
inline std::vector<double> brute_penalties(const Matrix& of, const Matrix& against, int k) {
  const Matrix a = normalize_columns(of);
  const Matrix b = normalize_columns(against);
  std::vector<double> out;
  for (Index i = 0; i < a.cols(); ++i) {
    std::vector<double> cos;
    for (Index j = 0; j < b.cols(); ++j) cos.push_back(a.col(i).dot(b.col(j)));
    std::sort(cos.begin(), cos.end(), std::greater<>());
    double s = 0.0;
    for (int t = 0; t < k; ++t) s += cos[static_cast<std::size_t>(t)];
    out.push_back(s / k);
  }
  return out;
}

// --- planted instances ---------------------------------------------------------

inline std::vector<std::string> make_vocab(const std::string& prefix, Index n) {
  std::vector<std::string> v;
  for (Index i = 0; i < n; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

struct PlantedPair {
  Embeddings src, tgt;
  Matrix q;                      // X_t = normalize(Q X_s + noise)
  std::vector<WordPair> train;   // first n_train words
  std::vector<WordPair> test;    // remaining words
};

// Word i of the source maps to word i of the target. With `noisy_fraction`
// > 0, that fraction of target columns gets additive Gaussian noise of
// relative size `noise` before renormalization.
inline PlantedPair planted_pair(Index d, Index n, Index n_train, Rng& rng, double noise = 0.0,
                                double noisy_fraction = 1.0) {
  PlantedPair p;
  const Matrix xs = random_unit_columns(d, n, rng);
  p.q = random_orthogonal(d, rng);
  Matrix xt = p.q * xs;
  if (noise > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Index j = 0; j < n; ++j)
      if (u(rng) < noisy_fraction) xt.col(j) += noise * gaussian(d, 1, rng).col(0) / std::sqrt(double(d));
  }
  xt = normalize_columns(xt);
  const auto sv = make_vocab("s", n), tv = make_vocab("t", n);
  p.src = Embeddings(sv, xs);
  p.tgt = Embeddings(tv, xt);
  for (Index i = 0; i < n; ++i) (i < n_train ? p.train : p.test).push_back({sv[i], tv[i]});
  return p;
}

struct PlantedMulti {
  std::vector<std::string> languages;
  std::vector<Embeddings> emb;  // X_i = R_i C
  std::vector<Matrix> r;
};

inline PlantedMulti planted_multi(Index d, Index n, std::size_t count, Rng& rng) {
  PlantedMulti m;
  const Matrix c = random_unit_columns(d, n, rng);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string lang = "l" + std::to_string(i + 1);
    m.languages.push_back(lang);
    m.r.push_back(random_orthogonal(d, rng));
    m.emb.emplace_back(make_vocab(lang + "_", n), m.r.back() * c);
  }
  return m;
}

inline std::vector<WordPair> aligned_pairs(const Embeddings& a, const Embeddings& b, Index from, Index to) {
  std::vector<WordPair> out;
  for (Index i = from; i < to; ++i) out.push_back({a.vocab()[i], b.vocab()[i]});
  return out;
}

// Unique temporary directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("geomm_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace geomm::testing
