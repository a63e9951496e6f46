#include "geomm/manifolds.hpp"

#include <Eigen/QR>
#include <cmath>
#include <sstream>

#include "geomm/error.hpp"
#include "geomm/log.hpp"

namespace geomm {
namespace {

constexpr double kOrthConstructionTol = 1e-8;
constexpr double kSpdConditionWarn = 1e12;

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << m.rows() << "x" << m.cols();
    throw DimensionMismatch(os.str());
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << what << ": shape " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x" << b.cols();
    throw DimensionMismatch(os.str());
  }
}

}  // namespace

Matrix sym(const Matrix& a) { return 0.5 * (a + a.transpose()); }

double orthogonality_error(const Matrix& u) {
  return (u.transpose() * u - Matrix::Identity(u.cols(), u.cols())).norm();
}

OrthPoint OrthPoint::identity(Index d) { return OrthPoint(Matrix::Identity(d, d)); }

OrthPoint::OrthPoint(Matrix u) : u_(std::move(u)) {
  require_square(u_, "OrthPoint");
  const double err = orthogonality_error(u_);
  if (!(err <= kOrthConstructionTol)) {
    std::ostringstream os;
    os << "OrthPoint: matrix is not orthogonal (||U^T U - I||_F = " << err << ")";
    throw NumericalError(os.str());
  }
}

SpdPoint SpdPoint::identity(Index d) { return SpdPoint(Matrix::Identity(d, d)); }

SpdPoint::SpdPoint(Matrix b) : b_(std::move(b)) {
  require_square(b_, "SpdPoint");
  b_ = sym(b_);
  if (!b_.allFinite()) throw NumericalError("SpdPoint: non-finite entries");
  llt_.compute(b_);
  if (llt_.info() != Eigen::Success) throw NumericalError("SpdPoint: matrix is not positive definite");
  const Vector diag = llt_.matrixLLT().diagonal();
  if (!(diag.minCoeff() > 0.0)) throw NumericalError("SpdPoint: matrix is not positive definite");
}

Matrix SpdPoint::solve(const Matrix& rhs) const { return llt_.solve(rhs); }

Matrix SpdPoint::whiten(const Matrix& x) const {
  const auto l = llt_.matrixL();
  Matrix left = l.solve(x);                                // L^{-1} X
  return l.solve(left.transpose()).transpose();            // (L^{-1} (L^{-1} X)^T)^T = L^{-1} X L^{-T}
}

double SpdPoint::condition_estimate() const {
  const Vector diag = llt_.matrixLLT().diagonal();
  const double ratio = diag.maxCoeff() / diag.minCoeff();
  return ratio * ratio;
}

TangentVector TangentVector::zero_like(const ProductPoint& x) {
  TangentVector v;
  v.orth.reserve(x.orth.size());
  for (const auto& u : x.orth) v.orth.push_back(Matrix::Zero(u.dim(), u.dim()));
  if (x.spd) v.spd = Matrix::Zero(x.spd->dim(), x.spd->dim());
  for (const auto& e : x.euclid) v.euclid.push_back(Matrix::Zero(e.rows(), e.cols()));
  return v;
}

TangentVector& TangentVector::operator+=(const TangentVector& other) {
  if (orth.size() != other.orth.size() || euclid.size() != other.euclid.size() ||
      spd.size() != other.spd.size())
    throw DimensionMismatch("TangentVector: factor layouts differ");
  for (std::size_t i = 0; i < orth.size(); ++i) orth[i] += other.orth[i];
  if (spd.size() > 0) spd += other.spd;
  for (std::size_t i = 0; i < euclid.size(); ++i) euclid[i] += other.euclid[i];
  return *this;
}

TangentVector& TangentVector::operator*=(double s) {
  for (auto& m : orth) m *= s;
  spd *= s;
  for (auto& m : euclid) m *= s;
  return *this;
}

bool TangentVector::all_finite() const {
  for (const auto& m : orth)
    if (!m.allFinite()) return false;
  if (!spd.allFinite()) return false;
  for (const auto& m : euclid)
    if (!m.allFinite()) return false;
  return true;
}

TangentVector operator+(TangentVector a, const TangentVector& b) { return a += b; }
TangentVector operator-(const TangentVector& a, const TangentVector& b) { return a + (-1.0) * b; }
TangentVector operator*(double s, TangentVector v) { return v *= s; }
TangentVector operator-(TangentVector v) { return v *= -1.0; }

Matrix orth_project(const OrthPoint& u, const Matrix& g) {
  require_same_shape(u.matrix(), g, "orth_project");
  const Matrix& um = u.matrix();
  return g - um * sym(um.transpose() * g);
}

Matrix orth_retract_matrix(const Matrix& u, const Matrix& xi, double step) {
  require_same_shape(u, xi, "orth_retract");
  const Matrix y = u + step * xi;
  if (!y.allFinite()) throw NumericalError("orth_retract: non-finite step");
  const Index d = y.rows();
  Eigen::HouseholderQR<Matrix> qr(y);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Vector rdiag = r.diagonal();
  const double scale = rdiag.cwiseAbs().maxCoeff();
  if (!(rdiag.cwiseAbs().minCoeff() > static_cast<double>(d) * 1e-14 * scale))
    throw NumericalError("orth_retract: U + step * xi is rank deficient");
  for (Index i = 0; i < d; ++i)
    if (rdiag(i) < 0.0) q.col(i) = -q.col(i);
  return q;
}

OrthPoint orth_retract(const OrthPoint& u, const Matrix& xi, double step) {
  return OrthPoint(orth_retract_matrix(u.matrix(), xi, step));
}

Matrix spd_egrad_to_rgrad(const SpdPoint& b, const Matrix& g) {
  require_same_shape(b.matrix(), g, "spd_egrad_to_rgrad");
  const Matrix& bm = b.matrix();
  return sym(bm * sym(g) * bm);
}

double spd_inner(const SpdPoint& b, const Matrix& xi, const Matrix& eta) {
  require_same_shape(b.matrix(), xi, "spd_inner");
  require_same_shape(b.matrix(), eta, "spd_inner");
  // With B = L L^T, tr(B^-1 xi B^-1 eta) = <L^-1 xi L^-T, L^-1 eta L^-T>_F,
  // which is symmetric in (xi, eta) term by term.
  const Matrix wx = b.whiten(xi);
  const Matrix we = b.whiten(eta);
  const double r = wx.cwiseProduct(we).sum();
  if (!std::isfinite(r)) throw NumericalError("spd_inner: metric is ill-conditioned");
  return r;
}

SpdPoint spd_retract(const SpdPoint& b, const Matrix& xi, double step) {
  require_same_shape(b.matrix(), xi, "spd_retract");
  const Matrix sxi = sym(xi);
  Matrix next = b.matrix() + step * sxi + (0.5 * step * step) * (sxi * b.solve(sxi));
  SpdPoint out(sym(next));
  if (out.condition_estimate() > kSpdConditionWarn) {
    std::ostringstream os;
    os << "spd_retract: condition number estimate " << out.condition_estimate() << " exceeds 1e12";
    warn(os.str());
  }
  return out;
}

void check_layout(const ProductPoint& x, const TangentVector& v) {
  if (v.orth.size() != x.orth.size() || v.euclid.size() != x.euclid.size())
    throw DimensionMismatch("tangent vector factor count does not match point");
  for (std::size_t i = 0; i < x.orth.size(); ++i)
    require_same_shape(x.orth[i].matrix(), v.orth[i], "orthogonal factor");
  if (x.spd) {
    require_same_shape(x.spd->matrix(), v.spd, "spd factor");
  } else if (v.spd.size() != 0) {
    throw DimensionMismatch("tangent vector has an spd component but the point does not");
  }
  for (std::size_t i = 0; i < x.euclid.size(); ++i)
    require_same_shape(x.euclid[i], v.euclid[i], "euclidean factor");
}

TangentVector egrad_to_rgrad(const ProductPoint& x, const TangentVector& egrad) {
  check_layout(x, egrad);
  TangentVector r;
  r.orth.reserve(x.orth.size());
  for (std::size_t i = 0; i < x.orth.size(); ++i) r.orth.push_back(orth_project(x.orth[i], egrad.orth[i]));
  if (x.spd) r.spd = spd_egrad_to_rgrad(*x.spd, egrad.spd);
  r.euclid = egrad.euclid;
  return r;
}

TangentVector project(const ProductPoint& x, const TangentVector& v) {
  check_layout(x, v);
  TangentVector r;
  r.orth.reserve(x.orth.size());
  for (std::size_t i = 0; i < x.orth.size(); ++i) r.orth.push_back(orth_project(x.orth[i], v.orth[i]));
  if (x.spd) r.spd = sym(v.spd);
  r.euclid = v.euclid;
  return r;
}

ProductPoint retract(const ProductPoint& x, const TangentVector& xi, double step) {
  check_layout(x, xi);
  ProductPoint y;
  y.orth.reserve(x.orth.size());
  for (std::size_t i = 0; i < x.orth.size(); ++i) y.orth.push_back(orth_retract(x.orth[i], xi.orth[i], step));
  if (x.spd) y.spd = spd_retract(*x.spd, xi.spd, step);
  y.euclid.reserve(x.euclid.size());
  for (std::size_t i = 0; i < x.euclid.size(); ++i) y.euclid.push_back(x.euclid[i] + step * xi.euclid[i]);
  return y;
}

TangentVector transport(const ProductPoint& from, const ProductPoint& to, const TangentVector& xi) {
  check_layout(from, xi);
  return project(to, xi);
}

double product_inner(const ProductPoint& x, const TangentVector& xi, const TangentVector& eta) {
  check_layout(x, xi);
  check_layout(x, eta);
  double s = 0.0;
  for (std::size_t i = 0; i < x.orth.size(); ++i) s += xi.orth[i].cwiseProduct(eta.orth[i]).sum();
  if (x.spd) s += spd_inner(*x.spd, xi.spd, eta.spd);
  for (std::size_t i = 0; i < x.euclid.size(); ++i) s += xi.euclid[i].cwiseProduct(eta.euclid[i]).sum();
  return s;
}

double product_norm(const ProductPoint& x, const TangentVector& xi) {
  return std::sqrt(std::max(0.0, product_inner(x, xi, xi)));
}

}  // namespace geomm
