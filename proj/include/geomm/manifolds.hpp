#pragma once

// Orthogonal group O(d), the SPD cone with its affine-invariant metric, and
// their product. Every function here is pure.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <optional>
#include <vector>

namespace geomm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// (A + A^T) / 2
Matrix sym(const Matrix& a);

// ||U^T U - I||_F
double orthogonality_error(const Matrix& u);

// A d x d orthogonal matrix. Construction rejects matrices that are not
// orthogonal within 1e-8.
class OrthPoint {
 public:
  static OrthPoint identity(Index d);

  explicit OrthPoint(Matrix u);

  const Matrix& matrix() const { return u_; }
  Index dim() const { return u_.rows(); }

 private:
  Matrix u_;
};

// A d x d symmetric positive-definite matrix together with its Cholesky
// factor. The stored matrix is exactly symmetric.
class SpdPoint {
 public:
  static SpdPoint identity(Index d);

  // Symmetrizes `b`; throws NumericalError if the result is not positive definite.
  explicit SpdPoint(Matrix b);

  const Matrix& matrix() const { return b_; }
  Index dim() const { return b_.rows(); }

  // B^{-1} rhs
  Matrix solve(const Matrix& rhs) const;
  // L^{-1} X L^{-T} where B = L L^T
  Matrix whiten(const Matrix& x) const;
  // Cheap lower bound on the 2-norm condition number, from the Cholesky diagonal.
  double condition_estimate() const;

 private:
  Matrix b_;
  Eigen::LLT<Matrix> llt_;
};

// Point on O(d)^k x SPD(d)^{0|1} x R^{d x d}^m. Factor lists may be empty;
// the euclidean factors host unconstrained ablations.
struct ProductPoint {
  std::vector<OrthPoint> orth;
  std::optional<SpdPoint> spd;
  std::vector<Matrix> euclid;
};

// Per-factor tangent components mirroring ProductPoint. `spd` is 0x0 when the
// point has no SPD factor. Also used to carry Euclidean gradients.
struct TangentVector {
  std::vector<Matrix> orth;
  Matrix spd;
  std::vector<Matrix> euclid;

  static TangentVector zero_like(const ProductPoint& x);

  TangentVector& operator+=(const TangentVector& other);
  TangentVector& operator*=(double s);
  bool all_finite() const;
};

TangentVector operator+(TangentVector a, const TangentVector& b);
TangentVector operator-(const TangentVector& a, const TangentVector& b);
TangentVector operator*(double s, TangentVector v);
TangentVector operator-(TangentVector v);

// --- O(d) -------------------------------------------------------------------

// G - U sym(U^T G): orthogonal projection onto the tangent space at U. This is
// also the Riemannian gradient under the embedded metric.
Matrix orth_project(const OrthPoint& u, const Matrix& g);

// Q factor of qr(U + step * xi), with columns signed so that diag(R) > 0.
// Throws NumericalError if U + step * xi is rank deficient.
Matrix orth_retract_matrix(const Matrix& u, const Matrix& xi, double step);
OrthPoint orth_retract(const OrthPoint& u, const Matrix& xi, double step);

// --- SPD(d), affine-invariant metric ----------------------------------------

// B sym(G) B
Matrix spd_egrad_to_rgrad(const SpdPoint& b, const Matrix& g);

// tr(B^{-1} xi B^{-1} eta)
double spd_inner(const SpdPoint& b, const Matrix& xi, const Matrix& eta);

// B + s xi + (s^2 / 2) xi B^{-1} xi. Positive definite for every s because it
// equals B/2 + (B + s xi) B^{-1} (B + s xi) / 2. Warns when the condition
// estimate exceeds 1e12.
SpdPoint spd_retract(const SpdPoint& b, const Matrix& xi, double step);

// --- product ------------------------------------------------------------------

// Projects a Euclidean gradient to the tangent space (orthogonal factors) and
// applies the metric correction (SPD factor). Euclidean factors pass through.
TangentVector egrad_to_rgrad(const ProductPoint& x, const TangentVector& egrad);

// Projection onto the tangent space at x (identity on SPD and Euclidean parts,
// apart from symmetrization).
TangentVector project(const ProductPoint& x, const TangentVector& v);

ProductPoint retract(const ProductPoint& x, const TangentVector& xi, double step);

// Projection-based vector transport from `from` to `to`.
TangentVector transport(const ProductPoint& from, const ProductPoint& to, const TangentVector& xi);

double product_inner(const ProductPoint& x, const TangentVector& xi, const TangentVector& eta);
double product_norm(const ProductPoint& x, const TangentVector& xi);

// Throws DimensionMismatch unless `v` has the factor layout of `x`.
void check_layout(const ProductPoint& x, const TangentVector& v);

}  // namespace geomm
