#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include "geomm/error.hpp"
#include "geomm/log.hpp"
#include "geomm/manifolds.hpp"
#include "support.hpp"

using namespace geomm;
using namespace geomm::testing;

namespace {

Matrix m2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

double min_eig(const Matrix& b) { return Eigen::SelfAdjointEigenSolver<Matrix>(b).eigenvalues().minCoeff(); }

}  // namespace

TEST(OrthProject, ZeroGradient) {
  EXPECT_EQ(orth_project(OrthPoint::identity(2), Matrix::Zero(2, 2)).norm(), 0.0);
}

TEST(OrthProject, SkewIsTangentAtIdentity) {
  const Matrix g = m2(0, -1, 1, 0);
  EXPECT_LE((orth_project(OrthPoint::identity(2), g) - g).norm(), 1e-15);
}

TEST(OrthProject, SymmetricAnnihilatedAtIdentity) {
  EXPECT_LE(orth_project(OrthPoint::identity(2), Matrix::Identity(2, 2)).norm(), 1e-15);
}

TEST(OrthProject, ResultIsTangentAndIdempotent) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const OrthPoint u(random_orthogonal(6, rng));
    const Matrix p = orth_project(u, gaussian(6, 6, rng));
    const Matrix s = u.matrix().transpose() * p;
    EXPECT_LE((s + s.transpose()).norm(), 1e-12);
    EXPECT_LE((orth_project(u, p) - p).norm(), 1e-12);
  }
}

TEST(OrthPoint, RejectsNonOrthogonal) {
  EXPECT_THROW(OrthPoint(m2(1, 0.1, 0, 1)), NumericalError);
}

TEST(OrthRetract, ZeroTangentKeepsPoint) {
  Rng rng(2);
  EXPECT_LE((orth_retract(OrthPoint::identity(4), Matrix::Zero(4, 4), 3.0).matrix() - Matrix::Identity(4, 4)).norm(),
            1e-15);
  const Matrix u = random_orthogonal(5, rng);
  EXPECT_LE((orth_retract(OrthPoint(u), Matrix::Zero(5, 5), 0.7).matrix() - u).norm(), 1e-14);
}

TEST(OrthRetract, PlanarRotationMatchesExponentialToSecondOrder) {
  const Matrix xi = m2(0, -1, 1, 0);
  for (double t : {1e-3, 1e-4}) {
    const Matrix r = orth_retract(OrthPoint::identity(2), xi, t).matrix();
    EXPECT_LE((r.transpose() * r - Matrix::Identity(2, 2)).norm(), 1e-12);
    const Matrix expm = (t * xi).exp();
    EXPECT_LE((r - expm).norm(), 10.0 * t * t);
    EXPECT_LE((r - (Matrix::Identity(2, 2) + t * xi)).norm(), 10.0 * t * t);
  }
}

TEST(OrthRetract, StaysOrthogonalForLargeSteps) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const OrthPoint u(random_orthogonal(8, rng));
    const Matrix xi = orth_project(u, gaussian(8, 8, rng));
    EXPECT_LE(orthogonality_error(orth_retract(u, xi, 5.0).matrix()), 1e-12);
  }
}

TEST(SpdPoint, RejectsIndefinite) { EXPECT_THROW(SpdPoint(m2(1, 2, 2, 1)), NumericalError); }

TEST(SpdRgrad, IdentityMetricIsEuclidean) {
  Rng rng(4);
  const Matrix g = random_symmetric(4, rng);
  EXPECT_LE((spd_egrad_to_rgrad(SpdPoint::identity(4), g) - g).norm(), 1e-15);
}

TEST(SpdRgrad, ScaledIdentity) {
  EXPECT_LE((spd_egrad_to_rgrad(SpdPoint(2.0 * Matrix::Identity(2, 2)), Matrix::Identity(2, 2)) -
             4.0 * Matrix::Identity(2, 2))
                .norm(),
            1e-15);
}

TEST(SpdRgrad, MetricCompatibility) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const SpdPoint b(random_spd(5, rng));
    const Matrix g = gaussian(5, 5, rng);
    const Matrix rg = spd_egrad_to_rgrad(b, g);
    EXPECT_LE((rg - rg.transpose()).norm(), 1e-12 * rg.norm());
    const Matrix xi = random_symmetric(5, rng);
    const double lhs = spd_inner(b, rg, xi);
    const double rhs = (sym(g) * xi).trace();
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(SpdInner, Examples) {
  EXPECT_NEAR(spd_inner(SpdPoint::identity(3), Matrix::Identity(3, 3), Matrix::Identity(3, 3)), 3.0, 1e-15);
  EXPECT_NEAR(spd_inner(SpdPoint(2.0 * Matrix::Identity(2, 2)), Matrix::Identity(2, 2), Matrix::Identity(2, 2)), 0.5,
              1e-15);
}

TEST(SpdInner, Symmetric) {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const SpdPoint b(random_spd(6, rng, 0.1, 10.0));
    const Matrix xi = random_symmetric(6, rng), eta = random_symmetric(6, rng);
    EXPECT_EQ(spd_inner(b, xi, eta), spd_inner(b, eta, xi));
  }
}

TEST(SpdRetract, Examples) {
  EXPECT_LE((spd_retract(SpdPoint::identity(3), Matrix::Zero(3, 3), 1.0).matrix() - Matrix::Identity(3, 3)).norm(),
            1e-15);
  EXPECT_LE(
      (spd_retract(SpdPoint::identity(3), Matrix::Identity(3, 3), 1.0).matrix() - 2.5 * Matrix::Identity(3, 3)).norm(),
      1e-15);
}

TEST(SpdRetract, StaysPositiveDefinite) {
  Rng rng(7);
  std::uniform_real_distribution<double> step(-20.0, 20.0);
  for (int t = 0; t < 50; ++t) {
    const SpdPoint b(random_spd(5, rng, 0.01, 3.0));
    const Matrix xi = 5.0 * random_symmetric(5, rng);
    const SpdPoint r = spd_retract(b, xi, step(rng));
    EXPECT_GT(min_eig(r.matrix()), 0.0);
  }
}

TEST(SpdRetract, WarnsOnIllConditioning) {
  std::vector<std::string> seen;
  ScopedWarningSink sink([&](std::string_view m) { seen.emplace_back(m); });
  Matrix b = Matrix::Identity(2, 2);
  b(1, 1) = 1e-14;
  spd_retract(SpdPoint(b), Matrix::Zero(2, 2), 1.0);
  EXPECT_FALSE(seen.empty());
}

TEST(Transport, SamePointIsIdentityOnTangentVectors) {
  Rng rng(8);
  ProductPoint x{{OrthPoint(random_orthogonal(4, rng))}, SpdPoint(random_spd(4, rng)), {}};
  TangentVector v = TangentVector::zero_like(x);
  v.orth[0] = orth_project(x.orth[0], gaussian(4, 4, rng));
  v.spd = random_symmetric(4, rng);
  const TangentVector w = transport(x, x, v);
  EXPECT_LE((w.orth[0] - v.orth[0]).norm(), 1e-14);
  EXPECT_LE((w.spd - v.spd).norm(), 1e-14);
}

TEST(Transport, ResultIsTangentAtDestination) {
  Rng rng(9);
  for (int t = 0; t < 10; ++t) {
    ProductPoint a{{OrthPoint(random_orthogonal(5, rng))}, SpdPoint(random_spd(5, rng)), {}};
    ProductPoint b{{OrthPoint(random_orthogonal(5, rng))}, SpdPoint(random_spd(5, rng)), {}};
    TangentVector v = TangentVector::zero_like(a);
    v.orth[0] = orth_project(a.orth[0], gaussian(5, 5, rng));
    v.spd = random_symmetric(5, rng);
    const TangentVector w = transport(a, b, v);
    const Matrix s = b.orth[0].matrix().transpose() * w.orth[0];
    EXPECT_LE((s + s.transpose()).norm(), 1e-10);
    EXPECT_LE((w.spd - w.spd.transpose()).norm(), 1e-14);
  }
}

TEST(ProductInner, ZeroAndSingleFactor) {
  Rng rng(10);
  ProductPoint x{{OrthPoint(random_orthogonal(3, rng))}, SpdPoint(random_spd(3, rng)), {}};
  TangentVector z = TangentVector::zero_like(x);
  EXPECT_EQ(product_inner(x, z, z), 0.0);
  TangentVector v = z;
  v.spd = random_symmetric(3, rng);
  EXPECT_NEAR(product_inner(x, v, v), spd_inner(*x.spd, v.spd, v.spd), 1e-14);
  TangentVector o = z;
  o.orth[0] = orth_project(x.orth[0], gaussian(3, 3, rng));
  EXPECT_NEAR(product_inner(x, o, o), o.orth[0].squaredNorm(), 1e-14);
}

TEST(ProductInner, CauchySchwarz) {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    ProductPoint x{{OrthPoint(random_orthogonal(4, rng)), OrthPoint(random_orthogonal(4, rng))},
                   SpdPoint(random_spd(4, rng)),
                   {Matrix::Zero(4, 4)}};
    auto rnd = [&] {
      TangentVector v = TangentVector::zero_like(x);
      for (std::size_t i = 0; i < 2; ++i) v.orth[i] = orth_project(x.orth[i], gaussian(4, 4, rng));
      v.spd = random_symmetric(4, rng);
      v.euclid[0] = gaussian(4, 4, rng);
      return v;
    };
    const TangentVector a = rnd(), b = rnd();
    EXPECT_LE(std::abs(product_inner(x, a, b)), product_norm(x, a) * product_norm(x, b) * (1 + 1e-12));
  }
}

TEST(Product, LayoutMismatchThrows) {
  ProductPoint x{{OrthPoint::identity(3)}, SpdPoint::identity(3), {}};
  TangentVector v;
  v.spd = Matrix::Zero(3, 3);
  EXPECT_THROW(check_layout(x, v), DimensionMismatch);
}
