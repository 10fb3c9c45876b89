#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "chrono_lens/metric.hpp"
#include "test_util.hpp"

using namespace chronolens;
namespace tu = chronolens::testutil;

namespace {

std::vector<MetricSpec> full_catalog() {
  return {tu::minkowski(4),      tu::minkowski(3),     tu::conformal_bump(4),
          tu::conformal_bump(3), tu::einstein_cylinder(), tu::product_sphere(),
          tu::product_bump(3),   tu::product_bump(4),  tu::schwarzschild()};
}

// analytic bump derivatives used by the curvature oracles
struct Bump {
  double amp, w;
  VecN center;
  double value(const VecN& x) const {
    return amp * std::exp(-(x - center).squaredNorm() / (2.0 * w * w));
  }
  VecN grad(const VecN& x) const { return -(x - center) / (w * w) * value(x); }
  MatN hess(const VecN& x) const {
    const int n = x.size();
    VecN d = x - center;
    MatN h = (d * d.transpose()) / (w * w * w * w) * value(x);
    h -= MatN::Identity(n, n) / (w * w) * value(x);
    return h;
  }
};

}  // namespace

TEST_CASE("minkowski metric is diag(-1,1,1,1)") {
  MetricSpec spec = tu::minkowski(4);
  Event e;
  e.x.setZero(4);
  e.x << 0.3, -1.2, 0.7, 2.0;
  MetricEval ev = eval_metric(spec, e);
  MatN expect = MatN::Identity(4, 4);
  expect(0, 0) = -1.0;
  CHECK((ev.g - expect).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ev.det_g == doctest::Approx(-1.0));
}

TEST_CASE("conformal bump with amplitude 0 equals minkowski") {
  MetricSpec spec = tu::conformal_bump(4, 0.0);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    Event e = tu::random_interior_event(spec, rng);
    MetricEval ev = eval_metric(spec, e);
    MatN expect = MatN::Identity(4, 4);
    expect(0, 0) = -1.0;
    CHECK((ev.g - expect).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("einstein cylinder R=2 at origin is diag(-1,4)") {
  MetricSpec spec = tu::einstein_cylinder(2.0);
  Event e;
  e.x.setZero(2);
  MetricEval ev = eval_metric(spec, e);
  CHECK(ev.g(0, 0) == doctest::Approx(-1.0));
  CHECK(ev.g(1, 1) == doctest::Approx(4.0));
}

TEST_CASE("eval_metric rejects out-of-domain events") {
  MetricSpec spec = tu::minkowski(4);
  Event e;
  e.x.setZero(4);
  e.x[1] = 100.0;
  CHECK_THROWS_AS(eval_metric(spec, e), OutOfDomainError);
}

TEST_CASE("signature and inverse across the catalog") {
  std::mt19937_64 rng(42);
  for (const auto& spec : full_catalog()) {
    for (int i = 0; i < 1000; ++i) {
      Event e = tu::random_interior_event(spec, rng);
      MetricEval ev = eval_metric(spec, e);
      // exactly one negative eigenvalue
      Eigen::SelfAdjointEigenSolver<MatN> es(ev.g);
      int neg = 0;
      for (int k = 0; k < spec.dim; ++k)
        if (es.eigenvalues()[k] < 0) ++neg;
      REQUIRE(neg == 1);
      CHECK(ev.det_g < 0.0);
      // g . g_inv = I
      MatN prod = ev.g * ev.g_inv;
      CHECK((prod - MatN::Identity(spec.dim, spec.dim)).cwiseAbs().maxCoeff() < 1e-12);
      // x^0 is a time function: g(dx^0, dx^0) = g^00 < 0
      CHECK(ev.g_inv(0, 0) < 0.0);
      // symmetry exact
      CHECK((ev.g - ev.g.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("minkowski christoffels vanish") {
  MetricSpec spec = tu::minkowski(4);
  std::mt19937_64 rng(3);
  Event e = tu::random_interior_event(spec, rng);
  for (const auto& mode : {DerivativeMode::analytic, DerivativeMode::finite_difference}) {
    Christoffel g = christoffel(spec, e, mode);
    for (int k = 0; k < 4; ++k) CHECK(g[k].cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("conformal metric christoffels match the closed form") {
  // Gamma^k_ij = delta^k_i d_j phi + delta^k_j d_i phi - eta_ij eta^{kl} d_l phi
  MetricSpec spec = tu::conformal_bump(4, 0.3, 1.3);
  Bump bump{0.3, 1.3, VecN::Zero(4)};
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    Event e = tu::random_interior_event(spec, rng);
    VecN dphi = bump.grad(e.x);
    VecN eta_diag(4);
    eta_diag << -1, 1, 1, 1;
    Christoffel got_fd = christoffel(spec, e, DerivativeMode::finite_difference);
    Christoffel got_an = christoffel(spec, e, DerivativeMode::analytic);
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          double expect = (k == i ? dphi[j] : 0.0) + (k == j ? dphi[i] : 0.0) -
                          (i == j ? eta_diag[i] : 0.0) * (1.0 / eta_diag[k]) * dphi[k];
          CHECK(got_an[k](i, j) == doctest::Approx(expect).epsilon(1e-10));
          CHECK(std::abs(got_fd[k](i, j) - expect) < 1e-7);
        }
  }
}

TEST_CASE("schwarzschild Gamma^t_tr = m/(r(r-2m))") {
  const double m = 1.0;
  MetricSpec spec = tu::schwarzschild(m);
  Event e;
  e.x.resize(4);
  e.x << 0.0, 6.0, 1.3, 2.0;
  for (const auto& mode : {DerivativeMode::analytic, DerivativeMode::finite_difference}) {
    Christoffel g = christoffel(spec, e, mode);
    double r = e.x[1];
    CHECK(g[0](0, 1) == doctest::Approx(m / (r * (r - 2 * m))).epsilon(1e-8));
    // lower-index symmetry
    for (int k = 0; k < 4; ++k)
      CHECK((g[k] - g[k].transpose()).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("fd christoffels agree with analytic across the catalog") {
  std::mt19937_64 rng(99);
  for (const auto& spec : full_catalog()) {
    for (int i = 0; i < 30; ++i) {
      Event e = tu::random_interior_event(spec, rng);
      Christoffel an = christoffel(spec, e, DerivativeMode::analytic);
      Christoffel fd = christoffel(spec, e, DerivativeMode::finite_difference);
      double err = 0.0;
      for (int k = 0; k < spec.dim; ++k)
        err = std::max(err, (an[k] - fd[k]).cwiseAbs().maxCoeff());
      CHECK(err < 1e-7);
    }
  }
}

TEST_CASE("ricci of minkowski vanishes") {
  MetricSpec spec = tu::minkowski(4);
  std::mt19937_64 rng(5);
  Event e = tu::random_interior_event(spec, rng);
  CHECK(ricci(spec, e).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("schwarzschild exterior is vacuum") {
  MetricSpec spec = tu::schwarzschild(1.0);
  std::mt19937_64 rng(17);
  for (int i = 0; i < 10; ++i) {
    Event e = tu::random_interior_event(spec, rng);
    if (e.x[1] < 2.5) e.x[1] = 2.5 + (e.x[1] - spec.domain[1][0]);
    MatN ric = ricci(spec, e);
    CHECK(ric.cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("conformal ricci matches the transformation law") {
  // For g_hat = e^{2f} eta (n = 4):
  //   Ric(g_hat)_jk = -2 d_j d_k f + 2 d_j f d_k f - (box f + 2 |df|^2) eta_jk
  const double A = 0.2, W = 1.4;
  MetricSpec spec = tu::conformal_bump(4, A, W);
  Bump bump{A, W, VecN::Zero(4)};
  VecN eta_diag(4);
  eta_diag << -1, 1, 1, 1;
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 15; ++trial) {
    Event e = tu::random_interior_event(spec, rng);
    VecN df = bump.grad(e.x);
    MatN ddf = bump.hess(e.x);
    double box = 0.0, df2 = 0.0;
    for (int p = 0; p < 4; ++p) {
      box += (1.0 / eta_diag[p]) * ddf(p, p);
      df2 += (1.0 / eta_diag[p]) * df[p] * df[p];
    }
    MatN expect = -2.0 * ddf + 2.0 * (df * df.transpose());
    for (int j = 0; j < 4; ++j) expect(j, j) -= (box + 2.0 * df2) * eta_diag[j];
    MatN got = ricci(spec, e);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("riemannian companion") {
  SUBCASE("minkowski -> identity") {
    MetricSpec spec = tu::minkowski(4);
    Event e;
    e.x.setZero(4);
    CHECK((riemannian_companion(spec, e) - MatN::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("einstein cylinder R=2 -> diag(1,4)") {
    MetricSpec spec = tu::einstein_cylinder(2.0);
    Event e;
    e.x.setZero(2);
    MatN gp = riemannian_companion(spec, e);
    CHECK(gp(0, 0) == doctest::Approx(1.0));
    CHECK(gp(1, 1) == doctest::Approx(4.0));
  }
  SUBCASE("conformal bump -> e^{2 phi} I") {
    MetricSpec spec = tu::conformal_bump(4, 0.3, 1.0);
    Bump bump{0.3, 1.0, VecN::Zero(4)};
    std::mt19937_64 rng(31);
    Event e = tu::random_interior_event(spec, rng);
    double c = std::exp(2.0 * bump.value(e.x));
    MatN gp = riemannian_companion(spec, e);
    CHECK((gp - c * MatN::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("SPD at random points across the catalog") {
    std::mt19937_64 rng(37);
    for (const auto& spec : full_catalog()) {
      for (int i = 0; i < 50; ++i) {
        Event e = tu::random_interior_event(spec, rng);
        MatN gp = riemannian_companion(spec, e);
        Eigen::MatrixXd gpd = gp;
        Eigen::LLT<Eigen::MatrixXd> llt(gpd);
        CHECK(llt.info() == Eigen::Success);
      }
    }
  }
}

TEST_CASE("causal character classification") {
  MetricSpec spec = tu::minkowski(4);
  TangentVector v;
  v.base.x.setZero(4);
  v.xi.resize(4);

  v.xi << 1, 0, 0, 0;
  auto c = causal_character(spec, v);
  CHECK(c.character == CausalCharacter::timelike);
  CHECK(c.g_xixi == doctest::Approx(-1.0));

  v.xi << 1, 1, 0, 0;
  c = causal_character(spec, v);
  CHECK(c.character == CausalCharacter::null);
  CHECK(c.g_xixi == doctest::Approx(0.0));

  v.xi << 0, 1, 0, 0;
  c = causal_character(spec, v);
  CHECK(c.character == CausalCharacter::spacelike);
  CHECK(c.g_xixi == doctest::Approx(1.0));
}
