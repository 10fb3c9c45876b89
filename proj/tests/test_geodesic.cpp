#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "chrono_lens/causal.hpp"
#include "chrono_lens/geodesic.hpp"
#include "test_util.hpp"

using namespace chronolens;
namespace tu = chronolens::testutil;

namespace {
constexpr double kPi = 3.14159265358979323846;

double gplus_dist(const MetricSpec& spec, const VecN& a, const VecN& b) {
  VecN d(spec.dim);
  for (int k = 0; k < spec.dim; ++k) d[k] = wrap_delta(spec, k, a[k] - b[k]);
  return std::sqrt(gplus_norm2(spec, Event{a}, d));
}
}  // namespace

TEST_CASE("minkowski null geodesic is a straight line") {
  MetricSpec spec = tu::minkowski(4);
  Event x;
  x.x.setZero(4);
  VecN xi(4);
  xi << 1, 1, 0, 0;
  GeodesicSegment seg = integrate_geodesic(spec, x, xi, 2.0);
  REQUIRE(seg.termination == Termination::reached_param);
  VecN expect(4);
  expect << 2, 2, 0, 0;
  CHECK((seg.back().x - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("cylinder null ray wraps: x(s) = (s, s mod 2pi)") {
  MetricSpec spec = tu::einstein_cylinder(1.0);
  Event x;
  x.x.setZero(2);
  VecN xi(2);
  xi << 1, 1;
  GeodesicSegment seg = integrate_geodesic(spec, x, xi, 7.0);
  REQUIRE(seg.termination == Termination::reached_param);
  CHECK(seg.back().x[0] == doctest::Approx(7.0));
  CHECK(wrap_delta(spec, 1, seg.back().x[1] - std::fmod(7.0, 2.0 * kPi)) ==
        doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("photon sphere: circular null orbit at r = 3m") {
  MetricSpec spec = tu::schwarzschild(1.0);
  Event x;
  x.x.resize(4);
  x.x << 0.0, 3.0, kPi / 2.0, 0.0;
  VecN xi(4);
  xi << 1.0, 0.0, 0.0, 1.0 / std::sqrt(27.0);
  // one full orbit: dphi/ds = 1/sqrt(27)
  double s_orbit = 2.0 * kPi * std::sqrt(27.0);
  GeodesicSegment seg = integrate_geodesic(spec, x, xi, s_orbit);
  REQUIRE(seg.termination == Termination::reached_param);
  double max_dev = 0.0;
  for (const auto& smp : seg.samples) max_dev = std::max(max_dev, std::abs(smp.x[1] - 3.0));
  CHECK(max_dev < 1e-4);
}

TEST_CASE("exp map") {
  MetricSpec spec = tu::minkowski(4);
  Event x;
  x.x.setZero(4);
  SUBCASE("unit time translation") {
    VecN xi(4);
    xi << 1, 0, 0, 0;
    Event y = exp_map(spec, x, xi);
    VecN expect(4);
    expect << 1, 0, 0, 0;
    CHECK((y.x - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("zero vector returns the base point") {
    VecN xi = VecN::Zero(4);
    Event y = exp_map(spec, x, xi);
    CHECK((y.x - x.x).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("cylinder wrap") {
    MetricSpec cyl = tu::einstein_cylinder(1.0);
    Event x0;
    x0.x.setZero(2);
    VecN xi(2);
    xi << 0.5, 9.0;  // wraps past 2pi
    Event y = exp_map(cyl, x0, xi);
    CHECK(y.x[0] == doctest::Approx(0.5));
    CHECK(wrap_delta(cyl, 1, y.x[1] - std::fmod(9.0, 2.0 * kPi)) ==
          doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("norm conservation on random geodesics") {
  std::mt19937_64 rng(101);
  std::vector<MetricSpec> specs = {tu::minkowski(4), tu::conformal_bump(4, 0.1),
                                   tu::einstein_cylinder(1.0), tu::product_sphere(),
                                   tu::product_bump(3, 0.1)};
  int tested = 0;
  for (const auto& spec : specs) {
    for (int i = 0; i < 40; ++i) {
      Event x = tu::random_interior_event(spec, rng, 0.25);
      VecN xi(spec.dim);
      std::normal_distribution<double> nd(0.0, 1.0);
      for (int k = 0; k < spec.dim; ++k) xi[k] = nd(rng);
      if (xi.norm() < 1e-3) continue;
      double np0 = gplus_norm2(spec, x, xi);
      double g0 = xi.dot(eval_metric(spec, x).g * xi);
      GeodesicOptions opt;
      opt.null_renorm_every = 0;  // raw conservation, no cone projection
      GeodesicSegment seg = integrate_geodesic(spec, x, xi, 2.0, opt);
      for (const auto& smp : seg.samples) {
        CHECK(std::abs(smp.g_vv - g0) < 1e-8 * (1.0 + np0));
        ++tested;
      }
      // samples strictly increasing in s
      for (std::size_t j = 1; j < seg.samples.size(); ++j)
        REQUIRE(seg.samples[j].s > seg.samples[j - 1].s);
    }
  }
  CHECK(tested > 200);
}

TEST_CASE("reversibility: integrate out and back") {
  std::mt19937_64 rng(202);
  std::vector<MetricSpec> specs = {tu::conformal_bump(4, 0.1), tu::product_sphere(),
                                   tu::schwarzschild()};
  for (const auto& spec : specs) {
    for (int i = 0; i < 8; ++i) {
      Event x = tu::random_interior_event(spec, rng, 0.3);
      VecN xi(spec.dim);
      std::normal_distribution<double> nd(0.0, 1.0);
      for (int k = 0; k < spec.dim; ++k) xi[k] = nd(rng);
      xi *= 0.5;
      GeodesicOptions opt;
      opt.null_renorm_every = 0;
      GeodesicSegment fwd = integrate_geodesic(spec, x, xi, 1.5, opt);
      const auto& end = fwd.back();
      if (end.s < 1e-6) continue;
      GeodesicSegment back =
          integrate_geodesic(spec, Event{end.x}, VecN(-end.v), end.s, opt);
      CHECK(gplus_dist(spec, back.back().x, x.x) < 1e-6);
    }
  }
}

TEST_CASE("jacobi conjugate points") {
  SUBCASE("minkowski null geodesic has none") {
    MetricSpec spec = tu::minkowski(4);
    Event x;
    x.x.setZero(4);
    VecN xi(4);
    xi << 1, 1, 0, 0;
    GeodesicSegment seg = integrate_geodesic(spec, x, xi, 5.0);
    ConjugateReport rep = jacobi_first_conjugate(spec, seg);
    CHECK(rep.first_conjugate == kNoConjugate);
  }
  SUBCASE("einstein cylinder is flat: none") {
    MetricSpec spec = tu::einstein_cylinder(1.0);
    Event x;
    x.x.setZero(2);
    VecN xi(2);
    xi << 1, 1;
    GeodesicSegment seg = integrate_geodesic(spec, x, xi, 10.0);
    ConjugateReport rep = jacobi_first_conjugate(spec, seg);
    CHECK(rep.first_conjugate == kNoConjugate);
  }
  SUBCASE("product R x S^2: first conjugate at arc length pi") {
    // null equatorial ray on the unit sphere; Jacobi reduces to y'' + y = 0
    MetricSpec spec = tu::product_sphere(1.0);
    Event x;
    x.x.resize(3);
    x.x << 0.0, kPi / 2.0, 0.0;
    VecN xi(3);
    xi << 1.0, 0.0, 1.0;
    GeodesicSegment seg = integrate_geodesic(spec, x, xi, 4.0);
    ConjugateReport rep = jacobi_first_conjugate(spec, seg);
    REQUIRE(rep.first_conjugate != kNoConjugate);
    CHECK(std::abs(rep.first_conjugate - kPi) < 1e-3);
  }
}

TEST_CASE("null cut parameter") {
  CausalConfig ccfg;
  SUBCASE("minkowski: no cut, lower-bound tag at domain exit") {
    MetricSpec spec = tu::minkowski(4);
    Event x;
    x.x.setZero(4);
    VecN xi(4);
    xi << 1, 1, 0, 0;
    auto pred = [&](const VecN& y) { return is_chronological(spec, Event{x.x}, Event{y}, ccfg); };
    CutOptions opt;
    opt.check_conjugate = false;
    CutResult res = null_cut_parameter(spec, x, xi, pred, opt);
    CHECK(res.lower_bound);
    CHECK(res.rho == doctest::Approx(6.0).epsilon(1e-6));  // box edge at x^1 = 6
  }
  SUBCASE("einstein cylinder: cut at the antipode, rho = pi") {
    MetricSpec spec = tu::einstein_cylinder(1.0);
    Event x;
    x.x.setZero(2);
    VecN xi(2);
    xi << 1, 1;
    auto pred = [&](const VecN& y) { return is_chronological(spec, Event{x.x}, Event{y}, ccfg); };
    CutResult res = null_cut_parameter(spec, x, xi, pred);
    CHECK(!res.lower_bound);
    CHECK(std::abs(res.rho - kPi) < 1e-3);
  }
  SUBCASE("product R x S^2: conjugate point bounds the cut, rho = pi") {
    MetricSpec spec = tu::product_sphere(1.0);
    Event x;
    x.x.resize(3);
    x.x << 0.0, kPi / 2.0, 0.0;
    VecN xi(3);
    xi << 1.0, 0.0, 1.0;
    auto pred = [&](const VecN& y) { return is_chronological(spec, Event{x.x}, Event{y}, ccfg); };
    CutResult res = null_cut_parameter(spec, x, xi, pred);
    CHECK(!res.lower_bound);
    CHECK(std::abs(res.rho - kPi) < 1e-3);
  }
  SUBCASE("affine rescaling: rho(x, c xi) = rho(x, xi) / c") {
    MetricSpec spec = tu::einstein_cylinder(1.0);
    Event x;
    x.x.setZero(2);
    auto pred = [&](const VecN& y) { return is_chronological(spec, Event{x.x}, Event{y}, ccfg); };
    VecN xi(2);
    xi << 1, 1;
    CutResult base = null_cut_parameter(spec, x, xi, pred);
    for (double c : {0.5, 2.0}) {
      CutResult scaled = null_cut_parameter(spec, x, VecN(c * xi), pred);
      CHECK(scaled.rho == doctest::Approx(base.rho / c).epsilon(1e-3));
    }
  }
}

TEST_CASE("diamond escape") {
  CausalConfig ccfg;
  SUBCASE("minkowski diamond, null ray exits at s = 2") {
    MetricSpec spec = tu::minkowski(4);
    Event pm, pp;
    pm.x.setZero(4);
    pp.x.setZero(4);
    pp.x[0] = 4.0;
    Event x;
    x.x.setZero(4);
    VecN xi(4);
    xi << 1, 1, 0, 0;
    GeodesicSegment seg = integrate_geodesic(spec, x, xi, 5.0);
    double s = diamond_escape(spec, seg, pm, pp);
    CHECK(s == doctest::Approx(2.0).epsilon(1e-5));
  }
  SUBCASE("geodesic entirely outside") {
    MetricSpec spec = tu::minkowski(4);
    Event pm, pp;
    pm.x.setZero(4);
    pp.x.setZero(4);
    pp.x[0] = 1.0;
    Event x;
    x.x.setZero(4);
    x.x[1] = 5.0;  // spacelike-separated start
    VecN xi(4);
    xi << 1, 0, 1, 0;
    GeodesicSegment seg = integrate_geodesic(spec, x, xi, 0.5);
    CHECK_THROWS_AS(diamond_escape(spec, seg, pm, pp), NeverInsideError);
  }
  SUBCASE("conformal bump matches a dense-sampling scan") {
    MetricSpec spec = tu::conformal_bump(4, 0.15);
    Event pm, pp;
    pm.x.setZero(4);
    pm.x[0] = -0.5;
    pp.x.setZero(4);
    pp.x[0] = 3.5;
    Event x;
    x.x.setZero(4);
    VecN xi(4);
    xi << 1, 0.6, 0.2, 0;
    GeodesicSegment seg = integrate_geodesic(spec, x, xi, 6.0);
    double s = diamond_escape(spec, seg, pm, pp);
    // brute-force membership scan
    double s_scan = 0.0;
    VecN xx, vv;
    for (double t = 0.0; t <= seg.s_end(); t += 1e-3) {
      seg.eval(t, xx, vv);
      if (in_causal_diamond(spec, xx, pm, pp, ccfg)) s_scan = t;
    }
    CHECK(std::abs(s - s_scan) < 1e-3);
  }
}
