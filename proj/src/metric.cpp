#include "chrono_lens/metric.hpp"

#include <cmath>

namespace chronolens {

const char* family_name(MetricFamily f) {
  switch (f) {
    case MetricFamily::minkowski: return "minkowski";
    case MetricFamily::conformal_bump: return "conformal_bump";
    case MetricFamily::product_spatial: return "product_spatial";
    case MetricFamily::einstein_cylinder: return "einstein_cylinder";
    case MetricFamily::schwarzschild_like: return "schwarzschild_like";
  }
  return "?";
}

MetricFamily family_from_name(const std::string& name) {
  if (name == "minkowski") return MetricFamily::minkowski;
  if (name == "conformal_bump") return MetricFamily::conformal_bump;
  if (name == "product_spatial") return MetricFamily::product_spatial;
  if (name == "einstein_cylinder") return MetricFamily::einstein_cylinder;
  if (name == "schwarzschild_like") return MetricFamily::schwarzschild_like;
  throw ConfigError("unknown metric family: " + name);
}

double MetricSpec::param(const std::string& key, double fallback) const {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

bool MetricSpec::has_param(const std::string& key) const { return params.count(key) > 0; }

bool MetricSpec::axis_wraps(int axis) const {
  switch (family) {
    case MetricFamily::einstein_cylinder: return axis == 1;
    case MetricFamily::product_spatial:
      // spherical spatial part: (theta, phi) with phi wrapping
      return has_param("sphere_radius") && axis == dim - 1;
    case MetricFamily::schwarzschild_like: return axis == 3;
    default: return false;
  }
}

bool MetricSpec::in_domain(const VecN& x, double margin) const {
  for (int k = 0; k < dim; ++k) {
    if (axis_wraps(k)) continue;
    if (x[k] < domain[k][0] + margin || x[k] > domain[k][1] - margin) return false;
  }
  return true;
}

void MetricSpec::validate() const {
  if (dim < 2 || dim > 4) throw ConfigError("dim must be 2, 3 or 4");
  if (static_cast<int>(domain.size()) != dim) throw ConfigError("domain box size != dim");
  for (int k = 0; k < dim; ++k)
    if (!(domain[k][0] < domain[k][1])) throw ConfigError("empty domain axis");
  switch (family) {
    case MetricFamily::einstein_cylinder:
      if (dim != 2) throw ConfigError("einstein_cylinder requires dim 2");
      if (param("radius", 1.0) <= 0) throw ConfigError("cylinder radius must be > 0");
      break;
    case MetricFamily::schwarzschild_like: {
      if (dim != 4) throw ConfigError("schwarzschild_like requires dim 4");
      double m = param("mass", 1.0);
      if (m <= 0) throw ConfigError("mass must be > 0");
      if (domain[1][0] <= 2.0 * m) throw ConfigError("domain must stay outside r = 2m");
      break;
    }
    case MetricFamily::product_spatial:
      if (has_param("sphere_radius") && dim != 3)
        throw ConfigError("spherical product_spatial requires dim 3");
      break;
    default: break;
  }
}

namespace {

void check_domain(const MetricSpec& spec, const VecN& x, double margin = 0.0) {
  if (static_cast<int>(x.size()) != spec.dim) throw OutOfDomainError("event dim mismatch");
  if (!spec.in_domain(x, margin)) throw OutOfDomainError("event outside domain box");
}

// Gaussian bump over the given coordinate slots; value and gradient.
double bump_value(const MetricSpec& spec, const VecN& x, int first_axis, VecN* grad) {
  const double amp = spec.param("amplitude", 0.0);
  const double w = spec.param("width", 1.0);
  double r2 = 0.0;
  const int n = spec.dim;
  VecN d = VecN::Zero(n);
  for (int k = first_axis; k < n; ++k) {
    double ck = spec.param("center_" + std::to_string(k), 0.0);
    d[k] = x[k] - ck;
    r2 += d[k] * d[k];
  }
  double phi = amp * std::exp(-r2 / (2.0 * w * w));
  if (grad) {
    grad->setZero(n);
    for (int k = first_axis; k < n; ++k) (*grad)[k] = -d[k] / (w * w) * phi;
  }
  return phi;
}

void eval_minkowski(const MetricSpec& spec, const VecN&, MetricEval& out, bool partials) {
  const int n = spec.dim;
  out.g = MatN::Identity(n, n);
  out.g(0, 0) = -1.0;
  if (partials) {
    out.dg.assign(n, MatN::Zero(n, n));
    out.has_partials = true;
  }
}

void eval_conformal_bump(const MetricSpec& spec, const VecN& x, MetricEval& out, bool partials) {
  const int n = spec.dim;
  VecN grad;
  double phi = bump_value(spec, x, 0, partials ? &grad : nullptr);
  double c = std::exp(2.0 * phi);
  out.g = c * MatN::Identity(n, n);
  out.g(0, 0) = -c;
  if (partials) {
    out.dg.assign(n, MatN::Zero(n, n));
    for (int k = 0; k < n; ++k) out.dg[k] = 2.0 * grad[k] * out.g;
    out.has_partials = true;
  }
}

void eval_product_spatial(const MetricSpec& spec, const VecN& x, MetricEval& out, bool partials) {
  const int n = spec.dim;
  out.g = MatN::Zero(n, n);
  out.g(0, 0) = -1.0;
  if (partials) out.dg.assign(n, MatN::Zero(n, n));
  if (spec.has_param("sphere_radius")) {
    // h = R^2 (d theta^2 + sin^2 theta d phi^2), coords (t, theta, phi)
    const double R = spec.param("sphere_radius", 1.0);
    const double th = x[1];
    const double st = std::sin(th);
    out.g(1, 1) = R * R;
    out.g(2, 2) = R * R * st * st;
    if (partials) out.dg[1](2, 2) = 2.0 * R * R * st * std::cos(th);
  } else {
    // h = e^{2 psi(y)} delta over the spatial slots
    VecN grad;
    double psi = bump_value(spec, x, 1, partials ? &grad : nullptr);
    double c = std::exp(2.0 * psi);
    for (int a = 1; a < n; ++a) out.g(a, a) = c;
    if (partials) {
      for (int k = 1; k < n; ++k)
        for (int a = 1; a < n; ++a) out.dg[k](a, a) = 2.0 * grad[k] * c;
    }
  }
  out.has_partials = partials;
}

void eval_einstein_cylinder(const MetricSpec& spec, const VecN&, MetricEval& out, bool partials) {
  const double R = spec.param("radius", 1.0);
  out.g = MatN::Zero(2, 2);
  out.g(0, 0) = -1.0;
  out.g(1, 1) = R * R;
  if (partials) {
    out.dg.assign(2, MatN::Zero(2, 2));
    out.has_partials = true;
  }
}

void eval_schwarzschild(const MetricSpec& spec, const VecN& x, MetricEval& out, bool partials) {
  const double m = spec.param("mass", 1.0);
  const double r = x[1], th = x[2];
  const double f = 1.0 - 2.0 * m / r;
  const double st = std::sin(th);
  out.g = MatN::Zero(4, 4);
  out.g(0, 0) = -f;
  out.g(1, 1) = 1.0 / f;
  out.g(2, 2) = r * r;
  out.g(3, 3) = r * r * st * st;
  if (partials) {
    out.dg.assign(4, MatN::Zero(4, 4));
    const double df = 2.0 * m / (r * r);
    out.dg[1](0, 0) = -df;
    out.dg[1](1, 1) = -df / (f * f);
    out.dg[1](2, 2) = 2.0 * r;
    out.dg[1](3, 3) = 2.0 * r * st * st;
    out.dg[2](3, 3) = 2.0 * r * r * st * std::cos(th);
    out.has_partials = true;
  }
}

}  // namespace

double fd_step(double xk) { return 1e-5 * (1.0 + std::abs(xk)); }

double wrap_delta(const MetricSpec& spec, int axis, double d) {
  if (!spec.axis_wraps(axis)) return d;
  constexpr double two_pi = 2.0 * 3.14159265358979323846;
  d = std::fmod(d, two_pi);
  if (d > 0.5 * two_pi) d -= two_pi;
  if (d < -0.5 * two_pi) d += two_pi;
  return d;
}

MetricEval eval_metric_raw(const MetricSpec& spec, const Event& e, bool with_partials) {
  MetricEval out;
  switch (spec.family) {
    case MetricFamily::minkowski: eval_minkowski(spec, e.x, out, with_partials); break;
    case MetricFamily::conformal_bump: eval_conformal_bump(spec, e.x, out, with_partials); break;
    case MetricFamily::product_spatial: eval_product_spatial(spec, e.x, out, with_partials); break;
    case MetricFamily::einstein_cylinder:
      eval_einstein_cylinder(spec, e.x, out, with_partials);
      break;
    case MetricFamily::schwarzschild_like: eval_schwarzschild(spec, e.x, out, with_partials); break;
  }
  out.g_inv = out.g.inverse();
  out.det_g = out.g.determinant();
  return out;
}

MetricEval eval_metric(const MetricSpec& spec, const Event& e, bool with_partials) {
  check_domain(spec, e.x);
  return eval_metric_raw(spec, e, with_partials);
}

Christoffel christoffel_raw(const MetricSpec& spec, const Event& e) {
  const int n = spec.dim;
  MetricEval ev = eval_metric_raw(spec, e, true);
  Christoffel gamma(n, MatN::Zero(n, n));
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        double sum = 0.0;
        for (int l = 0; l < n; ++l)
          sum += ev.g_inv(k, l) * (ev.dg[i](l, j) + ev.dg[j](l, i) - ev.dg[l](i, j));
        gamma[k](i, j) = 0.5 * sum;
        gamma[k](j, i) = gamma[k](i, j);
      }
  return gamma;
}

Christoffel christoffel(const MetricSpec& spec, const Event& e, DerivativeMode mode) {
  const int n = spec.dim;
  MetricEval ev;
  std::vector<MatN> dg;
  if (mode == DerivativeMode::analytic) {
    ev = eval_metric(spec, e, true);
    dg = ev.dg;
  } else {
    // 4th-order central differences; stencil must stay inside the box.
    double max_h = 0.0;
    for (int k = 0; k < n; ++k) max_h = std::max(max_h, fd_step(e.x[k]));
    check_domain(spec, e.x, 2.0 * max_h);
    ev = eval_metric(spec, e, false);
    dg.assign(n, MatN::Zero(n, n));
    for (int k = 0; k < n; ++k) {
      double h = fd_step(e.x[k]);
      Event ep = e, em = e, ep2 = e, em2 = e;
      ep.x[k] += h;
      em.x[k] -= h;
      ep2.x[k] += 2.0 * h;
      em2.x[k] -= 2.0 * h;
      MatN gp = eval_metric(spec, ep).g, gm = eval_metric(spec, em).g;
      MatN gp2 = eval_metric(spec, ep2).g, gm2 = eval_metric(spec, em2).g;
      dg[k] = (8.0 * (gp - gm) - (gp2 - gm2)) / (12.0 * h);
    }
  }
  Christoffel gamma(n, MatN::Zero(n, n));
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        double sum = 0.0;
        for (int l = 0; l < n; ++l)
          sum += ev.g_inv(k, l) * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
        gamma[k](i, j) = 0.5 * sum;
        gamma[k](j, i) = gamma[k](i, j);
      }
  return gamma;
}

std::vector<std::vector<MatN>> riemann_raw(const MetricSpec& spec, const Event& e) {
  const int n = spec.dim;
  Christoffel g0 = christoffel_raw(spec, e);
  // dgamma[j][k](i,l) = d Gamma^k_il / d x^j
  std::vector<Christoffel> dgamma(n);
  for (int j = 0; j < n; ++j) {
    double h = fd_step(e.x[j]);
    Event ep = e, em = e, ep2 = e, em2 = e;
    ep.x[j] += h;
    em.x[j] -= h;
    ep2.x[j] += 2.0 * h;
    em2.x[j] -= 2.0 * h;
    Christoffel cp = christoffel_raw(spec, ep), cm = christoffel_raw(spec, em);
    Christoffel cp2 = christoffel_raw(spec, ep2), cm2 = christoffel_raw(spec, em2);
    dgamma[j].assign(n, MatN::Zero(n, n));
    for (int k = 0; k < n; ++k)
      dgamma[j][k] = (8.0 * (cp[k] - cm[k]) - (cp2[k] - cm2[k])) / (12.0 * h);
  }

  // R^k_{l i j} = d_i Gamma^k_jl - d_j Gamma^k_il + Gamma^k_im Gamma^m_jl
  //              - Gamma^k_jm Gamma^m_il
  std::vector<std::vector<MatN>> riem(n, std::vector<MatN>(n, MatN::Zero(n, n)));
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double v = dgamma[i][k](j, l) - dgamma[j][k](i, l);
          for (int m = 0; m < n; ++m)
            v += g0[k](i, m) * g0[m](j, l) - g0[k](j, m) * g0[m](i, l);
          riem[k][l](i, j) = v;
        }
  return riem;
}

std::vector<std::vector<MatN>> riemann(const MetricSpec& spec, const Event& e) {
  const int n = spec.dim;
  double max_h = 0.0;
  for (int k = 0; k < n; ++k) max_h = std::max(max_h, fd_step(e.x[k]));
  check_domain(spec, e.x, 2.0 * max_h);
  return riemann_raw(spec, e);
}

MatN ricci(const MetricSpec& spec, const Event& e) {
  const int n = spec.dim;
  auto riem = riemann(spec, e);
  MatN ric = MatN::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      double v = 0.0;
      for (int l = 0; l < n; ++l) v += riem[l][j](l, k);
      ric(j, k) = v;
    }
  // symmetrize away the finite-difference asymmetry
  return 0.5 * (ric + ric.transpose());
}

MatN riemannian_companion(const MatN& g) {
  Eigen::SelfAdjointEigenSolver<MatN> es(g);
  MatN lam = es.eigenvalues().cwiseAbs().asDiagonal();
  return es.eigenvectors() * lam * es.eigenvectors().transpose();
}

MatN riemannian_companion(const MetricSpec& spec, const Event& e) {
  return riemannian_companion(eval_metric(spec, e).g);
}

double gplus_norm2(const MetricSpec& spec, const Event& e, const VecN& xi) {
  MatN gp = riemannian_companion(spec, e);
  return xi.dot(gp * xi);
}

CausalClass causal_character(const MetricSpec& spec, const TangentVector& v) {
  MetricEval ev = eval_metric(spec, v.base);
  double q = v.xi.dot(ev.g * v.xi);
  double np = v.xi.dot(riemannian_companion(ev.g) * v.xi);
  CausalClass out{CausalCharacter::null, q};
  if (std::abs(q) <= 1e-9 * np)
    out.character = CausalCharacter::null;
  else if (q < 0)
    out.character = CausalCharacter::timelike;
  else
    out.character = CausalCharacter::spacelike;
  return out;
}

}  // namespace chronolens
