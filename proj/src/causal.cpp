#include "chrono_lens/causal.hpp"

#include <algorithm>
#include <cmath>

#include "chrono_lens/rk45.hpp"

namespace chronolens {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// radical-inverse Halton sequence, bases chosen per dimension slot
double halton(long long index, int base) {
  double f = 1.0, r = 0.0;
  long long i = index;
  while (i > 0) {
    f /= base;
    r += f * (i % base);
    i /= base;
  }
  return r;
}

const int kHaltonBases[] = {2, 3, 5, 7, 11, 13};

bool closed_form_family(const MetricSpec& spec) {
  switch (spec.family) {
    case MetricFamily::minkowski:
    case MetricFamily::einstein_cylinder:
    case MetricFamily::product_spatial: return true;
    default: return false;
  }
}

// ---------------------------------------------------------------------------
// Spatial-factor geometry for the product families

// conformally flat spatial christoffels for h = e^{2 psi} delta
void spatial_bump_grad(const MetricSpec& spec, const VecN& y, double& psi, VecN& grad) {
  const double amp = spec.param("amplitude", 0.0);
  const double w = spec.param("width", 1.0);
  const int d = spec.dim - 1;
  double r2 = 0.0;
  VecN dv = VecN::Zero(d);
  for (int a = 0; a < d; ++a) {
    double c = spec.param("center_" + std::to_string(a + 1), 0.0);
    dv[a] = y[a] - c;
    r2 += dv[a] * dv[a];
  }
  psi = amp * std::exp(-r2 / (2.0 * w * w));
  grad.resize(d);
  for (int a = 0; a < d; ++a) grad[a] = -dv[a] / (w * w) * psi;
}

// geodesic of h = e^{2 psi} delta, affine in t on [0,1] from ya with velocity u
VecN spatial_bump_shoot(const MetricSpec& spec, const VecN& ya, const VecN& u) {
  const int d = spec.dim - 1;
  StateV y(2 * d);
  y.head(d) = ya;
  y.segment(d, d) = u;
  Rk45Options ro;
  ro.abs_tol = 1e-10;
  ro.rel_tol = 1e-10;
  ro.max_step = 0.1;
  auto rhs = [&](double, const StateV& yy, StateV& dy) {
    VecN pos = yy.head(d), vel = yy.segment(d, d);
    double psi;
    VecN grad;
    spatial_bump_grad(spec, pos, psi, grad);
    dy.resize(2 * d);
    dy.head(d) = vel;
    double gv = 0.0, v2 = 0.0;
    for (int a = 0; a < d; ++a) {
      gv += grad[a] * vel[a];
      v2 += vel[a] * vel[a];
    }
    // Gamma^a_bc u^b u^c = 2 (grad.u) u^a - |u|^2 grad^a
    for (int a = 0; a < d; ++a) dy[d + a] = -(2.0 * gv * vel[a] - v2 * grad[a]);
  };
  rk45_integrate(rhs, 0.0, 1.0, y, ro,
                 [](double, StateV&, double) { return StepOutcome::keep_going; });
  return y.head(d);
}

// Riemannian distance in the bump spatial factor by shooting; near-flat by
// catalog construction, so the straight seed converges fast.
double spatial_bump_distance(const MetricSpec& spec, const VecN& ya, const VecN& yb) {
  const int d = spec.dim - 1;
  if (d == 1) {
    // 1D closed form: arclength integral of e^psi (Simpson)
    const int m = 64;
    double a = ya[0], b = yb[0];
    double hstep = (b - a) / m;
    double acc = 0.0;
    for (int i = 0; i <= m; ++i) {
      VecN p(1);
      p[0] = a + i * hstep;
      double psi;
      VecN g;
      spatial_bump_grad(spec, p, psi, g);
      double wgt = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += wgt * std::exp(psi);
    }
    return std::abs(acc * hstep / 3.0);
  }
  VecN u = yb - ya;
  if (u.norm() == 0.0) return 0.0;
  const double scale = u.norm();
  for (int iter = 0; iter < 30; ++iter) {
    VecN r = spatial_bump_shoot(spec, ya, u) - yb;
    if (r.norm() < 1e-11 * (1.0 + scale)) break;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3> J(d, d);
    double h = 1e-7 * (1.0 + u.norm());
    for (int c = 0; c < d; ++c) {
      VecN up = u;
      up[c] += h;
      J.col(c) = (spatial_bump_shoot(spec, ya, up) - yb - r) / h;
    }
    VecN step = J.fullPivLu().solve(r);
    u -= step;
  }
  double psi;
  VecN g;
  spatial_bump_grad(spec, ya, psi, g);
  return std::exp(psi) * u.norm();
}

double sphere_distance(double R, double th1, double ph1, double th2, double ph2) {
  double c = std::cos(th1) * std::cos(th2) + std::sin(th1) * std::sin(th2) * std::cos(ph1 - ph2);
  c = std::clamp(c, -1.0, 1.0);
  return R * std::acos(c);
}

}  // namespace

double spatial_distance(const MetricSpec& spec, const VecN& ya, const VecN& yb,
                        const CausalConfig&) {
  switch (spec.family) {
    case MetricFamily::minkowski:
    case MetricFamily::conformal_bump: {
      return (yb - ya).norm();
    }
    case MetricFamily::einstein_cylinder: {
      double R = spec.param("radius", 1.0);
      return R * std::abs(wrap_delta(spec, 1, yb[0] - ya[0]));
    }
    case MetricFamily::product_spatial: {
      if (spec.has_param("sphere_radius"))
        return sphere_distance(spec.param("sphere_radius", 1.0), ya[0], ya[1], yb[0], yb[1]);
      return spatial_bump_distance(spec, ya, yb);
    }
    default: throw SolveError("spatial_distance: family has no product structure");
  }
}

// ---------------------------------------------------------------------------
// Timelike shooting (boundary-value connector maximizing proper time)

namespace {

struct ShootResult {
  bool converged = false;
  VecN v;       // exp_x(v) = y
  double gvv = 0.0;
};

ShootResult shoot_connector(const MetricSpec& spec, const Event& x, const Event& y, const VecN& seed,
                            const CausalConfig& cfg) {
  const int n = spec.dim;
  const double scale = 1.0 + (y.x - x.x).norm();
  GeodesicOptions go = cfg.geo;
  go.null_renorm_every = 0;
  auto endpoint = [&](const VecN& v, VecN& out) -> bool {
    if (v.norm() == 0.0) {
      out = x.x;
      return true;
    }
    GeodesicSegment seg = integrate_geodesic(spec, x, v, 1.0, go);
    if (seg.termination != Termination::reached_param) return false;
    out = seg.back().x;
    return true;
  };

  ShootResult res;
  VecN v = seed;
  VecN fx(n);
  for (int iter = 0; iter < cfg.newton_max_iter; ++iter) {
    if (!endpoint(v, fx)) return res;
    VecN r = fx - y.x;
    for (int k = 0; k < n; ++k) r[k] = wrap_delta(spec, k, r[k]);
    if (r.norm() < cfg.newton_tol * scale) {
      res.converged = true;
      res.v = v;
      res.gvv = v.dot(eval_metric(spec, x).g * v);
      return res;
    }
    MatN J(n, n);
    double h = 1e-7 * (1.0 + v.norm());
    VecN fp(n);
    bool ok = true;
    for (int c = 0; c < n; ++c) {
      VecN vp = v;
      vp[c] += h;
      if (!endpoint(vp, fp)) {
        ok = false;
        break;
      }
      VecN dr = fp - fx;
      for (int k = 0; k < n; ++k) dr[k] = wrap_delta(spec, k, dr[k]);
      J.col(c) = dr / h;
    }
    if (!ok) return res;
    VecN step = J.fullPivLu().solve(r);
    if (!step.allFinite()) return res;
    // simple damping
    double lambda = 1.0;
    VecN vn = v - step;
    VecN fn(n);
    for (int t = 0; t < 5; ++t) {
      if (endpoint(vn, fn)) {
        VecN rn = fn - y.x;
        for (int k = 0; k < n; ++k) rn[k] = wrap_delta(spec, k, rn[k]);
        if (rn.norm() < r.norm()) break;
      }
      lambda *= 0.5;
      vn = v - lambda * step;
    }
    v = vn;
  }
  return res;
}

TauResult tau_by_shooting(const MetricSpec& spec, const Event& x, const Event& y,
                          const CausalConfig& cfg) {
  const int n = spec.dim;
  TauResult out;
  if (y.x[0] <= x.x[0]) return out;  // x^0 is a time function

  VecN base = y.x - x.x;
  for (int k = 1; k < n; ++k) base[k] = wrap_delta(spec, k, base[k]);
  std::vector<VecN> seeds;
  seeds.push_back(base);
  for (int k = 1; k < cfg.shooting_starts; ++k) {
    VecN s = base;
    for (int i = 0; i < n; ++i) {
      double u = halton(k, kHaltonBases[i % 6]);
      s[i] += 0.25 * (2.0 * u - 1.0) * (1.0 + base.norm());
    }
    if (s[0] <= 0.0) s[0] = base[0];
    seeds.push_back(s);
  }

  bool any_converged = false;
  double best = 0.0;
  for (const auto& seed : seeds) {
    ShootResult r = shoot_connector(spec, x, y, seed, cfg);
    if (!r.converged) continue;
    any_converged = true;
    if (r.gvv < 0.0 && r.v[0] > 0.0) best = std::max(best, std::sqrt(-r.gvv));
  }
  out.tau = best;
  out.approximate = !any_converged && (y.x[0] > x.x[0]);
  return out;
}

TauResult tau_closed_form(const MetricSpec& spec, const Event& x, const Event& y,
                          const CausalConfig& cfg) {
  TauResult out;
  double dt = y.x[0] - x.x[0];
  if (dt <= 0.0) return out;
  double d = spatial_distance(spec, x.x.tail(spec.dim - 1), y.x.tail(spec.dim - 1), cfg);
  if (dt > d) out.tau = std::sqrt(dt * dt - d * d);
  return out;
}

}  // namespace

TauResult time_separation(const MetricSpec& spec, const Event& x, const Event& y,
                          const CausalConfig& cfg) {
  if (!spec.in_domain(x.x) || !spec.in_domain(y.x))
    throw OutOfDomainError("time_separation: event outside domain");
  if (closed_form_family(spec)) return tau_closed_form(spec, x, y, cfg);
  return tau_by_shooting(spec, x, y, cfg);
}

bool is_chronological(const MetricSpec& spec, const Event& x, const Event& y,
                      const CausalConfig& cfg) {
  switch (spec.family) {
    case MetricFamily::minkowski:
    case MetricFamily::einstein_cylinder:
    case MetricFamily::product_spatial: {
      double dt = y.x[0] - x.x[0];
      if (dt <= 0.0) return false;
      double d = spatial_distance(spec, x.x.tail(spec.dim - 1), y.x.tail(spec.dim - 1), cfg);
      return dt - d > cfg.chrono_margin;
    }
    case MetricFamily::conformal_bump: {
      // chronology is conformally invariant: use the flat cone of the chart
      double dt = y.x[0] - x.x[0];
      if (dt <= 0.0) return false;
      double d = (y.x.tail(spec.dim - 1) - x.x.tail(spec.dim - 1)).norm();
      return dt - d > cfg.chrono_margin;
    }
    default: return tau_by_shooting(spec, x, y, cfg).tau > cfg.tau_pos_tol;
  }
}

// non-strict causal predicate x <= y (tolerance band at the cone)
bool causally_precedes(const MetricSpec& spec, const VecN& x, const VecN& y,
                       const CausalConfig& cfg) {
  const int n = spec.dim;
  Event ex{x}, ey{y};
  switch (spec.family) {
    case MetricFamily::minkowski:
    case MetricFamily::einstein_cylinder:
    case MetricFamily::product_spatial: {
      double dt = y[0] - x[0];
      if (dt < -cfg.tau_pos_tol) return false;
      double d = spatial_distance(spec, x.tail(n - 1), y.tail(n - 1), cfg);
      return dt >= d - cfg.tau_pos_tol;
    }
    case MetricFamily::conformal_bump: {
      double dt = y[0] - x[0];
      if (dt < -cfg.tau_pos_tol) return false;
      double d = (y.tail(n - 1) - x.tail(n - 1)).norm();
      return dt >= d - cfg.tau_pos_tol;
    }
    default: {
      if (is_chronological(spec, ex, ey, cfg)) return true;
      // fall back to a null connector probe
      CausalRelation rel = causal_relation(spec, ex, ey, cfg);
      return rel.kind != RelationKind::none;
    }
  }
}

bool in_causal_diamond(const MetricSpec& spec, const VecN& x, const Event& p_minus,
                       const Event& p_plus, const CausalConfig& cfg) {
  return causally_precedes(spec, p_minus.x, x, cfg) && causally_precedes(spec, x, p_plus.x, cfg);
}

double diamond_escape(const MetricSpec& spec, const GeodesicSegment& seg, const Event& p_minus,
                      const Event& p_plus, double bracket_tol, const CausalConfig& cfg) {
  return diamond_escape(
      seg, [&](const VecN& x) { return in_causal_diamond(spec, x, p_minus, p_plus, cfg); },
      bracket_tol);
}

// ---------------------------------------------------------------------------
// Null connectors

namespace {

struct RayApproach {
  double sigma;    // ray affine parameter of closest approach
  double s;        // worldline parameter at the matched time
  double miss;     // g+ spatial distance at the matched time
  VecN delta;      // spatial offset (wrapped), n-1 components
  VecN ray_x, ray_v;
};

// closest time-matched approach of a ray sample stream to a worldline
bool closest_approach(const MetricSpec& spec, const GeodesicSegment& ray, const Worldline& mu,
                      RayApproach& out, double sigma_min = 0.0) {
  const int n = spec.dim;
  const double t_lo = mu.curve.samples.front().x[0];
  const double t_hi = mu.curve.samples.back().x[0];

  auto miss_at = [&](double sigma, RayApproach& ra) -> bool {
    VecN x, v;
    ray.eval(sigma, x, v);
    if (x[0] < t_lo || x[0] > t_hi) return false;
    // worldline parameter with matching coordinate time (x^0 monotone)
    double lo = mu.s_a, hi = mu.s_b;
    VecN wx, wv;
    for (int it = 0; it < 60; ++it) {
      double mid = 0.5 * (lo + hi);
      mu.eval(mid, wx, wv);
      if (wx[0] < x[0]) lo = mid;
      else hi = mid;
    }
    double s = 0.5 * (lo + hi);
    mu.eval(s, wx, wv);
    VecN d = VecN::Zero(n);
    for (int k = 1; k < n; ++k) d[k] = wrap_delta(spec, k, x[k] - wx[k]);
    MatN gp = riemannian_companion(spec, Event{x});
    ra.sigma = sigma;
    ra.s = s;
    ra.miss = std::sqrt(std::max(0.0, d.dot(gp * d)));
    ra.delta = d.tail(n - 1);
    ra.ray_x = x;
    ra.ray_v = v;
    return true;
  };

  // coarse scan over the integrator's own samples
  bool found = false;
  RayApproach best;
  best.miss = 1e300;
  for (const auto& smp : ray.samples) {
    if (smp.s < sigma_min) continue;
    RayApproach ra;
    if (!miss_at(smp.s, ra)) continue;
    if (ra.miss < best.miss) {
      best = ra;
      found = true;
    }
  }
  if (!found) return false;

  // golden-section refine around the best sample
  double a = std::max(sigma_min, best.sigma - 0.6 * 0.05);
  double b = std::min(ray.s_end(), best.sigma + 0.6 * 0.05);
  // bracket using neighboring samples when available
  for (std::size_t i = 0; i + 1 < ray.samples.size(); ++i) {
    if (ray.samples[i].s <= best.sigma && best.sigma <= ray.samples[i + 1].s) {
      a = (i > 0) ? ray.samples[i - 1].s : ray.samples[i].s;
      b = (i + 2 < ray.samples.size()) ? ray.samples[i + 2].s : ray.samples[i + 1].s;
      break;
    }
  }
  a = std::max(a, sigma_min);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - gr * (b - a), d = a + gr * (b - a);
  RayApproach rc, rd;
  bool okc = miss_at(c, rc), okd = miss_at(d, rd);
  for (int it = 0; it < 80 && (b - a) > 1e-12 * (1.0 + std::abs(b)); ++it) {
    double fc = okc ? rc.miss : 1e300, fd = okd ? rd.miss : 1e300;
    if (fc < fd) {
      b = d;
      d = c;
      rd = rc;
      okd = okc;
      c = b - gr * (b - a);
      okc = miss_at(c, rc);
    } else {
      a = c;
      c = d;
      rc = rd;
      okc = okd;
      d = a + gr * (b - a);
      okd = miss_at(d, rd);
    }
  }
  out = (okc && (!okd || rc.miss <= rd.miss)) ? rc : rd;
  if (!okc && !okd) out = best;
  return true;
}

}  // namespace

std::optional<NullConnector> refine_null_connector(const MetricSpec& spec, const Event& q,
                                                   const Worldline& mu, const VecN& seed_dir,
                                                   const CausalConfig& cfg) {
  const int n = spec.dim;
  GeodesicOptions go = cfg.geo;
  const double scale = 1.0 + seed_dir.norm();

  // Unknowns: spatial launch components w (null-completed, un-normalized);
  // residual: time-matched spatial offset of exp_q(v(w)) from mu.
  VecN w = seed_dir.tail(n - 1);
  if (w.norm() == 0.0) return std::nullopt;

  auto residual = [&](const VecN& ww, RayApproach& ra) -> bool {
    VecN v = null_future_vector(spec, q, ww);
    GeodesicSegment seg;
    try {
      seg = integrate_geodesic(spec, q, v, 1.0, go);
    } catch (const std::exception&) {
      return false;
    }
    if (seg.termination != Termination::reached_param) return false;
    VecN x = seg.back().x, xv = seg.back().v;
    if (x[0] < mu.curve.samples.front().x[0] || x[0] > mu.curve.samples.back().x[0]) return false;
    double lo = mu.s_a, hi = mu.s_b;
    VecN wx, wv;
    for (int it = 0; it < 60; ++it) {
      double mid = 0.5 * (lo + hi);
      mu.eval(mid, wx, wv);
      if (wx[0] < x[0]) lo = mid;
      else hi = mid;
    }
    double s = 0.5 * (lo + hi);
    mu.eval(s, wx, wv);
    VecN d = VecN::Zero(n);
    for (int k = 1; k < n; ++k) d[k] = wrap_delta(spec, k, x[k] - wx[k]);
    MatN gp = riemannian_companion(spec, Event{x});
    ra.sigma = 1.0;
    ra.s = s;
    ra.miss = std::sqrt(std::max(0.0, d.dot(gp * d)));
    ra.delta = d.tail(n - 1);
    ra.ray_x = x;
    ra.ray_v = xv;
    return true;
  };

  RayApproach ra;
  if (!residual(w, ra)) return std::nullopt;
  using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
  for (int iter = 0; iter < cfg.newton_max_iter && ra.miss > cfg.null_residual * scale; ++iter) {
    MatD J(n - 1, n - 1);
    double h = 1e-7 * (1.0 + w.norm());
    bool ok = true;
    for (int c = 0; c < n - 1; ++c) {
      VecN wp = w;
      wp[c] += h;
      RayApproach rp;
      if (!residual(wp, rp)) {
        ok = false;
        break;
      }
      J.col(c) = (rp.delta - ra.delta) / h;
    }
    if (!ok) break;
    VecN step = J.fullPivLu().solve(ra.delta);
    if (!step.allFinite()) break;
    double lambda = 1.0;
    for (int t = 0; t < 6; ++t) {
      VecN wn = w - lambda * step;
      RayApproach rn;
      if (residual(wn, rn) && rn.miss < ra.miss) {
        w = wn;
        ra = rn;
        break;
      }
      lambda *= 0.5;
      if (t == 5) iter = cfg.newton_max_iter;  // stalled
    }
  }
  if (ra.miss > cfg.null_residual * scale) return std::nullopt;

  VecN v = null_future_vector(spec, q, w);
  double len = std::sqrt(gplus_norm2(spec, q, v));
  NullConnector out;
  out.launch_unit = v / len;
  out.affine_length = len;
  out.arrival_s = ra.s;
  out.arrival_x = ra.ray_x;
  out.arrival_tangent = ra.ray_v / len;
  out.miss = ra.miss;
  return out;
}

CausalRelation causal_relation(const MetricSpec& spec, const Event& x, const Event& y,
                               const CausalConfig& cfg) {
  CausalRelation rel;
  if ((x.x - y.x).norm() == 0.0) {
    rel.kind = RelationKind::horismos;  // r = 0 degenerate case
    return rel;
  }
  TauResult tr = time_separation(spec, x, y, cfg);
  rel.tau = tr.tau;
  if (tr.tau > cfg.tau_pos_tol) {
    rel.kind = RelationKind::chronological;
    return rel;
  }
  if (tr.approximate) throw IndeterminateRelationError("time separation solver did not converge");
  if (y.x[0] <= x.x[0]) return rel;

  // null connector probe: treat y as a degenerate worldline through y
  // (direct event shooting)
  const int n = spec.dim;
  GeodesicOptions go = cfg.geo;
  VecN w = (y.x - x.x).tail(n - 1);
  for (int k = 1; k < n; ++k) w[k - 1] = wrap_delta(spec, k, y.x[k] - x.x[k]);
  if (w.norm() == 0.0) return rel;

  auto endpoint = [&](const VecN& ww, VecN& out) -> bool {
    VecN v = null_future_vector(spec, x, ww);
    GeodesicSegment seg;
    try {
      seg = integrate_geodesic(spec, x, v, 1.0, go);
    } catch (const std::exception&) {
      return false;
    }
    if (seg.termination != Termination::reached_param) return false;
    out = seg.back().x;
    return true;
  };

  // match all n coordinates of y with the n-1 direction unknowns plus the
  // homogeneous scale of w (time matching picks up the remaining dof)
  VecN fx(n);
  double scale = 1.0 + w.norm();
  for (int iter = 0; iter < cfg.newton_max_iter; ++iter) {
    if (!endpoint(w, fx)) return rel;
    VecN r(n);
    for (int k = 0; k < n; ++k) r[k] = wrap_delta(spec, k, fx[k] - y.x[k]);
    if (r.norm() < 1e-6 * scale) {
      rel.kind = RelationKind::horismos;
      VecN v = null_future_vector(spec, x, w);
      rel.witness = integrate_geodesic(spec, x, v, 1.0, go);
      return rel;
    }
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 3> J(n, n - 1);
    double h = 1e-7 * (1.0 + w.norm());
    bool ok = true;
    for (int c = 0; c < n - 1; ++c) {
      VecN wp = w;
      wp[c] += h;
      VecN fp(n);
      if (!endpoint(wp, fp)) {
        ok = false;
        break;
      }
      VecN dr(n);
      for (int k = 0; k < n; ++k) dr[k] = wrap_delta(spec, k, fp[k] - fx[k]);
      J.col(c) = dr / h;
    }
    if (!ok) return rel;
    VecN step = (J.transpose() * J).ldlt().solve(J.transpose() * r);
    if (!step.allFinite()) return rel;
    w -= step;
  }
  return rel;
}

// ---------------------------------------------------------------------------
// Observers

void Worldline::eval(double s, VecN& x, VecN& v) const {
  curve.eval(s - s_a, x, v);
}

VecN Worldline::position(double s) const {
  VecN x, v;
  eval(s, x, v);
  return x;
}

Worldline integrate_worldline(const MetricSpec& spec, const ObserverSpec& obs,
                              const GeodesicOptions& opt) {
  MetricEval ev = eval_metric(spec, obs.z);
  double q = obs.eta.dot(ev.g * obs.eta);
  if (q >= 0.0) throw ConfigError("observer velocity must be timelike");
  VecN eta = obs.eta / std::sqrt(-q);
  if (eta[0] < 0.0) throw ConfigError("observer velocity must be future pointing");

  GeodesicOptions go = opt;
  go.max_step = std::min(go.max_step, 0.02);

  Worldline w;
  w.id = obs.id;
  w.z = obs.z.x;
  w.eta = eta;
  w.s_a = obs.s_a;
  w.s_b = obs.s_b;

  // anchor sits at s = 0: integrate backward to s_a, then forward to s_b
  GeodesicSegment back;
  if (obs.s_a < 0.0) {
    back = integrate_geodesic(spec, obs.z, -eta, -obs.s_a, go);
    if (back.termination != Termination::reached_param)
      throw DomainEscapeError("observer " + std::to_string(obs.id) + " leaves domain");
  }
  GeodesicSegment fwd = integrate_geodesic(spec, obs.z, eta, std::max(obs.s_b, 0.0), go);
  if (fwd.termination != Termination::reached_param)
    throw DomainEscapeError("observer " + std::to_string(obs.id) + " leaves domain");

  // merge into a single stream parametrized by s - s_a
  GeodesicSegment merged;
  merged.x0 = obs.z.x;
  merged.xi0 = eta;
  for (auto it = back.samples.rbegin(); it != back.samples.rend(); ++it) {
    if (it->s == 0.0) continue;
    merged.samples.push_back({-it->s - obs.s_a, it->x, -it->v, it->g_vv});
  }
  for (const auto& smp : fwd.samples) merged.samples.push_back({smp.s - obs.s_a, smp.x, smp.v, smp.g_vv});
  merged.termination = Termination::reached_param;
  w.curve = merged;
  return w;
}

EarliestTime earliest_obs_time(const MetricSpec& spec, const Worldline& mu, const Event& q,
                               int sign, const CausalConfig& cfg) {
  auto pred = [&](double s) {
    VecN x, v;
    mu.eval(s, x, v);
    return sign > 0 ? is_chronological(spec, q, Event{x}, cfg)
                    : is_chronological(spec, Event{x}, q, cfg);
  };
  // f+: predicate false near s_a, true near s_b (monotone flip);
  // f-: mirrored.
  double lo = mu.s_a, hi = mu.s_b;
  bool plo = pred(lo), phi = pred(hi);
  EarliestTime out{};
  if (sign > 0) {
    if (!phi) {
      out = {hi, mu.position(hi), true};
      return out;
    }
    if (plo) {
      out = {lo, mu.position(lo), true};
      return out;
    }
  } else {
    if (!plo) {
      out = {lo, mu.position(lo), true};
      return out;
    }
    if (phi) {
      out = {hi, mu.position(hi), true};
      return out;
    }
  }
  while (hi - lo > cfg.bisect_tol) {
    double mid = 0.5 * (lo + hi);
    bool p = pred(mid);
    if ((sign > 0) == p) hi = mid;
    else lo = mid;
  }
  double s = 0.5 * (lo + hi);
  out = {s, mu.position(s), false};
  return out;
}

bool ObserverGrid::tube_contains(const MetricSpec& spec, const VecN& x) const {
  return tube_distance(spec, x) < tube_tol;
}

double ObserverGrid::tube_distance(const MetricSpec& spec, const VecN& x, int* nearest) const {
  const int n = spec.dim;
  double best = 1e300;
  int best_id = -1;
  for (const auto& mu : members) {
    if (x[0] < mu.curve.samples.front().x[0] || x[0] > mu.curve.samples.back().x[0]) continue;
    double lo = mu.s_a, hi = mu.s_b;
    VecN wx, wv;
    for (int it = 0; it < 50; ++it) {
      double mid = 0.5 * (lo + hi);
      mu.eval(mid, wx, wv);
      if (wx[0] < x[0]) lo = mid;
      else hi = mid;
    }
    mu.eval(0.5 * (lo + hi), wx, wv);
    VecN d = VecN::Zero(n);
    for (int k = 1; k < n; ++k) d[k] = wrap_delta(spec, k, x[k] - wx[k]);
    MatN gp = riemannian_companion(spec, Event{x});
    double dist = std::sqrt(std::max(0.0, d.dot(gp * d)));
    if (dist < best) {
      best = dist;
      best_id = mu.id;
    }
  }
  if (nearest) *nearest = best_id;
  return best;
}

ObserverGrid observer_congruence(const MetricSpec& spec, const ObserverSpec& center, double h_hat,
                                 int count, const SSchedule& schedule, const CausalConfig& cfg) {
  const int n = spec.dim;
  ObserverGrid grid;
  grid.center = center;
  grid.h_hat = h_hat;

  std::vector<std::pair<VecN, VecN>> offsets;  // (delta position, delta velocity), spatial
  offsets.emplace_back(VecN::Zero(n - 1), VecN::Zero(n - 1));
  if (h_hat > 0.0 && count > 1) {
    long long idx = 1;
    const int m = 2 * (n - 1);
    while (static_cast<int>(offsets.size()) < count) {
      Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 8, 1> u(m);
      for (int j = 0; j < m; ++j) u[j] = 2.0 * halton(idx, kHaltonBases[j % 6]) - 1.0;
      ++idx;
      if (u.norm() > 1.0) continue;  // keep the Sasaki ball
      VecN dy = h_hat * u.head(n - 1);
      VecN du = h_hat * u.tail(n - 1);
      offsets.emplace_back(dy, du);
    }
  }

  std::string escapees;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    ObserverSpec obs;
    obs.id = static_cast<int>(i);
    obs.z.x = center.z.x;
    obs.z.x.tail(n - 1) += offsets[i].first;
    VecN eta = center.eta;
    eta.tail(n - 1) += offsets[i].second;
    // re-solve the time component for g(eta, eta) = -1
    MetricEval ev = eval_metric(spec, obs.z);
    double a = ev.g(0, 0), b = 0.0, c = 1.0;
    for (int j = 1; j < n; ++j) {
      b += 2.0 * ev.g(0, j) * eta[j];
      for (int k = 1; k < n; ++k) c += ev.g(j, k) * eta[j] * eta[k];
    }
    double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) throw ConfigError("observer velocity offset too large");
    double root = (-b - std::sqrt(disc)) / (2.0 * a);
    if (root < 0.0) root = (-b + std::sqrt(disc)) / (2.0 * a);
    eta[0] = root;
    obs.eta = eta;
    obs.s_a = center.s_a;
    obs.s_b = center.s_b;
    try {
      grid.members.push_back(integrate_worldline(spec, obs, cfg.geo));
    } catch (const DomainEscapeError&) {
      escapees += (escapees.empty() ? "" : ", ") + std::to_string(i);
    }
  }
  if (!escapees.empty())
    throw DomainEscapeError("observer members leave the domain: " + escapees);

  // tube tolerance: half the lattice pitch of the sampled ball
  if (grid.members.size() > 1) {
    double pitch = 2.0 * h_hat / std::pow(static_cast<double>(grid.members.size()),
                                          1.0 / static_cast<double>(n - 1));
    grid.tube_tol = 0.5 * pitch;
  } else {
    grid.tube_tol = std::max(0.05, h_hat);
  }

  if (schedule.configured) {
    const Worldline& c0 = grid.members.front();
    for (const auto& mu : grid.members) {
      bool ok1 = is_chronological(spec, Event{mu.position(schedule.s_m2)},
                                  Event{c0.position(schedule.s_m1)}, cfg);
      bool ok2 = is_chronological(spec, Event{c0.position(schedule.s_p1)},
                                  Event{mu.position(schedule.s_p2)}, cfg);
      if (!ok1 || !ok2)
        throw ConfigError("observer schedule separation fails for member " +
                          std::to_string(mu.id));
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Fermi-type chart

VecN FermiFrame::frame_vector(int j, double s) const {
  VecN z, dz;
  frame[j].eval(s - mu.s_a, z, dz);
  return z;
}

VecN FermiFrame::point(const VecN& t) const {
  const int n = spec->dim;
  double s1 = t[0];
  VecN x, v;
  mu.eval(s1, x, v);
  VecN w = VecN::Zero(n);
  for (int j = 1; j < n; ++j) w += t[j] * frame_vector(j - 1, s1);
  if (w.norm() == 0.0) return x;
  GeodesicSegment seg = integrate_geodesic(*spec, Event{x}, w, 1.0);
  if (seg.termination != Termination::reached_param)
    throw OutOfChartError("fermi point leaves domain");
  return seg.back().x;
}

FermiFrame fermi_frame(const MetricSpec& spec, const Worldline& mu, const GeodesicOptions& opt) {
  const int n = spec.dim;
  FermiFrame ff;
  ff.spec = &spec;
  ff.mu = mu;

  // g-orthonormal spatial frame at the anchor (s = 0), Z_1 = mu_dot
  VecN x0, v0;
  mu.eval(0.0, x0, v0);
  MetricEval ev = eval_metric(spec, Event{x0});
  std::vector<VecN> basis;
  basis.push_back(v0);  // timelike leg, g(v,v) = -1
  for (int i = 1; i < n && static_cast<int>(basis.size()) < n; ++i) {
    VecN e = VecN::Zero(n);
    e[i] = 1.0;
    for (const auto& b : basis) {
      double gb = b.dot(ev.g * b);
      e -= (e.dot(ev.g * b) / gb) * b;
    }
    double q = e.dot(ev.g * e);
    if (q <= 1e-12) continue;
    basis.push_back(e / std::sqrt(q));
  }
  if (static_cast<int>(basis.size()) != n) throw SolveError("fermi frame construction failed");

  // parallel transport each spatial leg along mu (both directions from anchor)
  for (int j = 1; j < n; ++j) {
    GeodesicSegment stream;
    stream.x0 = basis[j];
    stream.xi0 = basis[j];

    auto transport = [&](double dir, double length, std::vector<GeodesicSample>& out) {
      StateV y(n);
      y.head(n) = basis[j];
      if (length <= 0.0) return;
      Rk45Options ro;
      ro.abs_tol = opt.tol;
      ro.rel_tol = opt.tol;
      ro.max_step = 0.02;
      auto rhs = [&](double s, const StateV& yy, StateV& dy) {
        VecN mx, mv;
        mu.eval(dir * s, mx, mv);
        Christoffel gamma = christoffel_raw(spec, Event{mx});
        dy.resize(n);
        for (int k = 0; k < n; ++k) {
          double acc = 0.0;
          for (int i = 0; i < n; ++i) acc += mv[i] * gamma[k].row(i).dot(yy.head(n));
          dy[k] = -dir * acc;
        }
      };
      StateV dy0(n);
      rhs(0.0, y, dy0);
      out.push_back({0.0, VecN(y.head(n)), VecN(dir * dy0.head(n)), 0.0});
      rk45_integrate(rhs, 0.0, length, y, ro, [&](double s, StateV& yy, double) {
        StateV d(n);
        rhs(s, yy, d);
        out.push_back({dir * s, VecN(yy.head(n)), VecN(dir * d.head(n)), 0.0});
        return StepOutcome::keep_going;
      });
    };

    std::vector<GeodesicSample> back_s, fwd_s;
    transport(-1.0, -mu.s_a, back_s);
    transport(1.0, mu.s_b, fwd_s);
    for (auto it = back_s.rbegin(); it != back_s.rend(); ++it)
      if (it->s != 0.0) stream.samples.push_back({it->s - mu.s_a, it->x, it->v, 0.0});
    for (const auto& smp : fwd_s) stream.samples.push_back({smp.s - mu.s_a, smp.x, smp.v, 0.0});
    ff.frame.push_back(stream);
  }
  return ff;
}

VecN fermi_chart(const FermiFrame& frame, const Event& e, const CausalConfig& cfg) {
  const MetricSpec& spec = *frame.spec;
  const int n = spec.dim;
  const Worldline& mu = frame.mu;

  // seed: time-matched worldline parameter, frame-projected offsets
  double lo = mu.s_a, hi = mu.s_b;
  VecN wx, wv;
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    mu.eval(mid, wx, wv);
    if (wx[0] < e.x[0]) lo = mid;
    else hi = mid;
  }
  VecN t = VecN::Zero(n);
  t[0] = 0.5 * (lo + hi);
  mu.eval(t[0], wx, wv);
  MetricEval ev = eval_metric(spec, Event{wx});
  VecN diff = e.x - wx;
  for (int j = 1; j < n; ++j) {
    VecN Z = frame.frame_vector(j - 1, t[0]);
    t[j] = diff.dot(ev.g * Z);
  }

  const double scale = 1.0 + e.x.norm();
  for (int iter = 0; iter < 50; ++iter) {
    VecN fx = frame.point(t);
    VecN r(n);
    for (int k = 0; k < n; ++k) r[k] = wrap_delta(spec, k, fx[k] - e.x[k]);
    if (r.norm() < 1e-11 * scale) return t;
    MatN J(n, n);
    double h = 1e-7;
    for (int c = 0; c < n; ++c) {
      VecN tp = t;
      tp[c] += h;
      VecN fp = frame.point(tp);
      VecN dr(n);
      for (int k = 0; k < n; ++k) dr[k] = wrap_delta(spec, k, fp[k] - fx[k]);
      J.col(c) = dr / h;
    }
    VecN step = J.fullPivLu().solve(r);
    if (!step.allFinite()) break;
    t -= step;
  }
  throw OutOfChartError("fermi_chart: Newton did not converge");
  (void)cfg;
}

}  // namespace chronolens
