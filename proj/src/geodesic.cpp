#include "chrono_lens/geodesic.hpp"

#include <algorithm>
#include <cmath>

#include "chrono_lens/rk45.hpp"

namespace chronolens {

namespace {

void geodesic_rhs(const MetricSpec& spec, double, const StateV& y, StateV& dy) {
  const int n = spec.dim;
  Event e;
  e.x = y.head(n);
  VecN v = y.segment(n, n);
  Christoffel gamma = christoffel_raw(spec, e);
  dy.resize(2 * n);
  dy.head(n) = v;
  for (int k = 0; k < n; ++k) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      double vi = v[i];
      if (vi == 0.0) continue;
      acc += vi * gamma[k].row(i).dot(v);
    }
    dy[n + k] = -acc;
  }
}

// Solve g(v,v) = 0 for v^0 keeping the spatial part; root nearest the current
// v^0 (kills secular drift without turning the ray around).
bool renormalize_null(const MetricSpec& spec, const VecN& x, VecN& v) {
  Event e;
  e.x = x;
  MetricEval ev = eval_metric_raw(spec, e);
  const int n = spec.dim;
  double a = ev.g(0, 0);
  double b = 0.0, c = 0.0;
  for (int i = 1; i < n; ++i) {
    b += 2.0 * ev.g(0, i) * v[i];
    for (int j = 1; j < n; ++j) c += ev.g(i, j) * v[i] * v[j];
  }
  double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return false;
  double sq = std::sqrt(disc);
  double r1 = (-b + sq) / (2.0 * a), r2 = (-b - sq) / (2.0 * a);
  v[0] = (std::abs(r1 - v[0]) < std::abs(r2 - v[0])) ? r1 : r2;
  return true;
}

double norm_log(const MetricSpec& spec, const VecN& x, const VecN& v) {
  Event e;
  e.x = x;
  return v.dot(eval_metric_raw(spec, e).g * v);
}

}  // namespace

VecN null_future_vector(const MetricSpec& spec, const Event& e, const VecN& spatial_dir) {
  const int n = spec.dim;
  const int off = (static_cast<int>(spatial_dir.size()) == n) ? 1 : 0;
  VecN v = VecN::Zero(n);
  for (int i = 1; i < n; ++i) v[i] = spatial_dir[i - 1 + off];
  MetricEval ev = eval_metric(spec, e);
  double a = ev.g(0, 0);
  double b = 0.0, c = 0.0;
  for (int i = 1; i < n; ++i) {
    b += 2.0 * ev.g(0, i) * v[i];
    for (int j = 1; j < n; ++j) c += ev.g(i, j) * v[i] * v[j];
  }
  // a < 0, c >= 0: the future root is the positive one
  double sq = std::sqrt(std::max(b * b - 4.0 * a * c, 0.0));
  v[0] = (-b - sq) / (2.0 * a);
  if (v[0] < 0.0) v[0] = (-b + sq) / (2.0 * a);
  return v;
}

void GeodesicSegment::eval(double s, VecN& x, VecN& v) const {
  if (samples.size() == 1 || s <= samples.front().s) {
    x = samples.front().x;
    v = samples.front().v;
    return;
  }
  if (s >= samples.back().s) {
    x = samples.back().x;
    v = samples.back().v;
    return;
  }
  auto it = std::lower_bound(samples.begin(), samples.end(), s,
                             [](const GeodesicSample& a, double val) { return a.s < val; });
  const GeodesicSample& hi = *it;
  const GeodesicSample& lo = *(it - 1);
  double h = hi.s - lo.s;
  double t = (s - lo.s) / h;
  double t2 = t * t, t3 = t2 * t;
  double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
  double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  x = h00 * lo.x + (h10 * h) * lo.v + h01 * hi.x + (h11 * h) * hi.v;
  double d00 = (6 * t2 - 6 * t) / h, d10 = 3 * t2 - 4 * t + 1;
  double d01 = (-6 * t2 + 6 * t) / h, d11 = 3 * t2 - 2 * t;
  v = d00 * lo.x + d10 * lo.v + d01 * hi.x + d11 * hi.v;
}

GeodesicSegment integrate_geodesic(const MetricSpec& spec, const Event& x, const VecN& xi,
                                   double s_max, const GeodesicOptions& opt) {
  const int n = spec.dim;
  if (!spec.in_domain(x.x)) throw OutOfDomainError("geodesic start outside domain");
  if (xi.norm() == 0.0) throw SolveError("integrate_geodesic: zero initial vector");

  GeodesicSegment seg;
  seg.x0 = x.x;
  seg.xi0 = xi;

  const double g_vv0 = norm_log(spec, x.x, xi);
  const double np0 = gplus_norm2(spec, Event{x.x}, xi);
  const bool is_null = std::abs(g_vv0) <= 1e-9 * np0;

  StateV y(2 * n);
  y.head(n) = x.x;
  y.segment(n, n) = xi;
  seg.samples.push_back({0.0, x.x, xi, g_vv0});

  Rk45Options ro;
  ro.abs_tol = opt.tol;
  ro.rel_tol = opt.tol;
  ro.max_step = opt.max_step;

  int accepted = 0;
  bool left = false;
  auto rhs = [&spec](double s, const StateV& yy, StateV& dy) { geodesic_rhs(spec, s, yy, dy); };

  try {
    rk45_integrate(
        rhs, 0.0, s_max, y, ro, [&](double s, StateV& yy, double) -> StepOutcome {
          VecN xx = yy.head(n), vv = yy.segment(n, n);
          if (!spec.in_domain(xx)) {
            // bisect the step back to the boundary and land there
            const GeodesicSample prev = seg.samples.back();
            auto integrate_to = [&](double target, StateV& out) {
              out.resize(2 * n);
              out.head(n) = prev.x;
              out.segment(n, n) = prev.v;
              if (target <= prev.s) return;
              Rk45Options ro2 = ro;
              ro2.initial_step = std::max(1e-12, (target - prev.s) * 0.5);
              rk45_integrate(rhs, prev.s, target, out, ro2,
                             [](double, StateV&, double) { return StepOutcome::keep_going; });
            };
            double lo = prev.s, hi = s;
            StateV ym;
            while (hi - lo > opt.boundary_locate_tol * (1.0 + std::abs(hi))) {
              double mid = 0.5 * (lo + hi);
              integrate_to(mid, ym);
              if (spec.in_domain(ym.head(n))) lo = mid;
              else hi = mid;
            }
            if (lo > prev.s) {
              integrate_to(lo, ym);
              VecN xb = ym.head(n), vb = ym.segment(n, n);
              seg.samples.push_back({lo, xb, vb, norm_log(spec, xb, vb)});
            }
            left = true;
            return StepOutcome::stop;
          }
          ++accepted;
          if (is_null && opt.null_renorm_every > 0 && accepted % opt.null_renorm_every == 0) {
            if (renormalize_null(spec, xx, vv)) yy.segment(n, n) = vv;
          }
          seg.samples.push_back({s, xx, vv, norm_log(spec, xx, vv)});
          return StepOutcome::keep_going;
        });
  } catch (const StepFailureError&) {
    seg.termination = Termination::step_failure;
    return seg;
  }

  seg.termination = left ? Termination::left_domain : Termination::reached_param;
  if (!left && seg.samples.back().s < s_max) {
    VecN xx = y.head(n), vv = y.segment(n, n);
    seg.samples.push_back({s_max, xx, vv, norm_log(spec, xx, vv)});
  }
  return seg;
}

Event exp_map(const MetricSpec& spec, const Event& x, const VecN& xi, const GeodesicOptions& opt) {
  if (xi.norm() == 0.0) return x;
  GeodesicSegment seg = integrate_geodesic(spec, x, xi, 1.0, opt);
  if (seg.termination != Termination::reached_param)
    throw OutOfDomainError("exp_map: geodesic left domain before s=1");
  return Event{seg.back().x};
}

namespace {

// Combined geodesic + (n-1) Jacobi pairs; returns the variation determinant
// det[J_1 .. J_{n-1}, gamma_dot] at requested parameters.
struct JacobiIntegrator {
  const MetricSpec& spec;
  int n;
  std::vector<VecN> frame;  // initial D_t J values

  StateV initial(const VecN& x, const VecN& v) const {
    StateV y(2 * n + 2 * n * (n - 1));
    y.head(n) = x;
    y.segment(n, n) = v;
    for (int a = 0; a < n - 1; ++a) {
      y.segment(2 * n + a * 2 * n, n).setZero();            // J_a(0) = 0
      y.segment(2 * n + a * 2 * n + n, n) = frame[a];       // W_a(0) = E_a
    }
    return y;
  }

  void rhs(double, const StateV& y, StateV& dy) const {
    Event e;
    e.x = y.head(n);
    VecN v = y.segment(n, n);
    Christoffel gamma = christoffel_raw(spec, e);
    auto riem = riemann_raw(spec, e);
    dy.resize(y.size());
    dy.head(n) = v;
    for (int k = 0; k < n; ++k) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += v[i] * gamma[k].row(i).dot(v);
      dy[n + k] = -acc;
    }
    for (int a = 0; a < n - 1; ++a) {
      VecN J = y.segment(2 * n + a * 2 * n, n);
      VecN W = y.segment(2 * n + a * 2 * n + n, n);
      // dJ^k = W^k - Gamma^k_ij v^i J^j
      // (D_t W)^k = -R^k_{l i j} J^i v^j v^l
      for (int k = 0; k < n; ++k) {
        double cj = 0.0, cw = 0.0, rr = 0.0;
        for (int i = 0; i < n; ++i) {
          cj += v[i] * gamma[k].row(i).dot(J);
          cw += v[i] * gamma[k].row(i).dot(W);
        }
        for (int l = 0; l < n; ++l) {
          double vl = v[l];
          if (vl == 0.0) continue;
          for (int i = 0; i < n; ++i) {
            double Ji = J[i];
            if (Ji == 0.0) continue;
            rr += riem[k][l].row(i).dot(v) * Ji * vl;
          }
        }
        dy[2 * n + a * 2 * n + k] = W[k] - cj;
        dy[2 * n + a * 2 * n + n + k] = -cw - rr;
      }
    }
  }

  double det(const StateV& y) const {
    MatN m(n, n);
    for (int a = 0; a < n - 1; ++a) m.col(a) = y.segment(2 * n + a * 2 * n, n);
    m.col(n - 1) = y.segment(n, n);
    return m.determinant();
  }
};

}  // namespace

ConjugateReport jacobi_first_conjugate(const MetricSpec& spec, const GeodesicSegment& seg,
                                       const GeodesicOptions& opt) {
  const int n = spec.dim;
  ConjugateReport rep;
  if (seg.samples.size() < 2) return rep;
  const VecN x0 = seg.samples.front().x;
  const VecN v0 = seg.samples.front().v;
  const double s_end = seg.s_end();

  JacobiIntegrator ji{spec, n, {}};
  // complement of the chart axis most aligned with v0
  int skip = 0;
  double best = -1.0;
  for (int i = 0; i < n; ++i)
    if (std::abs(v0[i]) > best) {
      best = std::abs(v0[i]);
      skip = i;
    }
  for (int i = 0; i < n; ++i) {
    if (i == skip) continue;
    VecN e = VecN::Zero(n);
    e[i] = 1.0;
    ji.frame.push_back(e);
  }

  Rk45Options ro;
  ro.abs_tol = opt.tol;
  ro.rel_tol = opt.tol;
  ro.max_step = opt.max_step;

  // The determinant grows like s^{n-1} from the conjugate start at s=0, so
  // sign tracking starts once it is clearly away from zero.
  StateV y = ji.initial(x0, v0);
  auto rhs = [&ji](double s, const StateV& yy, StateV& dy) { ji.rhs(s, yy, dy); };

  double prev_s = 0.0, prev_det = 0.0;
  bool tracking = false;
  double det_scale = 0.0;
  double bracket_lo = -1.0, bracket_hi = -1.0;

  rk45_integrate(rhs, 0.0, s_end, y, ro, [&](double s, StateV& yy, double) -> StepOutcome {
    double d = ji.det(yy);
    rep.det_trace.emplace_back(s, d);
    det_scale = std::max(det_scale, std::abs(d));
    if (!tracking) {
      if (std::abs(d) > 1e-12 * (1.0 + det_scale) && s > 1e-6 * s_end) {
        tracking = true;
        prev_s = s;
        prev_det = d;
      }
      return StepOutcome::keep_going;
    }
    if (d == 0.0 || (d > 0) != (prev_det > 0)) {
      bracket_lo = prev_s;
      bracket_hi = s;
      return StepOutcome::stop;
    }
    prev_s = s;
    prev_det = d;
    return StepOutcome::keep_going;
  });

  if (bracket_lo < 0.0) return rep;

  // bisect the sign change by re-integration from s=0
  auto det_at = [&](double s) {
    StateV yy = ji.initial(x0, v0);
    rk45_integrate(rhs, 0.0, s, yy, ro,
                   [](double, StateV&, double) { return StepOutcome::keep_going; });
    return ji.det(yy);
  };
  double flo = det_at(bracket_lo);
  double lo = bracket_lo, hi = bracket_hi;
  while (hi - lo > 1e-8) {
    double mid = 0.5 * (lo + hi);
    double fm = det_at(mid);
    if (fm == 0.0 || (fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  rep.first_conjugate = 0.5 * (lo + hi);
  return rep;
}

CutResult null_cut_parameter(const MetricSpec& spec, const Event& x, const VecN& xi_null,
                             const TauPositivePredicate& tau_positive, const CutOptions& opt) {
  GeodesicOptions go = opt.geo;
  GeodesicSegment seg = integrate_geodesic(spec, x, xi_null, 1e9, go);
  double s_exit = seg.s_end();

  CutResult res{s_exit, true, false};
  // coarse scan over the integrator's own samples for the first tau flip
  double lo = 0.0, hi = -1.0;
  for (const auto& smp : seg.samples) {
    if (smp.s == 0.0) continue;
    if (tau_positive(smp.x)) {
      hi = smp.s;
      break;
    }
    lo = smp.s;
  }
  if (hi > 0.0) {
    VecN xx, vv;
    while (hi - lo > opt.bracket_tol) {
      double mid = 0.5 * (lo + hi);
      seg.eval(mid, xx, vv);
      if (tau_positive(xx)) hi = mid;
      else lo = mid;
    }
    res.rho = 0.5 * (lo + hi);
    res.lower_bound = false;
  }

  if (opt.check_conjugate) {
    ConjugateReport cr = jacobi_first_conjugate(spec, seg, go);
    if (cr.first_conjugate < res.rho) {
      res.rho = cr.first_conjugate;
      res.lower_bound = false;
      res.from_conjugate = true;
    }
  }
  return res;
}

double diamond_escape(const GeodesicSegment& seg, const DiamondMembership& inside,
                      double bracket_tol) {
  // last inside sample, scanning from the end
  int last_in = -1;
  for (int i = static_cast<int>(seg.samples.size()) - 1; i >= 0; --i) {
    if (inside(seg.samples[i].x)) {
      last_in = i;
      break;
    }
  }
  if (last_in < 0) throw NeverInsideError("geodesic never meets the diamond");
  if (last_in == static_cast<int>(seg.samples.size()) - 1) return seg.samples[last_in].s;

  double lo = seg.samples[last_in].s, hi = seg.samples[last_in + 1].s;
  VecN xx, vv;
  while (hi - lo > bracket_tol) {
    double mid = 0.5 * (lo + hi);
    seg.eval(mid, xx, vv);
    if (inside(xx)) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace chronolens
