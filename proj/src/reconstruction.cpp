#include "chrono_lens/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "chrono_lens/parallel.hpp"
#include "chrono_lens/rk45.hpp"

namespace chronolens {

namespace {

double angle_between(const VecN& a, const VecN& b) {
  double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

// deterministic candidate n-tuples out of the observer id list
std::vector<std::vector<int>> candidate_tuples(const std::vector<int>& ids, int n, int how_many) {
  std::vector<std::vector<int>> out;
  const int K = static_cast<int>(ids.size());
  if (K < n) return out;
  auto push_unique = [&](std::vector<int> t) {
    std::sort(t.begin(), t.end());
    if (std::set<int>(t.begin(), t.end()).size() != t.size()) return;
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
  };
  // strided picks starting from every offset
  for (int c = 0; c < K && static_cast<int>(out.size()) < how_many; ++c) {
    for (int stride = 1; stride <= std::max(1, K / n) + 1; ++stride) {
      std::vector<int> t;
      for (int j = 0; j < n; ++j) t.push_back(ids[(c + j * stride) % K]);
      push_unique(t);
      if (static_cast<int>(out.size()) >= how_many) break;
    }
  }
  return out;
}

}  // namespace

ChartSet observation_time_chart(const DatasetView& view, int target_source,
                                const ReconConfig& cfg) {
  const int n = view.spec().dim;
  std::vector<int> obs_ids;
  for (const auto& mu : view.grid().members) obs_ids.push_back(mu.id);
  std::sort(obs_ids.begin(), obs_ids.end());

  auto tuples = candidate_tuples(obs_ids, n, cfg.tuple_candidates);
  if (tuples.empty()) throw NoValidTupleError("not enough observers for an n-tuple");

  // Y rows per tuple: every source with a full set of earliest arrivals
  auto build_rows = [&](const std::vector<int>& tuple) {
    std::map<int, VecN> rows;
    for (int sid : view.source_ids()) {
      VecN y(n);
      bool full = true;
      for (int j = 0; j < n && full; ++j) {
        const auto* rec = view.earliest_record(sid, tuple[j]);
        if (!rec) full = false;
        else y[j] = rec->s;
      }
      if (full) rows[sid] = y;
    }
    return rows;
  };

  ChartSet best;
  best.target = target_source;
  best.condition = 1e300;
  for (const auto& tuple : tuples) {
    auto rows = build_rows(tuple);
    auto it = rows.find(target_source);
    if (it == rows.end()) continue;
    const VecN& y0 = it->second;
    // nearest neighbors in the tuple's own Y metric
    std::vector<std::pair<double, int>> close;
    for (const auto& [sid, y] : rows) {
      if (sid == target_source) continue;
      close.emplace_back((y - y0).norm(), sid);
    }
    if (static_cast<int>(close.size()) < n) continue;
    std::sort(close.begin(), close.end());
    int k = std::min<int>(cfg.k_nearest, static_cast<int>(close.size()));
    Eigen::MatrixXd D(k, n);
    for (int i = 0; i < k; ++i) {
      VecN d = rows[close[i].second] - y0;
      D.row(i) = Eigen::VectorXd(d).transpose() / d.norm();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(D);
    double smin = svd.singularValues()(svd.singularValues().size() - 1);
    double cond = (smin > 0.0) ? svd.singularValues()(0) / smin : 1e300;
    if (cond < best.condition) {
      best.condition = cond;
      best.observers = tuple;
      best.y = std::move(rows);
    }
  }
  if (best.observers.empty() || best.condition > cfg.kappa_max)
    throw NoValidTupleError("all candidate tuples exceed kappa_max at source " +
                            std::to_string(target_source));
  return best;
}

std::vector<NullTrace> build_null_traces(const DatasetView& view, const ChartSet& chart,
                                         int target_source, const ReconConfig& cfg) {
  const int n = view.spec().dim;
  std::vector<NullTrace> traces;
  auto target_records = view.records_of(target_source);

  for (const auto* anchor : target_records) {
    if (!anchor->usable) continue;
    // sources sharing this arrival: same observer, same arrival time and
    // direction (they sit on the same past null geodesic)
    struct Member {
      int sid;
      double affine;
    };
    std::vector<Member> members{{target_source, anchor->affine_len}};
    for (const auto& r : view.records()) {
      if (r.observer_id != anchor->observer_id || r.source_id == target_source || !r.usable)
        continue;
      if (std::abs(r.s - anchor->s) >= cfg.match_tol) continue;
      if (angle_between(r.dir_unit, anchor->dir_unit) >= cfg.dir_tol) continue;
      members.push_back({r.source_id, r.affine_len});
    }
    if (static_cast<int>(members.size()) < cfg.min_trace_points) continue;  // TooFewMatches

    std::sort(members.begin(), members.end(),
              [](const Member& a, const Member& b) { return a.affine < b.affine; });

    NullTrace tr;
    tr.observer_id = anchor->observer_id;
    tr.anchor_s = anchor->s;
    std::vector<VecN> pts;
    int target_idx = -1;
    for (const auto& m : members) {
      auto it = chart.y.find(m.sid);
      if (it == chart.y.end()) continue;
      if (m.sid == target_source) target_idx = static_cast<int>(pts.size());
      tr.member_sources.push_back(m.sid);
      pts.push_back(it->second);
    }
    if (static_cast<int>(pts.size()) < cfg.min_trace_points || target_idx < 0) continue;

    // chord parametrization centered on the target's point
    const int m = static_cast<int>(pts.size());
    std::vector<double> t(m, 0.0);
    for (int i = 1; i < m; ++i) t[i] = t[i - 1] + (pts[i] - pts[i - 1]).norm();
    double t0 = t[target_idx];
    double span = std::max(t.back() - t.front(), 1e-12);
    for (auto& ti : t) ti = (ti - t0) / span;

    // per-component cubic least squares
    Eigen::MatrixXd A(m, 4);
    for (int i = 0; i < m; ++i) {
      A(i, 0) = 1.0;
      A(i, 1) = t[i];
      A(i, 2) = t[i] * t[i];
      A(i, 3) = t[i] * t[i] * t[i];
    }
    Eigen::MatrixXd Y(m, n);
    for (int i = 0; i < m; ++i) Y.row(i) = Eigen::VectorXd(pts[i]).transpose();
    Eigen::MatrixXd coef = A.colPivHouseholderQr().solve(Y);
    double resid = (A * coef - Y).cwiseAbs().maxCoeff() / span;

    VecN tangent(n);
    for (int c = 0; c < n; ++c) tangent[c] = coef(1, c);  // derivative at t = 0
    tr.y_points = pts;
    tr.tangent = tangent;
    tr.fit_residual = resid;
    if (tr.fit_residual > cfg.trace_residual_max) continue;
    if (tangent.norm() == 0.0) continue;
    traces.push_back(std::move(tr));
  }
  return traces;
}

MatN normalize_cone_form(const MatN& c) {
  MatN out = 0.5 * (c + c.transpose());
  double f = out.norm();
  if (f == 0.0) return out;
  out /= f;
  if (out(0, 0) > 0.0) out = -out;
  return out;
}

ConformalEstimate fit_null_cone(const std::vector<NullTrace>& traces, int dim,
                                int target_source_id) {
  const int n = dim;
  const int M = n * (n + 1) / 2;
  std::vector<VecN> dirs;
  for (const auto& tr : traces) dirs.push_back(tr.tangent / tr.tangent.norm());
  if (static_cast<int>(dirs.size()) < M - 1)
    throw DegenerateSpanError("need at least " + std::to_string(M - 1) + " trace directions, got " +
                              std::to_string(dirs.size()));

  Eigen::MatrixXd D(dirs.size(), M);
  for (std::size_t r = 0; r < dirs.size(); ++r) {
    int c = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j)
        D(r, c++) = (i == j) ? dirs[r][i] * dirs[r][j] : 2.0 * dirs[r][i] * dirs[r][j];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();  // min(rows, M) values
  const int nsv = static_cast<int>(sv.size());
  // with exactly M-1 rows the null space is exact; otherwise read the tail
  double s_last = (nsv >= M) ? sv(M - 1) : 0.0;
  double s_prev = sv(std::min(nsv - 1, M - 2));
  if (s_prev < 1e-10 * sv(0))
    throw DegenerateSpanError("trace directions do not span the cone (rank-deficient design)");

  Eigen::VectorXd c = svd.matrixV().col(M - 1);
  MatN C = MatN::Zero(n, n);
  int idx = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      C(i, j) = c(idx);
      C(j, i) = c(idx);
      ++idx;
    }
  C = normalize_cone_form(C);

  Eigen::SelfAdjointEigenSolver<MatN> es(C);
  int neg = 0;
  for (int k = 0; k < n; ++k)
    if (es.eigenvalues()[k] < 0) ++neg;
  if (neg != 1)
    throw NonLorentzianFitError("fitted form has " + std::to_string(neg) +
                                " negative eigenvalues");

  ConformalEstimate est;
  est.target_source_id = target_source_id;
  est.C = C;
  est.sv_gap = (s_prev > 0.0) ? s_last / s_prev : 0.0;
  for (const auto& v : dirs) est.residuals.push_back(std::abs(v.dot(C * v)));
  return est;
}

double conformal_class_distance(const MatN& a, const MatN& b) {
  MatN na = normalize_cone_form(a);
  MatN nb = normalize_cone_form(b);
  return std::min((na - nb).norm(), (na + nb).norm());
}

FactorOdeResult conformal_factor_ode(const MetricSpec& g, const Event& x0, const VecN& xi_null,
                                     double s_max, double f0, const VecN& grad0, double tol) {
  const int n = g.dim;
  if (!g.in_domain(x0.x)) throw OutOfDomainError("factor ode start outside domain");

  // state: x (n), v (n), w = grad f (n, lowered), f (1)
  StateV y(3 * n + 1);
  y.head(n) = x0.x;
  y.segment(n, n) = xi_null;
  y.segment(2 * n, n) = grad0;
  y[3 * n] = f0;

  auto rhs = [&](double, const StateV& yy, StateV& dy) {
    Event e;
    e.x = yy.head(n);
    VecN v = yy.segment(n, n);
    VecN w = yy.segment(2 * n, n);
    MetricEval ev = eval_metric_raw(g, e);
    Christoffel gamma = christoffel_raw(g, e);
    auto riem = riemann_raw(g, e);
    MatN ric = MatN::Zero(n, n);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += riem[l][j](l, k);
        ric(j, k) = s;
      }
    ric = 0.5 * (ric + ric.transpose());
    double scal = (ev.g_inv * ric).trace();

    dy.resize(3 * n + 1);
    dy.head(n) = v;
    for (int k = 0; k < n; ++k) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += v[i] * gamma[k].row(i).dot(v);
      dy[n + k] = -acc;
    }
    // Vacuum conformal identity for g_hat = e^{2f} g, Ric(g_hat) = 0:
    //   2 grad^2 f = Ric(g) + 2 w w - (box f + 2 |w|^2) g,
    //   box f = Scal(g)/6 - |w|^2.
    // Contract with gamma_dot and convert the covariant derivative to the
    // chart derivative of the components w_k.
    VecN v_low = ev.g * v;
    double w2 = w.dot(ev.g_inv * w);
    double vw = v.dot(w);
    double boxf = scal / 6.0 - w2;
    for (int k = 0; k < n; ++k) {
      double vjRic = v.dot(ric.col(k));
      double dd = 0.5 * vjRic + vw * w[k] - 0.5 * (boxf + 2.0 * w2) * v_low[k];
      // d_t w_k = gamma_dot^j (grad^2 f)_{jk} + Gamma^l_{jk} gamma_dot^j w_l
      double conn = 0.0;
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) conn += v[j] * gamma[l](j, k) * w[l];
      dy[2 * n + k] = dd + conn;
    }
    dy[3 * n] = vw;
  };

  Rk45Options ro;
  ro.abs_tol = tol;
  ro.rel_tol = tol;
  ro.max_step = s_max;  // let the error controller pick the step

  FactorOdeResult res;
  auto record = [&](double s, const StateV& yy) {
    res.t.push_back(s);
    res.x.push_back(yy.head(n));
    res.grad.push_back(yy.segment(2 * n, n));
    res.f.push_back(yy[3 * n]);
  };
  record(0.0, y);
  rk45_integrate(rhs, 0.0, s_max, y, ro, [&](double s, StateV& yy, double) {
    if (!g.in_domain(VecN(yy.head(n))))
      throw LeftVacuumRegionError("null geodesic left the declared vacuum region");
    record(s, yy);
    return StepOutcome::keep_going;
  });
  return res;
}

ReconReport reconstruct_region(const DatasetView& view, const ReconConfig& cfg) {
  std::vector<int> targets = cfg.targets;
  if (targets.empty()) targets = view.source_ids();

  ReconReport report;
  report.targets.resize(targets.size());
  report.attempted = static_cast<int>(targets.size());

  parallel_for_each(targets.size(), [&](std::size_t i) {
    TargetReport& tr = report.targets[i];
    tr.target = targets[i];
    try {
      ChartSet chart = observation_time_chart(view, targets[i], cfg);
      auto traces = build_null_traces(view, chart, targets[i], cfg);
      tr.trace_count = static_cast<int>(traces.size());
      tr.chart_condition = chart.condition;
      tr.observer_tuple = chart.observers;
      for (const auto& t : traces)
        tr.max_trace_residual = std::max(tr.max_trace_residual, t.fit_residual);
      tr.estimate = fit_null_cone(traces, view.spec().dim, targets[i]);
      tr.ok = true;
    } catch (const std::exception& e) {
      tr.ok = false;
      tr.skip_reason = e.what();
    }
  });
  for (const auto& t : report.targets)
    if (t.ok) ++report.reconstructed;
  return report;
}

MatN reference_cone_pushforward(const MetricSpec& spec, const ObservationDataset& ds,
                                const ObserverGrid& grid, const std::vector<int>& tuple,
                                int target) {
  const int n = spec.dim;
  // truth position of the target
  VecN q;
  bool found = false;
  for (const auto& s : ds.truth)
    if (s.id == target) {
      q = s.x;
      found = true;
    }
  if (!found) throw SolveError("target truth not present in dataset");
  MetricEval ev = eval_metric(spec, Event{q});

  MatN J(n, n);  // J(j, k) = dY^j / dq^k
  for (int j = 0; j < n; ++j) {
    // earliest record of the target on tuple observer j
    const ArrivalRecord* best = nullptr;
    for (const auto& r : ds.records)
      if (r.source_id == target && r.observer_id == tuple[j] && !r.on_worldline)
        if (!best || r.s < best->s) best = &r;
    if (!best) throw SolveError("missing record for tuple observer");
    VecN launch_scaled = best->launch_unit * best->affine_len;  // exp(launch_scaled) = arrival
    VecN theta = best->tangent * best->affine_len;
    const Worldline* mu = nullptr;
    for (const auto& m : grid.members)
      if (m.id == tuple[j]) mu = &m;
    if (!mu) throw SolveError("tuple observer missing from grid");
    VecN wx, wv;
    mu->eval(best->s, wx, wv);
    MetricEval ev_arr = eval_metric(spec, Event{wx});
    double cj = 1.0 / theta.dot(ev_arr.g * wv);
    VecN grad = cj * launch_scaled;       // grad_g Y^j at q
    VecN dY = ev.g * grad;                // lowered: dY^j_k
    for (int k = 0; k < n; ++k) J(j, k) = dY[k];
  }
  MatN Jinv = J.inverse();
  MatN pushed = Jinv.transpose() * ev.g * Jinv;
  return normalize_cone_form(pushed);
}

}  // namespace chronolens
