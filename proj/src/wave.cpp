#include "chrono_lens/wave.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "chrono_lens/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace chronolens {

void WaveGrid::validate() const {
  if (dim != 2 && dim != 3) throw ConfigError("wave grid dim must be 2 (1+1) or 3 (1+2)");
  if (nx < 8 || nt < 4) throw ConfigError("wave grid too small");
  if (dim == 3 && ny < 8) throw ConfigError("wave grid ny too small");
  if (h <= 0.0 || k <= 0.0) throw ConfigError("wave grid spacing must be positive");
  double max_speed = 1.0;
  if (!flat) {
    // spatial factor e^{2 psi}: wave speed e^{-psi}; psi can dip negative
    max_speed = std::exp(std::abs(bump_amplitude));
  }
  if (k / h > 0.5 / max_speed + 1e-12)
    throw CFLViolationError("k/h = " + std::to_string(k / h) + " exceeds the CFL bound");
}

double GridField::l2() const {
  double acc = 0.0;
  for (double v : data) acc += v * v;
  double cell = grid.k * grid.h * (grid.dim == 3 ? grid.h : 1.0);
  return std::sqrt(acc * cell);
}

double GridField::l2_diff(const GridField& other) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double d = data[i] - other.data[i];
    acc += d * d;
  }
  double cell = grid.k * grid.h * (grid.dim == 3 ? grid.h : 1.0);
  return std::sqrt(acc * cell);
}

namespace {

// smooth compact bump on |rho| < 1
double bump_q(double rho) {
  double r2 = rho * rho;
  if (r2 >= 1.0) return 0.0;
  return std::exp(-r2 / (1.0 - r2));
}

// smooth positive part: (u)_+^p with the kink mollified over width w
double moll_pow_plus(double u, int p, double w) {
  double s = 0.5 * (u + std::sqrt(u * u + w * w));
  return std::pow(s, p);
}

// smooth window equal to 1 at the box center, 0 outside
double box_window(double x, double lo, double hi) {
  if (x <= lo || x >= hi) return 0.0;
  double rho = 2.0 * (x - lo) / (hi - lo) - 1.0;
  return bump_q(rho);
}

}  // namespace

double SourceProfile::eval(int dim, double t, double x, double y) const {
  if (type == SourceType::gaussian_bump) {
    double v = amplitude * bump_q((t - center[0]) / width[0]) * bump_q((x - center[1]) / width[1]);
    if (dim == 3) v *= bump_q((y - center[2]) / width[2]);
    return v;
  }
  double phase = b[0] * t + b[1] * x + (dim == 3 ? b[2] * y : 0.0) - offset;
  double v = amplitude * moll_pow_plus(phase, power, moll_width);
  v *= box_window(t, box_lo[0], box_hi[0]);
  v *= box_window(x, box_lo[1], box_hi[1]);
  if (dim == 3) v *= box_window(y, box_lo[2], box_hi[2]);
  return v;
}

void SourceProfile::validate(const WaveGrid& grid) const {
  if (type == SourceType::mollified_plane_wave) {
    double q = -b[0] * b[0] + b[1] * b[1] + (grid.dim == 3 ? b[2] * b[2] : 0.0);
    double n2 = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
    if (std::abs(q) > 1e-9 * n2)
      throw ConfigError("plane-wave covector is not null for the flat background");
    if (power < 2) throw ConfigError("plane-wave power must be >= 2");
    for (int a = 0; a < grid.dim; ++a)
      if (!(box_lo[a] < box_hi[a])) throw ConfigError("plane-wave support box is empty");
  }
}

GridField sample_source(const WaveGrid& grid, const SourceProfile& profile) {
  profile.validate(grid);
  GridField f(grid);
  const int ny = (grid.dim == 3) ? grid.ny : 1;
  for (int it = 0; it < grid.nt; ++it)
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < grid.nx; ++ix)
        f.at(it, ix, iy) = profile.eval(grid.dim, grid.t_at(it), grid.x_at(ix), grid.y_at(iy));
  return f;
}

GridField constant_field(const WaveGrid& grid, double value) {
  GridField f(grid);
  std::fill(f.data.begin(), f.data.end(), value);
  return f;
}

namespace {

// Frozen-coefficient tables for box_g on -dt^2 + e^{2 psi(y)} delta:
//   box u = u_tt - e^{-d psi} div(e^{(d-2) psi} grad u),  d = spatial dim.
// Face-centered weights keep the operator symmetric.
struct MetricTables {
  bool flat = true;
  std::vector<double> inv_vol;  // e^{-d psi} per cell
  std::vector<double> wx;       // e^{(d-2) psi} at x-faces (i+1/2)
  std::vector<double> wy;       // same at y-faces
};

double grid_psi(const WaveGrid& g, double x, double y) {
  double dx = x - g.bump_center[0];
  double dy = (g.dim == 3) ? y - g.bump_center[1] : 0.0;
  return g.bump_amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * g.bump_width * g.bump_width));
}

MetricTables build_tables(const WaveGrid& g) {
  MetricTables t;
  t.flat = g.flat;
  if (g.flat) return t;
  const int ny = (g.dim == 3) ? g.ny : 1;
  const int d = g.dim - 1;
  t.inv_vol.resize(g.slice());
  t.wx.resize(g.slice());
  t.wy.resize(g.slice());
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      double x = g.x_at(ix), y = g.y_at(iy);
      t.inv_vol[g.index(ix, iy)] = std::exp(-d * grid_psi(g, x, y));
      t.wx[g.index(ix, iy)] = std::exp((d - 2) * grid_psi(g, x + 0.5 * g.h, y));
      t.wy[g.index(ix, iy)] = std::exp((d - 2) * grid_psi(g, x, y + 0.5 * g.h));
    }
  return t;
}

// One leapfrog slice update:
//   next = 2 curr - prev + k^2 (L curr - a curr^2 + src)
// Cells are independent; the parallel path is bitwise identical to serial.
void step_slice(const WaveGrid& g, const MetricTables& tab, const double* prev,
                const double* curr, double* next, const double* a_slice, const double* src_slice,
                bool nonlinear, bool force_serial) {
  const int nx = g.nx;
  const int ny = (g.dim == 3) ? g.ny : 1;
  const double k2 = g.k * g.k;
  const double inv_h2 = 1.0 / (g.h * g.h);

  auto row_update = [&](int iy) {
    const bool has_y = (g.dim == 3);
    for (int ix = 0; ix < nx; ++ix) {
      const int id = iy * nx + ix;
      double lap;
      if (ix == 0 || ix == nx - 1 || (has_y && (iy == 0 || iy == ny - 1))) {
        next[id] = 0.0;  // far boundary, never reached by the probe region
        continue;
      }
      if (tab.flat) {
        lap = (curr[id - 1] - 2.0 * curr[id] + curr[id + 1]) * inv_h2;
        if (has_y) lap += (curr[id - nx] - 2.0 * curr[id] + curr[id + nx]) * inv_h2;
      } else {
        double fx = tab.wx[id] * (curr[id + 1] - curr[id]) - tab.wx[id - 1] * (curr[id] - curr[id - 1]);
        double acc = fx;
        if (has_y)
          acc += tab.wy[id] * (curr[id + nx] - curr[id]) -
                 tab.wy[id - nx] * (curr[id] - curr[id - nx]);
        lap = tab.inv_vol[id] * acc * inv_h2;
      }
      double rhs = lap + (src_slice ? src_slice[id] : 0.0);
      if (nonlinear) rhs -= a_slice[id] * curr[id] * curr[id];
      next[id] = 2.0 * curr[id] - prev[id] + k2 * rhs;
    }
  };

  if (force_serial || jobs() <= 1 || ny < 4) {
    for (int iy = 0; iy < ny; ++iy) row_update(iy);
  } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(jobs())
    for (int iy = 0; iy < ny; ++iy) row_update(iy);
#else
    for (int iy = 0; iy < ny; ++iy) row_update(iy);
#endif
  }
}

void nan_scan(const GridField& u, int it) {
  const double* p = u.slice_ptr(it);
  for (int i = 0; i < u.grid.slice(); ++i)
    if (!std::isfinite(p[i]))
      throw SolveError("non-finite field value at step " + std::to_string(it));
}

GridField run_leapfrog(const WaveGrid& grid, const GridField* a, const GridField& f, double eps,
                       bool nonlinear, bool force_serial) {
  grid.validate();
  MetricTables tab = build_tables(grid);
  GridField u(grid);
  // zero data before the source turns on: u^0 = u^1 = 0 already
  for (int it = 1; it + 1 < grid.nt; ++it) {
    // source slice scaled by eps
    std::vector<double> src(grid.slice());
    const double* fs = f.slice_ptr(it);
    for (int i = 0; i < grid.slice(); ++i) src[i] = eps * fs[i];
    step_slice(grid, tab, u.slice_ptr(it - 1), u.slice_ptr(it), u.slice_ptr(it + 1),
               a ? a->slice_ptr(it) : nullptr, src.data(), nonlinear, force_serial);
    if ((it & 63) == 0) nan_scan(u, it + 1);
  }
  nan_scan(u, grid.nt - 1);
  return u;
}

}  // namespace

GridField causal_solve(const WaveGrid& grid, const GridField& source, bool force_serial) {
  return run_leapfrog(grid, nullptr, source, 1.0, false, force_serial);
}

GridField nonlinear_solve(const WaveGrid& grid, const GridField& a, const GridField& f, double eps,
                          NonlinearRoute route, bool force_serial) {
  if (route == NonlinearRoute::direct) return run_leapfrog(grid, &a, f, eps, true, force_serial);

  // Picard: u_{n+1} = Q(eps f - a u_n^2)
  GridField u(grid);
  double prev_update = 1e300;
  for (int iter = 0; iter < 60; ++iter) {
    GridField rhs(grid);
    for (long i = 0; i < grid.total(); ++i)
      rhs.data[i] = eps * f.data[i] - a.data[i] * u.data[i] * u.data[i];
    GridField next = causal_solve(grid, rhs, force_serial);
    double delta = next.l2_diff(u);
    double scale = std::max(next.l2(), 1e-300);
    u = std::move(next);
    if (delta / scale < 1e-10) return u;
    if (delta > 4.0 * prev_update && iter > 3)
      throw PicardDivergedError("picard update grew at iteration " + std::to_string(iter) +
                                " (delta " + std::to_string(delta) + ")");
    prev_update = delta;
  }
  throw PicardDivergedError("picard did not converge in 60 iterations");
}

namespace {

GridField pointwise_product(const GridField& a, const GridField& u, const GridField& v) {
  GridField out(a.grid);
  for (long i = 0; i < a.grid.total(); ++i) out.data[i] = a.data[i] * u.data[i] * v.data[i];
  return out;
}

}  // namespace

ExpansionTerms expansion_terms(const WaveGrid& grid, const GridField& a, const GridField& f) {
  ExpansionTerms t{GridField(grid), GridField(grid), GridField(grid), GridField(grid)};
  t.w1 = causal_solve(grid, f);
  // w2 = -Q(a w1 w1)
  GridField s2 = pointwise_product(a, t.w1, t.w1);
  GridField q2 = causal_solve(grid, s2);
  t.w2 = GridField(grid);
  for (long i = 0; i < grid.total(); ++i) t.w2.data[i] = -q2.data[i];
  // w3 = -2 Q(a w1 w2)
  GridField s3 = pointwise_product(a, t.w1, t.w2);
  GridField q3 = causal_solve(grid, s3);
  for (long i = 0; i < grid.total(); ++i) t.w3.data[i] = -2.0 * q3.data[i];
  // w4 = -Q(a w2 w2) - 2 Q(a w1 w3)
  GridField s4a = pointwise_product(a, t.w2, t.w2);
  GridField s4b = pointwise_product(a, t.w1, t.w3);
  GridField q4a = causal_solve(grid, s4a);
  GridField q4b = causal_solve(grid, s4b);
  for (long i = 0; i < grid.total(); ++i) t.w4.data[i] = -q4a.data[i] - 2.0 * q4b.data[i];
  return t;
}

void check_support_causality(const WaveGrid& grid, const std::array<GridField, 4>& f) {
  // bounding boxes of the numeric supports
  struct Box {
    double t_lo = 1e300, t_hi = -1e300;
    double x_lo = 1e300, x_hi = -1e300;
    double y_lo = 1e300, y_hi = -1e300;
    bool empty = true;
  };
  std::array<Box, 4> boxes;
  const int ny = (grid.dim == 3) ? grid.ny : 1;
  for (int j = 0; j < 4; ++j) {
    for (int it = 0; it < grid.nt; ++it)
      for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < grid.nx; ++ix)
          if (f[j].at(it, ix, iy) != 0.0) {
            Box& b = boxes[j];
            b.empty = false;
            b.t_lo = std::min(b.t_lo, grid.t_at(it));
            b.t_hi = std::max(b.t_hi, grid.t_at(it));
            b.x_lo = std::min(b.x_lo, grid.x_at(ix));
            b.x_hi = std::max(b.x_hi, grid.x_at(ix));
            b.y_lo = std::min(b.y_lo, grid.y_at(iy));
            b.y_hi = std::max(b.y_hi, grid.y_at(iy));
          }
  }
  auto box_dist = [&](const Box& a, const Box& b) {
    double dx = std::max({0.0, a.x_lo - b.x_hi, b.x_lo - a.x_hi});
    double dy = (grid.dim == 3) ? std::max({0.0, a.y_lo - b.y_hi, b.y_lo - a.y_hi}) : 0.0;
    return std::sqrt(dx * dx + dy * dy);
  };
  double max_speed = grid.flat ? 1.0 : std::exp(std::abs(grid.bump_amplitude));
  for (int j = 0; j < 4; ++j)
    for (int kk = 0; kk < 4; ++kk) {
      if (j == kk || boxes[j].empty || boxes[kk].empty) continue;
      // J^+(supp f_k) reaches supp f_j only if the cone from box k covers the
      // spatial gap within the time available
      double dt = boxes[j].t_hi - boxes[kk].t_lo;
      if (dt < 0.0) continue;
      if (box_dist(boxes[j], boxes[kk]) <= dt * max_speed + grid.h)
        throw SupportOverlapError("sources " + std::to_string(j) + " and " + std::to_string(kk) +
                                  " are not causally independent");
    }
}

GridField fourth_interaction_formula(const WaveGrid& grid, const GridField& a,
                                     const std::array<GridField, 4>& f) {
  check_support_causality(grid, f);

  // first-order waves
  std::array<GridField, 4> u = {causal_solve(grid, f[0]), causal_solve(grid, f[1]),
                                causal_solve(grid, f[2]), causal_solve(grid, f[3])};

  // pair solves P_{ij} = Q(a u_i u_j), i < j
  std::map<std::pair<int, int>, GridField> P;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      P.emplace(std::make_pair(i, j), causal_solve(grid, pointwise_product(a, u[i], u[j])));
  auto pair_of = [&](int i, int j) -> const GridField& {
    return P.at(std::make_pair(std::min(i, j), std::max(i, j)));
  };

  // all 24 permutations, sorted so nested solves N = Q(a u_j P_kl) are
  // computed once per distinct (j, {k, l}) and reused while hot
  std::vector<std::array<int, 4>> perms;
  std::array<int, 4> p = {0, 1, 2, 3};
  do {
    perms.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  std::stable_sort(perms.begin(), perms.end(), [](const auto& s1, const auto& s2) {
    auto key = [](const std::array<int, 4>& s) {
      return std::array<int, 3>{s[1], std::min(s[2], s[3]), std::max(s[2], s[3])};
    };
    return key(s1) < key(s2);
  });

  GridField S(grid);  // accumulated source of the outer causal inverse
  std::array<int, 3> cached_key = {-1, -1, -1};
  GridField cached_N;
  for (const auto& sigma : perms) {
    // Q(a Q(a u_s1 u_s2) Q(a u_s3 u_s4))  contributes  a P P to S
    const GridField& Pa = pair_of(sigma[0], sigma[1]);
    const GridField& Pb = pair_of(sigma[2], sigma[3]);
    for (long i = 0; i < grid.total(); ++i)
      S.data[i] -= a.data[i] * Pa.data[i] * Pb.data[i];
    // 4 Q(a u_s1 Q(a u_s2 Q(a u_s3 u_s4)))  contributes  4 a u N
    std::array<int, 3> key = {sigma[1], std::min(sigma[2], sigma[3]),
                              std::max(sigma[2], sigma[3])};
    if (key != cached_key) {
      cached_N = causal_solve(grid, pointwise_product(a, u[sigma[1]], pair_of(sigma[2], sigma[3])));
      cached_key = key;
    }
    for (long i = 0; i < grid.total(); ++i)
      S.data[i] -= 4.0 * a.data[i] * u[sigma[0]].data[i] * cached_N.data[i];
  }
  return causal_solve(grid, S);
}

GridField fourth_interaction_finite_difference(const WaveGrid& grid, const GridField& a,
                                               const std::array<GridField, 4>& f, double delta) {
  GridField m4(grid);
  const double norm = 1.0 / (16.0 * delta * delta * delta * delta);
  for (int mask = 0; mask < 16; ++mask) {
    double parity = 1.0;
    GridField combo(grid);
    for (int j = 0; j < 4; ++j) {
      double sgn = (mask & (1 << j)) ? 1.0 : -1.0;
      parity *= sgn;
      for (long i = 0; i < grid.total(); ++i) combo.data[i] += sgn * delta * f[j].data[i];
    }
    GridField u = nonlinear_solve(grid, a, combo, 1.0, NonlinearRoute::direct);
    for (long i = 0; i < grid.total(); ++i) m4.data[i] += parity * norm * u.data[i];
  }
  return m4;
}

ScanTable singularity_scan(const GridField& m4, double t_q, double x_q, double y_q,
                           const ScanConfig& cfg) {
  const WaveGrid& g = m4.grid;
  if (g.dim != 3) throw ConfigError("singularity scan expects a 1+2 grid");
  ScanTable table;
  table.intersection_configured = cfg.intersection_configured;

  int it_q = static_cast<int>(std::lround((t_q - g.t0) / g.k));
  double band = cfg.band_cells * g.h;

  double band_sum = 0.0, off_sum = 0.0;
  long band_n = 0, off_n = 0;
  std::vector<double> offsets;

  for (int s = 0; s < cfg.count; ++s) {
    int it = it_q + cfg.first_offset + s * cfg.stride;
    if (it < 0 || it >= g.nt) break;
    double r = (g.t_at(it) - t_q);  // flat cone radius
    if (r <= 2.0 * g.h) continue;
    double scan_r = r + 8.0 * g.h;

    ScanRow row;
    row.t = g.t_at(it);
    double bsum = 0.0, osum = 0.0, gb = 0.0, go = 0.0;
    long bn = 0, on = 0;
    double peak_val = 0.0, peak_dist = 0.0;
    for (int iy = 1; iy + 1 < g.ny; ++iy)
      for (int ix = 1; ix + 1 < g.nx; ++ix) {
        double dx = g.x_at(ix) - x_q, dy = g.y_at(iy) - y_q;
        double dist = std::sqrt(dx * dx + dy * dy);
        if (dist > scan_r) continue;
        double v = std::abs(m4.at(it, ix, iy));
        double gx = (m4.at(it, ix + 1, iy) - m4.at(it, ix - 1, iy)) / (2.0 * g.h);
        double gy = (m4.at(it, ix, iy + 1) - m4.at(it, ix, iy - 1)) / (2.0 * g.h);
        double gv = std::sqrt(gx * gx + gy * gy);
        if (std::abs(dist - r) <= band) {
          bsum += v;
          gb += gv;
          ++bn;
        } else {
          osum += v;
          go += gv;
          ++on;
        }
        if (v > peak_val) {
          peak_val = v;
          peak_dist = dist;
        }
      }
    if (bn == 0 || on == 0) continue;
    row.band_mean = bsum / bn;
    row.off_mean = osum / on;
    row.grad_band_mean = gb / bn;
    row.grad_off_mean = go / on;
    row.peak_offset = std::abs(peak_dist - r) / g.h;
    offsets.push_back(row.peak_offset);
    band_sum += bsum;
    band_n += bn;
    off_sum += osum;
    off_n += on;
    table.rows.push_back(row);
  }
  if (band_n > 0 && off_n > 0 && off_sum > 0.0)
    table.on_off_ratio = (band_sum / band_n) / (off_sum / off_n);
  if (!offsets.empty()) {
    std::sort(offsets.begin(), offsets.end());
    table.median_peak_offset = offsets[offsets.size() / 2];
  }
  return table;
}

ExpansionReport expansion_remainder_study(const WaveGrid& grid, const GridField& a,
                                          const GridField& f, const std::vector<double>& eps_list) {
  if (eps_list.size() < 4) throw ConfigError("need at least 4 epsilon values");
  double span = *std::max_element(eps_list.begin(), eps_list.end()) /
                *std::min_element(eps_list.begin(), eps_list.end());
  if (span < 10.0 - 1e-9) throw ConfigError("epsilon values must span at least one decade");

  ExpansionTerms w = expansion_terms(grid, a, f);
  ExpansionReport rep;
  for (double eps : eps_list) {
    GridField u = nonlinear_solve(grid, a, f, eps, NonlinearRoute::direct);
    GridField sum(grid);
    for (long i = 0; i < grid.total(); ++i)
      sum.data[i] = eps * w.w1.data[i] + eps * eps * w.w2.data[i] +
                    eps * eps * eps * w.w3.data[i] + eps * eps * eps * eps * w.w4.data[i];
    rep.eps.push_back(eps);
    rep.remainder_l2.push_back(u.l2_diff(sum));
  }
  // log-log slope by least squares
  int m = static_cast<int>(rep.eps.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < m; ++i) {
    double lx = std::log10(rep.eps[i]);
    double ly = std::log10(std::max(rep.remainder_l2[i], 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  rep.loglog_slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return rep;
}

double discrete_energy(const GridField& u, int it) {
  const WaveGrid& g = u.grid;
  if (it + 1 >= g.nt) throw ConfigError("energy needs slices it and it+1");
  const int ny = (g.dim == 3) ? g.ny : 1;
  double cell = g.h * (g.dim == 3 ? g.h : 1.0);
  double acc = 0.0;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix + 1 < g.nx; ++ix) {
      double ut = (u.at(it + 1, ix, iy) - u.at(it, ix, iy)) / g.k;
      acc += 0.5 * ut * ut;
      double dx1 = (u.at(it + 1, ix + 1, iy) - u.at(it + 1, ix, iy)) / g.h;
      double dx0 = (u.at(it, ix + 1, iy) - u.at(it, ix, iy)) / g.h;
      acc += 0.5 * dx1 * dx0;
      if (g.dim == 3 && iy + 1 < ny) {
        double dy1 = (u.at(it + 1, ix, iy + 1) - u.at(it + 1, ix, iy)) / g.h;
        double dy0 = (u.at(it, ix, iy + 1) - u.at(it, ix, iy)) / g.h;
        acc += 0.5 * dy1 * dy0;
      }
    }
  return acc * cell;
}

}  // namespace chronolens
