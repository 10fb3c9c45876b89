#ifndef CHRONO_LENS_WAVE_HPP_
#define CHRONO_LENS_WAVE_HPP_

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "chrono_lens/errors.hpp"
#include "chrono_lens/metric.hpp"

namespace chronolens {

// Space-time lattice for the causal wave solver.  dim counts the spacetime
// dimension: 2 for 1+1, 3 for 1+2.
struct WaveGrid {
  int dim = 2;
  int nx = 0, ny = 1;
  double x0 = 0.0, y0 = 0.0;
  double h = 0.0;  // spatial spacing, both axes
  int nt = 0;
  double k = 0.0;  // time step, k/h <= 0.5
  double t0 = 0.0;

  // background: flat, or the spatial factor e^{2 psi(y)} of a product metric
  // frozen onto the grid
  bool flat = true;
  double bump_amplitude = 0.0;
  double bump_width = 1.0;
  std::array<double, 2> bump_center = {0.0, 0.0};

  int slice() const { return nx * (dim == 3 ? ny : 1); }
  long total() const { return static_cast<long>(slice()) * nt; }
  double x_at(int ix) const { return x0 + ix * h; }
  double y_at(int iy) const { return y0 + iy * h; }
  double t_at(int it) const { return t0 + it * k; }
  int index(int ix, int iy) const { return iy * nx + ix; }
  void validate() const;
};

struct GridField {
  WaveGrid grid;
  std::vector<double> data;

  GridField() = default;
  explicit GridField(const WaveGrid& g) : grid(g), data(g.total(), 0.0) {}
  double& at(int it, int ix, int iy = 0) {
    return data[static_cast<long>(it) * grid.slice() + grid.index(ix, iy)];
  }
  double at(int it, int ix, int iy = 0) const {
    return data[static_cast<long>(it) * grid.slice() + grid.index(ix, iy)];
  }
  const double* slice_ptr(int it) const { return data.data() + static_cast<long>(it) * grid.slice(); }
  double* slice_ptr(int it) { return data.data() + static_cast<long>(it) * grid.slice(); }
  double l2() const;
  double l2_diff(const GridField& other) const;
};

enum class SourceType { gaussian_bump, mollified_plane_wave };

// Compactly supported source profiles.  gaussian_bump is a separable smooth
// bump q(rho) = exp(-rho^2 / (1 - rho^2)) on |rho| < 1 per axis; the plane
// wave is amplitude * m(b.x - offset)^power windowed to the support box,
// where m smooths the positive part over moll_width.
struct SourceProfile {
  SourceType type = SourceType::gaussian_bump;
  double amplitude = 1.0;
  // bump: per-axis centers and half-widths (t, x[, y])
  std::array<double, 3> center = {0.0, 0.0, 0.0};
  std::array<double, 3> width = {1.0, 1.0, 1.0};
  // plane wave: null covector (b_t, b_x[, b_y]), offset, power, mollification
  std::array<double, 3> b = {1.0, 1.0, 0.0};
  double offset = 0.0;
  int power = 2;
  double moll_width = 0.02;
  // support box (t, x[, y]) used by the plane wave window
  std::array<double, 3> box_lo = {0.0, 0.0, 0.0};
  std::array<double, 3> box_hi = {0.0, 0.0, 0.0};

  double eval(int dim, double t, double x, double y) const;
  void validate(const WaveGrid& grid) const;
};

GridField sample_source(const WaveGrid& grid, const SourceProfile& profile);
GridField constant_field(const WaveGrid& grid, double value);

// u = Q h: leapfrog solve of box u = h with zero data in the past.
// Runs the OpenMP slice kernel unless force_serial is set (the serial path
// is the reference the tests compare against).
GridField causal_solve(const WaveGrid& grid, const GridField& source, bool force_serial = false);

enum class NonlinearRoute { direct, picard };

// box u + a u^2 = eps * f
GridField nonlinear_solve(const WaveGrid& grid, const GridField& a, const GridField& f,
                          double eps, NonlinearRoute route = NonlinearRoute::direct,
                          bool force_serial = false);

struct ExpansionTerms {
  GridField w1, w2, w3, w4;
};

ExpansionTerms expansion_terms(const WaveGrid& grid, const GridField& a, const GridField& f);

// fourth mixed interaction field by the permutation-sum formula
GridField fourth_interaction_formula(const WaveGrid& grid, const GridField& a,
                                     const std::array<GridField, 4>& f);

// 16-corner mixed finite difference of the nonlinear solution map
GridField fourth_interaction_finite_difference(const WaveGrid& grid, const GridField& a,
                                               const std::array<GridField, 4>& f, double delta);

struct ScanRow {
  double t;
  double band_mean;     // mean |M4| on the cone band
  double off_mean;      // mean |M4| off the band (inside the scan disk)
  double peak_offset;   // |peak radius - cone radius| in cells
  double grad_band_mean;
  double grad_off_mean;
};

struct ScanTable {
  std::vector<ScanRow> rows;
  double on_off_ratio = 0.0;     // aggregate band mean / off mean
  double median_peak_offset = 0.0;
  bool intersection_configured = true;
};

struct ScanConfig {
  double band_cells = 1.5;  // half-width of the cone band, in cells
  int first_offset = 4;     // first scanned slice after the vertex, in steps
  int stride = 2;
  int count = 10;
  bool intersection_configured = true;
};

ScanTable singularity_scan(const GridField& m4, double t_q, double x_q, double y_q,
                           const ScanConfig& cfg = {});

struct ExpansionReport {
  std::vector<double> eps;
  std::vector<double> remainder_l2;
  double loglog_slope = 0.0;
  double m4_route_rel_error = 0.0;
  ScanTable scan;
};

// remainder norms || u_eps - sum eps^j w_j || and the fitted log-log slope
ExpansionReport expansion_remainder_study(const WaveGrid& grid, const GridField& a,
                                          const GridField& f, const std::vector<double>& eps_list);

// discrete leapfrog energy at half-step m + 1/2 (flat background)
double discrete_energy(const GridField& u, int it);

// pairwise causal independence of source supports (flat cone estimate):
// supp(f_j) must avoid J^+(supp(f_k)) for j != k
void check_support_causality(const WaveGrid& grid, const std::array<GridField, 4>& f);

}  // namespace chronolens

#endif
