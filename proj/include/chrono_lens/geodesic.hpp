#ifndef CHRONO_LENS_GEODESIC_HPP_
#define CHRONO_LENS_GEODESIC_HPP_

#include <functional>
#include <limits>
#include <vector>

#include "chrono_lens/metric.hpp"

namespace chronolens {

enum class Termination { reached_param, left_domain, left_diamond, step_failure };

struct GeodesicSample {
  double s;
  VecN x;
  VecN v;
  double g_vv;  // conserved-norm log
};

struct GeodesicSegment {
  VecN x0, xi0;
  std::vector<GeodesicSample> samples;
  Termination termination = Termination::reached_param;

  double s_end() const { return samples.back().s; }
  const GeodesicSample& back() const { return samples.back(); }
  // Cubic Hermite interpolation between stored samples.
  void eval(double s, VecN& x, VecN& v) const;
};

struct GeodesicOptions {
  double tol = 1e-9;
  double max_step = 0.05;
  int null_renorm_every = 50;  // re-project onto the null cone (null rays only)
  double boundary_locate_tol = 1e-10;
};

GeodesicSegment integrate_geodesic(const MetricSpec& spec, const Event& x, const VecN& xi,
                                   double s_max, const GeodesicOptions& opt = {});

Event exp_map(const MetricSpec& spec, const Event& x, const VecN& xi,
              const GeodesicOptions& opt = {});

constexpr double kNoConjugate = std::numeric_limits<double>::infinity();

struct ConjugateReport {
  double first_conjugate = kNoConjugate;  // +inf sentinel when none found
  std::vector<std::pair<double, double>> det_trace;  // (s, variation determinant)
};

ConjugateReport jacobi_first_conjugate(const MetricSpec& spec, const GeodesicSegment& seg,
                                       const GeodesicOptions& opt = {});

// tau_positive(event) decides "tau(x, event) > tau_pos_tol"; supplied by the
// causal layer so the cut search stays observer-free.
using TauPositivePredicate = std::function<bool(const VecN&)>;

struct CutResult {
  double rho;
  bool lower_bound;     // no cut found before domain exit
  bool from_conjugate;  // conjugate point preceded the tau flip
};

struct CutOptions {
  double bracket_tol = 1e-4;
  bool check_conjugate = true;
  GeodesicOptions geo;
};

CutResult null_cut_parameter(const MetricSpec& spec, const Event& x, const VecN& xi_null,
                             const TauPositivePredicate& tau_positive,
                             const CutOptions& opt = {});

// Membership test for a causal diamond J(p-, p+); bound by the causal layer.
using DiamondMembership = std::function<bool(const VecN&)>;

double diamond_escape(const GeodesicSegment& seg, const DiamondMembership& inside,
                      double bracket_tol = 1e-6);

// Future-pointing null completion: keeps the spatial part of `spatial_dir`
// and solves g(xi, xi) = 0 for the time component.
VecN null_future_vector(const MetricSpec& spec, const Event& e, const VecN& spatial_dir);

}  // namespace chronolens

#endif
