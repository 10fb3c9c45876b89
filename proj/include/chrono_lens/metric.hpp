#ifndef CHRONO_LENS_METRIC_HPP_
#define CHRONO_LENS_METRIC_HPP_

#include <array>
#include <map>
#include <string>
#include <vector>

#include "chrono_lens/errors.hpp"
#include "chrono_lens/smallvec.hpp"

namespace chronolens {

enum class MetricFamily {
  minkowski,
  conformal_bump,
  product_spatial,
  einstein_cylinder,
  schwarzschild_like,
};

const char* family_name(MetricFamily f);
MetricFamily family_from_name(const std::string& name);

// An analytic spacetime from the finite catalog, on a single coordinate box
// with signature (-,+,...,+) and x^0 a time function.
struct MetricSpec {
  MetricFamily family = MetricFamily::minkowski;
  int dim = 4;
  std::map<std::string, double> params;
  std::vector<std::array<double, 2>> domain;  // per-axis [a, b]

  double param(const std::string& key, double fallback) const;
  bool has_param(const std::string& key) const;
  // Angular axes wrap with period 2pi and never trigger domain exit.
  bool axis_wraps(int axis) const;
  bool in_domain(const VecN& x, double margin = 0.0) const;
  void validate() const;
};

struct Event {
  VecN x;
};

enum class CausalCharacter { timelike, null, spacelike };

struct TangentVector {
  Event base;
  VecN xi;
};

struct MetricEval {
  MatN g;
  MatN g_inv;
  double det_g = 0.0;
  bool has_partials = false;
  std::vector<MatN> dg;  // dg[k](i,j) = d g_ij / d x^k
};

// Christoffel symbols, symmetric in the lower pair: gamma[k](i,j) = Gamma^k_ij.
using Christoffel = std::vector<MatN>;

enum class DerivativeMode { analytic, finite_difference };

MetricEval eval_metric(const MetricSpec& spec, const Event& e, bool with_partials = false);

Christoffel christoffel(const MetricSpec& spec, const Event& e,
                        DerivativeMode mode = DerivativeMode::analytic);

// Unchecked variants for integrator right-hand sides: the catalog families
// are analytic on a neighborhood of the box, and trial Runge-Kutta stages may
// probe slightly past the boundary before the exit logic lands on it.
MetricEval eval_metric_raw(const MetricSpec& spec, const Event& e, bool with_partials = false);
Christoffel christoffel_raw(const MetricSpec& spec, const Event& e);
std::vector<std::vector<MatN>> riemann_raw(const MetricSpec& spec, const Event& e);

MatN ricci(const MetricSpec& spec, const Event& e);

// Positive-definite companion: same eigenvectors as g, eigenvalues |lambda_j|.
MatN riemannian_companion(const MetricSpec& spec, const Event& e);
MatN riemannian_companion(const MatN& g);

struct CausalClass {
  CausalCharacter character;
  double g_xixi;
};

// Null tolerance: |g(xi,xi)| <= 1e-9 * |xi|^2_{g+}.
CausalClass causal_character(const MetricSpec& spec, const TangentVector& v);

double gplus_norm2(const MetricSpec& spec, const Event& e, const VecN& xi);

// Riemann tensor R^k_{l i j} packed as riem[k][l](i,j); from 4th-order finite
// differences of the analytic Christoffels.
std::vector<std::vector<MatN>> riemann(const MetricSpec& spec, const Event& e);

// Relative finite-difference step: 1e-5 * (1 + |x_k|).
double fd_step(double xk);

// Coordinate difference folded into (-pi, pi] on wrapped axes.
double wrap_delta(const MetricSpec& spec, int axis, double d);

}  // namespace chronolens

#endif
