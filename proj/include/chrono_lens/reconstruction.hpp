#ifndef CHRONO_LENS_RECONSTRUCTION_HPP_
#define CHRONO_LENS_RECONSTRUCTION_HPP_

#include <map>
#include <string>
#include <vector>

#include "chrono_lens/observation.hpp"

namespace chronolens {

struct ReconConfig {
  double kappa_max = 1e4;
  int k_nearest = 12;        // neighbor samples for the conditioning estimate
  int tuple_candidates = 30;
  double match_tol = 3e-8;   // 3x the f+- bisection tolerance
  double dir_tol = 2e-2;     // rad
  int min_trace_points = 4;
  double trace_residual_max = 1e-3;
  std::vector<int> targets;  // empty = attempt every source
  CausalConfig causal;
  bool run_factor_ode = false;
};

// Observation-time coordinates around one target: Y^j(q) = f+_{mu_j}(q) read
// off the recorded earliest arrival times, for the best-conditioned observer
// n-tuple among the candidates.
struct ArrivalChart {
  int source_id;
  VecN y;
  bool valid;
};

struct ChartSet {
  int target;
  std::vector<int> observers;  // chosen n-tuple
  std::map<int, VecN> y;       // source id -> Y point (sources with full rows)
  double condition;            // local Jacobian condition number at the target
};

ChartSet observation_time_chart(const DatasetView& view, int target_source,
                                const ReconConfig& cfg);

struct NullTrace {
  int observer_id;
  double anchor_s;
  std::vector<int> member_sources;  // ordered by affine length, target included
  std::vector<VecN> y_points;
  VecN tangent;        // d/d(chord) of the Y-image at the target's point
  double fit_residual;
};

std::vector<NullTrace> build_null_traces(const DatasetView& view, const ChartSet& chart,
                                         int target_source, const ReconConfig& cfg);

struct ConformalEstimate {
  int target_source_id = -1;
  MatN C;                          // unit Frobenius norm, C00 < 0
  double sv_gap = 0.0;             // sigma_min / sigma_second_min of the design
  std::vector<double> residuals;   // |v^T C v| per unit tangent direction
};

ConformalEstimate fit_null_cone(const std::vector<NullTrace>& traces, int dim,
                                int target_source_id);

double conformal_class_distance(const MatN& a, const MatN& b);
MatN normalize_cone_form(const MatN& c);

// Conformal factor along a null geodesic in a vacuum-conformal region:
// g_hat = e^{2f} g has Ric(g_hat) = 0, so the contraction of the conformal
// transformation law with gamma_dot closes into an ODE for (f, grad f).
struct FactorOdeResult {
  std::vector<double> t;
  std::vector<double> f;
  std::vector<VecN> grad;  // lowered components d_k f
  std::vector<VecN> x;
};

FactorOdeResult conformal_factor_ode(const MetricSpec& g, const Event& x0, const VecN& xi_null,
                                     double s_max, double f0, const VecN& grad0,
                                     double tol = 1e-10);

struct TargetReport {
  int target = -1;
  bool ok = false;
  std::string skip_reason;
  ConformalEstimate estimate;
  std::vector<int> observer_tuple;
  int trace_count = 0;
  double max_trace_residual = 0.0;
  double chart_condition = 0.0;
};

struct ReconReport {
  std::vector<TargetReport> targets;
  int attempted = 0;
  int reconstructed = 0;
};

ReconReport reconstruct_region(const DatasetView& view, const ReconConfig& cfg);

// Truth-side evaluation: pushforward of the true metric at the target into
// the observation-time chart, from forward-model launch data.  Takes the full
// dataset (with truth) on purpose; never called by reconstruct_region.
MatN reference_cone_pushforward(const MetricSpec& spec, const ObservationDataset& ds,
                                const ObserverGrid& grid, const std::vector<int>& tuple,
                                int target);

}  // namespace chronolens

#endif
