#ifndef CHRONO_LENS_CAUSAL_HPP_
#define CHRONO_LENS_CAUSAL_HPP_

#include <optional>
#include <vector>

#include "chrono_lens/geodesic.hpp"
#include "chrono_lens/metric.hpp"

namespace chronolens {

constexpr double kTauPosTol = 1e-6;

struct CausalConfig {
  double tau_pos_tol = kTauPosTol;
  // Cone-margin threshold for the closed-form chronology predicate.  The
  // margin dt - d is linear in coordinate noise where tau itself goes like
  // sqrt(dt - d), so thresholding the margin keeps the predicate stable.
  double chrono_margin = 1e-9;
  int shooting_starts = 8;
  int newton_max_iter = 40;
  double newton_tol = 1e-10;
  double bisect_tol = 1e-8;      // f+/f- parameter tolerance
  double null_residual = 1e-9;   // g+ miss distance for null connectors
  GeodesicOptions geo;
};

struct TauResult {
  double tau = 0.0;
  bool approximate = false;  // solver did not converge; value is a lower bound
};

// Time separation tau(x, y) >= 0.  Closed forms for the product-structure
// families, multi-start timelike shooting otherwise.
TauResult time_separation(const MetricSpec& spec, const Event& x, const Event& y,
                          const CausalConfig& cfg = {});

// Fast chronology predicate tau(x,y) > tau_pos_tol.  Exact closed forms where
// the family has them; conformal_bump reduces to the flat cone (chronology is
// conformally invariant); shooting fallback elsewhere.
bool is_chronological(const MetricSpec& spec, const Event& x, const Event& y,
                      const CausalConfig& cfg = {});

enum class RelationKind { chronological, horismos, none };

struct CausalRelation {
  RelationKind kind = RelationKind::none;
  double tau = 0.0;
  std::optional<GeodesicSegment> witness;  // connecting geodesic when found
};

CausalRelation causal_relation(const MetricSpec& spec, const Event& x, const Event& y,
                               const CausalConfig& cfg = {});

// non-strict causal order x <= y, up to the tau tolerance band at the cone
bool causally_precedes(const MetricSpec& spec, const VecN& x, const VecN& y,
                       const CausalConfig& cfg = {});

// x in J^+(p-) \cap J^-(p+), up to the tau tolerance band at the cone.
bool in_causal_diamond(const MetricSpec& spec, const VecN& x, const Event& p_minus,
                       const Event& p_plus, const CausalConfig& cfg = {});

double diamond_escape(const MetricSpec& spec, const GeodesicSegment& seg, const Event& p_minus,
                      const Event& p_plus, double bracket_tol = 1e-6,
                      const CausalConfig& cfg = {});

// An integrated observer worldline with Hermite sample interpolation.
struct Worldline {
  int id = 0;
  VecN z;    // anchor event
  VecN eta;  // unit future timelike velocity at the anchor
  double s_a = 0.0, s_b = 0.0;  // proper-time interval relative to the anchor
  GeodesicSegment curve;        // parametrized by s - s_a from mu(s_a)

  void eval(double s, VecN& x, VecN& v) const;
  VecN position(double s) const;
};

struct ObserverSpec {
  int id = 0;
  Event z;
  VecN eta;
  double s_a = -1.0, s_b = 1.0;
};

Worldline integrate_worldline(const MetricSpec& spec, const ObserverSpec& obs,
                              const GeodesicOptions& opt = {});

struct EarliestTime {
  double s;
  VecN event;
  bool boundary_flag;  // predicate never flipped inside [s_a, s_b]
};

// f+ (sign = +1) / f- (sign = -1) by bisection of the monotone predicate
// tau(q, mu(s)) > tau_pos_tol.
EarliestTime earliest_obs_time(const MetricSpec& spec, const Worldline& mu, const Event& q,
                               int sign, const CausalConfig& cfg = {});

struct SSchedule {
  double s_m2 = 0.0, s_m1 = 0.0, s_p1 = 0.0, s_p2 = 0.0;
  bool configured = false;
};

struct ObserverGrid {
  ObserverSpec center;
  double h_hat = 0.0;
  std::vector<Worldline> members;
  double tube_tol = 0.0;  // half the minimal inter-observer spacing

  bool tube_contains(const MetricSpec& spec, const VecN& x) const;
  // nearest member / matched-time spatial distance
  double tube_distance(const MetricSpec& spec, const VecN& x, int* nearest = nullptr) const;
};

// Deterministic low-discrepancy sampling of (z, eta) in the Sasaki ball of
// radius h_hat; all members are integrated and must stay in the domain.
ObserverGrid observer_congruence(const MetricSpec& spec, const ObserverSpec& center, double h_hat,
                                 int count, const SSchedule& schedule = {},
                                 const CausalConfig& cfg = {});

// Parallel-transported frame chart along mu: (t_1, t_vec) ->
// exp_{mu(t_1)}(sum_j t_j Z_j(t_1)); fermi_chart inverts it by Newton.
struct FermiFrame {
  const MetricSpec* spec;
  Worldline mu;
  std::vector<GeodesicSegment> frame;  // frame[j] sample stream: x slot = Z_{j} components
  VecN point(const VecN& t) const;     // forward map
  VecN frame_vector(int j, double s) const;
};

FermiFrame fermi_frame(const MetricSpec& spec, const Worldline& mu,
                       const GeodesicOptions& opt = {});

VecN fermi_chart(const FermiFrame& frame, const Event& e, const CausalConfig& cfg = {});

// Spatial distance in the product-family spatial metric (wrapped where the
// family wraps); used by the closed-form tau.
double spatial_distance(const MetricSpec& spec, const VecN& ya, const VecN& yb,
                        const CausalConfig& cfg = {});

// Null connector from q to a worldline: tunes the launch direction until the
// ray passes through mu within cfg.null_residual; returns launch vector (unit
// g+), affine length, arrival s and tangent.
struct NullConnector {
  VecN launch_unit;
  double affine_length;
  double arrival_s;
  VecN arrival_x;
  VecN arrival_tangent;  // d gamma / d(affine) at arrival, launch-unit scale
  double miss;           // residual spatial distance at matched time
};

std::optional<NullConnector> refine_null_connector(const MetricSpec& spec, const Event& q,
                                                   const Worldline& mu, const VecN& seed_dir,
                                                   const CausalConfig& cfg = {});

}  // namespace chronolens

#endif
