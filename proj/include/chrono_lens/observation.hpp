#ifndef CHRONO_LENS_OBSERVATION_HPP_
#define CHRONO_LENS_OBSERVATION_HPP_

#include <optional>
#include <string>
#include <vector>

#include "chrono_lens/causal.hpp"

namespace chronolens {

// One light-ray arrival on an observer worldline.  Launch data is forward-
// model truth and is stripped from the reconstruction-facing view.
struct ArrivalRecord {
  int source_id = -1;
  int observer_id = -1;
  double s = 0.0;        // arrival proper time on that worldline
  VecN x_arr;            // arrival event
  VecN dir_unit;         // arrival null direction, unit g+ norm
  VecN tangent;          // d gamma / d affine at arrival (unit-launch scale)
  VecN launch_unit;      // launch direction at the source, unit g+ (truth side)
  double affine_len = 0.0;
  double rho = 0.0;      // cut parameter along the launch direction
  bool rho_lower_bound = true;
  bool earliest = false;  // affine_len <= rho
  bool on_worldline = false;
  bool tie = false;
  bool boundary_flag = false;
  double miss = 0.0;  // refined connector residual
};

struct SourceTruth {
  int id;
  VecN x;
};

struct ObservationConfig {
  int dir_count = 512;
  bool compute_cut = true;            // fill rho by tau-bisection per record
  bool cut_conjugate_check = false;   // also run the Jacobi sweep (curved, non-conformally-flat)
  double tie_tol = 1e-9;
  double dedupe_angle = 1e-4;
  CausalConfig causal;
  std::optional<Event> p_minus, p_plus;  // diamond gating for the source region
};

std::vector<ArrivalRecord> light_observation_set(const MetricSpec& spec, const ObserverGrid& grid,
                                                 const Event& q, int source_id,
                                                 const ObservationConfig& cfg);

std::vector<ArrivalRecord> earliest_observation_set(const std::vector<ArrivalRecord>& records);

// Minimal-s record(s) of one source on one observer; ties returned together.
std::vector<ArrivalRecord> earliest_point_on_observer(const std::vector<ArrivalRecord>& records,
                                                      int observer_id, double tie_tol = 1e-9);

struct ObservationDataset {
  MetricSpec spec;
  ObserverSpec grid_center;
  double grid_h_hat = 0.0;
  int grid_count = 1;
  std::optional<Event> p_minus, p_plus;
  int dir_count = 0;
  std::string config_hash;
  unsigned long long seed = 0;
  std::vector<ArrivalRecord> records;
  std::vector<SourceTruth> truth;
  bool truth_withheld = false;
};

ObservationDataset assemble_dataset(const MetricSpec& spec, const ObserverGrid& grid,
                                    const std::vector<SourceTruth>& sources,
                                    const ObservationConfig& cfg);

// Reconstruction-facing view: exposes only observer-side data.  Source truth
// and launch directions are not reachable through this type.
class DatasetView {
 public:
  struct Record {
    int source_id;
    int observer_id;
    double s;
    VecN x_arr;
    VecN dir_unit;
    double affine_len;
    bool earliest;
    bool usable;  // earliest, untied, off-worldline, converged
  };

  DatasetView(const ObservationDataset& ds, const ObserverGrid& grid);

  const MetricSpec& spec() const { return *spec_; }
  const ObserverGrid& grid() const { return *grid_; }
  const std::vector<Record>& records() const { return records_; }
  const std::vector<int>& source_ids() const { return source_ids_; }
  // earliest usable record of (source, observer); nullptr when absent
  const Record* earliest_record(int source_id, int observer_id) const;
  std::vector<const Record*> records_of(int source_id) const;

 private:
  const MetricSpec* spec_;
  const ObserverGrid* grid_;
  std::vector<Record> records_;
  std::vector<int> source_ids_;
};

// JSON-lines serialization: one metadata line, then one record per line.
void write_dataset_jsonl(const ObservationDataset& ds, const std::string& path);
ObservationDataset read_dataset_jsonl(const std::string& path);

// spatial unit directions for the launch sweep (deterministic)
std::vector<VecN> celestial_directions(int spatial_dim, int count);

}  // namespace chronolens

#endif
