#include "chrono_lens/observation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "chrono_lens/parallel.hpp"

namespace chronolens {

namespace {

constexpr double kPi = 3.14159265358979323846;

double angle_between(const VecN& a, const VecN& b) {
  double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace

std::vector<VecN> celestial_directions(int spatial_dim, int count) {
  std::vector<VecN> dirs;
  if (spatial_dim == 1) {
    VecN l(1), r(1);
    l << -1.0;
    r << 1.0;
    dirs = {r, l};
  } else if (spatial_dim == 2) {
    for (int i = 0; i < count; ++i) {
      double ang = 2.0 * kPi * i / count;
      VecN w(2);
      w << std::cos(ang), std::sin(ang);
      dirs.push_back(w);
    }
  } else {
    // Fibonacci sphere
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      double z = 1.0 - 2.0 * (i + 0.5) / count;
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      double ang = golden * i;
      VecN w(3);
      w << r * std::cos(ang), r * std::sin(ang), z;
      dirs.push_back(w);
    }
  }
  return dirs;
}

namespace {

struct Candidate {
  int observer;
  double sigma;  // affine parameter of the detected minimum
  VecN dir;      // spatial launch components that produced it
};

// local minima of the time-matched distance to one worldline along a ray
void detect_crossings(const MetricSpec& spec, const GeodesicSegment& ray, const Worldline& mu,
                      double tol, const VecN& w, std::vector<Candidate>& out) {
  const int n = spec.dim;
  const double t_lo = mu.curve.samples.front().x[0];
  const double t_hi = mu.curve.samples.back().x[0];

  double prev_d = 1e300, prev_prev_d = 1e300;
  double prev_sigma = 0.0;
  for (const auto& smp : ray.samples) {
    double d = 1e300;
    if (smp.x[0] >= t_lo && smp.x[0] <= t_hi) {
      double lo = mu.s_a, hi = mu.s_b;
      VecN wx, wv;
      for (int it = 0; it < 40; ++it) {
        double mid = 0.5 * (lo + hi);
        mu.eval(mid, wx, wv);
        if (wx[0] < smp.x[0]) lo = mid;
        else hi = mid;
      }
      mu.eval(0.5 * (lo + hi), wx, wv);
      VecN diff = VecN::Zero(n);
      for (int k = 1; k < n; ++k) diff[k] = wrap_delta(spec, k, smp.x[k] - wx[k]);
      diff[0] = 0.0;
      d = diff.norm();  // flat proxy is fine for detection; refinement is exact
    }
    if (prev_d < tol && prev_d <= d && prev_d <= prev_prev_d && prev_d < 1e299)
      out.push_back({mu.id, prev_sigma, w});
    prev_prev_d = prev_d;
    prev_d = d;
    prev_sigma = smp.s;
  }
  if (prev_d < tol && prev_d <= prev_prev_d && prev_d < 1e299)
    out.push_back({mu.id, prev_sigma, w});
}

}  // namespace

std::vector<ArrivalRecord> light_observation_set(const MetricSpec& spec, const ObserverGrid& grid,
                                                 const Event& q, int source_id,
                                                 const ObservationConfig& cfg) {
  const int n = spec.dim;
  if (!spec.in_domain(q.x)) throw OutOfDomainError("source outside domain");
  if (cfg.p_minus && cfg.p_plus) {
    // Region gate: q in I^-(p+) \ J^-(p-)
    if (!is_chronological(spec, q, *cfg.p_plus, cfg.causal) ||
        causally_precedes(spec, q.x, cfg.p_minus->x, cfg.causal))
      throw ConfigError("source outside I^-(p+) \\ J^-(p-)");
  }

  std::vector<ArrivalRecord> records;

  // degenerate on-worldline record (r = 0 in the observation set)
  for (const auto& mu : grid.members) {
    if (q.x[0] < mu.curve.samples.front().x[0] || q.x[0] > mu.curve.samples.back().x[0]) continue;
    double lo = mu.s_a, hi = mu.s_b;
    VecN wx, wv;
    for (int it = 0; it < 60; ++it) {
      double mid = 0.5 * (lo + hi);
      mu.eval(mid, wx, wv);
      if (wx[0] < q.x[0]) lo = mid;
      else hi = mid;
    }
    double s0 = 0.5 * (lo + hi);
    mu.eval(s0, wx, wv);
    VecN diff(n);
    for (int k = 0; k < n; ++k) diff[k] = wrap_delta(spec, k, q.x[k] - wx[k]);
    if (diff.norm() < 1e-10) {
      ArrivalRecord rec;
      rec.source_id = source_id;
      rec.observer_id = mu.id;
      rec.s = s0;
      rec.x_arr = wx;
      rec.dir_unit = VecN::Zero(n);  // full-cone marker
      rec.tangent = VecN::Zero(n);
      rec.launch_unit = VecN::Zero(n);
      rec.affine_len = 0.0;
      rec.on_worldline = true;
      rec.earliest = true;
      records.push_back(rec);
    }
  }

  // direction sweep -> candidate crossings
  std::vector<VecN> dirs = celestial_directions(n - 1, cfg.dir_count);
  std::vector<std::vector<Candidate>> found(dirs.size());
  parallel_for_each(dirs.size(), [&](std::size_t i) {
    VecN v = null_future_vector(spec, q, dirs[i]);
    v /= std::sqrt(gplus_norm2(spec, q, v));
    GeodesicSegment ray;
    try {
      ray = integrate_geodesic(spec, q, v, 1e9, cfg.causal.geo);
    } catch (const std::exception&) {
      return;
    }
    for (const auto& mu : grid.members) {
      double det_tol = std::max(grid.tube_tol, 0.05);
      detect_crossings(spec, ray, mu, det_tol, dirs[i], found[i]);
    }
  });

  // candidates scaled to seed directions, grouped per observer
  struct Seed {
    int observer;
    VecN w;  // spatial components sized so the connector sits near sigma = 1
  };
  std::vector<Seed> seeds;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    for (const auto& c : found[i]) {
      VecN v = null_future_vector(spec, q, c.dir);
      v /= std::sqrt(gplus_norm2(spec, q, v));
      seeds.push_back({c.observer, VecN(c.sigma * v.tail(n - 1))});
    }
  }

  // refine each seed to an exact connector
  std::vector<std::optional<NullConnector>> refined(seeds.size());
  std::vector<const Worldline*> lines(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    lines[i] = nullptr;
    for (const auto& mu : grid.members)
      if (mu.id == seeds[i].observer) lines[i] = &mu;
  }
  parallel_for_each(seeds.size(), [&](std::size_t i) {
    if (!lines[i]) return;
    VecN full = VecN::Zero(n);
    full.tail(n - 1) = seeds[i].w;
    refined[i] = refine_null_connector(spec, q, *lines[i], full, cfg.causal);
  });

  // dedupe: same observer + same arrival parameter + same direction
  std::vector<ArrivalRecord> fresh;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!refined[i]) continue;
    const NullConnector& con = *refined[i];
    bool dup = false;
    for (const auto& rec : fresh) {
      if (rec.observer_id != seeds[i].observer) continue;
      if (std::abs(rec.s - con.arrival_s) < 1e-7 &&
          angle_between(rec.launch_unit, con.launch_unit) < cfg.dedupe_angle) {
        dup = true;
        break;
      }
    }
    if (dup) continue;
    ArrivalRecord rec;
    rec.source_id = source_id;
    rec.observer_id = seeds[i].observer;
    rec.s = con.arrival_s;
    rec.x_arr = con.arrival_x;
    rec.tangent = con.arrival_tangent;
    double tn = std::sqrt(gplus_norm2(spec, Event{con.arrival_x}, con.arrival_tangent));
    rec.dir_unit = con.arrival_tangent / tn;
    rec.launch_unit = con.launch_unit;
    rec.affine_len = con.affine_length;
    rec.miss = con.miss;
    fresh.push_back(rec);
  }

  // cut parameters and the earliest flag
  parallel_for_each(fresh.size(), [&](std::size_t i) {
    ArrivalRecord& rec = fresh[i];
    if (cfg.compute_cut) {
      CutOptions copt;
      copt.check_conjugate = cfg.cut_conjugate_check;
      copt.geo = cfg.causal.geo;
      // ray drift near the cone is linear in the margin: raise the
      // threshold well above integrator noise for the cut scan
      CausalConfig cut_cfg = cfg.causal;
      cut_cfg.chrono_margin = 1e-6;
      auto pred = [&](const VecN& y) { return is_chronological(spec, q, Event{y}, cut_cfg); };
      CutResult cut = null_cut_parameter(spec, q, rec.launch_unit, pred, copt);
      rec.rho = cut.rho;
      rec.rho_lower_bound = cut.lower_bound;
      rec.earliest = rec.affine_len <= cut.rho + 1e-6;
    } else {
      rec.rho = 0.0;
      rec.rho_lower_bound = true;
      rec.earliest = true;
    }
  });

  // tie marks: same observer, same arrival parameter, distinct geodesics
  for (std::size_t i = 0; i < fresh.size(); ++i)
    for (std::size_t j = i + 1; j < fresh.size(); ++j)
      if (fresh[i].observer_id == fresh[j].observer_id &&
          std::abs(fresh[i].s - fresh[j].s) < cfg.tie_tol) {
        fresh[i].tie = fresh[j].tie = true;
      }

  records.insert(records.end(), fresh.begin(), fresh.end());
  std::sort(records.begin(), records.end(), [](const ArrivalRecord& a, const ArrivalRecord& b) {
    if (a.observer_id != b.observer_id) return a.observer_id < b.observer_id;
    return a.s < b.s;
  });
  return records;
}

std::vector<ArrivalRecord> earliest_observation_set(const std::vector<ArrivalRecord>& records) {
  std::vector<ArrivalRecord> out;
  for (const auto& r : records)
    if (r.earliest) out.push_back(r);
  return out;
}

std::vector<ArrivalRecord> earliest_point_on_observer(const std::vector<ArrivalRecord>& records,
                                                      int observer_id, double tie_tol) {
  const ArrivalRecord* best = nullptr;
  for (const auto& r : records) {
    if (r.observer_id != observer_id) continue;
    if (!best || r.s < best->s) best = &r;
  }
  std::vector<ArrivalRecord> out;
  if (!best) return out;
  for (const auto& r : records)
    if (r.observer_id == observer_id && std::abs(r.s - best->s) < tie_tol) out.push_back(r);
  return out;
}

ObservationDataset assemble_dataset(const MetricSpec& spec, const ObserverGrid& grid,
                                    const std::vector<SourceTruth>& sources,
                                    const ObservationConfig& cfg) {
  for (std::size_t i = 0; i < sources.size(); ++i)
    for (std::size_t j = i + 1; j < sources.size(); ++j)
      if (sources[i].id == sources[j].id)
        throw ConfigError("duplicate source id " + std::to_string(sources[i].id));

  ObservationDataset ds;
  ds.spec = spec;
  ds.grid_center = grid.center;
  ds.grid_h_hat = grid.h_hat;
  ds.grid_count = static_cast<int>(grid.members.size());
  ds.p_minus = cfg.p_minus;
  ds.p_plus = cfg.p_plus;
  ds.dir_count = cfg.dir_count;
  ds.truth = sources;

  std::vector<std::vector<ArrivalRecord>> per_source(sources.size());
  std::vector<std::string> errors(sources.size());
  parallel_for_each(sources.size(), [&](std::size_t i) {
    try {
      per_source[i] =
          light_observation_set(spec, grid, Event{sources[i].x}, sources[i].id, cfg);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::string report;
  for (std::size_t i = 0; i < sources.size(); ++i)
    if (!errors[i].empty())
      report += "source " + std::to_string(sources[i].id) + ": " + errors[i] + "\n";
  if (!report.empty()) throw SolveError("forward model failures:\n" + report);

  for (auto& recs : per_source)
    ds.records.insert(ds.records.end(), recs.begin(), recs.end());
  std::sort(ds.records.begin(), ds.records.end(),
            [](const ArrivalRecord& a, const ArrivalRecord& b) {
              if (a.source_id != b.source_id) return a.source_id < b.source_id;
              if (a.observer_id != b.observer_id) return a.observer_id < b.observer_id;
              return a.s < b.s;
            });
  return ds;
}

DatasetView::DatasetView(const ObservationDataset& ds, const ObserverGrid& grid)
    : spec_(&ds.spec), grid_(&grid) {
  for (const auto& r : ds.records) {
    Record v;
    v.source_id = r.source_id;
    v.observer_id = r.observer_id;
    v.s = r.s;
    v.x_arr = r.x_arr;
    v.dir_unit = r.dir_unit;
    v.affine_len = r.affine_len;
    v.earliest = r.earliest;
    v.usable = r.earliest && !r.tie && !r.on_worldline && !r.boundary_flag;
    records_.push_back(v);
    if (source_ids_.empty() || source_ids_.back() != r.source_id)
      source_ids_.push_back(r.source_id);
  }
  std::sort(source_ids_.begin(), source_ids_.end());
  source_ids_.erase(std::unique(source_ids_.begin(), source_ids_.end()), source_ids_.end());
}

const DatasetView::Record* DatasetView::earliest_record(int source_id, int observer_id) const {
  const Record* best = nullptr;
  for (const auto& r : records_) {
    if (r.source_id != source_id || r.observer_id != observer_id || !r.usable) continue;
    if (!best || r.s < best->s) best = &r;
  }
  return best;
}

std::vector<const DatasetView::Record*> DatasetView::records_of(int source_id) const {
  std::vector<const Record*> out;
  for (const auto& r : records_)
    if (r.source_id == source_id) out.push_back(&r);
  return out;
}

// ---------------------------------------------------------------------------
// JSON-lines serialization

namespace {

using json = nlohmann::ordered_json;

json vec_to_json(const VecN& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VecN vec_from_json(const json& a) {
  VecN v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<int>(i)] = a[i].get<double>();
  return v;
}

json spec_to_json(const MetricSpec& spec) {
  json j;
  j["family"] = family_name(spec.family);
  j["dim"] = spec.dim;
  j["params"] = json::object();
  for (const auto& [k, v] : spec.params) j["params"][k] = v;
  json dom = json::array();
  for (const auto& ab : spec.domain) dom.push_back(json::array({ab[0], ab[1]}));
  j["domain"] = dom;
  return j;
}

MetricSpec spec_from_json(const json& j) {
  MetricSpec spec;
  spec.family = family_from_name(j.at("family").get<std::string>());
  spec.dim = j.at("dim").get<int>();
  for (const auto& [k, v] : j.at("params").items()) spec.params[k] = v.get<double>();
  for (const auto& ab : j.at("domain"))
    spec.domain.push_back({ab[0].get<double>(), ab[1].get<double>()});
  spec.validate();
  return spec;
}

}  // namespace

void write_dataset_jsonl(const ObservationDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SolveError("cannot open " + path + " for writing");
  json meta;
  meta["kind"] = "chrono_lens_dataset";
  meta["config_hash"] = ds.config_hash;
  meta["seed"] = ds.seed;
  meta["metric"] = spec_to_json(ds.spec);
  meta["observer_grid"] = {{"z", vec_to_json(ds.grid_center.z.x)},
                           {"eta", vec_to_json(ds.grid_center.eta)},
                           {"s_a", ds.grid_center.s_a},
                           {"s_b", ds.grid_center.s_b},
                           {"h_hat", ds.grid_h_hat},
                           {"count", ds.grid_count}};
  if (ds.p_minus) meta["p_minus"] = vec_to_json(ds.p_minus->x);
  if (ds.p_plus) meta["p_plus"] = vec_to_json(ds.p_plus->x);
  meta["dir_count"] = ds.dir_count;
  meta["truth_withheld"] = ds.truth_withheld;
  if (!ds.truth_withheld) {
    json t = json::array();
    for (const auto& s : ds.truth) t.push_back({{"id", s.id}, {"x", vec_to_json(s.x)}});
    meta["truth"] = t;
  }
  out << meta.dump() << "\n";
  for (const auto& r : ds.records) {
    json j;
    j["source_id"] = r.source_id;
    j["observer_id"] = r.observer_id;
    j["s"] = r.s;
    j["x_arr"] = vec_to_json(r.x_arr);
    j["dir_unit"] = vec_to_json(r.dir_unit);
    j["tangent"] = vec_to_json(r.tangent);
    j["launch_unit"] = vec_to_json(r.launch_unit);
    j["affine_len"] = r.affine_len;
    j["rho"] = r.rho;
    j["rho_lower_bound"] = r.rho_lower_bound;
    j["earliest"] = r.earliest;
    j["on_worldline"] = r.on_worldline;
    j["tie"] = r.tie;
    j["boundary_flag"] = r.boundary_flag;
    j["miss"] = r.miss;
    out << j.dump() << "\n";
  }
}

ObservationDataset read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SolveError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw SolveError("empty dataset file");
  json meta = json::parse(line);
  if (meta.value("kind", "") != "chrono_lens_dataset")
    throw SolveError("not a chrono_lens dataset: " + path);

  ObservationDataset ds;
  ds.config_hash = meta.value("config_hash", "");
  ds.seed = meta.value("seed", 0ULL);
  ds.spec = spec_from_json(meta.at("metric"));
  const auto& og = meta.at("observer_grid");
  ds.grid_center.z.x = vec_from_json(og.at("z"));
  ds.grid_center.eta = vec_from_json(og.at("eta"));
  ds.grid_center.s_a = og.at("s_a").get<double>();
  ds.grid_center.s_b = og.at("s_b").get<double>();
  ds.grid_h_hat = og.at("h_hat").get<double>();
  ds.grid_count = og.at("count").get<int>();
  if (meta.contains("p_minus")) ds.p_minus = Event{vec_from_json(meta["p_minus"])};
  if (meta.contains("p_plus")) ds.p_plus = Event{vec_from_json(meta["p_plus"])};
  ds.dir_count = meta.value("dir_count", 0);
  ds.truth_withheld = meta.value("truth_withheld", false);
  if (meta.contains("truth"))
    for (const auto& t : meta["truth"])
      ds.truth.push_back({t.at("id").get<int>(), vec_from_json(t.at("x"))});

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ArrivalRecord r;
    r.source_id = j.at("source_id").get<int>();
    r.observer_id = j.at("observer_id").get<int>();
    r.s = j.at("s").get<double>();
    r.x_arr = vec_from_json(j.at("x_arr"));
    r.dir_unit = vec_from_json(j.at("dir_unit"));
    r.tangent = vec_from_json(j.at("tangent"));
    r.launch_unit = vec_from_json(j.at("launch_unit"));
    r.affine_len = j.at("affine_len").get<double>();
    r.rho = j.at("rho").get<double>();
    r.rho_lower_bound = j.at("rho_lower_bound").get<bool>();
    r.earliest = j.at("earliest").get<bool>();
    r.on_worldline = j.at("on_worldline").get<bool>();
    r.tie = j.at("tie").get<bool>();
    r.boundary_flag = j.at("boundary_flag").get<bool>();
    r.miss = j.at("miss").get<double>();
    ds.records.push_back(r);
  }
  return ds;
}

}  // namespace chronolens
