#ifndef CHRONO_LENS_TEST_UTIL_HPP_
#define CHRONO_LENS_TEST_UTIL_HPP_

#include <random>

#include "chrono_lens/metric.hpp"

namespace chronolens::testutil {

inline MetricSpec minkowski(int dim = 4) {
  MetricSpec s;
  s.family = MetricFamily::minkowski;
  s.dim = dim;
  s.domain.assign(dim, {-6.0, 6.0});
  return s;
}

inline MetricSpec conformal_bump(int dim = 4, double amplitude = 0.05, double width = 1.0) {
  MetricSpec s;
  s.family = MetricFamily::conformal_bump;
  s.dim = dim;
  s.params["amplitude"] = amplitude;
  s.params["width"] = width;
  for (int k = 0; k < dim; ++k) s.params["center_" + std::to_string(k)] = 0.0;
  s.domain.assign(dim, {-6.0, 6.0});
  return s;
}

inline MetricSpec einstein_cylinder(double radius = 1.0) {
  MetricSpec s;
  s.family = MetricFamily::einstein_cylinder;
  s.dim = 2;
  s.params["radius"] = radius;
  s.domain = {{-20.0, 20.0}, {0.0, 2.0 * 3.14159265358979323846}};
  return s;
}

inline MetricSpec product_sphere(double radius = 1.0) {
  MetricSpec s;
  s.family = MetricFamily::product_spatial;
  s.dim = 3;
  s.params["sphere_radius"] = radius;
  s.domain = {{-20.0, 20.0}, {0.3, 3.14159265358979323846 - 0.3},
              {0.0, 2.0 * 3.14159265358979323846}};
  return s;
}

inline MetricSpec product_bump(int dim = 3, double amplitude = 0.05, double width = 1.0) {
  MetricSpec s;
  s.family = MetricFamily::product_spatial;
  s.dim = dim;
  s.params["amplitude"] = amplitude;
  s.params["width"] = width;
  for (int k = 1; k < dim; ++k) s.params["center_" + std::to_string(k)] = 0.0;
  s.domain.assign(dim, {-6.0, 6.0});
  return s;
}

inline MetricSpec schwarzschild(double mass = 1.0) {
  MetricSpec s;
  s.family = MetricFamily::schwarzschild_like;
  s.dim = 4;
  s.params["mass"] = mass;
  s.domain = {{-50.0, 50.0},
              {2.3 * mass, 40.0 * mass},
              {0.4, 3.14159265358979323846 - 0.4},
              {0.0, 2.0 * 3.14159265358979323846}};
  return s;
}

inline Event random_interior_event(const MetricSpec& spec, std::mt19937_64& rng,
                                   double margin_frac = 0.1) {
  Event e;
  e.x.resize(spec.dim);
  for (int k = 0; k < spec.dim; ++k) {
    double a = spec.domain[k][0], b = spec.domain[k][1];
    double m = margin_frac * (b - a);
    std::uniform_real_distribution<double> dist(a + m, b - m);
    e.x[k] = dist(rng);
  }
  return e;
}

}  // namespace chronolens::testutil

#endif
