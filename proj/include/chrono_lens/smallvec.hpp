#ifndef CHRONO_LENS_SMALLVEC_HPP_
#define CHRONO_LENS_SMALLVEC_HPP_

#include <Eigen/Dense>

namespace chronolens {

// Chart dimension n is 2, 3 or 4 at runtime.  Fixed-capacity Eigen types keep
// the hot loops free of heap traffic.
using VecN = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;
using MatN = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;

// Integration states: (x, v) is 2n wide; geodesic + (n-1) Jacobi pairs tops
// out at 2n + 2n(n-1) = 32 for n = 4.
using StateV = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 40, 1>;

inline double sqr(double a) { return a * a; }

}  // namespace chronolens

#endif
