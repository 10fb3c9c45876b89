#ifndef CHRONO_LENS_RK45_HPP_
#define CHRONO_LENS_RK45_HPP_

#include <algorithm>
#include <cmath>

#include "chrono_lens/errors.hpp"
#include "chrono_lens/smallvec.hpp"

namespace chronolens {

struct Rk45Options {
  double abs_tol = 1e-9;
  double rel_tol = 1e-9;
  double initial_step = 1e-3;
  double max_step = 0.05;
  long max_steps = 2000000;
};

enum class StepOutcome { keep_going, stop };

// Dormand-Prince RK5(4)7M.  `rhs(s, y, dy)` fills the derivative;
// `on_accept(s, y, h_used)` fires after every accepted step and may stop the
// run.  Returns the final parameter value.
template <typename Rhs, typename OnAccept>
double rk45_integrate(Rhs&& rhs, double s0, double s_end, StateV& y,
                      const Rk45Options& opt, OnAccept&& on_accept) {
  static constexpr double a21 = 1.0 / 5.0;
  static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
  static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
  static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                          a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
  static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                          a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                          a65 = -5103.0 / 18656.0;
  static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0,
                          b4 = 125.0 / 192.0, b5 = -2187.0 / 6784.0,
                          b6 = 11.0 / 84.0;
  // 4th-order weights for the embedded error estimate
  static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0,
                          e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                          e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

  const double dir = (s_end >= s0) ? 1.0 : -1.0;
  double s = s0;
  double h = dir * std::min(opt.initial_step, opt.max_step);
  StateV k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size()), k5(y.size()),
      k6(y.size()), k7(y.size()), ytmp(y.size()), ynew(y.size()), yerr(y.size());

  rhs(s, y, k1);
  for (long step = 0; step < opt.max_steps; ++step) {
    if (dir * (s - s_end) >= 0.0) return s;
    if (dir * (s + h - s_end) > 0.0) h = s_end - s;

    ytmp = y + h * (a21 * k1);
    rhs(s + h / 5.0, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    rhs(s + 3.0 * h / 10.0, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(s + 4.0 * h / 5.0, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(s + 8.0 * h / 9.0, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(s + h, ytmp, k6);
    ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(s + h, ynew, k7);
    yerr = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      double sc = opt.abs_tol + opt.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err = std::max(err, std::abs(yerr[i]) / sc);
    }

    if (err <= 1.0) {
      s += h;
      y = ynew;
      k1 = k7;  // FSAL
      if (on_accept(s, y, h) == StepOutcome::stop) return s;
      double fac = (err > 0.0) ? 0.9 * std::pow(err, -0.2) : 5.0;
      h *= std::clamp(fac, 0.2, 5.0);
      if (std::abs(h) > opt.max_step) h = dir * opt.max_step;
    } else {
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      if (std::abs(h) < 1e-14 * (1.0 + std::abs(s)))
        throw StepFailureError("rk45: step underflow at s=" + std::to_string(s));
    }
  }
  throw StepFailureError("rk45: max step count exceeded");
}

}  // namespace chronolens

#endif
