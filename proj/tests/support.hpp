#pragma once

// Test-side helpers: independent finite-difference oracles and random
// tensor builders. Deliberately free of the library's backward-pass code so
// the checks stay two-route.

#include <cmath>
#include <utility>
#include <vector>

#include "tac/rng.hpp"
#include "tac/tensor.hpp"

namespace testsupport {

inline tac::Tensor random_tensor(std::vector<std::size_t> shape, tac::Rng& rng,
                                 double scale = 1.0) {
  tac::Tensor t(std::move(shape));
  for (tac::real& v : t.data)
    v = static_cast<tac::real>(scale * rng.gaussian());
  return t;
}

// Central differences of a scalar function w.r.t. every element of x.
template <class F>
tac::Tensor fd_grad(F&& f, tac::Tensor& x, double h = 1e-6) {
  tac::Tensor g(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const tac::real saved = x.data[i];
    x.data[i] = saved + static_cast<tac::real>(h);
    const double up = f();
    x.data[i] = saved - static_cast<tac::real>(h);
    const double down = f();
    x.data[i] = saved;
    g.data[i] = static_cast<tac::real>((up - down) / (2 * h));
  }
  return g;
}

inline double max_rel_err(const tac::Tensor& a, const tac::Tensor& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double da = a.data[i], db = b.data[i];
    const double denom = std::max({std::fabs(da), std::fabs(db), 1e-8});
    worst = std::max(worst, std::fabs(da - db) / denom);
  }
  return worst;
}

inline double max_abs_diff(const tac::Tensor& a, const tac::Tensor& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::fabs(double(a.data[i]) - double(b.data[i])));
  return worst;
}

}  // namespace testsupport
