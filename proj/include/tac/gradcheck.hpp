#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tac/param.hpp"
#include "tac/tensor.hpp"

namespace tac {

struct GradCheckReport {
  // Max relative error per parameter, insertion order.
  std::vector<std::pair<std::string, real>> per_param;
  std::string worst_param;
  real max_rel_err = 0;
  bool pass = false;
  // Non-empty when a perturbed evaluation went non-finite; names the parameter.
  std::string failure;
};

// Central-difference verification of analytic gradients.
//
// `loss_fn` must compute the scalar loss AND accumulate analytic gradients
// into the store's grad slots (grad_check zeroes them first). The finite-
// difference probes reuse the same closure and ignore its gradient side
// effects. Relative error is |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckReport grad_check(const std::function<real()>& loss_fn,
                                  ParamStore& store, real h, real tol) {
  GradCheckReport report;
  store.zero_grad();
  const real base_loss = loss_fn();
  if (!std::isfinite(base_loss)) {
    report.failure = "non-finite loss at unperturbed point";
    return report;
  }

  // Snapshot analytic grads before the FD probes clobber them.
  std::vector<Tensor> analytic;
  auto params = store.params();
  analytic.reserve(params.size());
  for (const Param* p : params) analytic.push_back(p->grad);

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    real worst = 0;
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const real saved = p.value.data[i];
      p.value.data[i] = saved + h;
      const real up = loss_fn();
      p.value.data[i] = saved - h;
      const real down = loss_fn();
      p.value.data[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.failure = "non-finite loss while perturbing " + p.name;
        report.worst_param = p.name;
        report.pass = false;
        return report;
      }
      const real numeric = (up - down) / (2 * h);
      const real analytic_g = analytic[pi].data[i];
      const real denom = std::max({std::fabs(analytic_g), std::fabs(numeric),
                                   real(1e-8)});
      worst = std::max(worst, std::fabs(analytic_g - numeric) / denom);
    }
    report.per_param.emplace_back(p.name, worst);
    if (worst > report.max_rel_err) {
      report.max_rel_err = worst;
      report.worst_param = p.name;
    }
  }

  // Leave the analytic gradients in place for the caller.
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    params[pi]->grad = std::move(analytic[pi]);

  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace tac
