#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spkdlg/tensor.hpp"

namespace spkdlg {

constexpr double kGradCheckStep = 1e-5;
constexpr double kGradCheckTolerance = 1e-4;

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Central finite differences over every component of `param`, compared
// against `analytic` with relative error |fd - a| / max(|fd|, |a|, 1).
// `f` must rebuild the forward pass from the parameter's current values.
double finite_difference_max_rel_err(const std::function<double()>& f,
                                     Tensor param, std::span<const double> analytic,
                                     double step = kGradCheckStep);

// Checks one loss builder against finite differences for every parameter.
// The builder must construct the same graph each call (no RNG inside).
GradCheckResult gradcheck(const std::string& name, std::span<const Tensor> params,
                          const std::function<Tensor(Tape&)>& loss_fn,
                          double step = kGradCheckStep);

// Fixed-seed suite covering every primitive op plus the full LU loss (with
// and without role-split/guidance) on a three-turn toy instance.
std::vector<GradCheckResult> run_gradcheck_suite();

}  // namespace spkdlg
