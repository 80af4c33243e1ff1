#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "u4d/tensor.hpp"

namespace u4d {

enum class Stencil { central2, central4 };

struct GradCheckOptions {
  double eps = 1e-5;
  Stencil stencil = Stencil::central2;
  // Flat indices to probe; empty means every coordinate.
  std::vector<std::size_t> coords;
  // denominator floor of the relative error; exact zeros still carry roundoff
  double floor = 1e-8;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Compares the tape gradient of scalar f with respect to x against central
/// differences. x is perturbed in place and restored; f must rebuild its graph
/// on every call. Throws ContractError if f is not scalar.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps);

GradCheckResult grad_check_detailed(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                    const GradCheckOptions& opts);

}  // namespace u4d
