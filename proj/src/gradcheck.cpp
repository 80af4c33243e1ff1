#include "u4d/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "u4d/errors.hpp"

namespace u4d {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double eval_scalar(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  Tensor y = f(x);
  if (!y.defined() || y.numel() != 1) {
    throw ContractError("grad_check needs a scalar-valued function");
  }
  return y.item();
}

}  // namespace

GradCheckResult grad_check_detailed(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                    const GradCheckOptions& opts) {
  if (!(opts.eps > 0.0)) throw ContractError("grad_check eps must be positive");
  if (!x.is_leaf()) throw ContractError("grad_check perturbs its argument, which must be a leaf");

  const bool had_grad_flag = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor y = f(x);
  if (!y.defined() || y.numel() != 1) {
    x.set_requires_grad(had_grad_flag);
    throw ContractError("grad_check needs a scalar-valued function");
  }
  std::vector<double> analytic(x.numel(), 0.0);
  if (y.requires_grad()) {
    y.backward();
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  }
  x.zero_grad();

  std::vector<std::size_t> coords = opts.coords;
  if (coords.empty()) {
    coords.resize(x.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  }

  auto values = x.mutable_data();
  const double h = opts.eps;
  GradCheckResult res;
  for (std::size_t i : coords) {
    if (i >= values.size()) throw ContractError("grad_check coordinate out of range");
    const double orig = values[i];
    auto at = [&](double offset) {
      values[i] = orig + offset;
      const double v = eval_scalar(f, x);
      values[i] = orig;
      return v;
    };
    double numeric;
    if (opts.stencil == Stencil::central2) {
      numeric = (at(h) - at(-h)) / (2.0 * h);
    } else {
      numeric = (-at(2 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2 * h)) / (12.0 * h);
    }
    const double err = relative_error(analytic[i], numeric, opts.floor);
    if (err > res.max_rel_err || res.checked == 0) {
      res.max_rel_err = std::max(res.max_rel_err, err);
      if (err >= res.max_rel_err) {
        res.worst_index = i;
        res.analytic = analytic[i];
        res.numeric = numeric;
      }
    }
    ++res.checked;
  }
  x.set_requires_grad(had_grad_flag);
  return res;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
  GradCheckOptions opts;
  opts.eps = eps;
  return grad_check_detailed(f, std::move(x), opts).max_rel_err;
}

}  // namespace u4d
