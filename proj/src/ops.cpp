#include "u4d/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "u4d/errors.hpp"
#include "u4d/masks.hpp"

namespace u4d {

using autograd::input_grad;
using autograd::make_result;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank2(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(x.shape()));
  }
}

void require_scalar(const Tensor& s, const char* op) {
  if (s.numel() != 1) {
    throw DimensionError(std::string(op) + ": expected a one-element tensor, got " + shape_str(s.shape()));
  }
}

std::size_t last_dim(const Tensor& x) { return x.shape().back(); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = input_grad(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
  return make_result(x.shape(), std::move(out), {x}, [c](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += c * self.grad[i];
    }
  });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  require_scalar(s, "scale_by");
  const double c = s.item();
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
  return make_result(x.shape(), std::move(out), {x, s}, [](detail::Node& self) {
    const double c = self.inputs[1]->value[0];
    const auto& xv = self.inputs[0]->value;
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += c * self.grad[i];
    }
    if (auto* g = input_grad(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.size(); ++i) acc += self.grad[i] * xv[i];
      (*g)[0] += acc;
    }
  });
}

Tensor blend(const Tensor& a, const Tensor& b, const Tensor& alpha) {
  require_same(a, b, "blend");
  require_scalar(alpha, "blend");
  const double w = alpha.item();
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w * av[i] + (1.0 - w) * bv[i];
  return make_result(a.shape(), std::move(out), {a, b, alpha}, [](detail::Node& self) {
    const double w = self.inputs[2]->value[0];
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += w * self.grad[i];
    }
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += (1.0 - w) * self.grad[i];
    }
    if (auto* g = input_grad(self, 2)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) acc += self.grad[i] * (av[i] - bv[i]);
      (*g)[0] += acc;
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || bias.dim(0) != last_dim(x)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  }
  const std::size_t n = bias.dim(0);
  const auto xv = x.data();
  const auto bv = bias.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % n];
  return make_result(x.shape(), std::move(out), {x, bias}, [n](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i % n] += self.grad[i];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  return linear(a, b);
}

Tensor linear(const Tensor& x, const Tensor& w) {
  require_rank2(w, "linear");
  if (x.rank() < 1 || last_dim(x) != w.dim(0)) {
    throw DimensionError("linear: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  }
  const Eigen::Index k = static_cast<Eigen::Index>(w.dim(0));
  const Eigen::Index n = static_cast<Eigen::Index>(w.dim(1));
  const Eigen::Index m = static_cast<Eigen::Index>(x.numel()) / k;
  Shape out_shape = x.shape();
  out_shape.back() = static_cast<std::size_t>(n);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  Map(out.data(), m, n).noalias() = MapC(x.data().data(), m, k) * MapC(w.data().data(), k, n);
  return make_result(std::move(out_shape), std::move(out), {x, w}, [m, k, n](detail::Node& self) {
    MapC dc(self.grad.data(), m, n);
    if (auto* g = input_grad(self, 0)) {
      Map(g->data(), m, k).noalias() += dc * MapC(self.inputs[1]->value.data(), k, n).transpose();
    }
    if (auto* g = input_grad(self, 1)) {
      Map(g->data(), k, n).noalias() += MapC(self.inputs[0]->value.data(), m, k).transpose() * dc;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_bias(linear(x, w), b); }

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  return make_result({c, r}, std::move(out), {x}, [r, c](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j * r + i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  const auto xv = x.data();
  return make_result(std::move(shape), std::vector<double>(xv.begin(), xv.end()), {x}, [](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor gelu(const Tensor& x) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
  }
  return make_result(x.shape(), std::move(out), {x}, [](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      const auto& xv = self.inputs[0]->value;
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double v = xv[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        (*g)[i] += self.grad[i] * (cdf + v * pdf);
      }
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_result(x.shape(), std::move(out), {x}, [](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double s = self.value[i];
        (*g)[i] += self.grad[i] * s * (1.0 - s);
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({1}, {acc}, {x}, [](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (auto& v : *g) v += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len) {
  require_rank2(x, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (len == 0 || start + len > c) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const auto xv = x.data();
  std::vector<double> out(r * len);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(i * c + start), len, out.begin() + static_cast<std::ptrdiff_t>(i * len));
  return make_result({r, len}, std::move(out), {x}, [r, c, start, len](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < len; ++j) (*g)[i * c + start + j] += self.grad[i * len + j];
    }
  });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw DimensionError("gather_rows: empty row list");
  const std::size_t d = last_dim(x);
  const std::size_t n = x.numel() / d;
  for (auto r : rows) {
    if (r >= n) throw DimensionError("gather_rows: row " + std::to_string(r) + " out of range for " + shape_str(x.shape()));
  }
  const auto xv = x.data();
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  return make_result({rows.size(), d}, std::move(out), {x}, [rows, d](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) (*g)[rows[i] * d + j] += self.grad[i * d + j];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t d = last_dim(parts.front());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (last_dim(p) != d) {
      throw DimensionError("concat_rows: width mismatch " + shape_str(parts.front().shape()) + " vs " + shape_str(p.shape()));
    }
    rows += p.numel() / d;
  }
  std::vector<double> out;
  out.reserve(rows * d);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    const auto pv = p.data();
    out.insert(out.end(), pv.begin(), pv.end());
  }
  return make_result({rows, d}, std::move(out), parts, [offsets](detail::Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      if (auto* g = input_grad(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[offsets[k] + i];
      }
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts.front().dim(0);
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().shape()) + " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].data();
    const std::size_t w = widths[k];
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(i * w), w, out.begin() + static_cast<std::ptrdiff_t>(i * total + off));
    off += w;
  }
  return make_result({r, total}, std::move(out), parts, [r, total, widths](detail::Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const std::size_t w = widths[k];
      if (auto* g = input_grad(self, k)) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) (*g)[i * w + j] += self.grad[i * total + off + j];
      }
      off += w;
    }
  });
}

Tensor repeat_row(const Tensor& row, std::size_t n) {
  const std::size_t d = last_dim(row);
  if (row.numel() != d) throw DimensionError("repeat_row: expected a single row, got " + shape_str(row.shape()));
  if (n == 0) throw DimensionError("repeat_row: zero repeats");
  const auto rv = row.data();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) std::copy(rv.begin(), rv.end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
  return make_result({n, d}, std::move(out), {row}, [n, d](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*g)[j] += self.grad[i * d + j];
    }
  });
}

namespace {

Tensor softmax_impl(const Tensor& x, const AttentionMask* mask, std::size_t* fully_masked_rows) {
  require_rank2(x, "softmax_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (mask && (mask->size() != r || r != c)) {
    throw DimensionError("softmax_rows: mask of size " + std::to_string(mask->size()) + " for scores " +
                         shape_str(x.shape()));
  }
  const auto xv = x.data();
  std::vector<double> out(xv.size(), 0.0);
  std::vector<double> z(c);
  std::size_t dead = 0;
  for (std::size_t i = 0; i < r; ++i) {
    bool any = false;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      const bool ok = !mask || mask->allowed(i, j);
      z[j] = xv[i * c + j] + (ok ? 0.0 : kMaskedLogit);
      if (ok) {
        any = true;
        mx = std::max(mx, z[j]);
      }
    }
    if (!any) {
      ++dead;
      continue;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(z[j] - mx);
      out[i * c + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total;
  }
  if (fully_masked_rows) *fully_masked_rows = dead;
  return make_result(x.shape(), std::move(out), {x}, [r, c](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.value[i * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          (*g)[i * c + j] += self.value[i * c + j] * (self.grad[i * c + j] - dot);
        }
      }
    }
  });
}

}  // namespace

Tensor softmax_rows(const Tensor& x) { return softmax_impl(x, nullptr, nullptr); }

Tensor softmax_rows(const Tensor& x, const AttentionMask& mask, std::size_t* fully_masked_rows) {
  return softmax_impl(x, &mask, fully_masked_rows);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = last_dim(x);
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d) {
    throw DimensionError("layer_norm: feature width " + std::to_string(d) + " vs gamma " + shape_str(gamma.shape()) +
                         ", beta " + shape_str(beta.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double t = xv[i * d + j] - mu;
      var += t * t;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xv[i * d + j] - mu) * inv_std[i];
      out[i * d + j] = gv[j] * xhat[i * d + j] + bv[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
                       const auto& gv = self.inputs[1]->value;
                       if (auto* g = input_grad(self, 0)) {
                         const double inv_d = 1.0 / static_cast<double>(d);
                         for (std::size_t i = 0; i < rows; ++i) {
                           double s1 = 0.0, s2 = 0.0;
                           for (std::size_t j = 0; j < d; ++j) {
                             const double dxh = self.grad[i * d + j] * gv[j];
                             s1 += dxh;
                             s2 += dxh * xhat[i * d + j];
                           }
                           for (std::size_t j = 0; j < d; ++j) {
                             const double dxh = self.grad[i * d + j] * gv[j];
                             (*g)[i * d + j] += inv_std[i] * (dxh - inv_d * s1 - xhat[i * d + j] * inv_d * s2);
                           }
                         }
                       }
                       if (auto* g = input_grad(self, 1)) {
                         for (std::size_t i = 0; i < rows; ++i)
                           for (std::size_t j = 0; j < d; ++j) (*g)[j] += self.grad[i * d + j] * xhat[i * d + j];
                       }
                       if (auto* g = input_grad(self, 2)) {
                         for (std::size_t i = 0; i < rows; ++i)
                           for (std::size_t j = 0; j < d; ++j) (*g)[j] += self.grad[i * d + j];
                       }
                     });
}

// Floor keeps the loss finite when a probability underflows to zero.
constexpr double kProbFloor = 1e-300;

Tensor nll_from_probs(const Tensor& probs, const std::vector<std::int64_t>& targets, std::int64_t ignore_id) {
  require_rank2(probs, "nll_from_probs");
  const std::size_t r = probs.dim(0), v = probs.dim(1);
  if (targets.size() != r) {
    throw DimensionError("nll_from_probs: " + std::to_string(targets.size()) + " targets for " + std::to_string(r) + " rows");
  }
  const auto pv = probs.data();
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] == ignore_id) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw ContractError("target id " + std::to_string(targets[i]) + " outside vocabulary of " + std::to_string(v));
    }
    acc -= std::log(std::max(pv[i * v + static_cast<std::size_t>(targets[i])], kProbFloor));
    ++count;
  }
  if (count == 0) throw ContractError("nll_from_probs: every target is ignored");
  const double n = static_cast<double>(count);
  return make_result({1}, {acc / n}, {probs}, [targets, ignore_id, v, n](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      const auto& pv = self.inputs[0]->value;
      for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] == ignore_id) continue;
        const std::size_t idx = i * v + static_cast<std::size_t>(targets[i]);
        (*g)[idx] -= self.grad[0] / (n * std::max(pv[idx], kProbFloor));
      }
    }
  });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  require_same(pred, target, "mse");
  const auto pv = pred.data();
  const auto tv = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double e = pv[i] - tv[i];
    acc += e * e;
  }
  const double n = static_cast<double>(pv.size());
  std::vector<double> tgt(tv.begin(), tv.end());
  return make_result({1}, {acc / n}, {pred}, [tgt = std::move(tgt), n](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      const auto& pv = self.inputs[0]->value;
      for (std::size_t i = 0; i < pv.size(); ++i) (*g)[i] += self.grad[0] * 2.0 * (pv[i] - tgt[i]) / n;
    }
  });
}

Tensor fourier_features(const std::vector<double>& times, const Tensor& freqs) {
  if (freqs.rank() != 1) throw DimensionError("fourier_features: frequencies must be a vector");
  if (times.empty()) throw DimensionError("fourier_features: no time values");
  const std::size_t nf = freqs.dim(0), nt = times.size();
  const auto fv = freqs.data();
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> out(nt * 2 * nf);
  for (std::size_t i = 0; i < nt; ++i) {
    for (std::size_t k = 0; k < nf; ++k) {
      const double a = two_pi * fv[k] * times[i];
      out[i * 2 * nf + k] = std::sin(a);
      out[i * 2 * nf + nf + k] = std::cos(a);
    }
  }
  return make_result({nt, 2 * nf}, std::move(out), {freqs}, [times, nf, two_pi](detail::Node& self) {
    if (auto* g = input_grad(self, 0)) {
      const auto& fv = self.inputs[0]->value;
      for (std::size_t i = 0; i < times.size(); ++i) {
        for (std::size_t k = 0; k < nf; ++k) {
          const double a = two_pi * fv[k] * times[i];
          const double da = two_pi * times[i];
          (*g)[k] += self.grad[i * 2 * nf + k] * std::cos(a) * da;
          (*g)[k] -= self.grad[i * 2 * nf + nf + k] * std::sin(a) * da;
        }
      }
    }
  });
}

}  // namespace u4d
