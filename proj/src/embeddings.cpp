#include "u4d/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "u4d/errors.hpp"
#include "u4d/ops.hpp"

namespace u4d {

ScheduleKind parse_schedule(std::string_view s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown noise schedule '" + std::string(s) + "' (expected linear|cosine)");
}

std::string_view to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }

NoiseSchedule::NoiseSchedule(ScheduleKind kind, std::size_t steps, double sigma_total)
    : kind_(kind), sigma_(sigma_total) {
  if (steps == 0) throw ConfigError("noise schedule needs T >= 1");
  if (!(sigma_total > 0.0) || !std::isfinite(sigma_total)) throw ConfigError("sigma_total must be positive");
  const double T = static_cast<double>(steps);
  alphas_.resize(steps);
  if (kind == ScheduleKind::linear) {
    for (std::size_t t = 1; t <= steps; ++t) alphas_[t - 1] = 2.0 * sigma_total * static_cast<double>(t) / (T * (T + 1.0));
  } else {
    auto g = [T](double t) { return 1.0 - std::cos(std::numbers::pi * t / (2.0 * T)); };
    double total = 0.0;
    for (std::size_t t = 1; t <= steps; ++t) {
      alphas_[t - 1] = g(static_cast<double>(t)) - g(static_cast<double>(t) - 1.0);
      total += alphas_[t - 1];
    }
    for (auto& a : alphas_) a *= sigma_total / total;
  }
  levels_.resize(steps);
  double acc = 0.0;
  for (std::size_t t = 0; t < steps; ++t) levels_[t] = acc += alphas_[t];
}

double NoiseSchedule::alpha(std::size_t t) const {
  if (t == 0 || t > alphas_.size()) throw ContractError("step " + std::to_string(t) + " outside 1..T");
  return alphas_[t - 1];
}

double NoiseSchedule::level(std::size_t t) const {
  if (t == 0) return 0.0;
  if (t > levels_.size()) throw ContractError("step " + std::to_string(t) + " outside 1..T");
  return levels_[t - 1];
}

void FrameDims::validate() const {
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw ConfigError("patch size " + std::to_string(patch) + " does not divide " + std::to_string(height) + "x" +
                      std::to_string(width) + " frames");
  }
}

Tensor patchify(const Tensor& frames, const FrameDims& d) {
  d.validate();
  const Shape want{d.views, d.times, d.height, d.width, d.channels};
  if (frames.shape() != want) {
    throw DimensionError("patchify: frames " + shape_str(frames.shape()) + " expected " + shape_str(want));
  }
  const std::size_t gw = d.width / d.patch, P = d.patches_per_frame(), pd = d.patch_dim();
  const auto src = frames.data();
  std::vector<double> out(d.tokens() * pd);
  for (std::size_t fr = 0; fr < d.views * d.times; ++fr) {
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t y0 = (p / gw) * d.patch, x0 = (p % gw) * d.patch;
      double* row = out.data() + (fr * P + p) * pd;
      for (std::size_t dy = 0; dy < d.patch; ++dy) {
        for (std::size_t dx = 0; dx < d.patch; ++dx) {
          const std::size_t pix = ((fr * d.height + y0 + dy) * d.width + x0 + dx) * d.channels;
          for (std::size_t c = 0; c < d.channels; ++c) *row++ = src[pix + c];
        }
      }
    }
  }
  return Tensor({d.tokens(), pd}, std::move(out));
}

Tensor unpatchify(const Tensor& patches, const FrameDims& d) {
  d.validate();
  if (patches.rank() != 2 || patches.dim(0) != d.tokens() || patches.dim(1) != d.patch_dim()) {
    throw DimensionError("unpatchify: got " + shape_str(patches.shape()) + " for " + std::to_string(d.tokens()) +
                         " tokens of width " + std::to_string(d.patch_dim()));
  }
  const std::size_t gw = d.width / d.patch, P = d.patches_per_frame(), pd = d.patch_dim();
  const auto src = patches.data();
  std::vector<double> out(d.views * d.times * d.height * d.width * d.channels);
  for (std::size_t fr = 0; fr < d.views * d.times; ++fr) {
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t y0 = (p / gw) * d.patch, x0 = (p % gw) * d.patch;
      const double* row = src.data() + (fr * P + p) * pd;
      for (std::size_t dy = 0; dy < d.patch; ++dy) {
        for (std::size_t dx = 0; dx < d.patch; ++dx) {
          const std::size_t pix = ((fr * d.height + y0 + dy) * d.width + x0 + dx) * d.channels;
          for (std::size_t c = 0; c < d.channels; ++c) out[pix + c] = *row++;
        }
      }
    }
  }
  return Tensor({d.views, d.times, d.height, d.width, d.channels}, std::move(out));
}

Tensor encode_visual(const Tensor& patches, const Tensor& w, const Tensor& b, const Tensor& pos) {
  const std::size_t n = patches.dim(0), P = pos.dim(0);
  if (P == 0 || n % P != 0) {
    throw DimensionError("encode_visual: " + std::to_string(n) + " patches not a multiple of " + std::to_string(P));
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i % P;
  return add(linear(patches, w, b), gather_rows(pos, idx));
}

Tensor mlp2(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  return linear(gelu(linear(x, w1, b1)), w2, b2);
}

Tensor semantic_embed(const Tensor& z_v, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  return mlp2(z_v, w1, b1, w2, b2);
}

Tensor noise_embed(const Tensor& z_v, const Tensor& w_a, const std::vector<double>& m, double intensity,
                   const Tensor& eps) {
  const std::size_t rows = z_v.dim(0), d = w_a.dim(1);
  if (m.size() != rows) {
    throw DimensionError("noise_embed: mask has " + std::to_string(m.size()) + " entries for " +
                         std::to_string(rows) + " tokens");
  }
  if (eps.shape() != Shape{rows, d}) {
    throw DimensionError("noise_embed: eps " + shape_str(eps.shape()) + " expected " + shape_str({rows, d}));
  }
  std::vector<double> on(rows * d), off(rows * d);
  for (std::size_t i = 0; i < rows; ++i) {
    if (m[i] != 0.0 && m[i] != 1.0) throw ContractError("noise_embed: mask entries must be 0 or 1");
    std::fill_n(on.begin() + i * d, d, m[i]);
    std::fill_n(off.begin() + i * d, d, 1.0 - m[i]);
  }
  const Tensor base = linear(z_v, w_a);
  const Tensor noisy = add(base, scale(eps, intensity));
  return add(mul(base, Tensor({rows, d}, std::move(off))), mul(noisy, Tensor({rows, d}, std::move(on))));
}

Tensor noise_embed(const Tensor& z_v, const Tensor& w_a, const std::vector<double>& m, std::size_t t,
                   const Tensor& eps, const NoiseSchedule& sched) {
  return noise_embed(z_v, w_a, m, sched.alpha(t), eps);
}

Tensor fourier_time(const std::vector<double>& times, const Tensor& freqs) { return fourier_features(times, freqs); }

Tensor initial_frequencies(std::size_t n_freq) {
  if (n_freq == 0) throw ConfigError("n_freq must be >= 1");
  std::vector<double> f(n_freq);
  for (std::size_t k = 0; k < n_freq; ++k) f[k] = std::ldexp(1.0, static_cast<int>(k));
  return Tensor({n_freq}, std::move(f));
}

EmbeddingMode parse_embedding_mode(std::string_view s) {
  if (s == "none") return EmbeddingMode::none;
  if (s == "spatial") return EmbeddingMode::spatial;
  if (s == "spatiotemporal") return EmbeddingMode::spatiotemporal;
  throw ConfigError("unknown embedding mode '" + std::string(s) + "' (expected none|spatial|spatiotemporal)");
}

std::string_view to_string(EmbeddingMode m) {
  switch (m) {
    case EmbeddingMode::none: return "none";
    case EmbeddingMode::spatial: return "spatial";
    case EmbeddingMode::spatiotemporal: return "spatiotemporal";
  }
  return "?";
}

GeometricLatent encode_geometry(const Tensor& raw_pose, const Tensor& raw_posi, const Tensor& w_pose,
                                const Tensor& b_pose, const Tensor& w_posi, const Tensor& b_posi) {
  return {linear(raw_pose, w_pose, b_pose), linear(raw_posi, w_posi, b_posi)};
}

SpatiotemporalFeatures spatiotemporal_embed(const GeometricLatent& geo, const FrameDims& dims,
                                            const std::vector<double>& times, const Tensor& freqs,
                                            const Tensor& w4d, const Tensor& b4d, EmbeddingMode mode) {
  if (times.size() != dims.times) {
    throw DimensionError("spatiotemporal_embed: " + std::to_string(times.size()) + " timestamps for " +
                         std::to_string(dims.times) + " time steps");
  }
  const std::size_t n = dims.tokens(), P = dims.patches_per_frame(), nf = dims.views * dims.times;
  if (geo.z_posi.dim(0) != n || geo.z_pose.dim(0) != dims.views) {
    throw DimensionError("spatiotemporal_embed: geometric latent does not match the frame layout");
  }
  const std::size_t dg = geo.z_posi.dim(1), dt = 2 * freqs.dim(0);

  std::vector<std::size_t> token_time(n), frame_time(nf), frame_view(nf);
  for (std::size_t i = 0; i < n; ++i) token_time[i] = (i / P) % dims.times;
  for (std::size_t fr = 0; fr < nf; ++fr) {
    frame_time[fr] = fr % dims.times;
    frame_view[fr] = fr / dims.times;
  }

  Tensor posi_geo = geo.z_posi, pose_geo = gather_rows(geo.z_pose, frame_view);
  Tensor posi_t, pose_t;
  if (mode == EmbeddingMode::spatiotemporal) {
    const Tensor ft = fourier_time(times, freqs);
    posi_t = gather_rows(ft, token_time);
    pose_t = gather_rows(ft, frame_time);
  } else {
    posi_t = Tensor::zeros({n, dt});
    pose_t = Tensor::zeros({nf, dt});
  }
  if (mode == EmbeddingMode::none) {
    posi_geo = Tensor::zeros({n, dg});
    pose_geo = Tensor::zeros({nf, dg});
  }
  return {linear(concat_cols({posi_geo, posi_t}), w4d, b4d), linear(concat_cols({pose_geo, pose_t}), w4d, b4d)};
}

TokenIndex token_index(std::size_t i, const FrameDims& d) {
  const std::size_t P = d.patches_per_frame();
  return {i / (d.times * P), (i / P) % d.times, i % P};
}

Tensor project_tokens(const Tensor& f, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  return mlp2(f, w1, b1, w2, b2);
}

Tensor decode_visual(const Tensor& tokens, const Tensor& w, const Tensor& b, const FrameDims& dims) {
  if (tokens.rank() != 2 || tokens.dim(0) != dims.tokens()) {
    throw DimensionError("decode_visual: " + shape_str(tokens.shape()) + " for " + std::to_string(dims.tokens()) +
                         " tokens");
  }
  const std::size_t P = dims.patches_per_frame();
  if (b.rank() != 2 || b.dim(0) != P || b.dim(1) != dims.patch_dim()) {
    throw DimensionError("decode_visual: bias " + shape_str(b.shape()) + " expected " + shape_str({P, dims.patch_dim()}));
  }
  std::vector<std::size_t> idx(dims.tokens());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i % P;
  Tensor px = add(linear(tokens.detach(), w.detach()), gather_rows(b.detach(), idx));
  for (auto& v : px.mutable_data()) v = std::clamp(v, 0.0, 1.0);
  return unpatchify(px, dims);
}

}  // namespace u4d
