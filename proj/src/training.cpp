#include "u4d/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "u4d/errors.hpp"
#include "u4d/ops.hpp"
#include "u4d/rng.hpp"

namespace u4d {

Tensor loss_ar(const Tensor& probs, const std::vector<std::int64_t>& targets) {
  if (probs.rank() != 2 || probs.dim(0) != targets.size()) {
    throw DimensionError("loss_ar: " + shape_str(probs.shape()) + " for " + std::to_string(targets.size()) +
                         " targets");
  }
  std::vector<std::int64_t> t = targets;
  for (auto& id : t) {
    if (id >= static_cast<std::int64_t>(probs.dim(1))) {
      throw ContractError("loss_ar: target id " + std::to_string(id) + " outside a vocabulary of " +
                          std::to_string(probs.dim(1)));
    }
    if (id == Vocabulary::kPad) id = -1;
  }
  return nll_from_probs(probs, t, -1);
}

Tensor loss_diff(const Tensor& eps_hat, const Tensor& eps) {
  if (eps_hat.shape() != eps.shape()) {
    throw DimensionError("loss_diff: " + shape_str(eps_hat.shape()) + " vs " + shape_str(eps.shape()));
  }
  return mse(eps_hat, eps);
}

Tensor total_loss(const Tensor& l_ar, const Tensor& l_diff, double lambda_ar, double lambda_diff) {
  if (!(lambda_ar >= 0.0) || !(lambda_diff >= 0.0)) {
    throw ConfigError("loss weights must be non-negative (lambda_ar=" + std::to_string(lambda_ar) +
                      ", lambda_diff=" + std::to_string(lambda_diff) + ")");
  }
  if (!l_ar.defined() && !l_diff.defined()) return Tensor::scalar(0.0);
  if (!l_diff.defined()) return scale(l_ar, lambda_ar);
  if (!l_ar.defined()) return scale(l_diff, lambda_diff);
  return add(scale(l_ar, lambda_ar), scale(l_diff, lambda_diff));
}

void Adam::step(ParamStore& store) {
  ++t_;
  const auto& ps = store.params();
  if (m_.size() < ps.size()) {
    m_.resize(ps.size());
    v_.resize(ps.size());
  }
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Tensor p = ps[i].tensor;
    if (!p.requires_grad() || !p.has_grad()) continue;
    auto w = p.mutable_data();
    const auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    if (m.size() != w.size()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
      v[k] = b2_ * v[k] + (1.0 - b2_) * g[k] * g[k];
      const double upd = (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      w[k] -= lr_ * (upd + wd_ * w[k]);
    }
  }
}

std::vector<const SceneInputs*> Dataset::input_ptrs() const {
  std::vector<const SceneInputs*> out;
  for (const auto& in : inputs) out.push_back(&in);
  return out;
}

Dataset build_dataset(const DataConfig& cfg, std::size_t patch, std::size_t text_len) {
  cfg.scene.validate();
  if (cfg.num_scenes == 0) throw ConfigError("data.num_scenes must be positive");
  if (cfg.time_reversal_pairs && cfg.num_scenes % 2 != 0) {
    throw ConfigError("data.num_scenes must be even when data.time_reversal_pairs is set");
  }
  const Vocabulary& vocab = Vocabulary::standard();
  Dataset ds;
  for (std::size_t i = 0; i < cfg.num_scenes; ++i) {
    if (cfg.time_reversal_pairs && i % 2 == 1) {
      ds.scenes.push_back(time_reversed(ds.scenes.back(), vocab));
    } else {
      SceneConfig sc = cfg.scene;
      // a twin of a static scene is the same scene, so twins always move
      if (cfg.time_reversal_pairs) sc.min_objects = std::max(1, sc.min_objects);
      Scene4D s = gen_scene(Rng::derive(cfg.seed, i).next(), sc, vocab);
      if (cfg.time_reversal_pairs) {
        std::uint64_t k = 1;
        while (std::all_of(s.objects.begin(), s.objects.end(), [](const auto& o) { return o.motion == Motion::still; })) {
          s = gen_scene(Rng::derive(cfg.seed, i + (k++ << 32)).next(), sc, vocab);
        }
      }
      ds.scenes.push_back(std::move(s));
    }
  }
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    const Scene4D& s = ds.scenes[i];
    ds.inputs.push_back(scene_inputs(s, patch));
    const std::size_t items =
        cfg.items_per_scene == 0 ? num_items(s) : std::min(cfg.items_per_scene, num_items(s));
    for (std::size_t k = 0; k < items; ++k) {
      ExampleSpec spec;
      spec.item = k;
      spec.patch = patch;
      spec.text_len = text_len;
      TrainingExample ex = make_batch(s, TaskKind::understanding, vocab, spec);
      ex.scene = i;
      ds.understanding.push_back(std::move(ex));
    }
    ExampleSpec spec;
    spec.patch = patch;
    spec.text_len = text_len;
    spec.num_condition = cfg.num_condition;
    spec.p_noise = cfg.p_noise;
    spec.mask_seed = Rng::derive(cfg.seed, 0x6d61736b00000000ull + i).next();
    TrainingExample ex = make_batch(s, TaskKind::generation, vocab, spec);
    ex.scene = i;
    ds.generation.push_back(std::move(ex));
  }
  return ds;
}

namespace {

std::vector<std::size_t> noisy_rows(const TrainingExample& ex) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ex.noisy.size(); ++i) {
    if (ex.noisy[i]) rows.push_back(i);
  }
  return rows;
}

std::vector<double> noise_flags(const TrainingExample& ex) { return {ex.noisy.begin(), ex.noisy.end()}; }

Tensor normal_tensor(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

TSampling parse_t_sampling(std::string_view s) {
  if (s == "uniform") return TSampling::uniform;
  if (s == "high_noise") return TSampling::high_noise;
  throw ConfigError("unknown t sampling '" + std::string(s) + "' (expected uniform|high_noise)");
}

std::string_view to_string(TSampling s) { return s == TSampling::uniform ? "uniform" : "high_noise"; }

std::vector<double> t_distribution(TSampling s, const NoiseSchedule& sched, double sigma_data) {
  std::vector<double> cdf(sched.steps());
  double acc = 0.0;
  for (std::size_t t = 1; t <= sched.steps(); ++t) {
    const double c = sched.level(t);
    acc += s == TSampling::uniform ? 1.0 : 1.0 + c * c / (sigma_data * sigma_data);
    cdf[t - 1] = acc;
  }
  for (auto& v : cdf) v /= acc;
  return cdf;
}

std::string TrainReport::to_ndjson() const {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j;
    j["step"] = r.step;
    j["stage"] = r.stage;
    j["task"] = std::string(to_string(r.task));
    j["loss_ar"] = opt(r.loss_ar);
    j["loss_diff"] = opt(r.loss_diff);
    j["total"] = r.total;
    j["token_accuracy"] = opt(r.token_accuracy);
    j["eval_psnr"] = opt(r.eval_psnr);
    if (r.wall_seconds) j["wall_seconds"] = *r.wall_seconds;
    out += j.dump();
    out += '\n';
  }
  return out;
}

double TrainReport::final_loss(TaskKind task, std::size_t window) const {
  double s = 0.0;
  std::size_t n = 0;
  for (auto it = records.rbegin(); it != records.rend() && n < window; ++it) {
    if (it->task != task) continue;
    const auto& l = task == TaskKind::understanding ? it->loss_ar : it->loss_diff;
    if (!l) continue;
    s += *l;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(n);
}

TrainReport train_loop(Model& model, const Dataset& data, const TrainConfig& cfg, int stage, std::size_t step_offset) {
  if (cfg.tasks.empty()) throw ConfigError("training.tasks is empty");
  if (cfg.batch_size == 0) throw ConfigError("training.batch_size must be positive");
  for (auto task : cfg.tasks) {
    const auto& pool = task == TaskKind::understanding ? data.understanding : data.generation;
    if (pool.empty()) throw ContractError("dataset has no " + std::string(to_string(task)) + " examples");
  }
  (void)total_loss(Tensor(), Tensor(), cfg.lambda_ar, cfg.lambda_diff);  // validates the weights up front

  ParamStore& store = model.params();
  store.set_trainable(stage);
  Adam opt(cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay);
  Rng rng = Rng::derive(cfg.seed, 0x7374616765000000ull + static_cast<std::uint64_t>(stage));
  const NoiseSchedule& sched = model.schedule();
  const std::size_t d = model.config().backbone.d_model;
  const std::vector<double> t_cdf = t_distribution(cfg.t_sampling, sched, model.config().sigma_data);
  const auto start = std::chrono::steady_clock::now();

  TrainReport report;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const std::size_t step = step_offset + s;
    const TaskKind task = cfg.tasks[step % cfg.tasks.size()];
    for (const auto& p : store.params()) Tensor(p.tensor).zero_grad();

    StepRecord rec;
    rec.step = step;
    rec.stage = stage;
    rec.task = task;
    Tensor l_ar, l_diff;
    std::size_t correct = 0, counted = 0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (task == TaskKind::understanding) {
        const auto& ex = data.understanding[rng.below(data.understanding.size())];
        const Tensor probs = model.understanding_probs(data.inputs[ex.scene], ex);
        const Tensor l = loss_ar(probs, ex.targets);
        l_ar = l_ar.defined() ? add(l_ar, l) : l;
        for (std::size_t i = 0; i < ex.targets.size(); ++i) {
          if (ex.targets[i] < 0) continue;
          correct += argmax_row(probs, i) == ex.targets[i];
          ++counted;
        }
      } else {
        const auto& ex = data.generation[rng.below(data.generation.size())];
        const SceneInputs& in = data.inputs[ex.scene];
        std::size_t t;
        if (cfg.t_sampling == TSampling::uniform) {
          t = 1 + rng.below(sched.steps());
        } else {
          const auto at = std::upper_bound(t_cdf.begin(), t_cdf.end(), rng.uniform());
          t = std::min<std::size_t>(1 + static_cast<std::size_t>(at - t_cdf.begin()), sched.steps());
        }
        const Tensor eps = normal_tensor({in.dims.tokens(), d}, rng);
        // the state the sampler visits at step t carries the cumulative level
        const Tensor x = noise_embed(model.latent(in), store.get("vision.w_a"), noise_flags(ex), sched.level(t), eps);
        const auto rows = noisy_rows(ex);
        const Tensor l = loss_diff(model.predict_noise(in, ex, x, t), gather_rows(eps, rows));
        l_diff = l_diff.defined() ? add(l_diff, l) : l;
      }
    }
    const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
    if (l_ar.defined()) l_ar = scale(l_ar, inv_b);
    if (l_diff.defined()) l_diff = scale(l_diff, inv_b);
    const Tensor loss = total_loss(l_ar, l_diff, cfg.lambda_ar, cfg.lambda_diff);
    rec.total = loss.item();
    if (l_ar.defined()) rec.loss_ar = l_ar.item();
    if (l_diff.defined()) rec.loss_diff = l_diff.item();
    if (counted > 0) rec.token_accuracy = static_cast<double>(correct) / static_cast<double>(counted);
    if (!std::isfinite(rec.total)) {
      throw DivergenceError("non-finite loss at step " + std::to_string(step) + " (stage " + std::to_string(stage) +
                            ", task " + std::string(to_string(task)) + ")");
    }
    if (loss.requires_grad()) {
      loss.backward();
      opt.step(store);
    }
    if (cfg.eval_every > 0 && (s + 1) % cfg.eval_every == 0 && !data.generation.empty()) {
      rec.eval_psnr = evaluate_generation(model, data, cfg.seed).psnr;
    }
    if (cfg.report_wall_clock) {
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    report.records.push_back(rec);
  }
  return report;
}

LossMetrics evaluate_losses(Model& model, const Dataset& data, std::uint64_t seed) {
  LossMetrics out;
  for (const auto& ex : data.understanding) {
    out.ar += loss_ar(model.understanding_probs(data.inputs[ex.scene], ex), ex.targets).item();
  }
  if (!data.understanding.empty()) out.ar /= static_cast<double>(data.understanding.size());
  const NoiseSchedule& sched = model.schedule();
  const std::size_t d = model.config().backbone.d_model;
  std::size_t n = 0;
  for (std::size_t e = 0; e < data.generation.size(); ++e) {
    const auto& ex = data.generation[e];
    const SceneInputs& in = data.inputs[ex.scene];
    Rng rng = Rng::derive(seed, 0x6c6f737300000000ull + e);
    const auto rows = noisy_rows(ex);
    for (std::size_t t = 1; t <= sched.steps(); ++t) {
      const Tensor eps = normal_tensor({in.dims.tokens(), d}, rng);
      const Tensor x = noise_embed(model.latent(in), model.params().get("vision.w_a"), noise_flags(ex),
                                   sched.level(t), eps);
      out.diff += loss_diff(model.predict_noise(in, ex, x, t), gather_rows(eps, rows)).item();
      ++n;
    }
  }
  if (n > 0) out.diff /= static_cast<double>(n);
  return out;
}

UnderstandingMetrics evaluate_understanding(Model& model, const Dataset& data, bool greedy) {
  if (data.understanding.empty()) throw ContractError("evaluate: no understanding examples");
  UnderstandingMetrics m;
  std::size_t correct = 0, ts_correct = 0, ts_tokens = 0, exact = 0, ts_exact = 0;
  for (const auto& ex : data.understanding) {
    const SceneInputs& in = data.inputs[ex.scene];
    const Tensor probs = model.understanding_probs(in, ex);
    for (std::size_t i = 0; i < ex.targets.size(); ++i) {
      if (ex.targets[i] < 0) continue;
      const bool ok = argmax_row(probs, i) == ex.targets[i];
      correct += ok;
      ++m.tokens;
      if (ex.time_sensitive) {
        ts_correct += ok;
        ++ts_tokens;
      }
    }
    ++m.sequences;
    m.ts_sequences += ex.time_sensitive;
    if (greedy) {
      const bool ok = model.greedy_decode(in, ex) == ex.answer;
      exact += ok;
      if (ex.time_sensitive) ts_exact += ok;
    }
  }
  const auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : double(a) / double(b); };
  m.token_accuracy = ratio(correct, m.tokens);
  m.ts_token_accuracy = ratio(ts_correct, ts_tokens);
  m.exact_match = ratio(exact, m.sequences);
  m.ts_exact_match = ratio(ts_exact, m.ts_sequences);
  return m;
}

Tensor target_frames(const Tensor& frames, const TrainingExample& ex, const FrameDims& dims) {
  const std::size_t P = dims.patches_per_frame();
  const std::size_t fsz = dims.height * dims.width * dims.channels;
  const auto src = frames.data();
  std::vector<double> out;
  std::size_t k = 0;
  for (std::size_t fr = 0; fr < dims.views * dims.times; ++fr) {
    bool target = false;
    for (std::size_t p = 0; p < P; ++p) target = target || ex.noisy[fr * P + p];
    if (!target) continue;
    out.insert(out.end(), src.begin() + fr * fsz, src.begin() + (fr + 1) * fsz);
    ++k;
  }
  return Tensor({k, dims.height, dims.width, dims.channels}, std::move(out));
}

GenerationMetrics evaluate_generation(Model& model, const Dataset& data, std::uint64_t seed, bool oracle) {
  if (data.generation.empty()) throw ContractError("evaluate: no generation examples");
  GenerationMetrics m;
  const NoiseSchedule& sched = model.schedule();
  const std::size_t d = model.config().backbone.d_model;
  for (std::size_t e = 0; e < data.generation.size(); ++e) {
    const auto& ex = data.generation[e];
    const SceneInputs& in = data.inputs[ex.scene];
    const std::uint64_t s = Rng::derive(seed, 0x6576616c00000000ull + e).next();
    const Tensor clean = model.appearance(in).detach();
    Tensor x_T;
    DenoiseResult res;
    if (oracle) {
      Rng rng = Rng::derive(s, 1);
      const Tensor eps = normal_tensor({in.dims.tokens(), d}, rng);
      const auto rows = noisy_rows(ex);
      x_T = clean.clone();
      auto xv = x_T.mutable_data();
      const auto ev = eps.data();
      for (std::size_t r : rows) {
        for (std::size_t c = 0; c < d; ++c) xv[r * d + c] += sched.sigma_total() * ev[r * d + c];
      }
      const Tensor eps_rows = gather_rows(eps, rows);
      res = denoise_loop(x_T, ex.noisy, sched, [&](const Tensor&, std::size_t) { return eps_rows; });
    } else {
      x_T = model.initial_state(in, ex, s);
      res = denoise_loop(x_T, ex.noisy, sched,
                         [&](const Tensor& x, std::size_t t) { return model.predict_noise(in, ex, x, t).detach(); });
    }
    const Tensor truth = target_frames(in.frames, ex, in.dims);
    m.psnr += psnr(target_frames(model.decode(res.x0, in.dims), ex, in.dims), truth);
    m.psnr_no_denoise += psnr(target_frames(model.decode(x_T, in.dims), ex, in.dims), truth);
    m.psnr_ceiling += psnr(target_frames(model.decode(clean, in.dims), ex, in.dims), truth);
    if (m.residual_norms.empty()) m.residual_norms.assign(res.residual_norms.size(), 0.0);
    for (std::size_t i = 0; i < res.residual_norms.size(); ++i) m.residual_norms[i] += res.residual_norms[i];
    ++m.examples;
  }
  const double n = static_cast<double>(m.examples);
  m.psnr /= n;
  m.psnr_no_denoise /= n;
  m.psnr_ceiling /= n;
  for (auto& r : m.residual_norms) r /= n;
  return m;
}

}  // namespace u4d
