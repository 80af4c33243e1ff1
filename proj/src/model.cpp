#include "u4d/model.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "u4d/errors.hpp"
#include "u4d/ops.hpp"
#include "u4d/rng.hpp"

namespace u4d {

namespace {

// [rows, cols] with orthonormal rows or columns (whichever is shorter), from the
// QR factor of a Gaussian draw.
Tensor orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
  const std::size_t n = std::max(rows, cols), k = std::min(rows, cols);
  Eigen::MatrixXd g(n, k);
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  // sign fix so the factor is unique
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (qr.matrixQR()(j, j) < 0) q.col(j) = -q.col(j);
  }
  if (rows < cols) q.transposeInPlace();
  std::vector<double> v(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) v[i * cols + j] = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return Tensor({rows, cols}, std::move(v));
}

}  // namespace

Prediction parse_prediction(std::string_view s) {
  if (s == "noise") return Prediction::noise;
  if (s == "preconditioned") return Prediction::preconditioned;
  throw ConfigError("unknown prediction '" + std::string(s) + "' (expected noise|preconditioned)");
}

std::string_view to_string(Prediction p) { return p == Prediction::noise ? "noise" : "preconditioned"; }

void ModelConfig::validate() const {
  backbone.validate();
  if (backbone.vocab_size == 0) throw ConfigError("vocabulary is empty");
  if (backbone.T == 0) throw ConfigError("model.T must be >= 1");
  if (!(sigma_data > 0.0)) throw ConfigError("model.sigma_data must be positive");
  for (auto [v, name] : {std::pair{d_v, "d_v"}, {d_g, "d_g"}, {patch, "patch"}, {n_freq, "n_freq"},
                         {d_task, "d_task"}, {text_len, "text_len"}, {channels, "channels"}}) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
  }
  if (height % patch != 0 || width % patch != 0) {
    throw ConfigError("patch size " + std::to_string(patch) + " does not divide " + std::to_string(height) + "x" +
                      std::to_string(width) + " frames");
  }
}

SceneInputs scene_inputs(const Scene4D& scene, std::size_t patch) {
  const auto& c = scene.cfg;
  SceneInputs in;
  in.dims = {static_cast<std::size_t>(c.views), static_cast<std::size_t>(c.times),
             static_cast<std::size_t>(c.height), static_cast<std::size_t>(c.width),
             static_cast<std::size_t>(c.channels), patch};
  in.patches = patchify(scene.frames, in.dims);
  in.frames = scene.frames;
  in.timestamps = scene.timestamps;

  std::vector<double> pose;
  for (const auto& p : scene.poses) pose.insert(pose.end(), p.begin(), p.end());
  in.raw_pose = Tensor({in.dims.views, 7}, std::move(pose));

  const std::size_t gw = in.dims.width / patch, P = in.dims.patches_per_frame();
  std::vector<double> posi;
  posi.reserve(in.dims.tokens() * 3);
  for (int v = 0; v < c.views; ++v) {
    for (int f = 0; f < c.times; ++f) {
      for (std::size_t p = 0; p < P; ++p) {
        const double px = static_cast<double>((p % gw) * patch) + 0.5 * static_cast<double>(patch);
        const double py = static_cast<double>((p / gw) * patch) + 0.5 * static_cast<double>(patch);
        const auto s = surface_point(scene, v, f, px, py);
        posi.insert(posi.end(), s.begin(), s.end());
      }
    }
  }
  in.raw_posi = Tensor({in.dims.tokens(), 3}, std::move(posi));
  return in;
}

Model::Model(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), masks_(cfg_.mask_enabled) {
  cfg_.validate();
  sched_ = NoiseSchedule(cfg_.schedule, cfg_.backbone.T, cfg_.sigma_total);
  Rng rng = Rng::derive(seed, 0x696e6974);
  const auto& b = cfg_.backbone;
  const std::size_t d = b.d_model, pd = cfg_.patch * cfg_.patch * cfg_.channels;
  const std::size_t P = (cfg_.height / cfg_.patch) * (cfg_.width / cfg_.patch);
  using G = ParamGroup;

  // Frozen stand-ins for the pretrained visual encoder/decoder. Orthonormal maps
  // keep the latent well conditioned, so the fitted decoder does not amplify
  // small latent errors.
  store_.add("vision.patch_w", orthonormal(pd, cfg_.d_v, rng), G::vision);
  store_.add_zeros("vision.patch_b", {cfg_.d_v}, G::vision);
  store_.add_xavier("vision.pos", P, cfg_.d_v, G::vision, rng);
  store_.add("vision.w_a", orthonormal(cfg_.d_v, d, rng), G::vision);
  store_.add_zeros("vision.dec_w", {d, pd}, G::vision);
  store_.add_zeros("vision.dec_b", {P, pd}, G::vision);

  store_.add_xavier("embed.sem.w1", cfg_.d_v, cfg_.se_hidden, G::embeddings, rng);
  store_.add_zeros("embed.sem.b1", {cfg_.se_hidden}, G::embeddings);
  store_.add_xavier("embed.sem.w2", cfg_.se_hidden, d, G::embeddings, rng);
  store_.add_zeros("embed.sem.b2", {d}, G::embeddings);
  store_.add_xavier("embed.tok", b.vocab_size, d, G::embeddings, rng);
  store_.add_xavier("embed.pos", cfg_.text_len, d, G::embeddings, rng);
  store_.add_xavier("embed.step", b.T, d, G::embeddings, rng);
  // within-frame patch index only; view and time reach the model through geometry
  store_.add_xavier("embed.patch", P, d, G::embeddings, rng);

  store_.add_xavier("ste.pose_w", 7, cfg_.d_g, G::ste, rng);
  store_.add_zeros("ste.pose_b", {cfg_.d_g}, G::ste);
  store_.add_xavier("ste.posi_w", 3, cfg_.d_g, G::ste, rng);
  store_.add_zeros("ste.posi_b", {cfg_.d_g}, G::ste);
  store_.add("ste.freqs", initial_frequencies(cfg_.n_freq), G::ste);
  store_.add_xavier("ste.w4d", cfg_.d_g + 2 * cfg_.n_freq, d, G::ste, rng);
  store_.add_zeros("ste.b4d", {d}, G::ste);

  store_.add_xavier("fusion.prompt", 2, cfg_.d_task, G::fusion, rng);
  store_.add_xavier("fusion.alpha_w1", cfg_.d_task, cfg_.alpha_hidden, G::fusion, rng);
  store_.add_zeros("fusion.alpha_b1", {cfg_.alpha_hidden}, G::fusion);
  store_.add_xavier("fusion.alpha_w2", cfg_.alpha_hidden, 1, G::fusion, rng);
  store_.add_zeros("fusion.alpha_b2", {1}, G::fusion);
  if (cfg_.fusion == FusionStrategy::attention) {
    store_.add_xavier("fusion.wq", d, d, G::fusion, rng);
    store_.add_xavier("fusion.wk", d, d, G::fusion, rng);
    // zero value map: fusion starts as the identity on f_v and geometry is
    // learned in, instead of swamping appearance from the first step
    store_.add_zeros("fusion.wv", {d, d}, G::fusion);
  } else if (cfg_.fusion == FusionStrategy::concat) {
    store_.add_xavier("fusion.cat_w", 4 * d, d, G::fusion, rng);
    store_.add_zeros("fusion.cat_b", {d}, G::fusion);
  }

  store_.add_xavier("proj.w1", d, cfg_.proj_hidden, G::projector, rng);
  store_.add_zeros("proj.b1", {cfg_.proj_hidden}, G::projector);
  store_.add_xavier("proj.w2", cfg_.proj_hidden, d, G::projector, rng);
  store_.add_zeros("proj.b2", {d}, G::projector);

  for (std::size_t l = 0; l < b.num_layers; ++l) {
    const G g = l < b.layer_split ? G::llm_lower : G::llm_higher;
    const std::string p = "blocks." + std::to_string(l) + ".";
    store_.add_ones(p + "ln1_g", {d}, g);
    store_.add_zeros(p + "ln1_b", {d}, g);
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) store_.add_xavier(p + w, d, d, g, rng);
    store_.add_ones(p + "ln2_g", {d}, g);
    store_.add_zeros(p + "ln2_b", {d}, g);
    store_.add_xavier(p + "ffn.w1", d, b.d_ff, g, rng);
    store_.add_zeros(p + "ffn.b1", {b.d_ff}, g);
    store_.add_xavier(p + "ffn.w2", b.d_ff, d, g, rng);
    store_.add_zeros(p + "ffn.b2", {d}, g);
  }

  store_.add_ones("head.ln_g", {d}, G::heads);
  store_.add_zeros("head.ln_b", {d}, G::heads);
  store_.add_xavier("head.ar_w", d, b.vocab_size, G::heads, rng);
  store_.add_xavier("head.diff_w1", d, cfg_.head_hidden, G::heads, rng);
  store_.add_zeros("head.diff_b1", {cfg_.head_hidden}, G::heads);
  store_.add_xavier("head.diff_w2", cfg_.head_hidden, d, G::heads, rng);
  store_.add_zeros("head.diff_b2", {d}, G::heads);

  store_.set_trainable(kJointStage);
}

Tensor Model::latent(const SceneInputs& in) const {
  const std::size_t P = in.dims.patches_per_frame();
  const Tensor pos = store_.get("vision.pos");
  if (P != pos.dim(0) || in.patches.dim(1) != store_.get("vision.patch_w").dim(0)) {
    throw DimensionError("scene frames do not match the model's frame geometry");
  }
  std::vector<std::size_t> rows(P);
  for (std::size_t p = 0; p < P; ++p) rows[p] = p;
  return encode_visual(in.patches, store_.get("vision.patch_w"), store_.get("vision.patch_b"), gather_rows(pos, rows));
}

Tensor Model::appearance(const SceneInputs& in) const { return linear(latent(in), store_.get("vision.w_a")); }

Tensor Model::alpha(TaskKind task) const {
  const Tensor prompt = gather_rows(store_.get("fusion.prompt"), {task == TaskKind::understanding ? 0u : 1u});
  return task_alpha(prompt, store_.weight("fusion.alpha_w1"), store_.get("fusion.alpha_b1"),
                    store_.weight("fusion.alpha_w2"), store_.get("fusion.alpha_b2"));
}

namespace {

Tensor row_gate(const std::vector<std::uint8_t>& flags, std::size_t d, bool keep_flagged) {
  std::vector<double> g(flags.size() * d);
  for (std::size_t i = 0; i < flags.size(); ++i) {
    std::fill_n(g.begin() + i * d, d, (flags[i] != 0) == keep_flagged ? 1.0 : 0.0);
  }
  return Tensor({flags.size(), d}, std::move(g));
}

bool any(const std::vector<std::uint8_t>& v) {
  for (auto x : v) {
    if (x) return true;
  }
  return false;
}

}  // namespace

Tensor Model::visual_tokens(const SceneInputs& in, const Tensor& f_a, const std::vector<std::uint8_t>& noisy,
                            TaskKind task, std::size_t t) const {
  const std::size_t n = in.dims.tokens(), d = cfg_.backbone.d_model;
  if (f_a.shape() != Shape{n, d}) {
    throw DimensionError("appearance rows " + shape_str(f_a.shape()) + " expected " + shape_str({n, d}));
  }
  if (noisy.size() != n) throw DimensionError("noise flags do not cover the visual tokens");
  const Tensor z = latent(in);
  Tensor f_s = semantic_embed(z, store_.weight("embed.sem.w1"), store_.get("embed.sem.b1"),
                              store_.weight("embed.sem.w2"), store_.get("embed.sem.b2"));
  // noisy rows have no clean observation to take semantics from
  if (any(noisy)) f_s = mul(f_s, row_gate(noisy, d, false));

  const GeometricLatent geo = encode_geometry(in.raw_pose, in.raw_posi, store_.weight("ste.pose_w"),
                                              store_.get("ste.pose_b"), store_.weight("ste.posi_w"),
                                              store_.get("ste.posi_b"));
  FusionInputs fi;
  fi.f_s = f_s;
  fi.f_a = f_a;
  fi.f_4d = spatiotemporal_embed(geo, in.dims, in.timestamps, store_.get("ste.freqs"), store_.weight("ste.w4d"),
                                 store_.get("ste.b4d"), cfg_.embedding);
  fi.alpha = alpha(task);
  fi.patches_per_frame = in.dims.patches_per_frame();
  FusionWeights fw;
  if (cfg_.fusion == FusionStrategy::attention) {
    fw.wq = store_.weight("fusion.wq");
    fw.wk = store_.weight("fusion.wk");
    fw.wv = store_.weight("fusion.wv");
  } else if (cfg_.fusion == FusionStrategy::concat) {
    fw.w_cat = store_.weight("fusion.cat_w");
    fw.b_cat = store_.get("fusion.cat_b");
  }
  const Tensor fused = fuse_variant(cfg_.fusion, fi, fw, cfg_.fusion_residual);
  Tensor tokens = project_tokens(fused, store_.weight("proj.w1"), store_.get("proj.b1"), store_.weight("proj.w2"),
                                 store_.get("proj.b2"));
  std::vector<std::size_t> patch_idx(n);
  for (std::size_t i = 0; i < n; ++i) patch_idx[i] = i % in.dims.patches_per_frame();
  tokens = add(tokens, gather_rows(store_.get("embed.patch"), patch_idx));
  if (t > 0 && any(noisy)) {
    const Tensor step = gather_rows(store_.get("embed.step"), {t - 1});
    tokens = add(tokens, mul(repeat_row(step, n), row_gate(noisy, d, true)));
  }
  return tokens;
}

Tensor Model::text_tokens(const std::vector<std::int64_t>& ids) const {
  if (ids.size() > cfg_.text_len) {
    throw ContractError(std::to_string(ids.size()) + " text tokens exceed text_len " + std::to_string(cfg_.text_len));
  }
  std::vector<std::size_t> rows(ids.size()), pos(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= cfg_.backbone.vocab_size) {
      throw ContractError("token id " + std::to_string(ids[i]) + " outside the vocabulary");
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
    pos[i] = i;
  }
  return add(gather_rows(store_.get("embed.tok"), rows), gather_rows(store_.get("embed.pos"), pos));
}

std::vector<const AttentionMask*> Model::mask_schedule(const TrainingExample& ex) {
  const std::size_t L = cfg_.backbone.num_layers;
  std::vector<const AttentionMask*> out(L);
  if (ex.task == TaskKind::understanding) {
    for (auto& m : out) m = &masks_.understanding(ex.layout);
  } else if (L > 0) {
    const auto levels = alternating_schedule(L, cfg_.sampling);
    for (std::size_t l = 0; l < L; ++l) out[l] = &masks_.generation(ex.layout, levels[l]);
  }
  return out;
}

std::vector<BlockWeights> Model::blocks() const {
  std::vector<BlockWeights> out;
  for (std::size_t l = 0; l < cfg_.backbone.num_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    out.push_back({store_.get(p + "ln1_g"), store_.get(p + "ln1_b"), store_.weight(p + "attn.wq"),
                   store_.weight(p + "attn.wk"), store_.weight(p + "attn.wv"), store_.weight(p + "attn.wo"),
                   store_.get(p + "ln2_g"), store_.get(p + "ln2_b"), store_.weight(p + "ffn.w1"),
                   store_.get(p + "ffn.b1"), store_.weight(p + "ffn.w2"), store_.get(p + "ffn.b2")});
  }
  return out;
}

namespace {

std::vector<std::size_t> linguistic_rows(const TrainingExample& ex) {
  std::vector<std::size_t> rows(ex.text_ids.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = ex.num_visual() + i;
  return rows;
}

}  // namespace

Tensor Model::understanding_hidden(const SceneInputs& in, const TrainingExample& ex, AttentionTrace* trace) {
  if (ex.task != TaskKind::understanding) throw ContractError("understanding pass on a generation example");
  const Tensor x = concat_rows(
      {visual_tokens(in, appearance(in), ex.noisy, TaskKind::understanding, 0), text_tokens(ex.text_ids)});
  return backbone_forward(x, mask_schedule(ex), blocks(), cfg_.backbone.num_heads, trace);
}

Tensor Model::understanding_probs(const SceneInputs& in, const TrainingExample& ex, AttentionTrace* trace) {
  return ar_head(understanding_hidden(in, ex, trace), linguistic_rows(ex), store_.get("head.ln_g"),
                 store_.get("head.ln_b"), store_.weight("head.ar_w"));
}

Tensor Model::generation_hidden(const SceneInputs& in, const TrainingExample& ex, const Tensor& x, std::size_t t,
                                AttentionTrace* trace) {
  if (ex.task != TaskKind::generation) throw ContractError("generation pass on an understanding example");
  const Tensor seq =
      concat_rows({visual_tokens(in, x, ex.noisy, TaskKind::generation, t), text_tokens(ex.text_ids)});
  return backbone_forward(seq, mask_schedule(ex), blocks(), cfg_.backbone.num_heads, trace);
}

Tensor Model::predict_noise(const SceneInputs& in, const TrainingExample& ex, const Tensor& x, std::size_t t) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ex.noisy.size(); ++i) {
    if (ex.noisy[i]) rows.push_back(i);
  }
  const Tensor h = generation_hidden(in, ex, x, t);
  const Tensor out = diffusion_head(h, rows, store_.get("head.ln_g"), store_.get("head.ln_b"),
                                    store_.weight("head.diff_w1"), store_.get("head.diff_b1"),
                                    store_.weight("head.diff_w2"), store_.get("head.diff_b2"));
  if (cfg_.prediction == Prediction::noise) return out;
  const double c = sched_.level(t), sd = cfg_.sigma_data;
  const double c_skip = sd * sd / (c * c + sd * sd);
  const double c_out = c * sd / std::sqrt(c * c + sd * sd);
  return sub(scale(gather_rows(x, rows), (1.0 - c_skip) / c), scale(out, c_out / c));
}

std::vector<std::int64_t> Model::greedy_decode(const SceneInputs& in, const TrainingExample& ex) {
  TrainingExample cur = ex;
  cur.text_ids.assign(ex.text_ids.begin(), ex.text_ids.begin() + static_cast<std::ptrdiff_t>(ex.prompt_len));
  std::vector<std::int64_t> out;
  const auto ling_span = [&] {
    std::vector<Span> spans = ex.layout.spans();
    spans.back().length = cur.text_ids.size();
    return TokenLayout(std::move(spans));
  };
  while (cur.text_ids.size() < cfg_.text_len) {
    cur.layout = ling_span();
    const Tensor probs = understanding_probs(in, cur);
    const std::int64_t next = argmax_row(probs, cur.text_ids.size() - 1);
    out.push_back(next);
    if (next == Vocabulary::kEos) break;
    cur.text_ids.push_back(next);
  }
  return out;
}

Tensor Model::initial_state(const SceneInputs& in, const TrainingExample& ex, std::uint64_t seed) const {
  const std::size_t d = cfg_.backbone.d_model;
  Tensor x = appearance(in).detach();
  Rng rng = Rng::derive(seed, 0x73616d70);
  auto v = x.mutable_data();
  for (std::size_t i = 0; i < ex.noisy.size(); ++i) {
    if (!ex.noisy[i]) continue;
    for (std::size_t c = 0; c < d; ++c) v[i * d + c] = cfg_.sigma_total * rng.normal();
  }
  return x;
}

DenoiseResult Model::sample(const SceneInputs& in, const TrainingExample& ex, std::uint64_t seed) {
  return denoise_loop(initial_state(in, ex, seed), ex.noisy, sched_,
                      [&](const Tensor& x, std::size_t t) { return predict_noise(in, ex, x, t).detach(); });
}

Tensor Model::decode(const Tensor& x, const FrameDims& dims) const {
  return decode_visual(x, store_.get("vision.dec_w"), store_.get("vision.dec_b"), dims);
}

void Model::calibrate_decoder(const std::vector<const SceneInputs*>& scenes) {
  if (scenes.empty()) throw ContractError("decoder calibration needs at least one scene");
  const std::size_t d = cfg_.backbone.d_model;
  const Tensor dec_w = store_.get("vision.dec_w"), dec_b = store_.get("vision.dec_b");
  const std::size_t P = dec_b.dim(0), pd = dec_b.dim(1);
  std::size_t rows = 0;
  for (const auto* s : scenes) {
    if (s->dims.patch_dim() != pd || s->dims.patches_per_frame() != P) {
      throw DimensionError("decoder calibration scene does not match the model's frame geometry");
    }
    rows += s->dims.tokens();
  }
  // features plus a one-hot patch position for the per-position bias
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(rows, d + P), Y(rows, pd);
  std::size_t r = 0;
  for (const auto* s : scenes) {
    const Tensor a = appearance(*s);
    const auto av = a.data(), pv = s->patches.data();
    for (std::size_t i = 0; i < s->dims.tokens(); ++i, ++r) {
      for (std::size_t c = 0; c < d; ++c) X(r, c) = av[i * d + c];
      X(r, d + i % P) = 1.0;
      for (std::size_t c = 0; c < pd; ++c) Y(r, c) = pv[i * pd + c];
    }
  }
  const Eigen::MatrixXd W = X.completeOrthogonalDecomposition().solve(Y);
  auto w = Tensor(dec_w).mutable_data();
  auto b = Tensor(dec_b).mutable_data();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t c = 0; c < pd; ++c) w[i * pd + c] = W(i, c);
  }
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t c = 0; c < pd; ++c) b[p * pd + c] = W(d + p, c);
  }
}

}  // namespace u4d
