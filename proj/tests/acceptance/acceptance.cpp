// Acceptance run: one PASS/FAIL line per criterion, then a summary.
//
// Exits 0 when every criterion was evaluated, whatever the verdicts, so that a
// criterion that is not met shows up as FAIL without hiding the others behind a
// red ctest. --strict turns any FAIL into exit 1. Harness errors exit 2.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "../common/mask_rules.hpp"
#include "u4d/backbone.hpp"
#include "u4d/checkpoint.hpp"
#include "u4d/config.hpp"
#include "u4d/embeddings.hpp"
#include "u4d/errors.hpp"
#include "u4d/experiment.hpp"
#include "u4d/fusion.hpp"
#include "u4d/ops.hpp"
#include "u4d/vocab.hpp"

namespace fs = std::filesystem;
using namespace u4d;
using nlohmann::json;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kGradBudget = 120;
constexpr std::size_t kMaskLayouts = 200;
constexpr std::size_t kMaskMaxTokens = 32;
constexpr double kMaskBudget = 30;
constexpr std::size_t kInvariantInstances = 50;
constexpr double kInvariantTol = 1e-12;
constexpr double kInvariantBudget = 60;
constexpr double kTelescopeTol = 1e-9;
constexpr double kTelescopeBudget = 10;
constexpr double kEndpointBudget = 5;
constexpr std::size_t kArSequences = 32;
constexpr double kArAccuracy = 0.99;
constexpr double kArBudgetPerSeed = 600;
constexpr std::size_t kGenScenes = 16;
constexpr double kGenPsnr = 25.0;
constexpr double kGenBudgetPerSeed = 1800;
constexpr int kAblationSeeds = 5;
constexpr double kLoraMergeTol = 1e-10;
constexpr double kLoraBudget = 60;
constexpr double kPersistBudget = 60;

const fs::path kSource = U4D_SOURCE_DIR;
const std::string kBin = U4D_BIN;

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o << std::setprecision(prec) << v;
  return o.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string join(const std::vector<double>& v, int prec = 4) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i], prec);
  return out;
}

void progress(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

ExperimentConfig fixture(const std::string& name, std::vector<std::string> overrides = {}) {
  return load_config((kSource / "configs" / name).string(), overrides);
}

int run_cli(const std::string& args) {
  const std::string cmd = "'" + kBin + "' " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

bool same_bytes(const fs::path& a, const fs::path& b) { return read_file(a.string()) == read_file(b.string()); }

double max_abs(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin(),
                                              [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; });
}

Tensor randn(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

// 1 --------------------------------------------------------------------------
Verdict gradient_soundness() {
  const auto t0 = Clock::now();
  const GradcheckReport r = model_gradcheck(load_config_json(json::object()), 3);
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string where;
  for (const auto& row : r.rows) {
    if (row.max_rel_err >= worst) {
      worst = row.max_rel_err;
      where = std::string(to_string(row.task)) + "/" + row.worst_param;
    }
  }
  bool all_below = true;
  std::set<std::pair<int, int>> covered;
  for (const auto& row : r.rows) {
    all_below = all_below && row.max_rel_err < kGradTol && row.checked > 0;
    covered.insert({static_cast<int>(row.task), static_cast<int>(row.group)});
  }
  std::set<int> tasks;
  for (const auto& c : covered) tasks.insert(c.first);
  return {all_below && tasks.size() == 2 && secs < kGradBudget,
          std::to_string(r.rows.size()) + " (task, group) rows, worst " + fmt(worst, 3) + " at " + where + " < " +
              fmt(kGradTol) + "; " + fmt(secs, 3) + " s < " + fmt(kGradBudget) + " s"};
}

// 2 --------------------------------------------------------------------------
Verdict mask_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(20260);
  std::size_t checked = 0, mismatches = 0, largest = 0;
  for (std::size_t k = 0; k < kMaskLayouts; ++k) {
    const TokenLayout u = test::random_layout(rng, false, kMaskMaxTokens);
    mismatches += !(build_understanding_mask(u) == test::rule_mask(u, TaskKind::understanding, MaskLevel::view));
    const TokenLayout g = test::random_layout(rng, true, kMaskMaxTokens);
    for (auto level : {MaskLevel::view, MaskLevel::time}) {
      mismatches += !(build_generation_mask(g, level) == test::rule_mask(g, TaskKind::generation, level));
    }
    largest = std::max({largest, u.size(), g.size()});
    checked += 3;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && largest <= kMaskMaxTokens && secs < kMaskBudget,
          std::to_string(kMaskLayouts) + " layouts per mask, " + std::to_string(checked) + " masks compared, " +
              std::to_string(mismatches) + " mismatches, N <= " + std::to_string(largest) + "; " + fmt(secs, 3) +
              " s < " + fmt(kMaskBudget) + " s"};
}

// 3 --------------------------------------------------------------------------
Verdict causality_invariants() {
  const auto t0 = Clock::now();
  const ExperimentConfig cfg = load_config_json(json::object(), {"data.num_scenes=4"});
  const Dataset data = build_dataset(cfg);
  const auto vocab = static_cast<std::int64_t>(Vocabulary::standard().size());
  Rng rng(31337);
  double worst_ar = 0, worst_gen = 0;
  std::size_t moved_ar = 0, moved_gen = 0;
  for (std::size_t k = 0; k < kInvariantInstances; ++k) {
    Model model(cfg.model, 1000 + k);
    // (a) distributions up to position i ignore the text after i
    const TrainingExample& ex = data.understanding[rng.below(data.understanding.size())];
    const SceneInputs& in = data.inputs[ex.scene];
    const Tensor base = model.understanding_probs(in, ex);
    const std::size_t L = ex.text_ids.size(), i = rng.below(L - 1);
    TrainingExample alt = ex;
    for (std::size_t j = i + 1; j < L; ++j) alt.text_ids[j] = 4 + static_cast<std::int64_t>(rng.below(vocab - 4));
    const Tensor moved = model.understanding_probs(in, alt);
    const std::size_t V = base.dim(1);
    for (std::size_t r = 0; r <= i; ++r)
      for (std::size_t c = 0; c < V; ++c) worst_ar = std::max(worst_ar, std::abs(base.at(r * V + c) - moved.at(r * V + c)));
    for (std::size_t c = 0; c < V; ++c) moved_ar += base.at((i + 1) * V + c) != moved.at((i + 1) * V + c);

    // (b) clean and linguistic hidden rows ignore the noisy rows
    const TrainingExample& gx = data.generation[rng.below(data.generation.size())];
    const SceneInputs& gin = data.inputs[gx.scene];
    const std::size_t d = cfg.model.backbone.d_model, t = 1 + rng.below(cfg.model.backbone.T);
    const Tensor x = model.initial_state(gin, gx, 77 + k);
    Tensor xp = x.detach();
    for (std::size_t r = 0; r < gx.noisy.size(); ++r)
      if (gx.noisy[r])
        for (std::size_t c = 0; c < d; ++c) xp.mutable_data()[r * d + c] += 3.0 * rng.normal();
    const Tensor h = model.generation_hidden(gin, gx, x, t), hp = model.generation_hidden(gin, gx, xp, t);
    for (std::size_t r = 0; r < gx.layout.size(); ++r) {
      const bool noisy = gx.layout.token(r).role == TokenRole::visual_noisy;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = std::abs(h.at(r * d + c) - hp.at(r * d + c));
        if (noisy) moved_gen += diff > 0;
        else worst_gen = std::max(worst_gen, diff);
      }
    }
  }
  const double secs = seconds_since(t0);
  // the perturbations must reach the rows that are allowed to see them
  const bool live = moved_ar > 0 && moved_gen > 0;
  return {worst_ar <= kInvariantTol && worst_gen <= kInvariantTol && live && secs < kInvariantBudget,
          std::to_string(kInvariantInstances) + " instances each: AR max |dp| " + fmt(worst_ar, 3) +
              ", clean/text max |dh| " + fmt(worst_gen, 3) + " <= " + fmt(kInvariantTol) +
              (live ? "" : " (perturbation had no effect anywhere)") + "; " + fmt(secs, 3) + " s < " +
              fmt(kInvariantBudget) + " s"};
}

// 4 --------------------------------------------------------------------------
Verdict denoise_telescoping() {
  const auto t0 = Clock::now();
  Rng rng(4242);
  double worst = 0;
  int cases = 0;
  for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
    for (std::size_t T : {1u, 8u, 32u}) {
      for (double sigma : {1.0, 0.37, 2.5}) {
        const NoiseSchedule sched(kind, T, sigma);
        const std::size_t n = 24, d = 16;
        std::vector<std::uint8_t> noisy(n);
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < n; ++r)
          if ((noisy[r] = rng.bernoulli(0.6))) rows.push_back(r);
        const Tensor x0 = randn({n, d}, rng), eps = randn({n, d}, rng);
        Tensor xT = x0.detach();
        for (std::size_t r : rows)
          for (std::size_t c = 0; c < d; ++c) xT.mutable_data()[r * d + c] += sigma * eps.at(r * d + c);
        const Tensor eps_rows = gather_rows(eps, rows);
        const auto res = denoise_loop(xT, noisy, sched, [&](const Tensor&, std::size_t) { return eps_rows; });
        worst = std::max(worst, max_abs(res.x0, x0));
        ++cases;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= kTelescopeTol && secs < kTelescopeBudget,
          std::to_string(cases) + " cases (linear/cosine, T in {1, 8, 32}), max |x0_hat - x0| " + fmt(worst, 3) +
              " <= " + fmt(kTelescopeTol) + "; " + fmt(secs, 3) + " s"};
}

// 5 --------------------------------------------------------------------------
Verdict endpoint_identities() {
  const auto t0 = Clock::now();
  const ExperimentConfig cfg = load_config_json(json::object(), {"data.num_scenes=2"});
  const Dataset data = build_dataset(cfg);
  Model model(cfg.model, 5);
  Rng rng(55);
  std::size_t checked = 0, bad = 0;
  for (const auto& in : data.inputs) {
    const Tensor z = model.latent(in), w_a = model.params().get("vision.w_a");
    const std::size_t n = z.dim(0), d = w_a.dim(1);
    const Tensor eps = randn({n, d}, rng);
    const Tensor f_a = noise_embed(z, w_a, std::vector<double>(n, 0.0), cfg.model.sigma_total, eps);
    bad += !bit_identical(f_a, matmul(z, w_a));
    bad += !bit_identical(f_a, model.appearance(in));
    const Tensor f_s = randn({n, d}, rng);
    bad += !bit_identical(task_fuse(f_s, f_a, Tensor::scalar(1.0)), f_s);
    bad += !bit_identical(task_fuse(f_s, f_a, Tensor::scalar(0.0)), f_a);
    checked += 4;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < kEndpointBudget,
          std::to_string(checked) + " elementwise identities (m = 0 projection, alpha = 1 and 0), " +
              std::to_string(bad) + " differ; " + fmt(secs, 3) + " s"};
}

// 6 --------------------------------------------------------------------------
Verdict ar_overfit() {
  std::vector<double> acc, secs;
  std::size_t sequences = 0;
  for (int seed = 0; seed < 3; ++seed) {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg = fixture("ar_overfit.json", {"training.seed=" + std::to_string(seed)});
    const Dataset data = build_dataset(cfg);
    sequences = data.understanding.size();
    Model model = prepare_model(cfg, data);
    run_training(model, data, cfg);
    acc.push_back(evaluate_understanding(model, data, false).token_accuracy);
    secs.push_back(seconds_since(t0));
    progress("AR seed " + std::to_string(seed) + ": accuracy " + fmt(acc.back()) + " in " + fmt(secs.back(), 3) + " s");
  }
  const double med = median(acc), slowest = *std::max_element(secs.begin(), secs.end());
  return {med > kArAccuracy && sequences == kArSequences && slowest < kArBudgetPerSeed,
          std::to_string(sequences) + " sequences, 3000 steps, token accuracy per seed [" + join(acc) + "], median " +
              fmt(med) + " > " + fmt(kArAccuracy) + "; slowest seed " + fmt(slowest, 3) + " s < " +
              fmt(kArBudgetPerSeed) + " s"};
}

// 7 --------------------------------------------------------------------------
Verdict gen_overfit() {
  std::vector<double> psnrs, secs;
  std::size_t scenes = 0, steps = 0;
  for (int seed = 0; seed < 3; ++seed) {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg = fixture("gen_overfit.json", {"training.seed=" + std::to_string(seed)});
    const Dataset data = build_dataset(cfg);
    scenes = data.scenes.size();
    steps = cfg.training.steps;
    Model model = prepare_model(cfg, data);
    run_training(model, data, cfg);
    psnrs.push_back(evaluate_generation(model, data, cfg.training.seed).psnr);
    secs.push_back(seconds_since(t0));
    progress("generation seed " + std::to_string(seed) + ": PSNR " + fmt(psnrs.back()) + " dB in " +
             fmt(secs.back(), 3) + " s");
  }
  const double med = median(psnrs), slowest = *std::max_element(secs.begin(), secs.end());
  return {med > kGenPsnr && scenes == kGenScenes && slowest < kGenBudgetPerSeed,
          std::to_string(scenes) + " scenes, " + std::to_string(steps) + " steps, PSNR per seed [" + join(psnrs) +
              "] dB, median " + fmt(med) + " > " + fmt(kGenPsnr) + "; slowest seed " + fmt(slowest, 3) + " s < " +
              fmt(kGenBudgetPerSeed) + " s"};
}

// 8 --------------------------------------------------------------------------
Verdict ablation_directions(int seeds) {
  struct Variant {
    const char* label;
    std::vector<std::string> overrides;
  };
  // the default fixture already is attention fusion, masked, alternating, spatiotemporal
  const std::vector<Variant> variants{{"default", {}},
                                      {"concat", {"fusion.strategy=concat"}},
                                      {"weighting", {"fusion.strategy=weighting"}},
                                      {"unmasked", {"mask.enabled=false"}},
                                      {"no_sampling", {"mask.sampling=none"}},
                                      {"spatial", {"embedding.mode=spatial"}}};
  std::map<std::string, std::vector<RunMetrics>> runs;
  for (int seed = 0; seed < seeds; ++seed) {
    for (const auto& v : variants) {
      std::vector<std::string> ov = v.overrides;
      ov.push_back("training.seed=" + std::to_string(seed));
      const ExperimentConfig cfg = fixture("ablation.json", ov);
      const Dataset data = build_dataset(cfg);
      Model model = prepare_model(cfg, data);
      run_training(model, data, cfg);
      runs[v.label].push_back(evaluate_run(model, data, cfg, true));
    }
    progress("ablation seed " + std::to_string(seed) + " done");
  }
  auto med = [&](const char* label, const std::function<double(const RunMetrics&)>& f) {
    std::vector<double> v;
    for (const auto& m : runs[label]) v.push_back(f(m));
    return median(v);
  };
  const auto joint = [](const RunMetrics& m) { return m.joint_loss; };
  // teacher-forced scores are void for the unmasked model: its text queries see the target token
  const auto exact = [](const RunMetrics& m) { return m.understanding.exact_match; };
  const auto l_diff = [](const RunMetrics& m) { return m.losses.diff; };
  const auto psnr_of = [](const RunMetrics& m) { return m.generation.psnr; };
  const auto ts_tok = [](const RunMetrics& m) { return m.understanding.ts_token_accuracy; };
  const auto ts_exact = [](const RunMetrics& m) { return m.understanding.ts_exact_match; };

  const double j_att = med("default", joint), j_w = med("weighting", joint), j_c = med("concat", joint);
  const bool fusion_ok = j_att <= j_w && j_w <= j_c;
  const double em_m = med("default", exact), em_u = med("unmasked", exact);
  const double df_m = med("default", l_diff), df_u = med("unmasked", l_diff);
  const bool mask_ok = em_m > em_u && df_m < df_u;
  const double p_alt = med("default", psnr_of), p_none = med("no_sampling", psnr_of);
  const bool sampling_ok = p_alt > p_none;
  const double tt_st = med("default", ts_tok), tt_sp = med("spatial", ts_tok);
  const double te_st = med("default", ts_exact), te_sp = med("spatial", ts_exact);
  const bool embed_ok = tt_st > tt_sp || te_st > te_sp;

  auto mark = [](bool ok) { return ok ? "ok" : "REVERSED"; };
  std::ostringstream d;
  d << "medians over " << seeds << " seeds: fusion joint loss attention " << fmt(j_att) << " <= weighting "
    << fmt(j_w) << " <= concat " << fmt(j_c) << " [" << mark(fusion_ok) << "]; masked vs unmasked greedy exact match " << fmt(em_m)
    << " vs " << fmt(em_u) << ", loss_diff " << fmt(df_m) << " vs " << fmt(df_u) << " [" << mark(mask_ok)
    << "]; sampling PSNR alternating " << fmt(p_alt) << " vs none " << fmt(p_none) << " [" << mark(sampling_ok)
    << "]; time-sensitive token accuracy spatiotemporal " << fmt(tt_st) << " vs spatial " << fmt(tt_sp)
    << ", exact match " << fmt(te_st) << " vs " << fmt(te_sp) << " ["
    << mark(embed_ok) << "]";
  return {fusion_ok && mask_ok && sampling_ok && embed_ok, d.str()};
}

// 9 --------------------------------------------------------------------------
Verdict lora_identity_and_merge() {
  const auto t0 = Clock::now();
  const ExperimentConfig cfg = load_config_json(
      json::object(), {"data.num_scenes=2", "data.items_per_scene=2", "training.steps=20", "training.lr=0.01"});
  const Dataset data = build_dataset(cfg);
  Model model = prepare_model(cfg, data);
  const TrainingExample& ux = data.understanding[0];
  const TrainingExample& gx = data.generation[0];
  const Tensor x = model.initial_state(data.inputs[gx.scene], gx, 9);
  auto outputs = [&] {
    return std::pair{model.understanding_probs(data.inputs[ux.scene], ux),
                     model.predict_noise(data.inputs[gx.scene], gx, x, cfg.model.backbone.T / 2)};
  };
  const auto base = outputs();
  const ParamStore before = model.params().clone();
  Rng rng(cfg.training.seed);
  const auto attached = model.params().apply_lora(cfg.lora.targets, cfg.lora.rank, cfg.lora.scale(), rng);
  const auto at_init = outputs();
  const bool identity = bit_identical(base.first, at_init.first) && bit_identical(base.second, at_init.second);

  train_loop(model, data, cfg.training, 3);
  std::size_t frozen_moved = 0, b_nonzero = 0;
  for (const auto& p : before.params()) {
    frozen_moved += !bit_identical(p.tensor, model.params().get(p.name));
  }
  for (const auto& [name, ad] : model.params().adapters()) {
    for (double v : ad.b.data()) b_nonzero += v != 0.0;
  }
  const auto adapted = outputs();
  model.params().merge_lora();
  const auto merged = outputs();
  const double merge_err = std::max(max_abs(adapted.first, merged.first), max_abs(adapted.second, merged.second));
  const double secs = seconds_since(t0);
  return {identity && frozen_moved == 0 && b_nonzero > 0 && merge_err <= kLoraMergeTol &&
              model.params().adapters().empty() && secs < kLoraBudget,
          std::to_string(attached.size()) + " adapters; at init " + (identity ? "bit-identical" : "DIFFERENT") +
              "; after stage 3, " + std::to_string(frozen_moved) + " base tensors changed, " +
              std::to_string(b_nonzero) + " nonzero B entries; merged vs adapted max |d| " + fmt(merge_err, 3) +
              " <= " + fmt(kLoraMergeTol) + "; " + fmt(secs, 3) + " s"};
}

// 10 -------------------------------------------------------------------------
Verdict persistence_and_determinism(const fs::path& work) {
  const auto t0 = Clock::now();
  const std::string cfg_path = (kSource / "configs" / "tiny.json").string();
  const fs::path a = work / "run_a", b = work / "run_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const int rc_a = run_cli("train -c '" + cfg_path + "' --paths.out_dir='" + a.string() + "'");
  const int rc_b = run_cli("train -c '" + cfg_path + "' --paths.out_dir='" + b.string() + "'");
  const bool ran = rc_a == 0 && rc_b == 0;
  const bool same_ckpt = ran && same_bytes(a / "checkpoint.u4dc", b / "checkpoint.u4dc");
  const bool same_report = ran && same_bytes(a / "report.ndjson", b / "report.ndjson");

  bool round_trip = false;
  if (ran) {
    const ExperimentConfig cfg = load_config(cfg_path);
    Model model = build_model(cfg);
    apply_checkpoint(model.params(), load_checkpoint((a / "checkpoint.u4dc").string()));
    round_trip = encode_checkpoint(checkpoint_entries(model.params())) == read_file((a / "checkpoint.u4dc").string());
  }

  int rc_flip = -1, rc_cut = -1;
  if (ran) {
    auto bytes = read_file((a / "checkpoint.u4dc").string());
    auto flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x10;
    write_file((work / "flipped.u4dc").string(), flipped);
    write_file((work / "cut.u4dc").string(), {bytes.begin(), bytes.begin() + bytes.size() / 3});
    rc_flip = run_cli("eval -c '" + cfg_path + "' --checkpoint '" + (work / "flipped.u4dc").string() + "'");
    rc_cut = run_cli("eval -c '" + cfg_path + "' --checkpoint '" + (work / "cut.u4dc").string() + "'");
  }
  const double secs = seconds_since(t0);
  return {ran && same_ckpt && same_report && round_trip && rc_flip == 4 && rc_cut == 4 && secs < kPersistBudget,
          std::string("two CLI runs: checkpoints ") + (same_ckpt ? "byte-identical" : "DIFFER") + ", reports " +
              (same_report ? "byte-identical" : "DIFFER") + "; round trip " + (round_trip ? "bit-exact" : "NOT exact") +
              "; flipped byte exit " + std::to_string(rc_flip) + ", truncated exit " + std::to_string(rc_cut) +
              " (want 4); " + fmt(secs, 3) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  bool strict = false;
  std::vector<int> only;
  std::string work = "acceptance_work";
  int ablation_seeds = kAblationSeeds;
  std::string report;
  app.add_flag("--strict", strict, "exit 1 when any criterion fails");
  app.add_option("--only", only, "criterion numbers to run")->check(CLI::Range(1, 10));
  app.add_option("--work", work, "scratch directory");
  app.add_option("--report", report, "also write the verdict lines to this file");
  app.add_option("--ablation-seeds", ablation_seeds, "seeds for the ablation medians (diagnostics only)")
      ->check(CLI::Range(1, 99));
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(work);
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"gradient soundness", gradient_soundness},
      {"mask oracle equivalence", mask_equivalence},
      {"causality and conditioning invariants", causality_invariants},
      {"denoise telescoping", denoise_telescoping},
      {"endpoint identities", endpoint_identities},
      {"AR overfit", ar_overfit},
      {"generation overfit", gen_overfit},
      {"ablation directions", [&] { return ablation_directions(ablation_seeds); }},
      {"LoRA identity and merge", lora_identity_and_merge},
      {"persistence and determinism", [&] { return persistence_and_determinism(work); }},
  };

  std::ofstream report_file;
  if (!report.empty()) report_file.open(report);
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    if (report_file) report_file << line << std::endl;
  };

  int passed = 0, failed = 0;
  try {
    for (std::size_t k = 0; k < criteria.size(); ++k) {
      const int id = static_cast<int>(k) + 1;
      if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
      const auto t0 = Clock::now();
      const Verdict v = criteria[k].second();
      (v.pass ? passed : failed) += 1;
      std::ostringstream line;
      line << (v.pass ? "PASS" : "FAIL") << " [" << std::setw(2) << id << "] " << criteria[k].first << ": "
           << v.detail << " (" << fmt(seconds_since(t0), 3) << " s)";
      emit(line.str());
    }
  } catch (const std::exception& e) {
    emit(std::string("ERROR harness: ") + e.what());
    return 2;
  }
  emit("summary: " + std::to_string(passed) + " passed, " + std::to_string(failed) + " failed");
  return strict && failed > 0 ? 1 : 0;
}
