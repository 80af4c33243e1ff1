#include "u4d/experiment.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "u4d/errors.hpp"
#include "u4d/gradcheck.hpp"
#include "u4d/ops.hpp"

namespace u4d {

Dataset build_dataset(const ExperimentConfig& cfg) {
  return build_dataset(cfg.data, cfg.model.patch, cfg.model.text_len);
}

Model build_model(const ExperimentConfig& cfg) { return Model(cfg.model, cfg.training.seed); }

Model prepare_model(const ExperimentConfig& cfg, const Dataset& data) {
  Model m = build_model(cfg);
  m.calibrate_decoder(data.input_ptrs());
  return m;
}

TrainReport run_training(Model& model, const Dataset& data, const ExperimentConfig& cfg) {
  TrainReport all;
  std::size_t offset = 0;
  for (int stage : cfg.training.stages) {
    if (stage == 3 && model.params().adapters().empty()) {
      Rng rng = Rng::derive(cfg.training.seed, 0x6c6f7261);
      model.params().apply_lora(cfg.lora.targets, cfg.lora.rank, cfg.lora.scale(), rng);
    }
    TrainReport r = train_loop(model, data, cfg.training, stage, offset);
    offset += cfg.training.steps;
    all.records.insert(all.records.end(), r.records.begin(), r.records.end());
  }
  model.params().set_trainable(kJointStage);
  return all;
}

AblationAxis parse_axis(std::string_view s) {
  if (s == "fusion") return AblationAxis::fusion;
  if (s == "embedding") return AblationAxis::embedding;
  if (s == "mask") return AblationAxis::mask;
  if (s == "sampling") return AblationAxis::sampling;
  throw ConfigError("unknown ablation axis '" + std::string(s) + "' (expected fusion|embedding|mask|sampling)");
}

std::string_view to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::fusion: return "fusion";
    case AblationAxis::embedding: return "embedding";
    case AblationAxis::mask: return "mask";
    case AblationAxis::sampling: return "sampling";
  }
  return "?";
}

std::vector<AblationVariant> ablation_variants(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::fusion:
      return {{"Concat", {"fusion.strategy=concat"}},
              {"Weighting", {"fusion.strategy=weighting"}},
              {"Attention", {"fusion.strategy=attention"}}};
    case AblationAxis::embedding:
      return {{"w/o Embedding", {"embedding.mode=none"}},
              {"w/ Spatial", {"embedding.mode=spatial"}},
              {"w/ Spatiotemporal", {"embedding.mode=spatiotemporal"}}};
    case AblationAxis::mask:
      return {{"w/o Mask", {"mask.enabled=false"}}, {"w/ Mask", {"mask.enabled=true"}}};
    case AblationAxis::sampling:
      return {{"w/o Sampling", {"mask.sampling=none"}},
              {"w/ View-only", {"mask.sampling=view_only"}},
              {"w/ Time-only", {"mask.sampling=time_only"}},
              {"w/ Alternating", {"mask.sampling=alternating"}}};
  }
  return {};
}

RunMetrics evaluate_run(Model& model, const Dataset& data, const ExperimentConfig& cfg, bool greedy) {
  RunMetrics m;
  m.steps = cfg.training.steps;
  m.seed = cfg.training.seed;
  if (!data.understanding.empty()) m.understanding = evaluate_understanding(model, data, greedy);
  if (!data.generation.empty()) m.generation = evaluate_generation(model, data, cfg.training.seed);
  m.losses = evaluate_losses(model, data, cfg.training.seed);
  m.joint_loss = cfg.training.lambda_ar * m.losses.ar + cfg.training.lambda_diff * m.losses.diff;
  return m;
}

AblationTable run_ablation(const nlohmann::json& base_doc, AblationAxis axis, const std::vector<std::string>& overrides) {
  AblationTable table{axis, {}};
  for (const auto& v : ablation_variants(axis)) {
    std::vector<std::string> ov = overrides;
    ov.insert(ov.end(), v.overrides.begin(), v.overrides.end());
    const ExperimentConfig cfg = load_config_json(base_doc, ov);
    const Dataset data = build_dataset(cfg);
    Model model = prepare_model(cfg, data);
    run_training(model, data, cfg);
    table.rows.push_back({v, evaluate_run(model, data, cfg)});
  }
  return table;
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json j;
  j["axis"] = std::string(to_string(axis));
  auto& rows_j = j["rows"] = nlohmann::json::array();
  std::set<std::size_t> steps;
  std::set<std::uint64_t> seeds;
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    steps.insert(m.steps);
    seeds.insert(m.seed);
    rows_j.push_back({{"variant", r.variant.label},
                      {"token_accuracy", m.understanding.token_accuracy},
                      {"exact_match", m.understanding.exact_match},
                      {"ts_token_accuracy", m.understanding.ts_token_accuracy},
                      {"ts_exact_match", m.understanding.ts_exact_match},
                      {"psnr", m.generation.psnr},
                      {"loss_ar", m.losses.ar},
                      {"loss_diff", m.losses.diff},
                      {"joint_loss", m.joint_loss},
                      {"steps", m.steps},
                      {"seed", m.seed}});
  }
  j["identical_steps"] = steps.size() <= 1;
  j["identical_seeds"] = seeds.size() <= 1;
  return j;
}

std::string AblationTable::to_text() const {
  std::ostringstream o;
  o << std::fixed;
  o << std::left << std::setw(20) << "variant" << std::right << std::setw(10) << "tok_acc" << std::setw(10) << "exact"
    << std::setw(10) << "ts_exact" << std::setw(10) << "psnr" << std::setw(10) << "L_AR" << std::setw(10) << "L_Diff"
    << std::setw(10) << "joint" << "\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    o << std::left << std::setw(20) << r.variant.label << std::right << std::setprecision(4) << std::setw(10)
      << m.understanding.token_accuracy << std::setw(10) << m.understanding.exact_match << std::setw(10)
      << m.understanding.ts_exact_match << std::setprecision(2) << std::setw(10) << m.generation.psnr
      << std::setprecision(4) << std::setw(10) << m.losses.ar << std::setw(10) << m.losses.diff << std::setw(10)
      << m.joint_loss << "\n";
  }
  if (!rows.empty()) {
    o << "steps " << rows.front().metrics.steps << ", seed " << rows.front().metrics.seed << " for every row\n";
  }
  return o.str();
}

bool GradcheckReport::passed() const {
  for (const auto& r : rows) {
    if (!(r.max_rel_err < tolerance)) return false;
  }
  return true;
}

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json j;
  j["tolerance"] = tolerance;
  j["passed"] = passed();
  auto& rj = j["groups"] = nlohmann::json::array();
  for (const auto& r : rows) {
    rj.push_back({{"task", std::string(to_string(r.task))},
                  {"group", std::string(to_string(r.group))},
                  {"max_rel_err", r.max_rel_err},
                  {"worst_param", r.worst_param},
                  {"checked", r.checked}});
  }
  return j;
}

std::string GradcheckReport::to_text() const {
  std::ostringstream o;
  o << std::left << std::setw(15) << "task" << std::setw(12) << "group" << std::right << std::setw(14) << "max_rel_err"
    << std::setw(9) << "coords" << "  worst\n";
  for (const auto& r : rows) {
    o << std::left << std::setw(15) << to_string(r.task) << std::setw(12) << to_string(r.group) << std::right
      << std::scientific << std::setprecision(3) << std::setw(14) << r.max_rel_err << std::setw(9) << r.checked
      << "  " << r.worst_param << (r.max_rel_err < tolerance ? "" : "  FAIL") << "\n";
  }
  o << (passed() ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << std::scientific
    << std::setprecision(0) << tolerance << ")\n";
  return o.str();
}

// Central differences of an O(1) loss carry ~1e-13 of roundoff, so gradients
// below this are compared in absolute terms.
constexpr double kGradFloor = 1e-6;

GradcheckReport model_gradcheck(const ExperimentConfig& cfg_in, std::size_t coords_per_param,
                                std::optional<ParamGroup> fault) {
  ExperimentConfig cfg = cfg_in;
  cfg.data.num_scenes = 1;
  const Dataset data = build_dataset(cfg);
  Model model = prepare_model(cfg, data);
  ParamStore& store = model.params();
  Rng rng = Rng::derive(cfg.training.seed, 0x6772616463686bull);
  store.apply_lora(cfg.lora.targets, cfg.lora.rank, cfg.lora.scale(), rng);
  for (const auto& p : store.params()) {
    if (p.name.ends_with(".lora_b")) {
      for (auto& v : Tensor(p.tensor).mutable_data()) v = 0.1 * rng.normal();
    }
  }
  for (const auto& p : store.params()) Tensor(p.tensor).set_requires_grad(true);

  const TrainingExample& uex = data.understanding.front();
  const TrainingExample& gex = data.generation.front();
  const SceneInputs& in = data.inputs[gex.scene];
  const std::size_t d = cfg.model.backbone.d_model;
  const std::size_t t = std::max<std::size_t>(1, model.schedule().steps() / 2);
  std::vector<double> ev(in.dims.tokens() * d);
  for (auto& v : ev) v = rng.normal();
  const Tensor eps({in.dims.tokens(), d}, ev);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < gex.noisy.size(); ++i) {
    if (gex.noisy[i]) rows.push_back(i);
  }
  const std::vector<double> flags(gex.noisy.begin(), gex.noisy.end());

  auto loss = [&](TaskKind task) {
    if (task == TaskKind::understanding) {
      return loss_ar(model.understanding_probs(data.inputs[uex.scene], uex), uex.targets);
    }
    const Tensor x = noise_embed(model.latent(in), store.get("vision.w_a"), flags, model.schedule().level(t), eps);
    return loss_diff(model.predict_noise(in, gex, x, t), gather_rows(eps, rows));
  };

  GradcheckReport report;
  for (TaskKind task : {TaskKind::understanding, TaskKind::generation}) {
    for (const auto& p : store.params()) Tensor(p.tensor).zero_grad();
    loss(task).backward();
    std::map<ParamGroup, GradcheckRow> by_group;
    for (const auto& p : store.params()) {
      Tensor w = p.tensor;
      std::vector<double> analytic(w.numel(), 0.0);
      if (w.has_grad()) std::copy(w.grad().begin(), w.grad().end(), analytic.begin());
      if (fault && *fault == p.group) {
        for (auto& a : analytic) a *= 1.01;
      }
      auto& row = by_group.try_emplace(p.group, GradcheckRow{task, p.group, 0.0, "", 0}).first->second;
      auto values = w.mutable_data();
      const double h = 1e-3;
      for (std::size_t k = 0; k < std::min(coords_per_param, values.size()); ++k) {
        const std::size_t i = rng.below(values.size());
        const double orig = values[i];
        auto at = [&](double off) {
          values[i] = orig + off;
          const double v = loss(task).item();
          values[i] = orig;
          return v;
        };
        const double numeric = (-at(2 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2 * h)) / (12.0 * h);
        const double err = relative_error(analytic[i], numeric, kGradFloor);
        if (err > row.max_rel_err || row.worst_param.empty()) {
          row.max_rel_err = std::max(row.max_rel_err, err);
          row.worst_param = p.name + "[" + std::to_string(i) + "]";
        }
        ++row.checked;
      }
    }
    for (auto& [g, row] : by_group) report.rows.push_back(row);
  }
  return report;
}

}  // namespace u4d
