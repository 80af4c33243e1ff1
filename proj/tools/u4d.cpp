// u4d: show config, train, evaluate, sample, ablate, inspect masks and check gradients.
//
// Exit codes: 0 ok, 1 gradcheck failure or internal error, 2 bad config or
// input, 3 divergence, 4 corrupt checkpoint.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "u4d/checkpoint.hpp"
#include "u4d/config.hpp"
#include "u4d/errors.hpp"
#include "u4d/experiment.hpp"
#include "u4d/image.hpp"
#include "u4d/masks.hpp"
#include "u4d/ops.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace u4d;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitCorrupt = 4;

// Leftover `--section.key=value` arguments become config overrides.
std::vector<std::string> collect_overrides(const CLI::App& sub) {
  std::vector<std::string> out;
  for (const auto& arg : sub.remaining()) {
    if (!arg.starts_with("--") || arg.find('=') == std::string::npos || arg.find('.') > arg.find('=')) {
      throw ConfigError("unrecognised argument '" + arg + "' (overrides look like --section.key=value)");
    }
    out.push_back(arg.substr(2));
  }
  return out;
}

json base_doc(const std::string& path) { return path.empty() ? json::object() : read_config_file(path); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << text;
}

Model load_model(const ExperimentConfig& cfg, const std::string& ckpt) {
  Model model = build_model(cfg);
  apply_checkpoint(model.params(), load_checkpoint(ckpt));
  return model;
}

json metrics_json(const RunMetrics& m) {
  json g = {{"psnr", m.generation.psnr},
            {"psnr_no_denoise", m.generation.psnr_no_denoise},
            {"psnr_ceiling", m.generation.psnr_ceiling},
            {"residual_norms", m.generation.residual_norms},
            {"examples", m.generation.examples}};
  json u = {{"token_accuracy", m.understanding.token_accuracy},
            {"exact_match", m.understanding.exact_match},
            {"ts_token_accuracy", m.understanding.ts_token_accuracy},
            {"ts_exact_match", m.understanding.ts_exact_match},
            {"tokens", m.understanding.tokens},
            {"sequences", m.understanding.sequences},
            {"ts_sequences", m.understanding.ts_sequences}};
  return {{"understanding", u},
          {"generation", g},
          {"loss_ar", m.losses.ar},
          {"loss_diff", m.losses.diff},
          {"joint_loss", m.joint_loss},
          {"seed", m.seed}};
}

int cmd_train(const std::string& config, const std::vector<std::string>& ov) {
  const ExperimentConfig cfg = load_config_json(base_doc(config), ov);
  const Dataset data = build_dataset(cfg);
  Model model = prepare_model(cfg, data);
  const TrainReport report = run_training(model, data, cfg);

  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  save_checkpoint((out / "checkpoint.u4dc").string(), checkpoint_entries(model.params()));
  write_text(out / "report.ndjson", report.to_ndjson());
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");

  std::cout << std::left << std::setw(8) << "stage" << std::setw(16) << "task" << std::right << std::setw(8)
            << "steps" << std::setw(14) << "final_loss" << "\n";
  for (int stage : cfg.training.stages) {
    TrainReport part;
    for (const auto& r : report.records) {
      if (r.stage == stage) part.records.push_back(r);
    }
    for (TaskKind task : cfg.training.tasks) {
      std::size_t n = 0;
      for (const auto& r : part.records) n += r.task == task;
      std::cout << std::left << std::setw(8) << stage << std::setw(16) << to_string(task) << std::right
                << std::setw(8) << n << std::setw(14) << std::fixed << std::setprecision(5)
                << part.final_loss(task) << "\n";
    }
  }
  std::cout << "wrote " << (out / "checkpoint.u4dc").string() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& config, const std::string& ckpt, bool greedy, const std::string& out_path,
             const std::vector<std::string>& ov) {
  const ExperimentConfig cfg = load_config_json(base_doc(config), ov);
  const Dataset data = build_dataset(cfg);
  Model model = load_model(cfg, ckpt);
  const std::string text = metrics_json(evaluate_run(model, data, cfg, greedy)).dump(2) + "\n";
  if (!out_path.empty()) write_text(out_path, text);
  std::cout << text;
  return kExitOk;
}

int cmd_sample(const std::string& config, const std::string& ckpt, bool oracle, std::size_t index,
               const std::string& out_dir, const std::vector<std::string>& ov) {
  const ExperimentConfig cfg = load_config_json(base_doc(config), ov);
  const Dataset data = build_dataset(cfg);
  Model model = ckpt.empty() ? prepare_model(cfg, data) : load_model(cfg, ckpt);
  if (!oracle && ckpt.empty()) throw ConfigError("sample needs --checkpoint unless --oracle is given");
  if (index >= data.generation.size()) {
    throw ConfigError("--example " + std::to_string(index) + " out of range (" +
                      std::to_string(data.generation.size()) + " generation examples)");
  }
  const TrainingExample& ex = data.generation[index];
  const SceneInputs& in = data.inputs[ex.scene];

  DenoiseResult res;
  if (oracle) {
    // predicts the injected noise exactly, starting from x_0 + sigma_total * eps
    Rng rng = Rng::derive(cfg.training.seed, 0x73616d706c65ull + index);
    const Tensor x0 = model.appearance(in);
    const std::size_t d = x0.shape()[1];
    std::vector<double> ev(x0.numel());
    for (auto& v : ev) v = rng.normal();
    const Tensor eps(x0.shape(), ev);
    std::vector<double> xt(x0.data().begin(), x0.data().end());
    for (std::size_t i = 0; i < ex.noisy.size(); ++i) {
      if (!ex.noisy[i]) continue;
      for (std::size_t c = 0; c < d; ++c) xt[i * d + c] += model.schedule().sigma_total() * ev[i * d + c];
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ex.noisy.size(); ++i) {
      if (ex.noisy[i]) rows.push_back(i);
    }
    const Tensor eps_rows = gather_rows(eps, rows);
    res = denoise_loop(Tensor(x0.shape(), xt), ex.noisy, model.schedule(),
                       [&](const Tensor&, std::size_t) { return eps_rows; });
  } else {
    res = model.sample(in, ex, cfg.training.seed + index);
  }
  const Tensor frames = model.decode(res.x0, in.dims);

  const fs::path out = out_dir.empty() ? fs::path(cfg.out_dir) / "samples" : fs::path(out_dir);
  fs::create_directories(out);
  for (std::size_t v = 0; v < in.dims.views; ++v) {
    for (std::size_t f = 0; f < in.dims.times; ++f) {
      write_frame((out / ("frame_v" + std::to_string(v) + "_t" + std::to_string(f) + ".png")).string(), frames, v, f);
      write_frame((out / ("truth_v" + std::to_string(v) + "_t" + std::to_string(f) + ".png")).string(), in.frames, v,
                  f);
    }
  }
  write_frame_grid((out / "grid.png").string(), frames);
  std::ostringstream csv;
  csv << "step,residual_norm\n" << std::setprecision(17);
  const std::size_t T = res.residual_norms.size();
  for (std::size_t k = 0; k < T; ++k) csv << T - k << "," << res.residual_norms[k] << "\n";
  write_text(out / "residuals.csv", csv.str());

  const Tensor pred_t = target_frames(frames, ex, in.dims);
  const Tensor true_t = target_frames(in.frames, ex, in.dims);
  std::cout << json{{"example", index},
                    {"scene", ex.scene},
                    {"oracle", oracle},
                    {"psnr_targets", psnr(pred_t, true_t)},
                    {"out_dir", out.string()}}
                   .dump()
            << "\n";
  return kExitOk;
}

int cmd_ablate(const std::string& axis_name, const std::string& config, const std::string& out_path,
               const std::vector<std::string>& ov) {
  const AblationAxis axis = parse_axis(axis_name);
  const json doc = base_doc(config);
  (void)load_config_json(doc, ov);  // reject a bad base before training anything
  const AblationTable table = run_ablation(doc, axis, ov);
  std::cout << table.to_text();
  if (!out_path.empty()) write_text(out_path, table.to_json().dump(2) + "\n");
  return kExitOk;
}

TokenLayout layout_from_json(const json& doc) {
  const json& spans = doc.is_object() && doc.contains("spans") ? doc.at("spans") : doc;
  if (!spans.is_array()) throw ConfigError("layout: expected an array of spans or {\"spans\": [...]}");
  std::vector<Span> out;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const json& s = spans[i];
    const std::string where = "layout.spans[" + std::to_string(i) + "]";
    if (!s.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : s.items()) {
      if (k != "role" && k != "view" && k != "time" && k != "length") throw ConfigError(where + ": unknown key '" + k + "'");
    }
    if (!s.contains("role") || !s["role"].is_string()) throw ConfigError(where + ".role: missing or not a string");
    Span sp;
    sp.role = parse_role(s["role"].get<std::string>());
    if (s.contains("view")) {
      if (!s["view"].is_number_integer()) throw ConfigError(where + ".view: expected an integer");
      sp.view = s["view"].get<int>();
    }
    if (s.contains("time")) {
      if (!s["time"].is_number_integer()) throw ConfigError(where + ".time: expected an integer");
      sp.time = s["time"].get<int>();
    }
    if (s.contains("length")) {
      if (!s["length"].is_number_unsigned()) throw ConfigError(where + ".length: expected a positive integer");
      sp.length = s["length"].get<std::size_t>();
    }
    out.push_back(sp);
  }
  return TokenLayout(std::move(out));
}

int cmd_inspect_mask(const std::string& layout_path, const std::string& task_name, const std::string& level_name,
                     const std::string& png) {
  const json doc = read_config_file(layout_path);
  const TaskKind task = parse_task(task_name);
  const MaskLevel level = parse_level(level_name);
  const TokenLayout layout = layout_from_json(doc);
  if (layout.size() == 0) throw ConfigError("layout has no tokens");
  const AttentionMask built =
      task == TaskKind::understanding ? build_understanding_mask(layout) : build_generation_mask(layout, level);
  const AttentionMask oracle = oracle_mask(layout, task, level);
  const std::size_t n = layout.size();
  std::cout << "task " << to_string(task) << ", level " << to_string(level) << "\n";
  if (n == 1) {
    std::cout << "1×1 [" << (built.allowed(0, 0) ? "allow" : "block") << "]\n";
  } else {
    std::cout << "builder " << n << "×" << n << " (# allow, . block)\n" << render_ascii(built);
    std::cout << "oracle " << n << "×" << n << "\n" << render_ascii(oracle);
  }
  const bool match = built == oracle;
  std::cout << (match ? "MATCH" : "MISMATCH") << "\n";
  if (!png.empty()) write_mask_png(png, built);
  return match ? kExitOk : kExitFail;
}

int cmd_gradcheck(const std::string& config, const std::string& fault, std::size_t coords, const std::string& out_path,
                  const std::vector<std::string>& ov) {
  const ExperimentConfig cfg = load_config_json(base_doc(config), ov);
  std::optional<ParamGroup> g;
  if (!fault.empty()) g = parse_group(fault);
  const GradcheckReport report = model_gradcheck(cfg, coords, g);
  std::cout << report.to_text();
  if (!out_path.empty()) write_text(out_path, report.to_json().dump(2) + "\n");
  return report.passed() ? kExitOk : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"u4d: unified 4D understanding and generation at desk scale"};
  app.require_subcommand(1);

  std::string config, ckpt, out, axis, layout, task = "generation", level = "view", png, fault;
  bool oracle = false, no_greedy = false;
  std::size_t example = 0, coords = 3;

  auto* train = app.add_subcommand("train", "train and write checkpoint, NDJSON report and config");
  train->add_option("--config,-c", config, "config JSON (defaults if omitted)");
  train->allow_extras();

  auto* show = app.add_subcommand("config", "print the resolved config as JSON");
  show->add_option("--config,-c", config);
  show->allow_extras();

  auto* eval = app.add_subcommand("eval", "print metrics JSON for a checkpoint");
  eval->add_option("--config,-c", config);
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--out,-o", out, "also write the JSON here");
  eval->add_flag("--no-greedy", no_greedy, "skip greedy decoding");
  eval->allow_extras();

  auto* sample = app.add_subcommand("sample", "denoise one generation example and write PNGs and residuals");
  sample->add_option("--config,-c", config);
  sample->add_option("--checkpoint", ckpt);
  sample->add_flag("--oracle", oracle, "use the exact noise predictor");
  sample->add_option("--example", example, "generation example index");
  sample->add_option("--out,-o", out, "output directory");
  sample->allow_extras();

  auto* ablate = app.add_subcommand("ablate", "train every variant of one axis and print the comparison");
  ablate->add_option("axis", axis, "fusion | embedding | mask | sampling")->required();
  ablate->add_option("--config,-c", config);
  ablate->add_option("--out,-o", out, "also write the table as JSON");
  ablate->allow_extras();

  auto* inspect = app.add_subcommand("inspect-mask", "render a mask and compare it with the rule oracle");
  inspect->add_option("layout", layout, "layout JSON")->required();
  inspect->add_option("--task", task, "understanding | generation");
  inspect->add_option("--level", level, "view | time | full");
  inspect->add_option("--png", png, "write the mask as PNG");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every parameter group");
  grad->add_option("--config,-c", config);
  grad->add_option("--inject-fault", fault, "scale one group's gradients by 1.01");
  grad->add_option("--coords", coords, "coordinates per parameter");
  grad->add_option("--out,-o", out, "also write the report as JSON");
  grad->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(config, collect_overrides(*train));
    if (*show) {
      std::cout << to_json(load_config_json(base_doc(config), collect_overrides(*show))).dump(2) << "\n";
      return kExitOk;
    }
    if (*eval) return cmd_eval(config, ckpt, !no_greedy, out, collect_overrides(*eval));
    if (*sample) return cmd_sample(config, ckpt, oracle, example, out, collect_overrides(*sample));
    if (*ablate) return cmd_ablate(axis, config, out, collect_overrides(*ablate));
    if (*inspect) return cmd_inspect_mask(layout, task, level, png);
    if (*grad) return cmd_gradcheck(config, fault, coords, out, collect_overrides(*grad));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NameError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const CorruptCheckpointError& e) {
    std::cerr << "corrupt checkpoint: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFail;
  }
  return kExitFail;
}
