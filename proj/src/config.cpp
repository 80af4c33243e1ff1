#include "u4d/config.hpp"

#include <cstdlib>
#include <fstream>

#include "u4d/errors.hpp"
#include "u4d/vocab.hpp"

namespace u4d {

using nlohmann::json;

json default_config_json() {
  return json::parse(R"({
    "model": {"num_layers": 4, "d_model": 64, "num_heads": 4, "d_ff": 256, "layer_split": 2, "T": 8,
              "schedule": "linear", "sigma_total": 1.0, "prediction": "preconditioned", "sigma_data": 0.3,
              "d_v": 48, "d_g": 32, "patch": 4, "n_freq": 4, "d_task": 16, "text_len": 24},
    "data": {"num_scenes": 16, "views": 2, "times": 2, "height": 16, "width": 16, "channels": 3,
             "min_objects": 1, "max_objects": 3, "speed": 0.6, "seed": 0, "items_per_scene": 0,
             "time_reversal_pairs": false, "num_condition": 1, "p_noise": 1.0},
    "fusion": {"strategy": "attention", "residual": true},
    "embedding": {"mode": "spatiotemporal"},
    "mask": {"enabled": true, "sampling": "alternating"},
    "training": {"lr": 0.001, "beta1": 0.9, "beta2": 0.999, "weight_decay": 0.0, "steps": 200, "seed": 0,
                 "lambda_ar": 1.0, "lambda_diff": 1.0, "stages": [0], "batch_size": 1,
                 "tasks": ["understanding", "generation"], "eval_every": 0, "report_wall_clock": false,
                 "t_sampling": "uniform"},
    "lora": {"rank": 4, "alpha": 8.0, "targets": ["blocks.*.attn.wq", "blocks.*.attn.wv"]},
    "paths": {"out_dir": "runs/default"}
  })");
}

namespace {

void merge_checked(json& base, const json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& [section, body] : doc.items()) {
    if (!base.contains(section)) throw ConfigError("unknown config section '" + section + "'");
    if (!body.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      if (!base[section].contains(key)) throw ConfigError("unknown config key '" + section + "." + key + "'");
      base[section][key] = value;
    }
  }
}

// Typed field access with the dotted path in every error.
class Reader {
 public:
  explicit Reader(const json& doc) : doc_(doc) {}

  template <typename T>
  T get(const std::string& section, const std::string& key) const {
    const json& v = doc_.at(section).at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("expected true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("expected an integer");
        if (std::is_unsigned_v<T> && v.get<long long>() < 0) throw ConfigError("must not be negative");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("expected a string");
      }
      return v.get<T>();
    } catch (const ConfigError& e) {
      throw ConfigError(section + "." + key + ": " + e.what() + " (got " + v.dump() + ")");
    } catch (const json::exception& e) {
      throw ConfigError(section + "." + key + ": " + e.what());
    }
  }

  // Runs a parser (e.g. an enum parse) and prefixes failures with the field.
  template <typename F>
  auto parsed(const std::string& section, const std::string& key, F&& parse) const {
    const auto s = get<std::string>(section, key);
    try {
      return parse(s);
    } catch (const ConfigError& e) {
      throw ConfigError(section + "." + key + ": " + e.what());
    }
  }

  const json& raw(const std::string& section, const std::string& key) const { return doc_.at(section).at(key); }

 private:
  const json& doc_;
};

std::vector<std::string> string_list(const Reader& r, const std::string& section, const std::string& key) {
  const json& v = r.raw(section, key);
  if (!v.is_array()) throw ConfigError(section + "." + key + ": expected a list");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ConfigError(section + "." + key + ": expected a list of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  json merged = default_config_json();
  merge_checked(merged, doc);
  const Reader r(merged);
  ExperimentConfig c;

  auto& m = c.model;
  m.backbone.num_layers = r.get<std::size_t>("model", "num_layers");
  m.backbone.d_model = r.get<std::size_t>("model", "d_model");
  m.backbone.num_heads = r.get<std::size_t>("model", "num_heads");
  m.backbone.d_ff = r.get<std::size_t>("model", "d_ff");
  m.backbone.layer_split = r.get<std::size_t>("model", "layer_split");
  m.backbone.T = r.get<std::size_t>("model", "T");
  m.backbone.vocab_size = Vocabulary::standard().size();
  m.schedule = r.parsed("model", "schedule", parse_schedule);
  m.sigma_total = r.get<double>("model", "sigma_total");
  require(m.sigma_total > 0.0, "model.sigma_total", "must be positive");
  m.prediction = r.parsed("model", "prediction", parse_prediction);
  m.sigma_data = r.get<double>("model", "sigma_data");
  m.d_v = r.get<std::size_t>("model", "d_v");
  m.d_g = r.get<std::size_t>("model", "d_g");
  m.patch = r.get<std::size_t>("model", "patch");
  m.n_freq = r.get<std::size_t>("model", "n_freq");
  m.d_task = r.get<std::size_t>("model", "d_task");
  m.text_len = r.get<std::size_t>("model", "text_len");
  m.fusion = r.parsed("fusion", "strategy", parse_fusion);
  m.fusion_residual = r.get<bool>("fusion", "residual");
  m.embedding = r.parsed("embedding", "mode", parse_embedding_mode);
  m.mask_enabled = r.get<bool>("mask", "enabled");
  m.sampling = r.parsed("mask", "sampling", parse_sampling);

  auto& d = c.data;
  d.num_scenes = r.get<std::size_t>("data", "num_scenes");
  d.scene.views = r.get<int>("data", "views");
  d.scene.times = r.get<int>("data", "times");
  d.scene.height = r.get<int>("data", "height");
  d.scene.width = r.get<int>("data", "width");
  d.scene.channels = r.get<int>("data", "channels");
  d.scene.min_objects = r.get<int>("data", "min_objects");
  d.scene.max_objects = r.get<int>("data", "max_objects");
  d.scene.speed = r.get<double>("data", "speed");
  d.seed = r.get<std::uint64_t>("data", "seed");
  d.items_per_scene = r.get<std::size_t>("data", "items_per_scene");
  d.time_reversal_pairs = r.get<bool>("data", "time_reversal_pairs");
  d.num_condition = r.get<int>("data", "num_condition");
  d.p_noise = r.get<double>("data", "p_noise");
  require(d.p_noise >= 0.0 && d.p_noise <= 1.0, "data.p_noise", "must lie in [0, 1]");
  try {
    d.scene.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  m.height = static_cast<std::size_t>(d.scene.height);
  m.width = static_cast<std::size_t>(d.scene.width);
  m.channels = static_cast<std::size_t>(d.scene.channels);

  auto& t = c.training;
  t.lr = r.get<double>("training", "lr");
  require(t.lr >= 0.0, "training.lr", "must not be negative");
  t.beta1 = r.get<double>("training", "beta1");
  t.beta2 = r.get<double>("training", "beta2");
  require(t.beta1 >= 0.0 && t.beta1 < 1.0, "training.beta1", "must lie in [0, 1)");
  require(t.beta2 >= 0.0 && t.beta2 < 1.0, "training.beta2", "must lie in [0, 1)");
  t.weight_decay = r.get<double>("training", "weight_decay");
  t.steps = r.get<std::size_t>("training", "steps");
  t.seed = r.get<std::uint64_t>("training", "seed");
  t.lambda_ar = r.get<double>("training", "lambda_ar");
  t.lambda_diff = r.get<double>("training", "lambda_diff");
  require(t.lambda_ar >= 0.0, "training.lambda_ar", "must not be negative");
  require(t.lambda_diff >= 0.0, "training.lambda_diff", "must not be negative");
  const json& stages = r.raw("training", "stages");
  require(stages.is_array() && !stages.empty(), "training.stages", "expected a non-empty list of stages 0..3");
  t.stages.clear();
  for (const auto& s : stages) {
    require(s.is_number_integer() && s.get<int>() >= 0 && s.get<int>() <= 3, "training.stages",
            "unknown stage " + s.dump() + " (expected 0..3)");
    t.stages.push_back(s.get<int>());
  }
  t.batch_size = r.get<std::size_t>("training", "batch_size");
  require(t.batch_size > 0, "training.batch_size", "must be positive");
  t.tasks.clear();
  for (const auto& s : string_list(r, "training", "tasks")) {
    try {
      t.tasks.push_back(parse_task(s));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("training.tasks: ") + e.what());
    }
  }
  require(!t.tasks.empty(), "training.tasks", "must name at least one task");
  t.eval_every = r.get<std::size_t>("training", "eval_every");
  t.report_wall_clock = r.get<bool>("training", "report_wall_clock");
  t.t_sampling = r.parsed("training", "t_sampling", parse_t_sampling);

  c.lora.rank = r.get<std::size_t>("lora", "rank");
  require(c.lora.rank >= 1, "lora.rank", "must be >= 1");
  c.lora.alpha = r.get<double>("lora", "alpha");
  c.lora.targets = string_list(r, "lora", "targets");
  c.out_dir = r.get<std::string>("paths", "out_dir");

  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return c;
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form section.key=value");
  }
  const std::string section(assignment.substr(0, dot));
  const std::string key(assignment.substr(dot + 1, eq - dot - 1));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  if (!doc.is_object()) doc = json::object();
  doc[section][key] = value;
}

ExperimentConfig load_config_json(json doc, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) apply_override(doc, o);
  if (const char* env = std::getenv("U4D_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const unsigned long long seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      doc["training"]["seed"] = seed;
    } catch (const std::exception&) {
      throw ConfigError("U4D_SEED='" + std::string(env) + "' is not an unsigned integer");
    }
  }
  return parse_config(doc);
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  return load_config_json(read_config_file(path), overrides);
}

json to_json(const ExperimentConfig& c) {
  json j = default_config_json();
  const auto& m = c.model;
  j["model"] = {{"num_layers", m.backbone.num_layers}, {"d_model", m.backbone.d_model},
                {"num_heads", m.backbone.num_heads},   {"d_ff", m.backbone.d_ff},
                {"layer_split", m.backbone.layer_split}, {"T", m.backbone.T},
                {"schedule", to_string(m.schedule)},   {"sigma_total", m.sigma_total},
                {"prediction", to_string(m.prediction)}, {"sigma_data", m.sigma_data},
                {"d_v", m.d_v}, {"d_g", m.d_g}, {"patch", m.patch}, {"n_freq", m.n_freq},
                {"d_task", m.d_task}, {"text_len", m.text_len}};
  const auto& d = c.data;
  j["data"] = {{"num_scenes", d.num_scenes}, {"views", d.scene.views}, {"times", d.scene.times},
               {"height", d.scene.height}, {"width", d.scene.width}, {"channels", d.scene.channels},
               {"min_objects", d.scene.min_objects}, {"max_objects", d.scene.max_objects},
               {"speed", d.scene.speed}, {"seed", d.seed}, {"items_per_scene", d.items_per_scene},
               {"time_reversal_pairs", d.time_reversal_pairs}, {"num_condition", d.num_condition},
               {"p_noise", d.p_noise}};
  j["fusion"] = {{"strategy", to_string(m.fusion)}, {"residual", m.fusion_residual}};
  j["embedding"] = {{"mode", to_string(m.embedding)}};
  j["mask"] = {{"enabled", m.mask_enabled}, {"sampling", to_string(m.sampling)}};
  const auto& t = c.training;
  std::vector<std::string> tasks;
  for (auto k : t.tasks) tasks.emplace_back(to_string(k));
  j["training"] = {{"lr", t.lr}, {"beta1", t.beta1}, {"beta2", t.beta2}, {"weight_decay", t.weight_decay},
                   {"steps", t.steps}, {"seed", t.seed}, {"lambda_ar", t.lambda_ar},
                   {"lambda_diff", t.lambda_diff}, {"stages", t.stages}, {"batch_size", t.batch_size},
                   {"tasks", tasks}, {"eval_every", t.eval_every}, {"report_wall_clock", t.report_wall_clock},
                   {"t_sampling", std::string(to_string(t.t_sampling))}};
  j["lora"] = {{"rank", c.lora.rank}, {"alpha", c.lora.alpha}, {"targets", c.lora.targets}};
  j["paths"] = {{"out_dir", c.out_dir}};
  return j;
}

}  // namespace u4d
