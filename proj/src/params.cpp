#include "u4d/params.hpp"

#include <algorithm>
#include <cmath>

#include "u4d/errors.hpp"
#include "u4d/ops.hpp"

namespace u4d {

std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::embeddings: return "embeddings";
    case ParamGroup::projector: return "projector";
    case ParamGroup::llm_lower: return "llm_lower";
    case ParamGroup::llm_higher: return "llm_higher";
    case ParamGroup::heads: return "heads";
    case ParamGroup::fusion: return "fusion";
    case ParamGroup::ste: return "ste";
    case ParamGroup::lora: return "lora";
    case ParamGroup::vision: return "vision";
  }
  return "?";
}

const std::vector<ParamGroup>& all_groups() {
  static const std::vector<ParamGroup> g{ParamGroup::embeddings, ParamGroup::projector, ParamGroup::llm_lower,
                                         ParamGroup::llm_higher, ParamGroup::heads,     ParamGroup::fusion,
                                         ParamGroup::ste,        ParamGroup::lora,      ParamGroup::vision};
  return g;
}

ParamGroup parse_group(std::string_view s) {
  for (auto g : all_groups()) {
    if (to_string(g) == s) return g;
  }
  throw ConfigError("unknown parameter group '" + std::string(s) + "'");
}

bool glob_match(std::string_view pattern, std::string_view name) {
  // iterative wildcard match with single backtrack point
  std::size_t p = 0, n = 0, star = std::string_view::npos, mark = 0;
  while (n < name.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (p < pattern.size() && pattern[p] == name[n]) {
      ++p;
      ++n;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

Tensor ParamStore::add(const std::string& name, Tensor init, ParamGroup group) {
  if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  init.set_requires_grad(true);
  index_.emplace(name, params_.size());
  params_.push_back({name, init, group});
  return init;
}

Tensor ParamStore::add_xavier(const std::string& name, std::size_t fan_in, std::size_t fan_out, ParamGroup group,
                              Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = rng.uniform(-a, a);
  return add(name, Tensor({fan_in, fan_out}, std::move(v)), group);
}

Tensor ParamStore::add_zeros(const std::string& name, Shape shape, ParamGroup group) {
  return add(name, Tensor::zeros(std::move(shape)), group);
}

Tensor ParamStore::add_ones(const std::string& name, Shape shape, ParamGroup group) {
  return add(name, Tensor::ones(std::move(shape)), group);
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

Tensor ParamStore::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw NameError("no parameter named '" + std::string(name) + "'");
  return params_[it->second].tensor;
}

ParamGroup ParamStore::group_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw NameError("no parameter named '" + std::string(name) + "'");
  return params_[it->second].group;
}

Tensor ParamStore::weight(std::string_view name) const {
  Tensor w = get(name);
  auto it = adapters_.find(name);
  if (it == adapters_.end()) return w;
  const LoraAdapter& ad = it->second;
  return u4d::add(w, scale(matmul(ad.a, ad.b), ad.scale));
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

std::vector<std::string> ParamStore::apply_lora(const std::vector<std::string>& patterns, std::size_t rank,
                                                double scale, Rng& rng) {
  if (rank == 0) throw ConfigError("lora rank must be >= 1");
  std::vector<std::string> targets;
  for (const auto& pat : patterns) {
    bool hit = false;
    for (const auto& p : params_) {
      if (p.group == ParamGroup::lora || p.group == ParamGroup::vision || p.tensor.rank() != 2) continue;
      if (!glob_match(pat, p.name)) continue;
      hit = true;
      if (std::find(targets.begin(), targets.end(), p.name) == targets.end() && !has_adapter(p.name)) {
        targets.push_back(p.name);
      }
    }
    if (!hit) throw NameError("lora target '" + pat + "' matches no adaptable parameter");
  }
  for (const auto& t : targets) {
    const Tensor w = get(t);
    const std::size_t din = w.dim(0), dout = w.dim(1);
    if (rank >= std::min(din, dout)) {
      throw ConfigError("lora rank " + std::to_string(rank) + " is not below the size of '" + t + "'");
    }
    Tensor a = add_xavier(t + ".lora_a", din, rank, ParamGroup::lora, rng);
    Tensor b = add_zeros(t + ".lora_b", {rank, dout}, ParamGroup::lora);
    adapters_.emplace(t, LoraAdapter{t, a, b, scale});
  }
  return targets;
}

void ParamStore::attach_adapter(const std::string& target, Tensor a, Tensor b, double scale) {
  get(target);
  adapters_[target] = LoraAdapter{target, std::move(a), std::move(b), scale};
}

void ParamStore::merge_lora() {
  for (auto& [name, ad] : adapters_) {
    Tensor w = get(name);
    const Tensor delta = scale(matmul(ad.a.detach(), ad.b.detach()), ad.scale);
    auto wv = w.mutable_data();
    const auto dv = delta.data();
    for (std::size_t i = 0; i < wv.size(); ++i) wv[i] += dv[i];
  }
  adapters_.clear();
  std::erase_if(params_, [](const Parameter& p) { return p.group == ParamGroup::lora; });
  reindex();
}

void ParamStore::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < params_.size(); ++i) index_.emplace(params_[i].name, i);
}

std::vector<ParamGroup> ParamStore::trainable_groups(int stage) const {
  using G = ParamGroup;
  switch (stage) {
    case kJointStage: return {G::embeddings, G::projector, G::llm_lower, G::llm_higher, G::heads, G::fusion, G::ste, G::lora};
    case 1: return {G::embeddings, G::projector, G::llm_lower, G::heads};
    case 2: return {G::ste, G::fusion, G::llm_higher, G::heads};
    case 3: return {G::lora};
    default: throw ConfigError("unknown training stage " + std::to_string(stage) + " (expected 0..3)");
  }
}

void ParamStore::set_trainable(int stage) {
  const auto groups = trainable_groups(stage);
  for (auto& p : params_) {
    const bool on = std::find(groups.begin(), groups.end(), p.group) != groups.end();
    p.tensor.set_requires_grad(on);
  }
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& p : params_) {
    Tensor t = p.tensor.detach();
    t.set_requires_grad(p.tensor.requires_grad());
    out.index_.emplace(p.name, out.params_.size());
    out.params_.push_back({p.name, t, p.group});
  }
  for (const auto& [name, ad] : adapters_) {
    out.adapters_.emplace(name, LoraAdapter{name, out.get(name + ".lora_a"), out.get(name + ".lora_b"), ad.scale});
  }
  return out;
}

}  // namespace u4d
