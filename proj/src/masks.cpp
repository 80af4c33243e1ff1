#include "u4d/masks.hpp"

#include <sstream>

#include "u4d/errors.hpp"

namespace u4d {

std::string_view to_string(TaskKind task) {
  return task == TaskKind::understanding ? "understanding" : "generation";
}

TaskKind parse_task(std::string_view s) {
  if (s == "understanding") return TaskKind::understanding;
  if (s == "generation") return TaskKind::generation;
  throw ConfigError("unknown task '" + std::string(s) + "' (expected understanding|generation)");
}

std::string_view to_string(TokenRole role) {
  switch (role) {
    case TokenRole::visual_clean: return "visual_clean";
    case TokenRole::visual_noisy: return "visual_noisy";
    case TokenRole::linguistic: return "linguistic";
  }
  return "?";
}

TokenRole parse_role(std::string_view s) {
  if (s == "visual_clean") return TokenRole::visual_clean;
  if (s == "visual_noisy") return TokenRole::visual_noisy;
  if (s == "linguistic") return TokenRole::linguistic;
  throw ConfigError("unknown token role '" + std::string(s) + "'");
}

std::string_view to_string(MaskLevel level) {
  switch (level) {
    case MaskLevel::view: return "view";
    case MaskLevel::time: return "time";
    case MaskLevel::full: return "full";
  }
  return "?";
}

MaskLevel parse_level(std::string_view s) {
  if (s == "view") return MaskLevel::view;
  if (s == "time") return MaskLevel::time;
  if (s == "full") return MaskLevel::full;
  throw ConfigError("unknown mask level '" + std::string(s) + "' (expected view|time|full)");
}

std::string_view to_string(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::none: return "none";
    case SamplingStrategy::view_only: return "view_only";
    case SamplingStrategy::time_only: return "time_only";
    case SamplingStrategy::alternating: return "alternating";
  }
  return "?";
}

SamplingStrategy parse_sampling(std::string_view s) {
  if (s == "none") return SamplingStrategy::none;
  if (s == "view_only") return SamplingStrategy::view_only;
  if (s == "time_only") return SamplingStrategy::time_only;
  if (s == "alternating") return SamplingStrategy::alternating;
  throw ConfigError("unknown sampling strategy '" + std::string(s) +
                    "' (expected none|view_only|time_only|alternating)");
}

TokenLayout::TokenLayout(std::vector<Span> spans) : spans_(std::move(spans)) {
  std::ostringstream key;
  for (std::size_t s = 0; s < spans_.size(); ++s) {
    const Span& sp = spans_[s];
    if (sp.length == 0) throw ContractError("span " + std::to_string(s) + " has zero length");
    const bool visual = sp.role != TokenRole::linguistic;
    if (visual && (!sp.view || !sp.time)) {
      throw ContractError("visual span " + std::to_string(s) + " needs both view and time");
    }
    if (!visual && (sp.view || sp.time)) {
      throw ContractError("linguistic span " + std::to_string(s) + " must not carry view/time");
    }
    if (visual && (*sp.view < 0 || *sp.time < 0)) {
      throw ContractError("span " + std::to_string(s) + " has a negative view/time index");
    }
    const int v = visual ? *sp.view : -1;
    const int t = visual ? *sp.time : -1;
    for (std::size_t k = 0; k < sp.length; ++k) tokens_.push_back({sp.role, v, t});
    key << static_cast<int>(sp.role) << ':' << v << ':' << t << ':' << sp.length << ';';
  }
  key_ = key.str();
}

bool TokenLayout::has_role(TokenRole role) const {
  for (const auto& sp : spans_) {
    if (sp.role == role) return true;
  }
  return false;
}

std::vector<std::size_t> TokenLayout::positions(TokenRole role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].role == role) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> TokenLayout::visual_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].role != TokenRole::linguistic) out.push_back(i);
  }
  return out;
}

std::size_t AttentionMask::count_allowed() const {
  std::size_t c = 0;
  for (auto a : allow_) c += a;
  return c;
}

bool AttentionMask::every_row_has_key() const {
  for (std::size_t i = 0; i < n_; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n_ && !any; ++j) any = allowed(i, j);
    if (!any) return false;
  }
  return true;
}

namespace {

// Span-level fill. Blocks are decided once per (query span, key span) pair;
// only linguistic blocks need per-token causal treatment.
struct SpanRange {
  std::size_t begin;
  std::size_t end;
  const Span* span;
};

std::vector<SpanRange> ranges(const TokenLayout& layout) {
  std::vector<SpanRange> out;
  std::size_t at = 0;
  for (const auto& sp : layout.spans()) {
    out.push_back({at, at + sp.length, &sp});
    at += sp.length;
  }
  return out;
}

void fill_block(AttentionMask& m, const SpanRange& q, const SpanRange& k, bool v) {
  if (!v) return;
  for (std::size_t i = q.begin; i < q.end; ++i) {
    for (std::size_t j = k.begin; j < k.end; ++j) m.set(i, j, true);
  }
}

void fill_causal(AttentionMask& m, const SpanRange& q, const SpanRange& k) {
  for (std::size_t i = q.begin; i < q.end; ++i) {
    for (std::size_t j = k.begin; j < k.end && j <= i; ++j) m.set(i, j, true);
  }
}

void fill_diagonal(AttentionMask& m) {
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, i, true);
}

bool noisy_pair_allowed(const Span& q, const Span& k, MaskLevel level) {
  switch (level) {
    case MaskLevel::view: return *q.time == *k.time;
    case MaskLevel::time: return *q.view == *k.view;
    case MaskLevel::full: return true;
  }
  return false;
}

}  // namespace

AttentionMask build_understanding_mask(const TokenLayout& layout) {
  if (layout.has_role(TokenRole::visual_noisy)) {
    throw ContractError("understanding mask requested for a layout with noisy visual spans");
  }
  AttentionMask m(layout.size());
  const auto rs = ranges(layout);
  for (const auto& q : rs) {
    const bool q_ling = q.span->role == TokenRole::linguistic;
    for (const auto& k : rs) {
      const bool k_ling = k.span->role == TokenRole::linguistic;
      if (q_ling && k_ling) {
        fill_causal(m, q, k);
      } else {
        // visual keys are readable by everyone; linguistic keys only by text
        fill_block(m, q, k, !k_ling);
      }
    }
  }
  fill_diagonal(m);
  return m;
}

AttentionMask build_generation_mask(const TokenLayout& layout, MaskLevel level) {
  AttentionMask m(layout.size());
  const auto rs = ranges(layout);
  for (const auto& q : rs) {
    const TokenRole qr = q.span->role;
    for (const auto& k : rs) {
      const TokenRole kr = k.span->role;
      if (qr == TokenRole::linguistic && kr == TokenRole::linguistic) {
        fill_causal(m, q, k);
      } else if (qr == TokenRole::visual_noisy && kr == TokenRole::visual_noisy) {
        fill_block(m, q, k, noisy_pair_allowed(*q.span, *k.span, level));
      } else {
        fill_block(m, q, k, kr != TokenRole::visual_noisy);
      }
    }
  }
  fill_diagonal(m);
  return m;
}

std::vector<MaskLevel> alternating_schedule(std::size_t num_layers, SamplingStrategy strategy) {
  if (num_layers == 0) throw ConfigError("schedule needs at least one layer");
  std::vector<MaskLevel> out(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    switch (strategy) {
      case SamplingStrategy::none: out[l] = MaskLevel::full; break;
      case SamplingStrategy::view_only: out[l] = MaskLevel::view; break;
      case SamplingStrategy::time_only: out[l] = MaskLevel::time; break;
      case SamplingStrategy::alternating: out[l] = l % 2 == 0 ? MaskLevel::view : MaskLevel::time; break;
    }
  }
  return out;
}

AttentionMask oracle_mask(const TokenLayout& layout, TaskKind task, MaskLevel level) {
  const std::size_t n = layout.size();
  AttentionMask m(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TokenInfo& q = layout.token(i);
    for (std::size_t j = 0; j < n; ++j) {
      const TokenInfo& k = layout.token(j);
      const bool q_ling = q.role == TokenRole::linguistic;
      const bool k_ling = k.role == TokenRole::linguistic;
      const bool q_noisy = q.role == TokenRole::visual_noisy;
      const bool k_noisy = k.role == TokenRole::visual_noisy;
      bool ok;
      if (i == j) {
        ok = true;
      } else if (q_ling && k_ling) {
        ok = j < i;
      } else if (task == TaskKind::understanding) {
        // visual<->visual, text->visual; never visual->text
        ok = !k_ling;
      } else if (q_noisy && k_noisy) {
        ok = level == MaskLevel::full || (level == MaskLevel::view && q.time == k.time) ||
             (level == MaskLevel::time && q.view == k.view);
      } else if (k_noisy) {
        ok = false;
      } else {
        ok = true;
      }
      m.set(i, j, ok);
    }
  }
  return m;
}

const AttentionMask& MaskCache::understanding(const TokenLayout& layout) {
  auto key = std::make_tuple(layout.key(), 0, 0);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    it = cache_.emplace(key, enabled_ ? build_understanding_mask(layout) : AttentionMask::full(layout.size()))
             .first;
  }
  return it->second;
}

const AttentionMask& MaskCache::generation(const TokenLayout& layout, MaskLevel level) {
  auto key = std::make_tuple(layout.key(), 1, static_cast<int>(level));
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    it = cache_
             .emplace(key, enabled_ ? build_generation_mask(layout, level)
                                    : AttentionMask::full(layout.size()))
             .first;
  }
  return it->second;
}

std::string render_ascii(const AttentionMask& mask) {
  std::string out;
  out.reserve(mask.size() * (mask.size() + 1));
  for (std::size_t i = 0; i < mask.size(); ++i) {
    for (std::size_t j = 0; j < mask.size(); ++j) out.push_back(mask.allowed(i, j) ? '#' : '.');
    out.push_back('\n');
  }
  return out;
}

}  // namespace u4d
