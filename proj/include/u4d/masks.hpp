#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "u4d/common.hpp"

namespace u4d {

enum class TokenRole { visual_clean, visual_noisy, linguistic };

std::string_view to_string(TokenRole role);
TokenRole parse_role(std::string_view s);

struct Span {
  TokenRole role = TokenRole::linguistic;
  std::optional<int> view;
  std::optional<int> time;
  std::size_t length = 1;
};

// Per-token view of a layout, expanded once.
struct TokenInfo {
  TokenRole role;
  int view;  // -1 for linguistic tokens
  int time;  // -1 for linguistic tokens
};

/// Ordered spans of a mixed token sequence. Visual spans carry (view, time);
/// linguistic spans carry neither.
class TokenLayout {
 public:
  TokenLayout() = default;
  explicit TokenLayout(std::vector<Span> spans);

  const std::vector<Span>& spans() const { return spans_; }
  std::size_t size() const { return tokens_.size(); }
  const TokenInfo& token(std::size_t i) const { return tokens_[i]; }
  bool has_role(TokenRole role) const;
  std::vector<std::size_t> positions(TokenRole role) const;
  std::vector<std::size_t> visual_positions() const;

  bool operator==(const TokenLayout& other) const { return key_ == other.key_; }
  const std::string& key() const { return key_; }

 private:
  std::vector<Span> spans_;
  std::vector<TokenInfo> tokens_;
  std::string key_;
};

/// Boolean allow-matrix: allowed(i, j) means query i may attend key j.
class AttentionMask {
 public:
  AttentionMask() = default;
  explicit AttentionMask(std::size_t n, bool fill = false) : n_(n), allow_(n * n, fill ? 1 : 0) {}

  static AttentionMask full(std::size_t n) { return AttentionMask(n, true); }

  std::size_t size() const { return n_; }
  bool allowed(std::size_t i, std::size_t j) const { return allow_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { allow_[i * n_ + j] = v ? 1 : 0; }
  std::size_t count_allowed() const;
  bool every_row_has_key() const;
  bool operator==(const AttentionMask& other) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> allow_;
};

// Level of the generation mask. `full` leaves noisy<->noisy attention
// unrestricted (the "no sampling" variant).
enum class MaskLevel { view, time, full };

std::string_view to_string(MaskLevel level);
MaskLevel parse_level(std::string_view s);

enum class SamplingStrategy { none, view_only, time_only, alternating };

std::string_view to_string(SamplingStrategy s);
SamplingStrategy parse_sampling(std::string_view s);

AttentionMask build_understanding_mask(const TokenLayout& layout);
AttentionMask build_generation_mask(const TokenLayout& layout, MaskLevel level);

// Per-layer generation mask levels; alternating starts at view.
std::vector<MaskLevel> alternating_schedule(std::size_t num_layers, SamplingStrategy strategy);

/// Direct per-pair evaluation of the attention rules, kept independent of the
/// span-based builders so the two can be compared.
AttentionMask oracle_mask(const TokenLayout& layout, TaskKind task, MaskLevel level = MaskLevel::view);

/// Memoizes masks per (layout, task, level). When `enabled` is false every
/// request yields a fully-allowed mask (the unmasked ablation).
class MaskCache {
 public:
  explicit MaskCache(bool enabled = true) : enabled_(enabled) {}

  const AttentionMask& understanding(const TokenLayout& layout);
  const AttentionMask& generation(const TokenLayout& layout, MaskLevel level);
  bool enabled() const { return enabled_; }

 private:
  bool enabled_;
  std::map<std::tuple<std::string, int, int>, AttentionMask> cache_;
};

// ASCII rendering, one row per query: '#' allowed, '.' blocked.
std::string render_ascii(const AttentionMask& mask);

}  // namespace u4d
