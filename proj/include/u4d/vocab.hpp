#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace u4d {

/// Closed word-level vocabulary. Ids 0..3 are PAD, BOS, EOS, SEP.
class Vocabulary {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kBos = 1;
  static constexpr std::int64_t kEos = 2;
  static constexpr std::int64_t kSep = 3;
  static constexpr std::size_t kMaxSize = 256;

  explicit Vocabulary(std::vector<std::string> tokens);
  // The scene-description vocabulary used by the generator.
  static const Vocabulary& standard();

  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view word) const;
  std::int64_t id(std::string_view word) const;
  const std::string& token(std::int64_t id) const;

  // Whitespace-separated words to ids; unknown words throw ContractError.
  std::vector<std::int64_t> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const std::int64_t> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::int64_t, std::less<>> index_;
};

}  // namespace u4d
