#include "u4d/vocab.hpp"

#include <sstream>

#include "u4d/errors.hpp"

namespace u4d {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() > kMaxSize) throw ContractError("vocabulary exceeds 256 entries");
  static const char* reserved[] = {"<pad>", "<bos>", "<eos>", "<sep>"};
  for (std::size_t i = 0; i < 4; ++i) {
    if (tokens_.size() <= i || tokens_[i] != reserved[i]) {
      throw ContractError("vocabulary must start with <pad> <bos> <eos> <sep>");
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || tokens_[i].find(' ') != std::string::npos) {
      throw ContractError("vocabulary entry " + std::to_string(i) + " is empty or contains a space");
    }
    if (!index_.emplace(tokens_[i], static_cast<std::int64_t>(i)).second) {
      throw ContractError("duplicate vocabulary entry '" + tokens_[i] + "'");
    }
  }
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary v({
      "<pad>", "<bos>", "<eos>", "<sep>",
      // task prompts
      "describe", "question", "generate",
      // colors
      "red", "green", "blue", "yellow", "cyan", "magenta", "orange", "white",
      // objects and motion
      "ball", "moves", "is", "static", "left", "right", "up", "down", "and",
      // question words and regions
      "what", "color", "where", "how", "does", "move", "the", "at", "start", "end", "that",
      "top", "bottom", "center",
  });
  return v;
}

bool Vocabulary::contains(std::string_view word) const { return index_.find(word) != index_.end(); }

std::int64_t Vocabulary::id(std::string_view word) const {
  auto it = index_.find(word);
  if (it == index_.end()) throw ContractError("word '" + std::string(word) + "' is not in the vocabulary");
  return it->second;
}

const std::string& Vocabulary::token(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int64_t> Vocabulary::tokenize(std::string_view text) const {
  std::vector<std::int64_t> out;
  std::istringstream is{std::string(text)};
  std::string w;
  while (is >> w) out.push_back(id(w));
  return out;
}

std::string Vocabulary::detokenize(std::span<const std::int64_t> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

}  // namespace u4d
