#pragma once

#include <cstdint>
#include <vector>

#include "u4d/common.hpp"
#include "u4d/masks.hpp"
#include "u4d/scene.hpp"
#include "u4d/vocab.hpp"

namespace u4d {

struct ExampleSpec {
  std::size_t item = 0;        // understanding: 0 caption, k >= 1 the (k-1)-th QA pair
  int num_condition = 1;       // generation: clean frames, first in (view, time) order
  std::size_t patch = 4;
  double p_noise = 1.0;        // generation: Bernoulli rate on target-frame tokens
  std::uint64_t mask_seed = 0; // only consulted when p_noise < 1
  std::size_t text_len = 24;
};

/// One sequence for either pathway. Visual tokens come first in (view, time,
/// patch) order, followed by the linguistic tokens.
struct TrainingExample {
  TaskKind task = TaskKind::understanding;
  std::size_t scene = 0;
  TokenLayout layout;
  std::vector<std::int64_t> text_ids;
  std::vector<std::int64_t> targets;  // per linguistic position; -1 where nothing is predicted
  std::vector<std::uint8_t> noisy;    // per visual token
  std::size_t prompt_len = 0;         // understanding: instruction length through SEP
  std::vector<std::int64_t> answer;   // understanding: expected continuation ending in EOS
  bool time_sensitive = false;

  std::size_t num_visual() const { return noisy.size(); }
  std::size_t num_noisy() const;
};

// Number of understanding items a scene offers (caption plus QA pairs).
std::size_t num_items(const Scene4D& scene);

TrainingExample make_batch(const Scene4D& scene, TaskKind task, const Vocabulary& vocab, const ExampleSpec& spec);

}  // namespace u4d
