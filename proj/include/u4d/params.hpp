#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "u4d/rng.hpp"
#include "u4d/tensor.hpp"

namespace u4d {

// `vision` holds the frozen encoder/decoder stand-in; it is trainable in no stage.
enum class ParamGroup { embeddings, projector, llm_lower, llm_higher, heads, fusion, ste, lora, vision };

std::string_view to_string(ParamGroup g);
ParamGroup parse_group(std::string_view s);
const std::vector<ParamGroup>& all_groups();

struct Parameter {
  std::string name;
  Tensor tensor;
  ParamGroup group;
};

struct LoraAdapter {
  std::string target;
  Tensor a;  // [d_in, r]
  Tensor b;  // [r, d_out], zero at creation
  double scale = 1.0;
};

// Stage 0 is joint training of every group except vision; 1..3 follow the
// staged schedule.
inline constexpr int kJointStage = 0;

/// Named parameters in registration order, with optional low-rank adapters.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor init, ParamGroup group);
  // Xavier-uniform [fan_in, fan_out] matrix.
  Tensor add_xavier(const std::string& name, std::size_t fan_in, std::size_t fan_out, ParamGroup group, Rng& rng);
  Tensor add_zeros(const std::string& name, Shape shape, ParamGroup group);
  Tensor add_ones(const std::string& name, Shape shape, ParamGroup group);

  bool contains(std::string_view name) const;
  Tensor get(std::string_view name) const;
  ParamGroup group_of(std::string_view name) const;
  // Effective weight: W, or W + s*A*B while an adapter is attached.
  Tensor weight(std::string_view name) const;

  const std::vector<Parameter>& params() const { return params_; }
  std::size_t total_size() const;

  // `patterns` match parameter names with '*' wildcards; only rank-2 tensors
  // outside the vision group are eligible. Throws NameError if a pattern
  // matches nothing.
  std::vector<std::string> apply_lora(const std::vector<std::string>& patterns, std::size_t rank, double scale, Rng& rng);
  void merge_lora();
  bool has_adapter(std::string_view target) const { return adapters_.find(std::string(target)) != adapters_.end(); }
  const std::map<std::string, LoraAdapter, std::less<>>& adapters() const { return adapters_; }
  // Re-attaches adapter bookkeeping after lora tensors were loaded by name.
  void attach_adapter(const std::string& target, Tensor a, Tensor b, double scale);

  void set_trainable(int stage);
  std::vector<ParamGroup> trainable_groups(int stage) const;

  // Deep copy with no shared storage.
  ParamStore clone() const;

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::map<std::string, LoraAdapter, std::less<>> adapters_;

  void reindex();
};

bool glob_match(std::string_view pattern, std::string_view name);

}  // namespace u4d
