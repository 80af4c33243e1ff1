#include "u4d/data.hpp"

#include "u4d/errors.hpp"
#include "u4d/rng.hpp"

namespace u4d {

std::size_t TrainingExample::num_noisy() const {
  std::size_t n = 0;
  for (auto m : noisy) n += m;
  return n;
}

std::size_t num_items(const Scene4D& scene) { return 1 + scene.qa_pairs.size(); }

TrainingExample make_batch(const Scene4D& scene, TaskKind task, const Vocabulary& vocab, const ExampleSpec& spec) {
  const auto& c = scene.cfg;
  if (spec.patch == 0 || c.height % static_cast<int>(spec.patch) != 0 || c.width % static_cast<int>(spec.patch) != 0) {
    throw ConfigError("patch size " + std::to_string(spec.patch) + " does not divide the frame");
  }
  const std::size_t P = (c.height / spec.patch) * (c.width / spec.patch);
  const std::size_t frames = static_cast<std::size_t>(c.views * c.times);

  TrainingExample ex;
  ex.task = task;
  ex.noisy.assign(frames * P, 0);

  if (task == TaskKind::generation) {
    if (spec.num_condition < 0 || static_cast<std::size_t>(spec.num_condition) >= frames) {
      throw ContractError("generation example has no target frames (" + std::to_string(spec.num_condition) +
                          " condition frames of " + std::to_string(frames) + ")");
    }
    Rng rng = Rng::derive(spec.mask_seed, 0x6e6f6973);
    for (std::size_t fr = static_cast<std::size_t>(spec.num_condition); fr < frames; ++fr) {
      for (std::size_t p = 0; p < P; ++p) {
        ex.noisy[fr * P + p] = spec.p_noise >= 1.0 || rng.bernoulli(spec.p_noise) ? 1 : 0;
      }
    }
    ex.text_ids = {Vocabulary::kBos, vocab.id("generate")};
    ex.text_ids.insert(ex.text_ids.end(), scene.caption_tokens.begin(), scene.caption_tokens.end());
    ex.text_ids.push_back(Vocabulary::kEos);
    ex.targets.assign(ex.text_ids.size(), -1);
  } else {
    if (spec.item >= num_items(scene)) {
      throw ContractError("scene has no understanding item " + std::to_string(spec.item));
    }
    std::vector<std::int64_t> answer;
    if (spec.item == 0) {
      ex.text_ids = {Vocabulary::kBos, vocab.id("describe"), Vocabulary::kSep};
      answer = scene.caption_tokens;
      // captions name motion directions
      for (const auto& o : scene.objects) ex.time_sensitive = ex.time_sensitive || o.motion != Motion::still;
    } else {
      const QAPair& qa = scene.qa_pairs[spec.item - 1];
      ex.text_ids = {Vocabulary::kBos, vocab.id("question")};
      ex.text_ids.insert(ex.text_ids.end(), qa.question.begin(), qa.question.end());
      ex.text_ids.push_back(Vocabulary::kSep);
      answer = qa.answer;
      ex.time_sensitive = qa.time_sensitive;
    }
    ex.prompt_len = ex.text_ids.size();
    answer.push_back(Vocabulary::kEos);
    ex.answer = answer;
    // teacher forcing: inputs exclude the final EOS; targets start at SEP
    ex.text_ids.insert(ex.text_ids.end(), answer.begin(), answer.end() - 1);
    ex.targets.assign(ex.text_ids.size(), -1);
    for (std::size_t k = 0; k < answer.size(); ++k) ex.targets[ex.prompt_len - 1 + k] = answer[k];
  }
  if (ex.text_ids.size() > spec.text_len) {
    throw ContractError("text of " + std::to_string(ex.text_ids.size()) + " tokens exceeds text_len " +
                        std::to_string(spec.text_len));
  }

  std::vector<Span> spans;
  for (std::size_t fr = 0; fr < frames; ++fr) {
    const int v = static_cast<int>(fr) / c.times;
    const int t = static_cast<int>(fr) % c.times;
    std::size_t p = 0;
    while (p < P) {
      const std::uint8_t m = ex.noisy[fr * P + p];
      std::size_t q = p;
      while (q < P && ex.noisy[fr * P + q] == m) ++q;
      spans.push_back({m ? TokenRole::visual_noisy : TokenRole::visual_clean, v, t, q - p});
      p = q;
    }
  }
  spans.push_back({TokenRole::linguistic, std::nullopt, std::nullopt, ex.text_ids.size()});
  ex.layout = TokenLayout(std::move(spans));
  return ex;
}

}  // namespace u4d
