#pragma once

// Training-condition builders. Every random choice is drawn from a stream
// keyed by (seed, dialogue id, purpose), so outputs never depend on
// iteration order or on which other dialogues are present.

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "exposure/corpus.hpp"

namespace exposure {

enum class Language : std::uint8_t { EN, ES };

std::string_view to_string(Language l) noexcept;
Language language_from_string(std::string_view s);
Variant variant_of(Language l) noexcept;

enum class ConditionKind : std::uint8_t {
  Topline,
  BaselineRandom,
  BaselineBySpeaker,
  MultilingualRandom,
  MultilingualBySpeaker,
  CsSentence,
  CsWordIngest,
};

std::string_view to_string(ConditionKind k) noexcept;
ConditionKind condition_kind_from_string(std::string_view s);

struct SpeakerAssignment {
  Language mom = Language::EN;
  Language dad = Language::ES;

  Language language_for(Speaker s) const;
  SpeakerAssignment mirrored() const noexcept { return {dad, mom}; }
  bool operator==(const SpeakerAssignment&) const = default;
};

/// Where the random-baseline dialogue set comes from. Reuse takes the
/// matching half of the p=0.5 multilingual selection (so the EN and ES random
/// baselines partition the corpus); Redraw uses an independent coin per id.
enum class BaselineSource : std::uint8_t { ReuseMultilingual, Redraw };

struct ExposureSpec {
  std::string name;
  ConditionKind kind = ConditionKind::Topline;
  std::optional<Language> language;                  // topline and baselines
  double p_l2 = 0.5;                                 // ES share for random kinds
  std::optional<SpeakerAssignment> speaker_assignment;
  std::optional<std::uint64_t> word_budget;          // EN regex-words; unset = full corpus
  std::uint64_t seed = 42;
  double train_ratio = 0.95;
  BaselineSource baseline_source = BaselineSource::ReuseMultilingual;
};

/// Throws Error(InvalidSpec) or Error(IncompleteAssignment).
void validate(const ExposureSpec& spec);
nlohmann::json to_json(const ExposureSpec& spec);
ExposureSpec exposure_spec_from_json(const nlohmann::json& j);

/// Per id: ES variant when keyed_uniform(seed, id, "lang") < p_l2, else EN.
/// Throws Error(IdMismatch) unless both corpora hold the same ids.
Corpus select_by_probability(const Corpus& en, const Corpus& es, double p_l2, std::uint64_t seed);

/// Each dialogue in the language assigned to its adult speaker.
Corpus select_by_speaker(const Corpus& en, const Corpus& es, const SpeakerAssignment& assignment);

/// Splits after terminal punctuation (. ! ? …, plus trailing closing quotes or
/// brackets) that is followed by whitespace. Opening ¿ and ¡ therefore stay
/// with the sentence they introduce.
std::vector<std::string> sentence_segment(std::string_view text);

enum class MismatchPolicy : std::uint8_t { AlignShorter, Strict };

inline constexpr std::size_t kMaxSameLanguageRun = 3;

struct MixResult {
  Dialogue dialogue;
  std::size_t en_sentences = 0;
  std::size_t es_sentences = 0;
  std::size_t mismatched_turns = 0;   // turns whose sentence counts differed
  std::vector<Language> choices;      // one entry per emitted sentence, in order
};

/// Sentence-level code-switching. Each aligned sentence position takes the EN
/// or ES sentence with a fair coin from the (seed, id) stream; after three
/// consecutive sentences in one language the next is forced to the other.
/// Runs are counted across turn boundaries. Turn structure must match
/// (Error(SentenceCountMismatch) otherwise); with AlignShorter, a turn whose
/// sentence counts differ uses the common prefix and appends the remainder
/// from the language chosen at its last aligned position.
MixResult mix_cs_sentence(const Dialogue& en, const Dialogue& es, std::uint64_t seed,
                          MismatchPolicy policy = MismatchPolicy::AlignShorter);

/// Stratified (speaker x context) reduced-size id set. Ids within a stratum are
/// shuffled by their keyed hash and strata are interleaved in proportion; the
/// result is the shortest prefix whose EN regex-word total reaches `budget`.
/// Throws Error(BudgetTooLarge) if budget exceeds the corpus.
std::set<std::string> sample_reduced(const Corpus& en, std::uint64_t budget_words, std::uint64_t seed);

Corpus restrict_to(const Corpus& c, const std::set<std::string>& ids);

/// Held-out assignment over a universe of parallel dialogues. The universe is
/// stratified by adult speaker and by the p=0.5 language coin; each stratum
/// contributes a floor/ceil share of the validation quota, filled with its
/// lowest-hash ids. Totals are floor(fraction * N) for the universe and within
/// one dialogue of fraction * n for the Mom, Dad, EN-half and ES-half subsets,
/// so every condition's validation set is the universe's set restricted to its
/// own ids.
class SplitPlan {
 public:
  SplitPlan(const Corpus& universe, std::uint64_t seed, double train_ratio = 0.95);

  bool is_val(std::string_view id) const { return val_ids_.count(std::string(id)) > 0; }
  const std::set<std::string>& val_ids() const noexcept { return val_ids_; }
  std::size_t universe_size() const noexcept { return universe_size_; }
  double val_fraction() const noexcept { return val_fraction_; }

 private:
  std::set<std::string> val_ids_;
  std::size_t universe_size_ = 0;
  double val_fraction_ = 0.05;
};

struct TrainValSplit {
  Corpus train;
  Corpus val;
};

TrainValSplit split_train_val(const Corpus& condition, const SplitPlan& plan);

struct ParallelInputs {
  const Corpus* en = nullptr;
  const Corpus* es = nullptr;
  const Corpus* cs_word = nullptr;  // pre-generated word-level CS corpus, optional
};

struct ConditionDataset {
  ExposureSpec spec;
  Corpus train;
  Corpus val;
  nlohmann::json manifest;
};

/// Materializes one condition. Output is a pure function of (spec, inputs).
ConditionDataset build_condition(const ExposureSpec& spec, const ParallelInputs& inputs);

/// The shared validation ids for a universe (the data every condition's val
/// set is drawn from), rendered in one language.
Corpus aligned_val_corpus(const ExposureSpec& spec, const ParallelInputs& inputs, Language language);

/// Writes train.txt, train.meta.json, val.txt, val.meta.json, manifest.json.
void write_condition(const ConditionDataset& ds, const std::filesystem::path& dir);

}  // namespace exposure
