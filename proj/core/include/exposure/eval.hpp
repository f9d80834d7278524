#pragma once

// Perplexity, minimal-pair accuracy, word similarity, vocabulary filtering
// and seed aggregation.

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "exposure/bpe.hpp"
#include "exposure/conditions.hpp"
#include "exposure/corpus.hpp"
#include "exposure/models.hpp"

namespace exposure {

inline constexpr std::size_t kDefaultEvalWindow = 1024;
inline constexpr std::size_t kDefaultStride = 512;

// ---------------------------------------------------------------- perplexity

/// One model call: tokens [begin, end) are visible, positions [score_from,
/// end) are scored.
struct WindowSpan {
  std::size_t begin;
  std::size_t end;
  std::size_t score_from;
};

/// Strided windows over n tokens: begins at 0, stride, 2*stride, ...;
/// end = min(begin + window, n); each window scores only positions not
/// scored by an earlier one, and position 0 is never scored.
std::vector<WindowSpan> window_plan(std::size_t n, std::size_t window, std::size_t stride = kDefaultStride);

struct NllResult {
  double nll = 0.0;
  std::size_t tokens = 0;
  std::size_t unknown = 0;
};

/// Throws Error(EmptySequence) on empty input, Error(InvalidArgument) when
/// stride > window or window > model.context_window().
NllResult sliding_window_nll(const ScoringModel& model, std::span<const TokenId> tokens, std::size_t window,
                             std::size_t stride = kDefaultStride);

struct PerplexityResult {
  double ppl = 0.0;
  double nll = 0.0;
  std::size_t tokens = 0;
  std::size_t lines = 0;
  std::size_t unknown = 0;
};

struct EvalOptions {
  std::size_t window = kDefaultEvalWindow;
  std::size_t stride = kDefaultStride;
  std::size_t workers = 1;  // ignored for models that are not multi-worker safe
};

/// Each line is scored as [EOS] + encode(line), so every token of the line,
/// including its closing <|endoftext|>, is predicted. PPL = exp(sum NLL /
/// sum scored tokens).
PerplexityResult perplexity(const ScoringModel& model, std::span<const std::string> lines, const BpeModel& tokenizer,
                            const EvalOptions& options = {});
PerplexityResult perplexity(const ScoringModel& model, const Corpus& corpus, const BpeModel& tokenizer,
                            const EvalOptions& options = {});

// ---------------------------------------------------------------- minimal pairs

/// The 13 Zorro phenomenon tags.
inline constexpr std::array<std::string_view, 13> kZorroPhenomena = {
    "agreement_determiner_noun", "agreement_subject_verb", "anaphor_agreement", "argument_structure",
    "binding",                   "case",                   "ellipsis",          "filler-gap",
    "irregular_verb",            "island-effects",         "local_attractor",   "npi_licensing",
    "quantifiers",
};

bool is_known_phenomenon(std::string_view tag) noexcept;

struct MinimalPairItem {
  std::string uid;
  std::string phenomenon;
  std::string good;
  std::string bad;
};

enum class PairOutcome { Correct, Incorrect, Tie };

/// Correct iff good > bad; equal scores are a tie, counted as incorrect.
PairOutcome judge_pair(double good_score, double bad_score) noexcept;

struct PhenomenonScore {
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct MinimalPairResult {
  std::size_t correct = 0;
  std::size_t ties = 0;
  std::size_t total = 0;
  std::size_t unknown_tokens = 0;
  std::map<std::string, PhenomenonScore> by_phenomenon;
  double accuracy() const noexcept { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

inline constexpr std::string_view kMomPrefix = "**Mom**: ";

/// Scores each sentence by its summed log-probability. `prefix` (e.g.
/// kMomPrefix) is prepended to both sentences. Throws Error(EmptyItemSet).
MinimalPairResult score_minimal_pairs(const ScoringModel& model, std::span<const MinimalPairItem> items,
                                      const BpeModel& tokenizer, std::string_view prefix = {},
                                      const EvalOptions& options = {});

/// Same decision rule over an arbitrary sentence scorer.
MinimalPairResult score_minimal_pairs(const std::function<double(const std::string&)>& score,
                                      std::span<const MinimalPairItem> items, std::string_view prefix = {});

/// Summed log-probability of [EOS] + encode(text).
double sentence_log_prob(const ScoringModel& model, const BpeModel& tokenizer, std::string_view text,
                         const EvalOptions& options = {});

// ---------------------------------------------------------------- word similarity

struct WordPairItem {
  std::string w1;
  std::string w2;
  double gold = 0.0;
  Language lang1 = Language::EN;
  Language lang2 = Language::EN;
};

/// Average ranks for ties, then Pearson correlation of the ranks. Throws
/// Error(DegenerateInput) for a constant input and Error(LengthMismatch) for
/// unequal or too-short inputs.
double spearman(std::span<const double> xs, std::span<const double> ys);

/// Fractional ranks (1-based, ties share the mean rank).
std::vector<double> average_ranks(std::span<const double> xs);

struct WordSimilarityResult {
  std::vector<double> per_layer;  // NaN where the layer's similarities are constant
  std::size_t best_layer = 0;
  double best = 0.0;
  std::size_t used = 0;
  std::size_t missing = 0;  // items dropped for a word without a vector
};

/// Mean of a word's subword vectors at one layer (tokens as in
/// encode_word). Throws Error(MissingWordVector) when no token has a vector.
std::vector<double> word_vector(const EmbeddingProvider& provider, const BpeModel& tokenizer, std::string_view word,
                                std::size_t layer);

double cosine(std::span<const double> a, std::span<const double> b) noexcept;

/// Spearman rho between gold scores and cosine similarities per layer; best
/// layer is the argmax, ties going to the lowest index. Throws
/// Error(DegenerateInput) when no layer yields a defined correlation.
WordSimilarityResult word_similarity_eval(const EmbeddingProvider& provider, std::span<const WordPairItem> items,
                                          const BpeModel& tokenizer);

// ---------------------------------------------------------------- filtering

using VocabSet = std::unordered_set<std::string>;

/// Lowercased linguistic content tokens of every turn.
VocabSet build_vocab(const Corpus& corpus);

template <typename T>
struct Filtered {
  std::vector<T> kept;
  std::size_t total = 0;
  double ratio() const noexcept { return total ? static_cast<double>(kept.size()) / static_cast<double>(total) : 0.0; }
};

/// True when every lowercased content token of `text` is in every set.
bool covered_by(std::string_view text, std::span<const VocabSet* const> sets);

/// Keeps items whose good and bad sentences are covered by all sets.
Filtered<MinimalPairItem> filter_by_vocab(std::span<const MinimalPairItem> items,
                                          std::span<const VocabSet* const> sets);

struct LanguageVocabs {
  std::vector<const VocabSet*> en;
  std::vector<const VocabSet*> es;
  std::span<const VocabSet* const> for_language(Language l) const { return l == Language::EN ? en : es; }
};

/// Each word is checked against the sets of its own language.
Filtered<WordPairItem> filter_by_vocab(std::span<const WordPairItem> items, const LanguageVocabs& vocabs);

// ---------------------------------------------------------------- aggregation

using MetricMap = std::map<std::string, double>;

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for one run
  std::vector<double> values;
};

struct AggregateReport {
  std::map<std::string, MetricSummary> metrics;
  std::size_t runs = 0;
  bool mirrored = false;
};

/// Mean and sample std across seeds. With `mirrored`, run i is first
/// averaged with mirrored[i] (the swapped speaker-language assignment).
/// Throws Error(MismatchedMetricKeys) when runs disagree on metric names.
AggregateReport aggregate_runs(std::span<const MetricMap> runs,
                               std::optional<std::span<const MetricMap>> mirrored = std::nullopt);

nlohmann::json to_json(const AggregateReport& report);
nlohmann::json to_json(const MinimalPairResult& result);
nlohmann::json to_json(const WordSimilarityResult& result);
nlohmann::json to_json(const PerplexityResult& result);

// ---------------------------------------------------------------- benchmark files

/// TSV: uid, phenomenon, sentence_good, sentence_bad (header optional).
std::vector<MinimalPairItem> load_minimal_pairs(const std::filesystem::path& path);
void save_minimal_pairs(const std::filesystem::path& path, std::span<const MinimalPairItem> items);
/// TSV: w1, w2, gold, lang1, lang2 (header optional; languages en/es).
std::vector<WordPairItem> load_word_pairs(const std::filesystem::path& path);
void save_word_pairs(const std::filesystem::path& path, std::span<const WordPairItem> items);

}  // namespace exposure
