#pragma once

// Byte-level BPE.
//
// Ids 0..255 are the raw bytes, id 256 is <|endoftext|>, and ids from 257 on
// are created by merges in training order. Training counts adjacent pairs
// inside pre-tokens and repeatedly merges the most frequent pair; ties go to
// the pair whose concatenated bytes sort first, then to the smaller left
// token bytes, which makes the merge list a pure function of the pre-token
// multiset.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "exposure/corpus.hpp"

namespace exposure {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr std::size_t kByteAlphabet = 256;
inline constexpr TokenId kEosId = 256;
inline constexpr std::size_t kDefaultVocabSize = 80000;

/// Pre-tokenizer, written as the regular expression it implements.
inline constexpr std::string_view kPretokenizerPattern =
    R"('s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+)";

/// Splits text (without special tokens) into pre-tokens; the pieces
/// concatenate back to the input byte-for-byte.
std::vector<std::string_view> pretokenize(std::string_view text);

struct Merge {
  TokenId left;
  TokenId right;
  TokenId result;

  bool operator==(const Merge&) const = default;
};

class BpeModel {
 public:
  /// Base alphabet plus <|endoftext|>, no merges.
  BpeModel();

  std::size_t vocab_size() const noexcept { return tokens_.size(); }
  TokenId eos_id() const noexcept { return kEosId; }
  const std::string& token_bytes(TokenId id) const;
  std::optional<TokenId> find(std::string_view bytes) const;
  const std::vector<Merge>& merges() const noexcept { return merges_; }

  /// True when training stopped before reaching the requested vocabulary size.
  bool undersized() const noexcept { return undersized_; }
  std::size_t requested_vocab_size() const noexcept { return requested_; }

  /// Applies `merge_rank`-ordered merges greedily inside each pre-token.
  /// Occurrences of <|endoftext|> map to the single special id.
  TokenSeq encode(std::string_view text) const;
  /// Encoding of one pre-token's bytes (no special handling).
  TokenSeq encode_piece(std::string_view piece) const;
  /// Throws Error(UnknownId) for ids >= vocab_size().
  std::string decode(std::span<const TokenId> ids) const;

  /// tokenizer.json (header), vocab.txt, merges.txt
  void save(const std::filesystem::path& dir) const;
  static BpeModel load(const std::filesystem::path& dir);

  bool operator==(const BpeModel& other) const;

 private:
  friend class BpeTrainer;

  TokenId add_merge(TokenId left, TokenId right);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<Merge> merges_;
  // (left << 32 | right) -> merge rank
  std::unordered_map<std::uint64_t, std::uint32_t> rank_;
  bool undersized_ = false;
  std::size_t requested_ = 0;
};

/// Trains on the given lines (typically serialized training lines). Throws
/// Error(InvalidArgument) for vocab_size < 257 or an empty input. A corpus too
/// small to reach vocab_size yields a smaller model with undersized() set.
BpeModel train_bpe(std::span<const std::string> lines, std::size_t vocab_size = kDefaultVocabSize);
BpeModel train_bpe(const Corpus& corpus, std::size_t vocab_size = kDefaultVocabSize);

/// Memoizing wrapper for bulk encoding; not thread-safe, use one per worker.
class CachedEncoder {
 public:
  explicit CachedEncoder(const BpeModel& model) : model_(&model) {}
  TokenSeq encode(std::string_view text);
  const BpeModel& model() const noexcept { return *model_; }

 private:
  const BpeModel* model_;
  std::unordered_map<std::string, TokenSeq> cache_;
};

struct Fragmentation {
  std::size_t tokens = 0;
  std::size_t words = 0;
  double rate() const noexcept { return words == 0 ? 0.0 : static_cast<double>(tokens) / static_cast<double>(words); }
};

/// Subword tokens per regex word. Each word is encoded in its running-text
/// form (with a leading space); a leading token that is just the space is
/// not counted, so a byte-only model scores the mean word byte length.
Fragmentation fragmentation_rate(const BpeModel& model, const Corpus& corpus);

/// Tokens of one word in the same convention as fragmentation_rate.
TokenSeq encode_word(const BpeModel& model, std::string_view word);

}  // namespace exposure
