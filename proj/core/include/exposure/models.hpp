#pragma once

// Scoring and embedding contracts plus the built-in reference models: an
// interpolated absolute-discounting n-gram LM and a skip-gram embedding
// trainer, and readers/writers for externally produced score and embedding
// files.
//
// Log-probabilities are natural logs throughout.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "exposure/bpe.hpp"

namespace exposure {

class ScoringModel {
 public:
  virtual ~ScoringModel() = default;

  /// Maximum number of tokens scored jointly.
  virtual std::size_t context_window() const = 0;

  /// For a span of n tokens, n-1 values: log p(t_i | t_0..t_{i-1}) for
  /// i = 1..n-1. Only tokens inside the span are visible as context.
  virtual std::vector<double> log_probs(std::span<const TokenId> tokens) const = 0;

  /// log p(t_{n-1} | t_0..t_{n-2}); models with cheaper direct access override.
  virtual double last_log_prob(std::span<const TokenId> tokens) const;

  /// Tokens of `tokens` (after the first) scored through the unknown-token path.
  virtual std::size_t unknown_count(std::span<const TokenId>) const { return 0; }

  /// Whether log_probs may be called concurrently from several threads.
  virtual bool multi_worker_safe() const { return true; }
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t n_layers() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t vocab_size() const = 0;
  /// Throws Error(MissingToken) for ids without a vector.
  virtual std::vector<double> vector(TokenId id, std::size_t layer) const = 0;
  virtual bool has_vector(TokenId id) const { return id < vocab_size(); }
};

/// Every token has probability 1/(V+1).
class UniformLm final : public ScoringModel {
 public:
  explicit UniformLm(std::size_t vocab_size, std::size_t window = 1024);
  std::size_t context_window() const override { return window_; }
  std::vector<double> log_probs(std::span<const TokenId> tokens) const override;
  double last_log_prob(std::span<const TokenId> tokens) const override;

 private:
  std::size_t window_;
  double log_p_;
};

inline constexpr std::size_t kMaxNgramOrder = 6;
inline constexpr TokenId kUnkId = 0xFFFFFFFFu;

struct NgramKey {
  std::array<TokenId, kMaxNgramOrder> ids{};
  std::uint8_t size = 0;
  bool operator==(const NgramKey&) const = default;
};

struct NgramKeyHash {
  std::size_t operator()(const NgramKey& k) const noexcept;
};

/// Interpolated absolute discounting:
///   p(w|h) = max(c(h,w) - d, 0) / c(h) + d * N1+(h) / c(h) * p(w|h')
/// with h' the context minus its oldest token, c(h) = sum_w c(h,w), and the
/// recursion ending in a uniform distribution over the V training types plus
/// UNK. A context never seen in training passes its mass straight to h'.
class NGramLm final : public ScoringModel {
 public:
  NGramLm(std::size_t order = 3, double discount = 0.75, std::size_t window = 1024);

  /// Counts n-grams of orders 1..order over one contiguous stream.
  void add_stream(std::span<const TokenId> stream);

  std::size_t order() const noexcept { return order_; }
  double discount() const noexcept { return discount_; }
  /// Distinct training tokens, excluding UNK.
  std::size_t vocab_size() const noexcept { return vocab_.size(); }
  bool in_vocab(TokenId id) const noexcept { return vocab_.count(id) > 0; }
  std::vector<TokenId> vocab() const;
  std::uint64_t total_tokens() const noexcept { return total_; }

  /// p(w | history), using at most order-1 trailing history tokens.
  double prob(TokenId w, std::span<const TokenId> history) const;

  std::size_t context_window() const override { return window_; }
  std::vector<double> log_probs(std::span<const TokenId> tokens) const override;
  double last_log_prob(std::span<const TokenId> tokens) const override;
  std::size_t unknown_count(std::span<const TokenId> tokens) const override;

  /// Plain-text counts file.
  void save(const std::filesystem::path& path) const;
  static NGramLm load(const std::filesystem::path& path);

 private:
  struct ContextStats {
    std::uint64_t total = 0;
    std::uint64_t distinct = 0;
  };

  TokenId map_unk(TokenId id) const noexcept { return in_vocab(id) ? id : kUnkId; }

  std::size_t order_;
  double discount_;
  std::size_t window_;
  std::uint64_t total_ = 0;
  std::unordered_map<TokenId, std::uint64_t> vocab_;  // unigram counts
  // counts_[k] holds n-grams of length k+1 (k >= 1); contexts_[k] their k-token contexts
  std::vector<std::unordered_map<NgramKey, std::uint64_t, NgramKeyHash>> counts_;
  std::vector<std::unordered_map<NgramKey, ContextStats, NgramKeyHash>> contexts_;
};

NGramLm train_ngram(std::span<const TokenId> stream, std::size_t order = 3, double discount = 0.75);

struct SgnsConfig {
  std::size_t dim = 32;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 42;
  double table_exponent = 0.75;
};

/// One (center, context, negatives) training example.
struct SgnsSample {
  TokenId center = 0;
  TokenId context = 0;
  std::vector<TokenId> negatives;
};

class SkipGramModel final : public EmbeddingProvider {
 public:
  SkipGramModel() = default;
  /// Input vectors uniform in [-0.5/dim, 0.5/dim), output vectors zero.
  SkipGramModel(std::size_t vocab_size, std::size_t dim, std::uint64_t seed);

  std::size_t n_layers() const override { return 1; }
  std::size_t dim() const override { return dim_; }
  std::size_t vocab_size() const override { return vocab_size_; }
  std::vector<double> vector(TokenId id, std::size_t layer) const override;
  bool has_vector(TokenId id) const override { return id < vocab_size_ && seen_[id]; }

  std::span<double> input(TokenId id) { return {in_.data() + static_cast<std::size_t>(id) * dim_, dim_}; }
  std::span<double> output(TokenId id) { return {out_.data() + static_cast<std::size_t>(id) * dim_, dim_}; }
  std::span<const double> input(TokenId id) const { return {in_.data() + static_cast<std::size_t>(id) * dim_, dim_}; }
  std::span<const double> output(TokenId id) const { return {out_.data() + static_cast<std::size_t>(id) * dim_, dim_}; }

  void mark_seen(TokenId id) { seen_[id] = true; }
  /// Mean loss per training pair for each completed epoch.
  const std::vector<double>& epoch_loss() const noexcept { return epoch_loss_; }

  /// EMB1 file with one layer (input vectors; rows of unseen ids are zero).
  void save(const std::filesystem::path& path) const;

 private:
  friend SkipGramModel train_sgns(std::span<const TokenId>, std::size_t, const SgnsConfig&);

  std::size_t vocab_size_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> in_;
  std::vector<double> out_;
  std::vector<bool> seen_;
  std::vector<double> epoch_loss_;
};

/// Single-threaded skip-gram with negative sampling over ids < vocab_size.
/// Bit-identical for a fixed (stream, config).
SkipGramModel train_sgns(std::span<const TokenId> stream, std::size_t vocab_size, const SgnsConfig& config = {});

/// -log s(u_c . v) - sum_k log s(-u_k . v)
double sgns_loss(const SkipGramModel& model, const SgnsSample& sample);

struct SgnsGradient {
  std::vector<double> center;                 // dL/dv
  std::vector<double> context;                // dL/du_c
  std::vector<std::vector<double>> negatives; // dL/du_k
};

SgnsGradient sgns_gradient(const SkipGramModel& model, const SgnsSample& sample);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares sgns_gradient with central differences at `coordinates` randomly
/// chosen parameters of the sample; relative error |a-n| / max(|a|, |n|, 1e-6).
GradientCheck sgns_gradient_check(const SkipGramModel& model, const SgnsSample& sample, double epsilon = 1e-4,
                                  std::size_t coordinates = 100, std::uint64_t seed = 0);

// External model files. All integers and floats little-endian.
//   EMB1: "EMB1" u32 version u32 n_layers u32 vocab u32 dim, then n_layers
//         row-major float32 [vocab x dim] matrices.
//   LSC1: "LSC1" u32 version u32 context_window, then records
//         {u64 sequence_hash, u32 len, float32 log_probs[len-1]}.
// sequence_hash is FNV-1a 64 over the token ids as little-endian u32.

inline constexpr std::uint32_t kExternalFormatVersion = 1;

std::uint64_t sequence_hash(std::span<const TokenId> tokens) noexcept;

class ExternalEmbeddings final : public EmbeddingProvider {
 public:
  ExternalEmbeddings(std::size_t n_layers, std::size_t vocab, std::size_t dim, std::vector<float> data);
  static ExternalEmbeddings load(const std::filesystem::path& path);

  std::size_t n_layers() const override { return n_layers_; }
  std::size_t dim() const override { return dim_; }
  std::size_t vocab_size() const override { return vocab_; }
  std::vector<double> vector(TokenId id, std::size_t layer) const override;
  std::span<const float> raw() const noexcept { return data_; }

 private:
  std::size_t n_layers_;
  std::size_t vocab_;
  std::size_t dim_;
  std::vector<float> data_;
};

/// `layers` holds n_layers matrices, each vocab*dim floats.
void write_embeddings(const std::filesystem::path& path, std::size_t vocab, std::size_t dim,
                      std::span<const std::vector<float>> layers);

class ExternalScores final : public ScoringModel {
 public:
  explicit ExternalScores(std::size_t context_window) : window_(context_window) {}
  static ExternalScores load(const std::filesystem::path& path);

  /// Stores log-probs for one sequence (size must be tokens.size()-1).
  void add(std::span<const TokenId> tokens, std::span<const float> log_probs);
  void save(const std::filesystem::path& path) const;

  std::size_t context_window() const override { return window_; }
  /// Throws Error(HashMiss) for a sequence without a record.
  std::vector<double> log_probs(std::span<const TokenId> tokens) const override;
  std::size_t size() const noexcept { return records_.size(); }

 private:
  struct Record {
    std::uint32_t length;
    std::vector<float> values;
  };
  std::size_t window_;
  std::unordered_map<std::uint64_t, Record> records_;
};

/// Either path may be empty, yielding a null pointer for that half.
std::pair<std::unique_ptr<ScoringModel>, std::unique_ptr<EmbeddingProvider>> load_external_model(
    const std::filesystem::path& score_file, const std::filesystem::path& embed_file);

}  // namespace exposure
