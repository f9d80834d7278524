#pragma once

// Token language labels and 2D projections of embedding matrices.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "exposure/bpe.hpp"
#include "exposure/corpus.hpp"
#include "exposure/models.hpp"

namespace exposure {

enum class TokenLabel : std::uint8_t { English, Spanish, Shared, Excluded };

std::string_view to_string(TokenLabel l) noexcept;
TokenLabel token_label_from_string(std::string_view s);

struct TokenLanguageLabel {
  TokenId id = 0;
  TokenLabel label = TokenLabel::Excluded;
  double en_fraction = 0.0;  // 0 for excluded tokens
  std::uint64_t en_count = 0;
  std::uint64_t es_count = 0;
};

struct LabelOptions {
  double threshold = 0.75;        // in (0.5, 1]
  std::size_t sample_lines = 20000;
};

/// English when en_fraction >= threshold, Spanish when 1 - en_fraction >=
/// threshold, Shared otherwise. The comparison allows 1e-12 of rounding so an
/// exact 3:1 split lands on the English side at 0.75.
TokenLabel classify_fraction(double en_fraction, double threshold);

/// One entry per vocabulary id. Counts come from the first `sample_lines`
/// lines of each side.
std::vector<TokenLanguageLabel> label_tokens(const BpeModel& tokenizer, std::span<const std::string> en_lines,
                                             std::span<const std::string> es_lines, const LabelOptions& options = {});
std::vector<TokenLanguageLabel> label_tokens(const BpeModel& tokenizer, const Corpus& en, const Corpus& es,
                                             const LabelOptions& options = {});

/// {"English": n, "Spanish": n, "Shared": n, "Excluded": n, "threshold": t}
nlohmann::json label_summary(std::span<const TokenLanguageLabel> labels, double threshold);

struct Projection {
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> variance{};  // eigenvalues of the sample covariance
  bool rank_deficient = false;       // second (or both) components are zero
};

/// Mean-centered PCA onto the top two eigenvectors of the covariance. Each
/// component's sign puts its largest-magnitude score on the positive side
/// (first such row on a tie). `data` is row-major rows x cols.
Projection project_2d(std::span<const double> data, std::size_t rows, std::size_t cols);

/// Up to `max_tokens` non-excluded ids in id order.
std::vector<TokenId> select_tokens(std::span<const TokenLanguageLabel> labels, std::size_t max_tokens = 20000);

/// Projects the given tokens' vectors at one layer.
Projection project_tokens(const EmbeddingProvider& provider, std::size_t layer, std::span<const TokenId> ids);

struct PlotRow {
  TokenId id = 0;
  std::string token;  // raw bytes
  double x = 0.0;
  double y = 0.0;
  TokenLabel label = TokenLabel::Excluded;
  double en_fraction = 0.0;
};

/// TSV with header token_id, token, x, y, label, en_fraction; rows sorted by
/// id, tokens byte-escaped. Throws Error(LengthMismatch) when ids and
/// coordinates differ in length or an id has no label.
std::string export_plot_data(std::span<const TokenId> ids, const Projection& projection,
                             std::span<const TokenLanguageLabel> labels, const BpeModel& tokenizer);
std::vector<PlotRow> parse_plot_data(std::string_view tsv);

}  // namespace exposure
