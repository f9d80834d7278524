#pragma once

// Mini benchmarks over the fixture lexicons, in the same TSV schemas as the
// real minimal-pair and word-similarity sets.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "exposure/eval.hpp"
#include "exposure/fixture.hpp"

namespace exposure {

/// Pairs built from the fixture's English templates: a template sentence
/// against a corrupted variant (agreement, word order, gap). Words come from
/// the `top_k` most frequent entries of each class.
std::vector<MinimalPairItem> fixture_minimal_pairs(const FixtureLexicons& lex, std::size_t n, std::uint64_t seed,
                                                   std::size_t top_k = 40);

/// Word pairs with gold = 1 for two words of the same class and 0 otherwise;
/// cross-lingual pairs score 2 for translations. `n` pairs per language pair.
std::vector<WordPairItem> fixture_word_pairs(const FixtureLexicons& lex, std::size_t n, std::uint64_t seed,
                                             std::size_t top_k = 40);

}  // namespace exposure
