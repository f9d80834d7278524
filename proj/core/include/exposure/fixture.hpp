#pragma once

// Deterministic pseudo-parallel corpora for tests and desk-scale experiments.
//
// Two pseudo-languages share one template grammar: every sentence is drawn
// once as a template plus slot choices and then realized in both languages,
// so the corpora are sentence-aligned and meaning-matched. Content words are
// generated from disjoint consonant inventories, so the two content
// vocabularies cannot overlap. The Spanish-like side inflects verbs, which
// gives it the larger type count real translations show.

#include <cstdint>
#include <string>
#include <vector>

#include "exposure/corpus.hpp"

namespace exposure {

struct PseudoLexicon {
  std::vector<std::string> nouns;
  std::vector<std::string> verbs;       // stems on the ES side
  std::vector<std::string> adjectives;
};

struct FixtureLexicons {
  PseudoLexicon en;
  PseudoLexicon es;
};

/// Generated pseudo-words; index i of each list is a translation pair.
FixtureLexicons default_lexicons(std::size_t nouns = 600, std::size_t verbs = 250,
                                 std::size_t adjectives = 200);

struct ParallelCorpora {
  Corpus en;
  Corpus es;
};

/// Throws Error(EmptyLexicon) if a word class is empty on either side, or if
/// the two sides' list sizes differ.
ParallelCorpora generate_fixture(std::uint64_t seed, std::size_t n_dialogues,
                                 const FixtureLexicons& lexicons);

/// Fixed metadata schedule used by generate_fixture: speakers alternate,
/// contexts alternate every two dialogues, ages cycle every four.
DialogueMeta fixture_meta(std::size_t index, Variant variant);

/// Every literal word the templates can emit on either side (lowercased).
std::vector<std::string> template_words();

}  // namespace exposure
