#include "exposure/fixture.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <string_view>

#include "exposure/errors.hpp"
#include "exposure/random.hpp"
#include "exposure/text.hpp"

namespace exposure {
namespace {

struct Template {
  std::string_view en;
  std::string_view es;
  int weight;
};

// Slots: $N<i> noun, $A<i> adjective, $V<i>[:form] verb. ES verb forms are
// inf, 1sg, 2sg, 1pl; the EN side always uses the base form.
constexpr Template kTemplates[] = {
    {"Can you $V0 the $A0 $N0?", "¿Puedes $V0:inf la $N0 $A0?", 6},
    {"I want to $V0 my $N0.", "Quiero $V0:inf mi $N0.", 6},
    {"Look at the $A0 $N0!", "¡Mira la $N0 $A0!", 5},
    {"Where is your $N0?", "¿Dónde está tu $N0?", 5},
    {"We can $V0 the $N0 and the $N1 now.", "Podemos $V0:inf la $N0 y la $N1 ahora.", 4},
    {"Okay, let's $V0 it later.", "Vale, vamos a $V0:inf luego.", 3},
    {"That $N0 is so $A0.", "Esa $N0 es muy $A0.", 5},
    {"Yes, I $V0 the $N0.", "Sí, $V0:1sg la $N0.", 4},
    {"Don't $V0 the $N0, please.", "No $V0:2sg la $N0, por favor.", 3},
    {"Do you $V0 the $A0 $N0 every day?", "¿$V0:2sg la $N0 $A0 cada día?", 3},
    {"We $V0 with the $N0 together.", "$V0:1pl con la $N0 juntos.", 3},
    {"Why is the $N0 $A0?", "¿Por qué la $N0 está $A0?", 3},
    {"Thank you!", "¡Gracias!", 1},
    {"I think the $N0 wants to $V0.", "Creo que la $N0 quiere $V0:inf.", 3},
    {"The $A0 $N0 and the $A1 $N1 are here.", "La $N0 $A0 y la $N1 $A1 están aquí.", 3},
};

constexpr std::array<int, 4> kAges = {2, 5, 10, 15};

char32_t upper_char(char32_t cp) {
  if (cp >= U'a' && cp <= U'z') return cp - 32;
  if (cp >= 0xE0 && cp <= 0xFE && cp != 0xF7) return cp - 32;
  return cp;
}

std::string capitalize_first_letter(const std::string& s) {
  std::string out;
  bool done = false;
  for (std::size_t pos = 0; pos < s.size();) {
    auto d = text::decode_at(s, pos);
    if (!done && text::is_letter(d.cp)) {
      text::append_utf8(out, upper_char(d.cp));
      done = true;
    } else {
      out.append(s, pos, d.length);
    }
    pos += d.length;
  }
  return out;
}

class ZipfSampler {
 public:
  explicit ZipfSampler(std::size_t n, double exponent = 1.1) : cdf_(n) {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      total += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
      cdf_[r] = total;
    }
  }

  std::size_t operator()(SplitMix64& rng) const {
    const double u = rng.uniform() * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

struct SlotChoices {
  std::array<std::size_t, 2> nouns{};
  std::array<std::size_t, 2> adjectives{};
  std::array<std::size_t, 2> verbs{};
};

std::string realize(std::string_view tmpl, const SlotChoices& c, const PseudoLexicon& lex, bool spanish) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    if (tmpl[pos] != '$') {
      out.push_back(tmpl[pos++]);
      continue;
    }
    const char kind = tmpl[pos + 1];
    const std::size_t idx = static_cast<std::size_t>(tmpl[pos + 2] - '0');
    pos += 3;
    std::string_view form = "inf";
    if (pos < tmpl.size() && tmpl[pos] == ':') {
      std::size_t end = pos + 1;
      while (end < tmpl.size() && std::isalnum(static_cast<unsigned char>(tmpl[end]))) ++end;
      form = tmpl.substr(pos + 1, end - pos - 1);
      pos = end;
    }
    switch (kind) {
      case 'N': out += lex.nouns[c.nouns[idx]]; break;
      case 'A': out += lex.adjectives[c.adjectives[idx]]; break;
      case 'V': {
        const std::string& stem = lex.verbs[c.verbs[idx]];
        if (!spanish) {
          out += stem;
        } else if (form == "1sg") {
          out += stem + "o";
        } else if (form == "2sg") {
          out += stem + "as";
        } else if (form == "1pl") {
          out += stem + "amos";
        } else {
          out += stem + "ar";
        }
        break;
      }
      default: break;
    }
  }
  return capitalize_first_letter(out);
}

std::set<std::string> reserved_words() {
  std::set<std::string> out;
  for (const auto& w : template_words()) out.insert(w);
  return out;
}

// Builds `count` distinct words. `make` draws one candidate; `forms` expands
// a candidate to every surface form it will take in text.
template <typename Make, typename Forms>
std::vector<std::string> draw_words(std::size_t count, SplitMix64& rng, std::set<std::string>& taken,
                                    Make make, Forms forms) {
  std::vector<std::string> out;
  out.reserve(count);
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > count * 200 + 10000) {
      throw Error(ErrorCode::EmptyLexicon, "pseudo-word space exhausted; request fewer words");
    }
    std::string w = make(rng);
    auto surface = forms(w);
    bool clash = false;
    for (const auto& f : surface) clash = clash || taken.count(text::fold_case(f)) > 0;
    if (clash) continue;
    for (const auto& f : surface) taken.insert(text::fold_case(f));
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

std::vector<std::string> template_words() {
  std::set<std::string> words;
  for (const auto& t : kTemplates) {
    for (auto side : {t.en, t.es}) {
      // blank out slot markers such as $N0 or $V0:inf before scanning
      std::string literal(side);
      for (std::size_t pos = 0; (pos = literal.find('$', pos)) != std::string::npos;) {
        std::size_t end = pos + 3;
        if (end < literal.size() && literal[end] == ':') {
          ++end;
          while (end < literal.size() && std::isalnum(static_cast<unsigned char>(literal[end]))) ++end;
        }
        literal.replace(pos, end - pos, " ");
      }
      for (auto w : text::regex_words(literal)) words.insert(text::fold_case(w));
    }
  }
  return {words.begin(), words.end()};
}

FixtureLexicons default_lexicons(std::size_t nouns, std::size_t verbs, std::size_t adjectives) {
  // Every EN word starts with a consonant from kEnOnly; no ES word contains one.
  static constexpr std::string_view kEnOnly[] = {"b", "d", "f", "g", "k", "m", "p", "t", "v", "z", "w", "h"};
  static constexpr std::string_view kEnAny[] = {"b", "d", "f", "g", "k", "m", "p", "t", "v", "z",
                                                "w", "h", "l", "r", "n", "s"};
  static constexpr std::string_view kEnVowels[] = {"a", "e", "i", "o", "u", "ee", "oo", "ai"};
  static constexpr std::string_view kEsCons[] = {"c", "l", "ñ", "r", "s", "j", "ch", "ll", "n"};
  static constexpr std::string_view kEsFinal[] = {"l", "r", "s", "n", "c", "j"};
  static constexpr std::string_view kEsVowels[] = {"a", "e", "i", "o", "u", "a", "e", "o", "á", "é", "í", "ó", "ú"};

  auto pick = [](SplitMix64& rng, const auto& arr) {
    return std::string(arr[rng.below(std::size(arr))]);
  };

  SplitMix64 rng(0x5EEDF1C7ULL);
  std::set<std::string> en_taken = reserved_words();
  std::set<std::string> es_taken = reserved_words();

  auto en_word = [&](SplitMix64& r) {
    std::string w = pick(r, kEnOnly) + pick(r, kEnVowels) + pick(r, kEnAny);
    if (r.below(3) != 0) w += pick(r, kEnVowels) + pick(r, kEnAny);
    return w;
  };
  auto en_adj = [&](SplitMix64& r) { return en_word(r) + "y"; };
  auto single = [](const std::string& w) { return std::vector<std::string>{w}; };

  auto es_noun = [&](SplitMix64& r) {
    std::string w;
    const std::size_t syl = 2 + r.below(2);
    for (std::size_t i = 0; i < syl; ++i) w += pick(r, kEsCons) + pick(r, kEsVowels);
    return w;
  };
  auto es_adj = [&](SplitMix64& r) {
    return pick(r, kEsCons) + pick(r, kEsVowels) + pick(r, kEsCons) + "o";
  };
  auto es_stem = [&](SplitMix64& r) {
    std::string w = pick(r, kEsCons) + pick(r, kEsVowels);
    if (r.coin()) w += pick(r, kEsCons) + pick(r, kEsVowels);
    return w + pick(r, kEsFinal);
  };
  auto es_verb_forms = [](const std::string& stem) {
    return std::vector<std::string>{stem + "ar", stem + "o", stem + "as", stem + "amos"};
  };

  FixtureLexicons lex;
  lex.en.nouns = draw_words(nouns, rng, en_taken, en_word, single);
  lex.en.verbs = draw_words(verbs, rng, en_taken, en_word, single);
  lex.en.adjectives = draw_words(adjectives, rng, en_taken, en_adj, single);
  lex.es.nouns = draw_words(nouns, rng, es_taken, es_noun, single);
  lex.es.verbs = draw_words(verbs, rng, es_taken, es_stem, es_verb_forms);
  lex.es.adjectives = draw_words(adjectives, rng, es_taken, es_adj, single);
  return lex;
}

DialogueMeta fixture_meta(std::size_t index, Variant variant) {
  char id[16];
  std::snprintf(id, sizeof id, "d%07zu", index);
  DialogueMeta m;
  m.id = id;
  m.adult_speaker = index % 2 == 0 ? Speaker::Mom : Speaker::Dad;
  m.context = (index / 2) % 2 == 0 ? Context::Home : Context::Public;
  m.child_age = kAges[(index / 4) % kAges.size()];
  m.variant = variant;
  return m;
}

ParallelCorpora generate_fixture(std::uint64_t seed, std::size_t n_dialogues, const FixtureLexicons& lexicons) {
  for (const auto* side : {&lexicons.en, &lexicons.es}) {
    if (side->nouns.empty() || side->verbs.empty() || side->adjectives.empty()) {
      throw Error(ErrorCode::EmptyLexicon, "every word class needs at least one entry");
    }
  }
  if (lexicons.en.nouns.size() != lexicons.es.nouns.size() ||
      lexicons.en.verbs.size() != lexicons.es.verbs.size() ||
      lexicons.en.adjectives.size() != lexicons.es.adjectives.size()) {
    throw Error(ErrorCode::EmptyLexicon, "EN and ES lexicons must be index-aligned translations");
  }

  const ZipfSampler noun_dist(lexicons.en.nouns.size());
  const ZipfSampler verb_dist(lexicons.en.verbs.size());
  const ZipfSampler adj_dist(lexicons.en.adjectives.size());
  int total_weight = 0;
  for (const auto& t : kTemplates) total_weight += t.weight;

  std::vector<Dialogue> en;
  std::vector<Dialogue> es;
  en.reserve(n_dialogues);
  es.reserve(n_dialogues);
  for (std::size_t i = 0; i < n_dialogues; ++i) {
    Dialogue de{fixture_meta(i, Variant::EN), {}};
    Dialogue ds{fixture_meta(i, Variant::ES), {}};
    auto rng = stream_for(seed, de.meta.id, "fixture");

    std::array<std::size_t, 3> topic_nouns{};
    std::array<std::size_t, 2> topic_verbs{};
    std::array<std::size_t, 2> topic_adjs{};
    for (auto& n : topic_nouns) n = noun_dist(rng);
    for (auto& v : topic_verbs) v = verb_dist(rng);
    for (auto& a : topic_adjs) a = adj_dist(rng);

    const std::size_t n_turns = rng.coin() ? 5 : 10;
    for (std::size_t t = 0; t < n_turns; ++t) {
      const Speaker speaker = t % 2 == 0 ? de.meta.adult_speaker : Speaker::Child;
      const std::size_t n_sentences = 1 + rng.below(3);
      std::string en_text;
      std::string es_text;
      for (std::size_t s = 0; s < n_sentences; ++s) {
        int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(total_weight)));
        const Template* tmpl = &kTemplates[0];
        for (const auto& cand : kTemplates) {
          if (r < cand.weight) {
            tmpl = &cand;
            break;
          }
          r -= cand.weight;
        }
        SlotChoices c;
        for (auto& n : c.nouns) n = rng.uniform() < 0.6 ? topic_nouns[rng.below(3)] : noun_dist(rng);
        for (auto& a : c.adjectives) a = rng.uniform() < 0.6 ? topic_adjs[rng.below(2)] : adj_dist(rng);
        for (auto& v : c.verbs) v = rng.uniform() < 0.6 ? topic_verbs[rng.below(2)] : verb_dist(rng);
        if (s > 0) {
          en_text.push_back(' ');
          es_text.push_back(' ');
        }
        en_text += realize(tmpl->en, c, lexicons.en, false);
        es_text += realize(tmpl->es, c, lexicons.es, true);
      }
      de.turns.push_back(Turn{speaker, std::move(en_text)});
      ds.turns.push_back(Turn{speaker, std::move(es_text)});
    }
    en.push_back(std::move(de));
    es.push_back(std::move(ds));
  }
  return ParallelCorpora{Corpus(std::move(en)), Corpus(std::move(es))};
}

}  // namespace exposure
