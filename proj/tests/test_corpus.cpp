#include <gtest/gtest.h>

#include <clocale>
#include <cwchar>
#include <cwctype>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "exposure/corpus.hpp"
#include "exposure/digest.hpp"
#include "exposure/errors.hpp"
#include "exposure/fixture.hpp"
#include "exposure/text.hpp"
#include "test_support.hpp"

using namespace exposure;

namespace {

constexpr const char* kSampleRaw =
    "PARTICIPANTS: Dad, Child\n"
    "SETTING: kitchen, after dinner\n"
    "DIALOGUE:\n"
    "**Dad**: Could you carry your plate to the sink? It’s your turn tonight.\n"
    "\n"
    "**Child**: Can I dry the spoons instead? I don’t like the wet ones.\n"
    "\n"
    "**Dad**: Sure, you dry and I’ll wash. Then we’ll read the dinosaur book.\n"
    "\n"
    "**Child**: The one with the big teeth!\n";

DialogueMeta meta(std::string id, Speaker s = Speaker::Mom) {
  DialogueMeta m;
  m.id = std::move(id);
  m.adult_speaker = s;
  return m;
}

Dialogue two_turns() {
  Dialogue d{meta("d1"), {{Speaker::Mom, "Hi."}, {Speaker::Child, "Hi!"}}};
  return d;
}

// Regex-word oracle built on the C library's wide-character classes.
std::vector<std::string> oracle_words(const std::string& s) {
  std::vector<std::string> words;
  std::mbstate_t state{};
  std::vector<std::pair<wchar_t, std::string>> chars;
  const char* p = s.data();
  const char* end = p + s.size();
  while (p < end) {
    wchar_t wc = 0;
    const std::size_t n = std::mbrtowc(&wc, p, static_cast<std::size_t>(end - p), &state);
    if (n == 0 || n > static_cast<std::size_t>(end - p)) {
      chars.emplace_back(L'�', std::string(p, 1));
      ++p;
      state = {};
      continue;
    }
    chars.emplace_back(wc, std::string(p, n));
    p += n;
  }
  auto word_char = [](wchar_t c) { return std::iswalnum(static_cast<wint_t>(c)) != 0; };
  auto apostrophe = [](wchar_t c) { return c == L'\'' || c == L'‘' || c == L'’'; };
  std::string cur;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    const wchar_t c = chars[i].first;
    // the two-character newline escape separates words
    if (c == L'\\' && i + 1 < chars.size() && chars[i + 1].first == L'n') {
      if (!cur.empty()) words.push_back(cur), cur.clear();
      ++i;
      continue;
    }
    if (word_char(c)) {
      cur += chars[i].second;
    } else if (apostrophe(c) && !cur.empty() && i + 1 < chars.size() && word_char(chars[i + 1].first)) {
      cur += chars[i].second;
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

}  // namespace

TEST(ParseDialogue, GeneratorOutputExample) {
  const auto d = parse_dialogue(kSampleRaw, meta("k1", Speaker::Dad));
  ASSERT_EQ(d.turns.size(), 4u);
  EXPECT_EQ(d.meta.adult_speaker, Speaker::Dad);
  EXPECT_EQ(d.turns[0].speaker, Speaker::Dad);
  EXPECT_EQ(d.turns[1].speaker, Speaker::Child);
  EXPECT_EQ(d.turns[3].text, "The one with the big teeth!");
}

TEST(ParseDialogue, EmptyDialogueSection) {
  try {
    parse_dialogue("PARTICIPANTS: Mom, Child\nDIALOGUE:\n\n", meta("e"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingDialogueSection);
  }
  EXPECT_THROW(parse_dialogue("**Mom**: hi", meta("e")), Error);
}

TEST(ParseDialogue, SpanishLabelsMapToRoles) {
  const auto d = parse_dialogue("DIALOGUE:\n**Mamá**: Hola.\n\n**Niño**: ¡Hola!\n", meta("s"));
  ASSERT_EQ(d.turns.size(), 2u);
  EXPECT_EQ(d.turns[0].speaker, Speaker::Mom);
  EXPECT_EQ(d.turns[1].speaker, Speaker::Child);
  EXPECT_EQ(speaker_from_label("PAPÁ"), Speaker::Dad);
  EXPECT_EQ(speaker_from_label("Grandma"), std::nullopt);
}

TEST(ParseDialogue, UnknownLabelRejected) {
  try {
    parse_dialogue("DIALOGUE:\n**Teacher**: Hello.\n", meta("u"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownSpeakerLabel);
  }
}

TEST(NormalizeDialogue, AsciiQuotes) {
  Dialogue d{meta("q"), {{Speaker::Mom, "“Hello”"}, {Speaker::Child, "It’s me."}}};
  const auto n = normalize_dialogue(d);
  EXPECT_EQ(n.turns[0].text, "\"Hello\"");
  EXPECT_EQ(n.turns[1].text, "It's me.");
}

TEST(NormalizeDialogue, RawNewlineEscaped) {
  Dialogue d{meta("n"), {{Speaker::Mom, "one\ntwo"}, {Speaker::Child, "ok"}}};
  const auto n = normalize_dialogue(d);
  EXPECT_EQ(n.turns[0].text, "one\\ntwo");
}

TEST(NormalizeDialogue, Idempotent) {
  const auto once = normalize_dialogue(parse_dialogue(kSampleRaw, meta("k1", Speaker::Dad)));
  EXPECT_EQ(normalize_dialogue(once), once);
}

TEST(SerializeTrainingLine, TwoTurns) {
  EXPECT_EQ(serialize_training_line(two_turns()), "**Mom**: Hi.\\n\\n**Child**: Hi!<|endoftext|>");
}

TEST(SerializeTrainingLine, NormalizedSample) {
  const auto d = normalize_dialogue(parse_dialogue(kSampleRaw, meta("k1", Speaker::Dad)));
  const std::string expected =
      "**Dad**: Could you carry your plate to the sink? It's your turn tonight.\\n\\n"
      "**Child**: Can I dry the spoons instead? I don't like the wet ones.\\n\\n"
      "**Dad**: Sure, you dry and I'll wash. Then we'll read the dinosaur book.\\n\\n"
      "**Child**: The one with the big teeth!<|endoftext|>";
  EXPECT_EQ(serialize_training_line(d), expected);
}

TEST(SerializeTrainingLine, RoundTrip) {
  const auto d = normalize_dialogue(parse_dialogue(kSampleRaw, meta("k1", Speaker::Dad)));
  EXPECT_EQ(parse_training_line(serialize_training_line(d), d.meta), d);
  const auto fx = generate_fixture(7, 50, default_lexicons());
  for (const auto& dlg : fx.es) EXPECT_EQ(parse_training_line(serialize_training_line(dlg), dlg.meta), dlg);
}

TEST(SerializeTrainingLine, RejectsRawNewline) {
  EXPECT_THROW(parse_training_line("**Mom**: a\nb<|endoftext|>", meta("x")), Error);
  EXPECT_THROW(parse_training_line("**Mom**: ab", meta("x")), Error);
}

TEST(WordStats, TinyCorpus) {
  Corpus c({Dialogue{meta("a"), {{Speaker::Mom, "a b a"}}}});
  const auto s = word_stats(c);
  EXPECT_EQ(s.total_words, 3u);
  EXPECT_EQ(s.unique_regex, 2u);
}

TEST(WordStats, MatchesWideCharacterOracle) {
  ASSERT_NE(std::setlocale(LC_CTYPE, "C.UTF-8"), nullptr);
  const auto fx = generate_fixture(42, 10000, default_lexicons());
  for (const Corpus* c : {&fx.en, &fx.es}) {
    std::size_t total = 0;
    std::unordered_set<std::string> vocab;
    for (const auto& d : *c) {
      for (const auto& t : d.turns) {
        for (auto& w : oracle_words(t.text)) {
          ++total;
          vocab.insert(std::move(w));
        }
      }
    }
    const auto s = word_stats(*c);
    EXPECT_EQ(s.total_words, total);
    EXPECT_EQ(s.unique_regex, vocab.size());
    EXPECT_EQ(c->word_count(), total);
  }
}

TEST(WordStats, ApostrophesAndEscapes) {
  const auto words = text::regex_words("don't 'quoted' a\\nb it’s");
  std::vector<std::string> got(words.begin(), words.end());
  EXPECT_EQ(got, (std::vector<std::string>{"don't", "quoted", "a", "b", "it’s"}));
}

TEST(Fixture, SizesAndAlignment) {
  const auto fx = generate_fixture(42, 100, default_lexicons());
  ASSERT_EQ(fx.en.size(), 100u);
  ASSERT_EQ(fx.es.size(), 100u);
  EXPECT_EQ(fx.en.ids(), fx.es.ids());
  EXPECT_EQ(fx.en.variant(), Variant::EN);
  EXPECT_EQ(fx.es.variant(), Variant::ES);
  for (std::size_t i = 0; i < fx.en.size(); ++i) {
    EXPECT_EQ(fx.en[i].turns.size(), fx.es[i].turns.size());
    EXPECT_EQ(fx.en[i].meta.adult_speaker, fx.es[i].meta.adult_speaker);
  }
}

TEST(Fixture, Deterministic) {
  const auto a = generate_fixture(42, 200, default_lexicons());
  const auto b = generate_fixture(42, 200, default_lexicons());
  EXPECT_EQ(corpus_lines(a.en), corpus_lines(b.en));
  EXPECT_EQ(corpus_lines(a.es), corpus_lines(b.es));
  const auto c = generate_fixture(43, 200, default_lexicons());
  EXPECT_NE(corpus_lines(a.en), corpus_lines(c.en));
}

TEST(Fixture, ContentVocabulariesDisjoint) {
  const auto fx = generate_fixture(42, 2000, default_lexicons());
  auto content = [](const Corpus& c) {
    std::set<std::string> out;
    for (const auto& d : c) {
      for (const auto& t : d.turns) {
        for (auto w : text::regex_words(t.text)) out.insert(text::fold_case(w));
      }
    }
    return out;
  };
  const auto en = content(fx.en);
  const auto es = content(fx.es);
  std::vector<std::string> shared;
  std::set_intersection(en.begin(), en.end(), es.begin(), es.end(), std::back_inserter(shared));
  EXPECT_TRUE(shared.empty()) << "first shared word: " << (shared.empty() ? "" : shared.front());
  // labels and punctuation are the only common material
  EXPECT_NE(corpus_lines(fx.en).find("**Mom**"), std::string::npos);
  EXPECT_NE(corpus_lines(fx.es).find("**Mom**"), std::string::npos);
}

TEST(Fixture, EmptyLexiconRejected) {
  auto lex = default_lexicons();
  lex.es.nouns.clear();
  try {
    generate_fixture(1, 10, lex);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyLexicon);
  }
}

TEST(CorpusFiles, WriteReadRoundTrip) {
  test_support::TempDir dir;
  const auto fx = generate_fixture(3, 40, default_lexicons());
  write_corpus(fx.es, dir / "es.txt", dir / "es.meta.json");
  const auto back = read_corpus(dir / "es.txt", dir / "es.meta.json");
  EXPECT_EQ(back.dialogues(), fx.es.dialogues());
  EXPECT_EQ(read_file(dir / "es.txt"), corpus_lines(fx.es));
}

TEST(CorpusFiles, DuplicateIdsRejected) {
  try {
    Corpus c({two_turns(), two_turns()});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateId);
  }
}

TEST(CorpusFiles, RawIngest) {
  test_support::TempDir dir;
  nlohmann::json rec{{"id", "r1"},
                     {"adult_speaker", "Dad"},
                     {"context", "public"},
                     {"child_age", 10},
                     {"language_variant", "EN"},
                     {"raw", "SETTING: park\nDIALOGUE:\n**Father**: Look… a “duck”!\n\n**Child**: Wow."}};
  write_file(dir / "raw.jsonl", rec.dump() + "\n");
  const auto c = ingest_raw_jsonl(dir / "raw.jsonl");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].meta.adult_speaker, Speaker::Dad);
  EXPECT_EQ(c[0].meta.context, Context::Public);
  EXPECT_EQ(c[0].turns[0].speaker, Speaker::Dad);
  EXPECT_NE(c[0].turns[0].text.find("\"duck\""), std::string::npos);
}
