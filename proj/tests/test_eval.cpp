#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "exposure/bpe.hpp"
#include "exposure/digest.hpp"
#include "exposure/errors.hpp"
#include "exposure/eval.hpp"
#include "exposure/fixture.hpp"
#include "exposure/fixture_bench.hpp"
#include "exposure/random.hpp"
#include "exposure/text.hpp"
#include "test_support.hpp"

using namespace exposure;

namespace {

// log p(t_i | span) = -(1 + 0.001 * i + 0.01 * (t_i % 7)), i the position inside
// the span, so the score of a token reveals how much context it was given.
class ContextProbe final : public ScoringModel {
 public:
  explicit ContextProbe(std::size_t window) : window_(window) {}
  std::size_t context_window() const override { return window_; }
  std::vector<double> log_probs(std::span<const TokenId> tokens) const override {
    std::vector<double> out;
    for (std::size_t i = 1; i < tokens.size(); ++i) out.push_back(value(i, tokens[i]));
    return out;
  }
  static double value(std::size_t context, TokenId t) { return -(1.0 + 0.001 * static_cast<double>(context) + 0.01 * (t % 7)); }

 private:
  std::size_t window_;
};

// Scores every token independently with the longest context the window allows.
double max_context_nll(const ScoringModel& model, std::span<const TokenId> tokens, std::size_t window) {
  double nll = 0.0;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const std::size_t begin = i + 1 > window ? i + 1 - window : 0;
    nll -= model.last_log_prob(tokens.subspan(begin, i + 1 - begin));
  }
  return nll;
}

// Strided evaluation re-derived per token: token i is scored by the first
// window whose end passes it, and sees the tokens from that window's start.
double strided_oracle_nll(std::span<const TokenId> tokens, std::size_t window, std::size_t stride) {
  double nll = 0.0;
  const std::size_t n = tokens.size();
  for (std::size_t i = 1; i < n; ++i) {
    std::size_t k = 0;
    while (std::min(k * stride + window, n) <= i) ++k;
    nll -= ContextProbe::value(i - k * stride, tokens[i]);
  }
  return nll;
}

TokenSeq random_tokens(std::size_t n, TokenId vocab, SplitMix64& rng) {
  TokenSeq s(n);
  for (auto& t : s) t = static_cast<TokenId>(std::min(rng.below(vocab), rng.below(vocab)));
  return s;
}

double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) {
        less += w < v[i];
        equal += w == v[i];
      }
      r[i] = less + (equal + 1) / 2;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sx += rx[i];
    sy += ry[i];
    sxx += rx[i] * rx[i];
    syy += ry[i] * ry[i];
    sxy += rx[i] * ry[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// Fixed vectors per token id; layer 1 is a copy of the table, layer 0 noise.
class TableEmbeddings final : public EmbeddingProvider {
 public:
  TableEmbeddings(std::vector<std::vector<double>> table, std::size_t layers) : table_(std::move(table)), layers_(layers) {}
  std::size_t n_layers() const override { return layers_; }
  std::size_t dim() const override { return 2; }
  std::size_t vocab_size() const override { return table_.size(); }
  std::vector<double> vector(TokenId id, std::size_t layer) const override {
    if (layer + 1 == layers_) return table_.at(id);
    SplitMix64 rng(id * 31 + layer);
    return {rng.uniform() - 0.5, rng.uniform() - 0.5};
  }

 private:
  std::vector<std::vector<double>> table_;
  std::size_t layers_;
};

std::vector<MinimalPairItem> random_items(std::size_t n) {
  std::vector<MinimalPairItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    items.push_back({"u" + std::to_string(i), std::string(kZorroPhenomena[i % 13]), "good " + std::to_string(i),
                     "bad " + std::to_string(i)});
  }
  return items;
}

}  // namespace

TEST(WindowPlan, CoversEveryPositionOnce) {
  for (std::size_t n : {1u, 2u, 5u, 1024u, 1025u, 1500u, 3000u}) {
    std::vector<int> seen(n, 0);
    for (const auto& w : window_plan(n, 1024, 512)) {
      EXPECT_LE(w.end - w.begin, 1024u);
      for (std::size_t p = w.score_from; p < w.end; ++p) ++seen[p];
    }
    if (n > 0) EXPECT_EQ(seen[0], 0);
    for (std::size_t p = 1; p < n; ++p) EXPECT_EQ(seen[p], 1) << "n=" << n << " p=" << p;
  }
  EXPECT_THROW(window_plan(10, 4, 5), Error);
}

TEST(SlidingWindow, ShortSequenceIsFullContext) {
  SplitMix64 rng(1);
  const auto toks = random_tokens(300, 50, rng);
  const auto lm = train_ngram(random_tokens(5000, 50, rng), 3);
  const auto lp = lm.log_probs(toks);
  const double full = -std::accumulate(lp.begin(), lp.end(), 0.0);
  const auto r = sliding_window_nll(lm, toks, 1024, 512);
  EXPECT_NEAR(r.nll, full, 1e-9 * full);
  EXPECT_EQ(r.tokens, 299u);
}

TEST(SlidingWindow, UniformClosedForm) {
  const UniformLm lm(1234);
  SplitMix64 rng(2);
  for (std::size_t n : {2u, 100u, 2049u}) {
    const auto r = sliding_window_nll(lm, random_tokens(n, 1234, rng), 1024, 512);
    EXPECT_NEAR(r.nll, static_cast<double>(n - 1) * std::log(1235.0), 1e-9 * r.nll);
  }
}

TEST(SlidingWindow, MatchesStridedOracleExactly) {
  const ContextProbe probe(1024);
  SplitMix64 rng(4);
  for (std::size_t n : {1500u, 1024u, 1025u, 2600u}) {
    const auto toks = random_tokens(n, 90, rng);
    const auto r = sliding_window_nll(probe, toks, 1024, 512);
    EXPECT_EQ(r.tokens, n - 1);
    EXPECT_NEAR(r.nll, strided_oracle_nll(toks, 1024, 512), 1e-9 * r.nll);
  }
}

TEST(SlidingWindow, MatchesMaxContextOracleForNgram) {
  SplitMix64 rng(5);
  const auto lm = train_ngram(random_tokens(20000, 80, rng), 3);
  for (int k = 0; k < 10; ++k) {
    const auto toks = random_tokens(100 + rng.below(2901), 85, rng);
    const auto r = sliding_window_nll(lm, toks, 1024, 512);
    const double oracle = max_context_nll(lm, toks, 1024);
    EXPECT_NEAR(r.nll, oracle, 1e-9 * oracle);
  }
}

TEST(SlidingWindow, Errors) {
  const UniformLm lm(10, 64);
  EXPECT_THROW(sliding_window_nll(lm, TokenSeq{}, 64, 32), Error);
  EXPECT_THROW(sliding_window_nll(lm, TokenSeq{1, 2}, 128, 32), Error);
}

TEST(Perplexity, UniformIsVPlusOne) {
  const auto fx = generate_fixture(42, 50, default_lexicons());
  const auto bpe = train_bpe(fx.en, 500);
  const UniformLm lm(bpe.vocab_size());
  const auto r = perplexity(lm, fx.en, bpe);
  EXPECT_NEAR(r.ppl, static_cast<double>(bpe.vocab_size() + 1), 1e-9 * static_cast<double>(bpe.vocab_size()));
  std::size_t expected_tokens = 0;
  for (const auto& d : fx.en) expected_tokens += bpe.encode(serialize_training_line(d)).size();
  EXPECT_EQ(r.tokens, expected_tokens);  // every line token, EOS included
  EXPECT_EQ(r.lines, 50u);
}

TEST(Perplexity, WorkersDoNotChangeResult) {
  const auto fx = generate_fixture(42, 120, default_lexicons());
  const auto bpe = train_bpe(fx.es, 500);
  TokenSeq stream;
  for (const auto& d : fx.es) {
    auto ids = bpe.encode(serialize_training_line(d));
    stream.insert(stream.end(), ids.begin(), ids.end());
  }
  const auto lm = train_ngram(stream, 3);
  const auto a = perplexity(lm, fx.es, bpe, {1024, 512, 1});
  const auto b = perplexity(lm, fx.es, bpe, {1024, 512, 4});
  EXPECT_EQ(a.nll, b.nll);
  EXPECT_EQ(a.tokens, b.tokens);
}

TEST(MinimalPairs, ConstructedOracleScoresPerfectly) {
  const auto items = random_items(500);
  const auto r = score_minimal_pairs([](const std::string& s) { return s.rfind("good", 0) == 0 ? 1.0 : 0.0; }, items);
  EXPECT_EQ(r.accuracy(), 1.0);
  EXPECT_EQ(r.by_phenomenon.size(), 13u);
}

TEST(MinimalPairs, ConstantScoresAreTies) {
  const auto items = random_items(100);
  const auto r = score_minimal_pairs([](const std::string&) { return -5.0; }, items);
  EXPECT_EQ(r.accuracy(), 0.0);
  EXPECT_EQ(r.ties, 100u);
  // through a real model and tokenizer too
  const BpeModel bytes;
  const UniformLm lm(257);
  std::vector<MinimalPairItem> same_length = {{"a", "binding", "abc", "abd"}};
  const auto m = score_minimal_pairs(lm, same_length, bytes);
  EXPECT_EQ(m.ties, 1u);
  EXPECT_EQ(m.correct, 0u);
}

TEST(MinimalPairs, RandomScorerNearChance) {
  const auto items = random_items(10000);
  const auto r = score_minimal_pairs(
      [](const std::string& s) { return SplitMix64(fnv1a64(s)).uniform(); }, items);
  EXPECT_GE(r.accuracy(), 0.47);
  EXPECT_LE(r.accuracy(), 0.53);
}

TEST(MinimalPairs, MonotoneTransformInvariance) {
  const auto items = random_items(2000);
  auto base = [](const std::string& s) { return -static_cast<double>(fnv1a64(s) % 1000) / 37.0; };
  const auto a = score_minimal_pairs(base, items);
  const auto b = score_minimal_pairs([&](const std::string& s) { return 3.0 * base(s) + 7.0; }, items);
  const auto c = score_minimal_pairs([&](const std::string& s) { return std::exp(base(s)); }, items);
  EXPECT_EQ(a.correct, b.correct);
  EXPECT_EQ(a.correct, c.correct);
  EXPECT_EQ(a.ties, b.ties);
  for (const auto& [k, v] : a.by_phenomenon) EXPECT_EQ(v.correct, c.by_phenomenon.at(k).correct);
}

TEST(MinimalPairs, PrefixIsPrepended) {
  std::vector<MinimalPairItem> items = {{"1", "binding", "x", "y"}};
  std::vector<std::string> seen;
  score_minimal_pairs(
      [&](const std::string& s) {
        seen.push_back(s);
        return 0.0;
      },
      items, kMomPrefix);
  EXPECT_EQ(seen, (std::vector<std::string>{"**Mom**: x", "**Mom**: y"}));
  EXPECT_THROW(score_minimal_pairs([](const std::string&) { return 0.0; }, std::span<const MinimalPairItem>{}), Error);
}

TEST(MinimalPairs, SentenceLogProbSumsWithLeadingEos) {
  const BpeModel bytes;
  const UniformLm lm(257);
  EXPECT_NEAR(sentence_log_prob(lm, bytes, "abcd"), -4 * std::log(258.0), 1e-12);
}

TEST(Spearman, BasicCases) {
  const std::vector<double> a = {1, 2, 3, 4, 5};
  const std::vector<double> r = {5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(a, a), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, r), -1.0);
  const std::vector<double> x = {1, 2, 2, 4};
  const std::vector<double> y = {10, 20, 30, 40};
  EXPECT_NEAR(spearman(x, y), 0.9486832980505138, 1e-15);
  EXPECT_NEAR(spearman(x, y), brute_spearman(x, y), 1e-12);
  EXPECT_EQ(average_ranks(x), (std::vector<double>{1, 2.5, 2.5, 4}));
}

TEST(Spearman, MatchesBruteForceWithTies) {
  SplitMix64 rng(6);
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.below(8));
      y[i] = static_cast<double>(rng.below(12)) * 0.5;
    }
    const bool constant_x = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    const bool constant_y = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (constant_x || constant_y) {
      EXPECT_THROW(spearman(x, y), Error);
      continue;
    }
    ASSERT_NEAR(spearman(x, y), brute_spearman(x, y), 1e-12);
  }
}

TEST(WordSimilarity, EncodedGoldGivesPerfectCorrelation) {
  const BpeModel bytes;
  std::vector<std::vector<double>> table(257, std::vector<double>{1.0, 0.0});
  std::vector<WordPairItem> items;
  for (int i = 0; i < 26; ++i) {
    const double gold = static_cast<double>(i) / 4.0;
    const double theta = 1.5 - 0.05 * i;  // higher gold, smaller angle
    const char w2 = static_cast<char>('A' + i);
    table[static_cast<unsigned char>(w2)] = {std::cos(theta), std::sin(theta)};
    items.push_back({std::string(1, static_cast<char>('a' + i)), std::string(1, w2), gold});
  }
  const TableEmbeddings single(table, 1);
  const auto r1 = word_similarity_eval(single, items, bytes);
  EXPECT_EQ(r1.best_layer, 0u);
  EXPECT_NEAR(r1.best, 1.0, 1e-12);
  const TableEmbeddings three(table, 3);
  const auto r3 = word_similarity_eval(three, items, bytes);
  EXPECT_EQ(r3.per_layer.size(), 3u);
  EXPECT_EQ(r3.best_layer, 2u);
  EXPECT_NEAR(r3.best, 1.0, 1e-12);
  EXPECT_EQ(r3.used, 26u);
}

TEST(WordSimilarity, MissingVectorsDropped) {
  const BpeModel bytes;
  std::vector<std::vector<double>> table(257, std::vector<double>{1.0, 0.5});
  table['z'] = {0.0, 0.0};
  table['a'] = {0.2, 1.0};
  std::vector<WordPairItem> items = {{"a", "b", 1}, {"c", "d", 2}, {"z", "b", 3}, {"a", "c", 0}};
  const auto r = word_similarity_eval(TableEmbeddings(table, 1), items, bytes);
  EXPECT_EQ(r.missing, 1u);
  EXPECT_EQ(r.used, 3u);
  EXPECT_THROW(word_vector(TableEmbeddings(table, 1), bytes, "z", 0), Error);
}

TEST(WordSimilarity, TrainedEmbeddingsRecoverWordClasses) {
  const auto lex = default_lexicons();
  const auto fx = generate_fixture(42, 3000, lex);
  const auto bpe = train_bpe(fx.en, 4000);
  TokenSeq stream;
  for (const auto& d : fx.en) {
    auto ids = bpe.encode(serialize_training_line(d));
    stream.insert(stream.end(), ids.begin(), ids.end());
  }
  SgnsConfig cfg;
  cfg.epochs = 3;
  const auto emb = train_sgns(stream, bpe.vocab_size(), cfg);
  std::vector<WordPairItem> en_pairs;
  for (const auto& w : fixture_word_pairs(lex, 200, 42)) {
    if (w.lang1 == Language::EN && w.lang2 == Language::EN) en_pairs.push_back(w);
  }
  const auto r = word_similarity_eval(emb, en_pairs, bpe);
  EXPECT_GT(r.best, 0.5);
}

TEST(Filter, UniversalVocabularyKeepsAll) {
  const auto lex = default_lexicons();
  const auto items = fixture_minimal_pairs(lex, 100, 1);
  VocabSet all;
  for (const auto& it : items) {
    for (const auto* s : {&it.good, &it.bad}) {
      for (const auto& tok : text::linguistic_tokens(*s)) all.insert(text::fold_case(tok));
    }
  }
  const VocabSet* sets[] = {&all, &all};
  const auto f = filter_by_vocab(items, sets);
  EXPECT_EQ(f.ratio(), 1.0);
}

TEST(Filter, PlantedOovItemsDropped) {
  Corpus a({Dialogue{{"1", Speaker::Mom, Context::Home, 5, Variant::EN},
                     {{Speaker::Mom, "The dog sees a Cat."}, {Speaker::Child, "Dogs run!"}}}});
  Corpus b({Dialogue{{"1", Speaker::Dad, Context::Home, 5, Variant::EN},
                     {{Speaker::Dad, "the dog sees a cat and a bird."}, {Speaker::Child, "dogs run"}}}});
  const auto va = build_vocab(a);
  const auto vb = build_vocab(b);
  EXPECT_TRUE(va.count("cat"));
  const VocabSet* sets[] = {&va, &vb};
  std::vector<MinimalPairItem> items = {
      {"keep", "binding", "The dog sees a cat.", "A dog sees the cat."},
      {"drop-bird", "binding", "The dog sees a bird.", "The bird sees a dog."},  // bird only in b
      {"drop-zebra", "binding", "Dogs run.", "Zebra run."},
      {"keep-punct", "binding", "Dogs run!", "Dogs... run?"},
  };
  const auto f = filter_by_vocab(items, sets);
  ASSERT_EQ(f.kept.size(), 2u);
  EXPECT_EQ(f.kept[0].uid, "keep");
  EXPECT_EQ(f.kept[1].uid, "keep-punct");
  EXPECT_EQ(f.total, 4u);
}

TEST(Filter, WordPairsUseTheirOwnLanguage) {
  VocabSet en = {"dog", "cat"};
  VocabSet es = {"perro", "gato"};
  LanguageVocabs v;
  v.en = {&en};
  v.es = {&es};
  std::vector<WordPairItem> items = {{"dog", "perro", 2, Language::EN, Language::ES},
                                     {"perro", "dog", 2, Language::EN, Language::ES},
                                     {"Cat", "dog", 1, Language::EN, Language::EN}};
  const auto f = filter_by_vocab(items, v);
  ASSERT_EQ(f.kept.size(), 2u);
  EXPECT_EQ(f.kept[1].w1, "Cat");
}

TEST(Aggregate, SingleRunAndEqualRuns) {
  const std::vector<MetricMap> one = {{{"ppl", 3.5}}};
  const auto r = aggregate_runs(one);
  EXPECT_EQ(r.metrics.at("ppl").mean, 3.5);
  EXPECT_EQ(r.metrics.at("ppl").std, 0.0);
  const std::vector<MetricMap> three = {{{"ppl", 2.0}}, {{"ppl", 2.0}}, {{"ppl", 2.0}}};
  EXPECT_EQ(aggregate_runs(three).metrics.at("ppl").std, 0.0);
  EXPECT_EQ(aggregate_runs(three).runs, 3u);
}

TEST(Aggregate, MirroredPairHandArithmetic) {
  const std::vector<MetricMap> runs = {{{"acc", 70.0}}, {{"acc", 80.0}}};
  const std::vector<MetricMap> mirror = {{{"acc", 60.0}}, {{"acc", 90.0}}};
  const auto r = aggregate_runs(runs, std::span<const MetricMap>(mirror));
  EXPECT_EQ(r.metrics.at("acc").values, (std::vector<double>{65.0, 85.0}));
  EXPECT_DOUBLE_EQ(r.metrics.at("acc").mean, 75.0);
  EXPECT_NEAR(r.metrics.at("acc").std, 14.142135623730951, 1e-12);
  EXPECT_TRUE(r.mirrored);
}

TEST(Aggregate, MismatchedKeysRejected) {
  const std::vector<MetricMap> runs = {{{"a", 1.0}}, {{"b", 1.0}}};
  try {
    aggregate_runs(runs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MismatchedMetricKeys);
  }
}

TEST(BenchmarkFiles, RoundTripAndValidation) {
  test_support::TempDir dir;
  const auto lex = default_lexicons();
  const auto pairs = fixture_minimal_pairs(lex, 40, 3);
  const auto words = fixture_word_pairs(lex, 10, 3);
  save_minimal_pairs(dir / "mp.tsv", pairs);
  save_word_pairs(dir / "wp.tsv", words);
  const auto p2 = load_minimal_pairs(dir / "mp.tsv");
  ASSERT_EQ(p2.size(), pairs.size());
  EXPECT_EQ(p2[7].good, pairs[7].good);
  const auto w2 = load_word_pairs(dir / "wp.tsv");
  ASSERT_EQ(w2.size(), 30u);
  EXPECT_EQ(w2[29].lang2, words[29].lang2);

  write_file(dir / "bad.tsv", "1\tnot_a_phenomenon\ta b\tb a\n");
  try {
    load_minimal_pairs(dir / "bad.tsv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadBenchmarkFile);
  }
  write_file(dir / "same.tsv", "1\tbinding\ta b\ta b\n");
  EXPECT_THROW(load_minimal_pairs(dir / "same.tsv"), Error);
}

TEST(FixtureBenchmarks, PairsDifferAndCoverFourPhenomena) {
  const auto lex = default_lexicons();
  const auto pairs = fixture_minimal_pairs(lex, 400, 42);
  std::set<std::string> phenomena;
  for (const auto& p : pairs) {
    EXPECT_NE(p.good, p.bad);
    EXPECT_TRUE(is_known_phenomenon(p.phenomenon));
    phenomena.insert(p.phenomenon);
  }
  EXPECT_EQ(phenomena.size(), 4u);
  const auto words = fixture_word_pairs(lex, 50, 42);
  EXPECT_EQ(words.size(), 150u);
}
