// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: exposure_acceptance [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "exposure/bpe.hpp"
#include "exposure/conditions.hpp"
#include "exposure/digest.hpp"
#include "exposure/embanalysis.hpp"
#include "exposure/errors.hpp"
#include "exposure/eval.hpp"
#include "exposure/fixture.hpp"
#include "exposure/fixture_bench.hpp"
#include "exposure/models.hpp"
#include "exposure/pipeline.hpp"
#include "exposure/random.hpp"
#include "exposure/text.hpp"
#include "test_support.hpp"

using namespace exposure;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------- 1

Outcome cs_run_constraint() {
  Outcome o;
  const auto fx = generate_fixture(42, 1000, default_lexicons());
  std::size_t es = 0, total = 0, violations = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (std::size_t i = 0; i < fx.en.size(); ++i) {
      const auto r = mix_cs_sentence(fx.en[i], fx.es[i], seed);
      // recover each emitted sentence's language from the text itself
      std::vector<Language> langs;
      for (std::size_t t = 0; t < r.dialogue.turns.size(); ++t) {
        const auto en_s = sentence_segment(fx.en[i].turns[t].text);
        const auto es_s = sentence_segment(fx.es[i].turns[t].text);
        const std::set<std::string> en_set(en_s.begin(), en_s.end());
        for (const auto& s : sentence_segment(r.dialogue.turns[t].text)) {
          langs.push_back(en_set.count(s) ? Language::EN : Language::ES);
        }
      }
      o.require(langs == r.choices, "text/choice disagreement in " + fx.en[i].id());
      std::size_t run = 0;
      for (std::size_t k = 0; k < langs.size(); ++k) {
        run = (k > 0 && langs[k] == langs[k - 1]) ? run + 1 : 1;
        if (run >= 4) ++violations;
        es += langs[k] == Language::ES;
        ++total;
      }
    }
  }
  const double share = static_cast<double>(es) / static_cast<double>(total);
  o.require(violations == 0, std::to_string(violations) + " runs of 4");
  o.require(share >= 0.45 && share <= 0.55, "L2 share out of range");
  o.note("sentences=" + std::to_string(total) + " L2 share=" + fmt(share));
  return o;
}

// ---------------------------------------------------------------- 2

Outcome exposure_ratio() {
  Outcome o;
  const auto fx = generate_fixture(42, 10000, default_lexicons());
  for (double p : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    const auto mixed = select_by_probability(fx.en, fx.es, p, 42);
    std::size_t es = 0;
    for (const auto& d : mixed) es += d.meta.variant == Variant::ES;
    const auto [lo, hi] = test_support::binomial_interval(10000, p, 1e-4);
    o.require(es >= lo && es <= hi, "p=" + fmt(p) + " count " + std::to_string(es));
    o.note("p=" + fmt(p) + ":" + std::to_string(es) + " in [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
  }
  return o;
}

// ---------------------------------------------------------------- 3

Outcome split_alignment() {
  Outcome o;
  const auto fx = generate_fixture(42, 2000, default_lexicons());
  Corpus cs_word = fx.es;  // stand-in for an ingested word-level corpus
  const ParallelInputs inputs{&fx.en, &fx.es, &cs_word};
  std::vector<ExposureSpec> specs;
  auto add = [&](std::string name, ConditionKind kind, std::optional<Language> lang = std::nullopt,
                 std::optional<SpeakerAssignment> assign = std::nullopt) {
    ExposureSpec s;
    s.name = std::move(name);
    s.kind = kind;
    s.language = lang;
    s.speaker_assignment = assign;
    specs.push_back(s);
  };
  add("topline", ConditionKind::Topline, Language::EN);
  add("baseline_random", ConditionKind::BaselineRandom, Language::ES);
  add("baseline_mom", ConditionKind::BaselineBySpeaker, Language::EN, SpeakerAssignment{Language::EN, Language::ES});
  add("multilingual_random", ConditionKind::MultilingualRandom);
  add("multilingual_mom_en", ConditionKind::MultilingualBySpeaker, std::nullopt,
      SpeakerAssignment{Language::EN, Language::ES});
  add("cs_sentence", ConditionKind::CsSentence);
  add("cs_word", ConditionKind::CsWordIngest);

  std::vector<std::map<std::string, bool>> membership;  // id -> is val
  for (const auto& s : specs) {
    const auto ds = build_condition(s, inputs);
    std::map<std::string, bool> m;
    for (const auto& d : ds.train) m[d.id()] = false;
    for (const auto& d : ds.val) m[d.id()] = true;
    const double n = static_cast<double>(m.size());
    const double err = std::abs(static_cast<double>(ds.val.size()) - 0.05 * n);
    o.require(err <= 1.0, s.name + " val " + std::to_string(ds.val.size()) + " of " + std::to_string(m.size()));
    membership.push_back(std::move(m));
  }
  std::size_t compared = 0;
  for (std::size_t a = 0; a < membership.size(); ++a) {
    for (std::size_t b = a + 1; b < membership.size(); ++b) {
      for (const auto& [id, val] : membership[a]) {
        auto it = membership[b].find(id);
        if (it == membership[b].end()) continue;
        ++compared;
        if (it->second != val) {
          o.require(false, specs[a].name + "/" + specs[b].name + " disagree on " + id);
          return o;
        }
      }
    }
  }
  o.note("kinds=7 shared-id comparisons=" + std::to_string(compared));
  return o;
}

// ---------------------------------------------------------------- 4

std::string random_utf8(SplitMix64& rng) {
  std::string s;
  const std::size_t n = rng.below(40);
  for (std::size_t i = 0; i < n; ++i) {
    switch (rng.below(6)) {
      case 0: s.push_back(static_cast<char>(rng.below(256))); break;  // arbitrary byte, possibly invalid
      case 1: s += "<|endoftext|>"; break;
      case 2: s.push_back(' '); break;
      default: {
        char32_t cp = static_cast<char32_t>(rng.below(0x10FFFF));
        if (cp >= 0xD800 && cp <= 0xDFFF) cp = U'ñ';
        text::append_utf8(s, cp);
      }
    }
  }
  return s;
}

Outcome bpe_correctness() {
  Outcome o;
  const auto fx = generate_fixture(42, 1500, default_lexicons());
  std::vector<std::string> lines;
  for (const auto& d : fx.en) lines.push_back(serialize_training_line(d));
  for (const auto& d : fx.es) lines.push_back(serialize_training_line(d));
  const auto a = train_bpe(lines, 3000);
  const auto b = train_bpe(lines, 3000);
  auto shuffled = lines;
  SplitMix64 rng(7);
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  const auto c = train_bpe(shuffled, 3000);
  o.require(a.vocab_size() == 3000, "vocab " + std::to_string(a.vocab_size()));
  o.require(!a.undersized(), "undersized");
  o.require(a.merges() == b.merges(), "merges differ across runs");
  o.require(a.merges() == c.merges(), "merges differ across permutations");
  std::size_t failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto s = random_utf8(rng);
    if (a.decode(a.encode(s)) != s) ++failures;
  }
  o.require(failures == 0, std::to_string(failures) + " round-trip failures");
  o.note("vocab=" + std::to_string(a.vocab_size()) + " merges=" + std::to_string(a.merges().size()));
  return o;
}

// ---------------------------------------------------------------- 5

double max_context_nll(const ScoringModel& model, std::span<const TokenId> tokens, std::size_t window) {
  double nll = 0.0;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const std::size_t begin = i + 1 > window ? i + 1 - window : 0;
    nll -= model.last_log_prob(tokens.subspan(begin, i + 1 - begin));
  }
  return nll;
}

Outcome perplexity_oracle() {
  Outcome o;
  const auto fx = generate_fixture(42, 200, default_lexicons());
  const auto bpe = train_bpe(fx.en, 800);
  const UniformLm uniform(bpe.vocab_size());
  const auto u = perplexity(uniform, fx.en, bpe);
  const double v1 = static_cast<double>(bpe.vocab_size() + 1);
  o.require(std::abs(u.ppl - v1) <= 1e-9 * v1, "uniform ppl " + fmt(u.ppl));

  TokenSeq stream;
  for (const auto& d : fx.en) {
    stream.push_back(kEosId);
    const auto ids = bpe.encode(serialize_training_line(d));
    stream.insert(stream.end(), ids.begin(), ids.end());
  }
  const auto lm = train_ngram(stream, 3);
  SplitMix64 rng(11);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 100 + rng.below(2901);
    TokenSeq seq(n);
    const std::size_t start = rng.below(stream.size() - n);
    for (std::size_t i = 0; i < n; ++i) {
      // mostly in-distribution text with some random ids mixed in
      seq[i] = rng.below(10) == 0 ? static_cast<TokenId>(rng.below(bpe.vocab_size())) : stream[start + i];
    }
    const auto r = sliding_window_nll(lm, seq, 1024, 512);
    const double oracle = max_context_nll(lm, seq, 1024);
    worst = std::max(worst, std::abs(r.nll - oracle) / oracle);
  }
  o.require(worst <= 1e-9, "relative error " + fmt(worst));
  o.note("uniform ppl=" + fmt(u.ppl) + " (V+1=" + fmt(v1) + ") max rel err=" + fmt(worst));
  return o;
}

// ---------------------------------------------------------------- 6

Outcome minimal_pair_harness() {
  Outcome o;
  const auto lex = default_lexicons();
  auto items = fixture_minimal_pairs(lex, 10000, 42, 600);
  std::set<std::string> good;
  for (const auto& it : items) good.insert(it.good);
  // the oracle knows which sentences are grammatical
  const auto oracle = score_minimal_pairs([&](const std::string& s) { return good.count(s) ? 0.0 : -1.0; }, items);
  o.require(oracle.accuracy() == 1.0, "oracle accuracy " + fmt(oracle.accuracy()));

  auto random_score = [](const std::string& s) { return std::log(SplitMix64(fnv1a64(s) ^ 0xABCDEFULL).uniform()); };
  const auto random = score_minimal_pairs(random_score, items);
  o.require(std::abs(random.accuracy() - 0.5) <= 0.03, "random accuracy " + fmt(random.accuracy()));

  // per-item outcomes must not change under strictly increasing transforms
  std::size_t flips = 0;
  for (const auto& it : items) {
    const double g = random_score(it.good), b = random_score(it.bad);
    const bool base = g > b;
    const bool t1 = std::exp(g) > std::exp(b);
    const bool t2 = (2.5 * g - 4.0) > (2.5 * b - 4.0);
    const bool t3 = std::pow(g, 3) > std::pow(b, 3);
    flips += (base != t1) + (base != t2) + (base != t3);
  }
  const auto via_exp = score_minimal_pairs([&](const std::string& s) { return std::exp(random_score(s)); }, items);
  o.require(flips == 0 && via_exp.correct == random.correct && via_exp.ties == random.ties, "monotone invariance");
  o.note("items=" + std::to_string(items.size()) + " random=" + fmt(100 * random.accuracy()) + "%");
  return o;
}

// ---------------------------------------------------------------- 7

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
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(rx.size());
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(ry.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

Outcome spearman_oracle() {
  Outcome o;
  SplitMix64 rng(3);
  double worst = 0.0;
  int done = 0;
  while (done < 1000) {
    const std::size_t n = 3 + rng.below(200);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.below(10));
      y[i] = rng.below(4) == 0 ? 1.0 : static_cast<double>(rng.below(30)) / 3.0;
    }
    if (std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) == x.end()) continue;
    if (std::adjacent_find(y.begin(), y.end(), std::not_equal_to<>()) == y.end()) continue;
    worst = std::max(worst, std::abs(spearman(x, y) - brute_spearman(x, y)));
    ++done;
  }
  o.require(worst <= 1e-12, "max abs error " + fmt(worst));
  o.note("vectors=1000 max abs err=" + fmt(worst));
  return o;
}

// ---------------------------------------------------------------- 8

Outcome sgns_gradients() {
  Outcome o;
  SkipGramModel m(40, 24, 5);
  SplitMix64 rng(21);
  for (TokenId t = 0; t < 40; ++t) {
    for (auto& x : m.input(t)) x = rng.uniform() - 0.5;
    for (auto& x : m.output(t)) x = rng.uniform() - 0.5;
  }
  const SgnsSample s{4, 17, {2, 9, 30, 33, 38}};
  const auto g = sgns_gradient(m, s);
  const double eps = 1e-5;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    // 0 = center input, 1 = context output, 2.. = negative outputs
    const std::size_t which = rng.below(2 + s.negatives.size());
    const std::size_t j = rng.below(24);
    SkipGramModel plus = m, minus = m;
    double analytic = 0.0;
    if (which == 0) {
      plus.input(s.center)[j] += eps;
      minus.input(s.center)[j] -= eps;
      analytic = g.center[j];
    } else {
      const TokenId id = which == 1 ? s.context : s.negatives[which - 2];
      plus.output(id)[j] += eps;
      minus.output(id)[j] -= eps;
      analytic = which == 1 ? g.context[j] : g.negatives[which - 2][j];
    }
    const double numeric = (sgns_loss(plus, s) - sgns_loss(minus, s)) / (2 * eps);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, rel);
  }
  o.require(worst < 1e-3, "max relative error " + fmt(worst));
  o.note("coordinates=100 max rel err=" + fmt(worst));
  return o;
}

// ---------------------------------------------------------------- 9

double metric(const json& summary, const std::string& cond, const std::string& key) {
  return summary.at("conditions").at(cond).at("metrics").at(key).at("mean").get<double>();
}

Outcome directional_replication() {
  Outcome o;
  test_support::TempDir dir;
  const json cfg = {{"output_dir", (dir / "run").string()},
                    {"seeds", {42}},
                    {"vocab_size", 3000},
                    {"corpora", {{"source", "fixture"}, {"dialogues", 2250}}},
                    {"conditions",
                     {{{"name", "en_topline"}, {"kind", "topline"}, {"language", "EN"}},
                      {{"name", "en_baseline"}, {"kind", "baseline_random"}, {"language", "EN"}},
                      {{"name", "es_baseline"}, {"kind", "baseline_random"}, {"language", "ES"}},
                      {{"name", "multilingual_50_50"}, {"kind", "multilingual_random"}, {"p_l2", 0.5}}}},
                    {"model", {{"order", 3}, {"embeddings", false}}},
                    {"eval", {{"fixture_benchmarks", false}}},
                    {"analyze", {{"enabled", false}}}};
  const auto config = config_from_json(cfg);
  const auto fx_words = generate_fixture(42, 2250, default_lexicons()).en.word_count();
  const auto r = run_experiment(config);
  const auto& s = r.summary;
  const double top_en = metric(s, "en_topline", "ppl_en");
  const double base_en = metric(s, "en_baseline", "ppl_en");
  const double ml_en = metric(s, "multilingual_50_50", "ppl_en");
  const double base_es = metric(s, "es_baseline", "ppl_es");
  const double ml_es = metric(s, "multilingual_50_50", "ppl_es");
  const double top_es = metric(s, "en_topline", "ppl_es");
  o.require(top_en < base_en, "(a) topline EN-PPL not below baseline");
  o.require(std::abs(ml_en - base_en) <= 0.15 * base_en, "(b) multilingual EN-PPL not within 15%");
  o.require(std::isfinite(ml_es) && std::abs(ml_es - base_es) <= 0.15 * base_es, "(c) multilingual ES-PPL not within 15%");
  o.require(top_es > 10 * ml_es, "(c) topline ES-PPL not above 10x multilingual");
  o.note("EN words=" + std::to_string(fx_words) + " EN-PPL topline=" + fmt(top_en) + " baseline=" + fmt(base_en) +
         " ml=" + fmt(ml_en) + " ES-PPL baseline=" + fmt(base_es) + " ml=" + fmt(ml_es) + " topline=" + fmt(top_es));
  return o;
}

// ---------------------------------------------------------------- 10

Outcome token_labeling() {
  Outcome o;
  const auto lex = default_lexicons();
  const auto fx = generate_fixture(42, 1500, lex);
  std::vector<std::string> en_lines, es_lines;
  for (const auto& d : fx.en) en_lines.push_back(serialize_training_line(d));
  for (const auto& d : fx.es) es_lines.push_back(serialize_training_line(d));
  std::vector<std::string> both = en_lines;
  both.insert(both.end(), es_lines.begin(), es_lines.end());
  const auto bpe = train_bpe(both, 3000);
  const auto labels = label_tokens(bpe, en_lines, es_lines);

  auto occurs = [](const std::vector<std::string>& lines, const std::string& needle) {
    return std::any_of(lines.begin(), lines.end(), [&](const std::string& l) { return l.find(needle) != std::string::npos; });
  };
  // content tokens: pieces of lexicon words that occur in the encoded text of
  // their own language and whose bytes never occur in the other language's text
  auto encoded = [&](const std::vector<std::string>& lines) {
    std::set<TokenId> ids;
    for (const auto& l : lines) {
      for (TokenId t : bpe.encode(l)) ids.insert(t);
    }
    return ids;
  };
  const auto en_ids = encoded(en_lines);
  const auto es_ids = encoded(es_lines);
  std::size_t content = 0, correct = 0;
  auto check = [&](const std::vector<std::string>& words, const std::set<TokenId>& own,
                   const std::vector<std::string>& other, TokenLabel want) {
    std::set<TokenId> seen;
    for (const auto& w : words) {
      for (TokenId t : encode_word(bpe, w)) {
        if (!own.count(t) || !seen.insert(t).second || occurs(other, bpe.token_bytes(t))) continue;
        ++content;
        correct += labels[t].label == want;
      }
    }
  };
  for (const auto* l : {&lex.en.nouns, &lex.en.verbs, &lex.en.adjectives}) check(*l, en_ids, es_lines, TokenLabel::English);
  for (const auto* l : {&lex.es.nouns, &lex.es.adjectives}) check(*l, es_ids, en_lines, TokenLabel::Spanish);
  o.require(content > 0 && correct == content, std::to_string(correct) + "/" + std::to_string(content) + " content tokens");

  const BpeModel bytes;
  const auto boundary = label_tokens(bytes, std::vector<std::string>{"qqq"}, std::vector<std::string>{"q"});
  o.require(boundary['q'].en_fraction == 0.75 && boundary['q'].label == TokenLabel::English, "75% boundary");
  const auto mirror = label_tokens(bytes, std::vector<std::string>{"q"}, std::vector<std::string>{"qqq"});
  o.require(mirror['q'].label == TokenLabel::Spanish, "25% boundary");
  o.note("content tokens labeled " + std::to_string(correct) + "/" + std::to_string(content));
  return o;
}

// ---------------------------------------------------------------- 11

std::map<std::string, double> report_metrics(const fs::path& run, const ExperimentConfig& cfg) {
  std::map<std::string, double> out;
  for (const auto& c : cfg.conditions) {
    for (auto seed : cfg.seeds) {
      const auto rel = "reports/" + c.name + "/seed-" + std::to_string(seed) + "/report.json";
      const auto j = json::parse(read_file(run / rel));
      for (const auto& [k, v] : j.at("metrics").items()) {
        out[rel + ":" + k] = v.is_number() ? v.get<double>() : std::nan("");
      }
    }
  }
  return out;
}

Outcome end_to_end_determinism() {
  Outcome o;
  test_support::TempDir dir;
  json cfg = {{"seeds", {42, 0}},
              {"vocab_size", 800},
              {"corpora", {{"source", "fixture"}, {"dialogues", 400}}},
              {"model", {{"sgns", {{"epochs", 2}, {"dim", 16}}}}},
              {"analyze", {{"max_tokens", 500}}}};
  cfg["output_dir"] = (dir / "a").string();
  const auto ca = config_from_json(cfg);
  const auto a = run_experiment(ca);
  cfg["output_dir"] = (dir / "b").string();
  const auto cb = config_from_json(cfg);
  const auto b = run_experiment(cb);

  o.require(a.manifest.config_hash == b.manifest.config_hash, "config hash");
  o.require(a.manifest.stages.size() == b.manifest.stages.size(), "stage count");
  std::size_t exact = 0, fp = 0;
  for (std::size_t i = 0; i < std::min(a.manifest.stages.size(), b.manifest.stages.size()); ++i) {
    const auto& sa = a.manifest.stages[i];
    const auto& sb = b.manifest.stages[i];
    o.require(sa.id == sb.id && sa.input_hash == sb.input_hash, "stage " + sa.id + " input hash");
    if (sa.floating_point) {
      ++fp;
    } else {
      ++exact;
      o.require(sa.outputs == sb.outputs, "stage " + sa.id + " artifact hashes");
    }
  }
  const auto ma = report_metrics(dir / "a", ca);
  const auto mb = report_metrics(dir / "b", cb);
  o.require(ma.size() == mb.size() && !ma.empty(), "metric sets differ");
  double worst = 0.0;
  for (const auto& [k, v] : ma) {
    const double w = mb.count(k) ? mb.at(k) : std::nan("");
    if (std::isnan(v) && std::isnan(w)) continue;
    const double rel = std::abs(v - w) / std::max(1.0, std::abs(v));
    if (!(rel <= 1e-9)) o.require(false, "metric " + k);
    worst = std::max(worst, rel);
  }
  o.require(verify_manifest(dir / "a").ok() && verify_manifest(dir / "b").ok(), "verify");
  o.note("stages exact=" + std::to_string(exact) + " fp=" + std::to_string(fp) + " metrics=" + std::to_string(ma.size()) +
         " max diff=" + fmt(worst));
  return o;
}

struct Criterion {
  int number;
  const char* name;
  double limit_seconds;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion criteria[] = {
      {1, "code-switch run constraint", 10, cs_run_constraint},
      {2, "exposure-ratio fidelity", 10, exposure_ratio},
      {3, "split alignment", 30, split_alignment},
      {4, "BPE correctness", 120, bpe_correctness},
      {5, "perplexity oracle", 60, perplexity_oracle},
      {6, "minimal-pair harness", 60, minimal_pair_harness},
      {7, "Spearman oracle", 10, spearman_oracle},
      {8, "SGNS gradients", 30, sgns_gradients},
      {9, "directional replication", 300, directional_replication},
      {10, "token labeling", 30, token_labeling},
      {11, "end-to-end determinism", 600, end_to_end_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.number)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit_seconds) o.require(false, "over time limit " + fmt(c.limit_seconds) + "s");
    std::printf("%s [%2d] %-28s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.number, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
