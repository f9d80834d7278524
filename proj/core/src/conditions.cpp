#include "exposure/conditions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "exposure/digest.hpp"
#include "exposure/errors.hpp"
#include "exposure/random.hpp"
#include "exposure/text.hpp"

namespace exposure {
namespace {

using nlohmann::json;

constexpr std::string_view kLangPurpose = "lang";

void require_same_ids(const Corpus& a, const Corpus& b, std::string_view what) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::IdMismatch, std::string(what) + ": corpora differ in size (" +
                                           std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id() != b[i].id()) {
      throw Error(ErrorCode::IdMismatch, std::string(what) + ": id " + a[i].id() + " has no counterpart");
    }
  }
}

bool es_half(std::uint64_t seed, std::string_view id) { return keyed_uniform(seed, id, kLangPurpose) < 0.5; }

bool is_terminal(char32_t cp) { return cp == U'.' || cp == U'!' || cp == U'?' || cp == U'…'; }

bool is_closer(char32_t cp) {
  return cp == U'"' || cp == U'\'' || cp == U')' || cp == U']' || cp == U'”' || cp == U'’' || cp == U'»';
}

std::string join_sentences(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out.push_back(' ');
    out += p;
  }
  return out;
}

// Rounds away binary noise in fractions like 1 - 0.95.
double clean_fraction(double f) { return std::round(f * 1e9) / 1e9; }

std::size_t floor_share(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

}  // namespace

std::string_view to_string(Language l) noexcept { return l == Language::EN ? "EN" : "ES"; }

Language language_from_string(std::string_view s) {
  if (s == "EN") return Language::EN;
  if (s == "ES") return Language::ES;
  throw Error(ErrorCode::InvalidSpec, "unknown language '" + std::string(s) + "'");
}

Variant variant_of(Language l) noexcept { return l == Language::EN ? Variant::EN : Variant::ES; }

std::string_view to_string(ConditionKind k) noexcept {
  switch (k) {
    case ConditionKind::Topline: return "topline";
    case ConditionKind::BaselineRandom: return "baseline_random";
    case ConditionKind::BaselineBySpeaker: return "baseline_by_speaker";
    case ConditionKind::MultilingualRandom: return "multilingual_random";
    case ConditionKind::MultilingualBySpeaker: return "multilingual_by_speaker";
    case ConditionKind::CsSentence: return "cs_sentence";
    case ConditionKind::CsWordIngest: return "cs_word_ingest";
  }
  return "?";
}

ConditionKind condition_kind_from_string(std::string_view s) {
  for (auto k : {ConditionKind::Topline, ConditionKind::BaselineRandom, ConditionKind::BaselineBySpeaker,
                 ConditionKind::MultilingualRandom, ConditionKind::MultilingualBySpeaker,
                 ConditionKind::CsSentence, ConditionKind::CsWordIngest}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::InvalidSpec, "unknown condition kind '" + std::string(s) + "'");
}

Language SpeakerAssignment::language_for(Speaker s) const {
  switch (s) {
    case Speaker::Mom: return mom;
    case Speaker::Dad: return dad;
    case Speaker::Child: break;
  }
  throw Error(ErrorCode::IncompleteAssignment, "no language assigned to Child");
}

void validate(const ExposureSpec& spec) {
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::InvalidSpec, (spec.name.empty() ? std::string(to_string(spec.kind)) : spec.name) + ": " + msg);
  };
  if (!(spec.p_l2 >= 0.0 && spec.p_l2 <= 1.0)) fail("p_l2 must lie in [0, 1]");
  if (!(spec.train_ratio > 0.0 && spec.train_ratio < 1.0)) fail("train_ratio must lie in (0, 1)");
  if (spec.word_budget && *spec.word_budget == 0) fail("word_budget must be positive");
  switch (spec.kind) {
    case ConditionKind::Topline:
    case ConditionKind::BaselineRandom:
      if (!spec.language) fail("language is required");
      break;
    case ConditionKind::BaselineBySpeaker:
      if (!spec.language) fail("language is required");
      [[fallthrough]];
    case ConditionKind::MultilingualBySpeaker:
      if (!spec.speaker_assignment) {
        throw Error(ErrorCode::IncompleteAssignment, spec.name + ": speaker_assignment is required");
      }
      if (spec.speaker_assignment->mom == spec.speaker_assignment->dad) {
        throw Error(ErrorCode::IncompleteAssignment, spec.name + ": Mom and Dad need distinct languages");
      }
      break;
    default:
      break;
  }
}

json to_json(const ExposureSpec& spec) {
  json j{{"name", spec.name},
         {"kind", std::string(to_string(spec.kind))},
         {"p_l2", spec.p_l2},
         {"seed", spec.seed},
         {"train_ratio", spec.train_ratio},
         {"baseline_source", spec.baseline_source == BaselineSource::Redraw ? "redraw" : "reuse_multilingual"}};
  if (spec.language) j["language"] = std::string(to_string(*spec.language));
  if (spec.speaker_assignment) {
    j["speaker_assignment"] = {{"Mom", std::string(to_string(spec.speaker_assignment->mom))},
                               {"Dad", std::string(to_string(spec.speaker_assignment->dad))}};
  }
  if (spec.word_budget) j["word_budget"] = *spec.word_budget;
  return j;
}

ExposureSpec exposure_spec_from_json(const json& j) {
  ExposureSpec s;
  try {
    s.name = j.value("name", std::string{});
    s.kind = condition_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("language")) s.language = language_from_string(j.at("language").get<std::string>());
    s.p_l2 = j.value("p_l2", 0.5);
    if (j.contains("speaker_assignment")) {
      const auto& a = j.at("speaker_assignment");
      if (!a.contains("Mom") || !a.contains("Dad")) {
        throw Error(ErrorCode::IncompleteAssignment, s.name + ": assignment must cover Mom and Dad");
      }
      s.speaker_assignment = SpeakerAssignment{language_from_string(a.at("Mom").get<std::string>()),
                                               language_from_string(a.at("Dad").get<std::string>())};
    }
    if (j.contains("word_budget")) s.word_budget = j.at("word_budget").get<std::uint64_t>();
    s.seed = j.value("seed", std::uint64_t{42});
    s.train_ratio = j.value("train_ratio", 0.95);
    const auto source = j.value("baseline_source", std::string("reuse_multilingual"));
    if (source == "redraw") {
      s.baseline_source = BaselineSource::Redraw;
    } else if (source != "reuse_multilingual") {
      throw Error(ErrorCode::InvalidSpec, "baseline_source must be reuse_multilingual or redraw");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("malformed exposure spec: ") + e.what());
  }
  validate(s);
  return s;
}

Corpus select_by_probability(const Corpus& en, const Corpus& es, double p_l2, std::uint64_t seed) {
  require_same_ids(en, es, "select_by_probability");
  std::vector<Dialogue> out;
  out.reserve(en.size());
  for (std::size_t i = 0; i < en.size(); ++i) {
    const bool pick_es = keyed_uniform(seed, en[i].id(), kLangPurpose) < p_l2;
    out.push_back(pick_es ? es[i] : en[i]);
  }
  return Corpus(std::move(out));
}

Corpus select_by_speaker(const Corpus& en, const Corpus& es, const SpeakerAssignment& assignment) {
  if (assignment.mom == assignment.dad) {
    throw Error(ErrorCode::IncompleteAssignment, "Mom and Dad must be assigned different languages");
  }
  require_same_ids(en, es, "select_by_speaker");
  std::vector<Dialogue> out;
  out.reserve(en.size());
  for (std::size_t i = 0; i < en.size(); ++i) {
    const Language lang = assignment.language_for(en[i].meta.adult_speaker);
    out.push_back(lang == Language::EN ? en[i] : es[i]);
  }
  return Corpus(std::move(out));
}

std::vector<std::string> sentence_segment(std::string_view input) {
  const auto cps = text::decode(input);
  std::vector<std::string> sentences;
  std::string current;
  std::size_t i = 0;
  auto flush = [&] {
    auto t = text::trim(current);
    if (!t.empty()) sentences.push_back(std::move(t));
    current.clear();
  };
  while (i < cps.size()) {
    if (!is_terminal(cps[i])) {
      text::append_utf8(current, cps[i++]);
      continue;
    }
    while (i < cps.size() && is_terminal(cps[i])) text::append_utf8(current, cps[i++]);
    while (i < cps.size() && is_closer(cps[i])) text::append_utf8(current, cps[i++]);
    if (i == cps.size() || text::is_space(cps[i])) flush();
  }
  flush();
  return sentences;
}

MixResult mix_cs_sentence(const Dialogue& en, const Dialogue& es, std::uint64_t seed, MismatchPolicy policy) {
  if (en.id() != es.id()) throw Error(ErrorCode::IdMismatch, en.id() + " vs " + es.id());
  if (en.turns.size() != es.turns.size()) {
    throw Error(ErrorCode::SentenceCountMismatch, en.id() + ": variants have different turn counts");
  }
  MixResult result;
  result.dialogue.meta = en.meta;
  result.dialogue.meta.variant = Variant::CS_SENT;
  auto rng = stream_for(seed, en.id(), "cs-sentence");

  std::optional<Language> run_lang;
  std::size_t run_length = 0;
  auto record = [&](Language l) {
    if (run_lang == l) {
      ++run_length;
    } else {
      run_lang = l;
      run_length = 1;
    }
    result.choices.push_back(l);
    ++(l == Language::EN ? result.en_sentences : result.es_sentences);
  };

  for (std::size_t t = 0; t < en.turns.size(); ++t) {
    if (en.turns[t].speaker != es.turns[t].speaker) {
      throw Error(ErrorCode::SentenceCountMismatch, en.id() + ": speaker differs at turn " + std::to_string(t));
    }
    const auto en_sent = sentence_segment(en.turns[t].text);
    const auto es_sent = sentence_segment(es.turns[t].text);
    if (en_sent.size() != es_sent.size()) {
      if (policy == MismatchPolicy::Strict) {
        throw Error(ErrorCode::SentenceCountMismatch,
                    en.id() + ": turn " + std::to_string(t) + " has " + std::to_string(en_sent.size()) +
                        " EN vs " + std::to_string(es_sent.size()) + " ES sentences");
      }
      ++result.mismatched_turns;
    }
    const std::size_t common = std::min(en_sent.size(), es_sent.size());
    std::vector<std::string> parts;
    Language last = Language::EN;
    for (std::size_t k = 0; k < common; ++k) {
      Language pick = rng.coin() ? Language::ES : Language::EN;
      if (run_length >= kMaxSameLanguageRun && run_lang == pick) {
        pick = pick == Language::EN ? Language::ES : Language::EN;
      }
      record(pick);
      parts.push_back(pick == Language::EN ? en_sent[k] : es_sent[k]);
      last = pick;
    }
    const auto& tail = last == Language::EN ? en_sent : es_sent;
    for (std::size_t k = common; k < tail.size(); ++k) {
      record(last);
      parts.push_back(tail[k]);
    }
    result.dialogue.turns.push_back(Turn{en.turns[t].speaker, join_sentences(parts)});
  }
  return result;
}

std::set<std::string> sample_reduced(const Corpus& en, std::uint64_t budget_words, std::uint64_t seed) {
  if (budget_words == 0) throw Error(ErrorCode::InvalidSpec, "word budget must be positive");
  const std::uint64_t total = en.word_count();
  if (budget_words > total) {
    throw Error(ErrorCode::BudgetTooLarge, "budget " + std::to_string(budget_words) + " exceeds corpus size " +
                                               std::to_string(total));
  }
  // strata: speaker x context, in a fixed order
  struct Entry {
    std::uint64_t key;
    const Dialogue* d;
  };
  std::array<std::vector<Entry>, 4> strata;
  for (const auto& d : en) {
    const std::size_t s = (d.meta.adult_speaker == Speaker::Dad ? 2 : 0) + (d.meta.context == Context::Public ? 1 : 0);
    strata[s].push_back({stream_key(seed, d.id(), "reduce"), &d});
  }
  for (auto& s : strata) {
    std::sort(s.begin(), s.end(), [](const Entry& a, const Entry& b) {
      return a.key != b.key ? a.key < b.key : a.d->id() < b.d->id();
    });
  }
  // Interleave by due time (j + 0.5) / n_s so every prefix keeps each stratum
  // within one dialogue of its proportional share.
  std::set<std::string> chosen;
  std::array<std::size_t, 4> taken{};
  std::uint64_t words = 0;
  while (words < budget_words) {
    std::size_t best = strata.size();
    double best_due = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < strata.size(); ++s) {
      if (taken[s] >= strata[s].size()) continue;
      const double due = (static_cast<double>(taken[s]) + 0.5) / static_cast<double>(strata[s].size());
      if (due < best_due) {
        best_due = due;
        best = s;
      }
    }
    if (best == strata.size()) break;
    const Dialogue* d = strata[best][taken[best]++].d;
    chosen.insert(d->id());
    words += dialogue_words(*d);
  }
  return chosen;
}

Corpus restrict_to(const Corpus& c, const std::set<std::string>& ids) {
  std::vector<Dialogue> out;
  for (const auto& d : c) {
    if (ids.count(d.id())) out.push_back(d);
  }
  return Corpus(std::move(out));
}

SplitPlan::SplitPlan(const Corpus& universe, std::uint64_t seed, double train_ratio)
    : universe_size_(universe.size()), val_fraction_(clean_fraction(1.0 - train_ratio)) {
  // strata index: 2 * is_dad + es_half
  struct Entry {
    std::uint64_t key;
    std::string id;
  };
  std::array<std::vector<Entry>, 4> strata;
  for (const auto& d : universe) {
    const std::size_t s = (d.meta.adult_speaker == Speaker::Dad ? 2 : 0) + (es_half(seed, d.id()) ? 1 : 0);
    strata[s].push_back({stream_key(seed, d.id(), "val"), d.id()});
  }
  std::array<double, 4> exact{};
  std::array<std::size_t, 4> low{};
  for (std::size_t s = 0; s < 4; ++s) {
    exact[s] = val_fraction_ * static_cast<double>(strata[s].size());
    low[s] = std::min(floor_share(val_fraction_, strata[s].size()), strata[s].size());
  }
  const std::size_t target = floor_share(val_fraction_, universe_size_);

  // Pick floor/ceil per stratum: exact total, then the smallest worst-case
  // deviation over the Mom, Dad, EN-half and ES-half subsets.
  static constexpr std::array<std::array<std::size_t, 2>, 4> kUnions = {{{0, 1}, {2, 3}, {0, 2}, {1, 3}}};
  std::array<std::size_t, 4> best = low;
  double best_score = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < 16; ++mask) {
    std::array<std::size_t, 4> k = low;
    std::size_t sum = 0;
    bool ok = true;
    for (std::size_t s = 0; s < 4; ++s) {
      if (mask & (1u << s)) {
        if (low[s] + 1 > strata[s].size()) ok = false;
        ++k[s];
      }
      sum += k[s];
    }
    if (!ok || sum != target) continue;
    double score = 0.0;
    for (const auto& u : kUnions) {
      const double dev = std::abs(static_cast<double>(k[u[0]] + k[u[1]]) - (exact[u[0]] + exact[u[1]]));
      score = std::max(score, dev);
    }
    if (score < best_score - 1e-12) {
      best_score = score;
      best = k;
    }
  }
  for (std::size_t s = 0; s < 4; ++s) {
    auto& entries = strata[s];
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      return a.key != b.key ? a.key < b.key : a.id < b.id;
    });
    for (std::size_t i = 0; i < best[s]; ++i) val_ids_.insert(entries[i].id);
  }
}

TrainValSplit split_train_val(const Corpus& condition, const SplitPlan& plan) {
  std::vector<Dialogue> train;
  std::vector<Dialogue> val;
  for (const auto& d : condition) (plan.is_val(d.id()) ? val : train).push_back(d);
  return {Corpus(std::move(train)), Corpus(std::move(val))};
}

namespace {

struct Universe {
  Corpus en;
  Corpus es;
  std::optional<Corpus> cs_word;
};

Universe make_universe(const ExposureSpec& spec, const ParallelInputs& inputs) {
  if (inputs.en == nullptr || inputs.es == nullptr) {
    throw Error(ErrorCode::InvalidSpec, spec.name + ": EN and ES parallel corpora are required");
  }
  require_same_ids(*inputs.en, *inputs.es, spec.name);
  for (std::size_t i = 0; i < inputs.en->size(); ++i) {
    const auto& a = (*inputs.en)[i].meta;
    const auto& b = (*inputs.es)[i].meta;
    if (a.adult_speaker != b.adult_speaker || a.context != b.context || a.child_age != b.child_age) {
      throw Error(ErrorCode::IdMismatch, a.id + ": EN and ES metadata disagree");
    }
  }
  if (inputs.cs_word) require_same_ids(*inputs.en, *inputs.cs_word, spec.name + " (cs_word)");
  if (!spec.word_budget) {
    return {*inputs.en, *inputs.es, inputs.cs_word ? std::optional<Corpus>(*inputs.cs_word) : std::nullopt};
  }
  const auto ids = sample_reduced(*inputs.en, *spec.word_budget, spec.seed);
  Universe u{restrict_to(*inputs.en, ids), restrict_to(*inputs.es, ids), std::nullopt};
  if (inputs.cs_word) u.cs_word = restrict_to(*inputs.cs_word, ids);
  return u;
}

Corpus relabel(const Corpus& c, Variant v) {
  std::vector<Dialogue> out(c.begin(), c.end());
  for (auto& d : out) d.meta.variant = v;
  return Corpus(std::move(out));
}

}  // namespace

ConditionDataset build_condition(const ExposureSpec& spec, const ParallelInputs& inputs) {
  validate(spec);
  const Universe u = make_universe(spec, inputs);
  const SplitPlan plan(u.en, spec.seed, spec.train_ratio);

  json cs_stats;
  Corpus corpus;
  auto pick_language = [&](Language l) -> const Corpus& { return l == Language::EN ? u.en : u.es; };
  auto filter = [](const Corpus& c, auto&& keep) {
    std::vector<Dialogue> out;
    for (const auto& d : c) {
      if (keep(d)) out.push_back(d);
    }
    return Corpus(std::move(out));
  };

  switch (spec.kind) {
    case ConditionKind::Topline:
      corpus = pick_language(*spec.language);
      break;
    case ConditionKind::BaselineRandom: {
      const bool want_es = *spec.language == Language::ES;
      corpus = filter(pick_language(*spec.language), [&](const Dialogue& d) {
        const bool in_es_half = spec.baseline_source == BaselineSource::Redraw
                                    ? keyed_uniform(spec.seed, d.id(), "baseline") < 0.5
                                    : es_half(spec.seed, d.id());
        return in_es_half == want_es;
      });
      break;
    }
    case ConditionKind::BaselineBySpeaker: {
      const auto& a = *spec.speaker_assignment;
      const Speaker keep = a.mom == *spec.language ? Speaker::Mom : Speaker::Dad;
      corpus = filter(pick_language(*spec.language),
                      [&](const Dialogue& d) { return d.meta.adult_speaker == keep; });
      break;
    }
    case ConditionKind::MultilingualRandom:
      corpus = select_by_probability(u.en, u.es, spec.p_l2, spec.seed);
      break;
    case ConditionKind::MultilingualBySpeaker:
      corpus = select_by_speaker(u.en, u.es, *spec.speaker_assignment);
      break;
    case ConditionKind::CsSentence: {
      std::vector<Dialogue> mixed;
      mixed.reserve(u.en.size());
      std::size_t en_sent = 0, es_sent = 0, mismatched = 0;
      for (std::size_t i = 0; i < u.en.size(); ++i) {
        auto r = mix_cs_sentence(u.en[i], u.es[i], spec.seed);
        en_sent += r.en_sentences;
        es_sent += r.es_sentences;
        mismatched += r.mismatched_turns;
        mixed.push_back(std::move(r.dialogue));
      }
      corpus = Corpus(std::move(mixed));
      cs_stats = {{"en_sentences", en_sent}, {"es_sentences", es_sent}, {"mismatched_turns", mismatched}};
      break;
    }
    case ConditionKind::CsWordIngest:
      if (!u.cs_word) throw Error(ErrorCode::InvalidSpec, spec.name + ": cs_word_ingest needs a word-level CS corpus");
      corpus = relabel(*u.cs_word, Variant::CS_WORD);
      break;
  }

  auto split = split_train_val(corpus, plan);

  json languages = json::object();
  std::map<std::string, std::size_t> language_counts;
  for (const auto& d : corpus) {
    const std::string v(to_string(d.meta.variant));
    languages[d.id()] = v;
    ++language_counts[v];
  }
  const std::string train_lines = corpus_lines(split.train);
  const std::string val_lines = corpus_lines(split.val);
  json manifest{{"spec", to_json(spec)},
                {"seed", spec.seed},
                {"prng", std::string(SplitMix64::kName)},
                {"universe_size", plan.universe_size()},
                {"languages", std::move(languages)},
                {"language_counts", language_counts},
                {"dialogue_counts", {{"train", split.train.size()}, {"val", split.val.size()}}},
                {"word_counts", {{"train", split.train.word_count()}, {"val", split.val.word_count()}}},
                {"sha256", {{"train", sha256_hex(train_lines)}, {"val", sha256_hex(val_lines)}}}};
  if (!cs_stats.is_null()) manifest["cs_sentence"] = std::move(cs_stats);
  return ConditionDataset{spec, std::move(split.train), std::move(split.val), std::move(manifest)};
}

Corpus aligned_val_corpus(const ExposureSpec& spec, const ParallelInputs& inputs, Language language) {
  const Universe u = make_universe(spec, inputs);
  const SplitPlan plan(u.en, spec.seed, spec.train_ratio);
  return restrict_to(language == Language::EN ? u.en : u.es, plan.val_ids());
}

void write_condition(const ConditionDataset& ds, const std::filesystem::path& dir) {
  write_corpus(ds.train, dir / "train.txt", dir / "train.meta.json");
  write_corpus(ds.val, dir / "val.txt", dir / "val.meta.json");
  write_file(dir / "manifest.json", ds.manifest.dump(1) + "\n");
}

}  // namespace exposure
