#include "exposure/eval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "exposure/digest.hpp"
#include "exposure/errors.hpp"
#include "exposure/text.hpp"

namespace exposure {
namespace {

// Runs fn(i) for i in [0, n). Results must be written to per-index slots so
// the caller's reduction order does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::size_t effective_workers(const ScoringModel& model, const EvalOptions& options) {
  return model.multi_worker_safe() ? options.workers : 1;
}

TokenSeq with_leading_eos(const BpeModel& tokenizer, std::string_view text) {
  TokenSeq ids{kEosId};
  auto body = tokenizer.encode(text);
  ids.insert(ids.end(), body.begin(), body.end());
  return ids;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r') fields.back().pop_back();
  return fields;
}

Language parse_language(const std::string& s, const std::filesystem::path& path) {
  const auto f = text::fold_case(text::trim(s));
  if (f == "en") return Language::EN;
  if (f == "es") return Language::ES;
  throw Error(ErrorCode::BadBenchmarkFile, path.string() + ": unknown language '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------- perplexity

std::vector<WindowSpan> window_plan(std::size_t n, std::size_t window, std::size_t stride) {
  if (window < 2 || stride == 0 || stride > window) {
    throw Error(ErrorCode::InvalidArgument, "need 0 < stride <= window and window >= 2");
  }
  std::vector<WindowSpan> plan;
  std::size_t prev_end = 0;
  for (std::size_t begin = 0; begin < n; begin += stride) {
    const std::size_t end = std::min(begin + window, n);
    const std::size_t from = std::max(prev_end, begin + 1);
    if (from < end) plan.push_back({begin, end, from});
    prev_end = end;
    if (end == n) break;
  }
  return plan;
}

NllResult sliding_window_nll(const ScoringModel& model, std::span<const TokenId> tokens, std::size_t window,
                             std::size_t stride) {
  if (tokens.empty()) throw Error(ErrorCode::EmptySequence, "cannot score an empty sequence");
  if (window > model.context_window()) {
    throw Error(ErrorCode::InvalidArgument, "window " + std::to_string(window) + " exceeds the model context of " +
                                                std::to_string(model.context_window()));
  }
  NllResult r;
  for (const auto& w : window_plan(tokens.size(), window, stride)) {
    const auto span = tokens.subspan(w.begin, w.end - w.begin);
    const auto lp = model.log_probs(span);
    // lp[j] scores position w.begin + j + 1
    for (std::size_t pos = w.score_from; pos < w.end; ++pos) r.nll -= lp[pos - w.begin - 1];
    r.tokens += w.end - w.score_from;
    r.unknown += model.unknown_count(tokens.subspan(w.score_from - 1, w.end - w.score_from + 1));
  }
  return r;
}

PerplexityResult perplexity(const ScoringModel& model, std::span<const std::string> lines, const BpeModel& tokenizer,
                            const EvalOptions& options) {
  std::vector<NllResult> per_line(lines.size());
  parallel_for(lines.size(), effective_workers(model, options), [&](std::size_t i) {
    const auto ids = with_leading_eos(tokenizer, lines[i]);
    per_line[i] = sliding_window_nll(model, ids, options.window, options.stride);
  });
  PerplexityResult r;
  for (const auto& l : per_line) {
    r.nll += l.nll;
    r.tokens += l.tokens;
    r.unknown += l.unknown;
  }
  r.lines = lines.size();
  if (r.tokens == 0) throw Error(ErrorCode::EmptySequence, "no tokens to score");
  r.ppl = std::exp(r.nll / static_cast<double>(r.tokens));
  return r;
}

PerplexityResult perplexity(const ScoringModel& model, const Corpus& corpus, const BpeModel& tokenizer,
                            const EvalOptions& options) {
  std::vector<std::string> lines;
  lines.reserve(corpus.size());
  for (const auto& d : corpus) lines.push_back(serialize_training_line(d));
  return perplexity(model, lines, tokenizer, options);
}

// ---------------------------------------------------------------- minimal pairs

bool is_known_phenomenon(std::string_view tag) noexcept {
  return std::find(kZorroPhenomena.begin(), kZorroPhenomena.end(), tag) != kZorroPhenomena.end();
}

PairOutcome judge_pair(double good_score, double bad_score) noexcept {
  if (good_score > bad_score) return PairOutcome::Correct;
  if (good_score == bad_score) return PairOutcome::Tie;
  return PairOutcome::Incorrect;
}

double sentence_log_prob(const ScoringModel& model, const BpeModel& tokenizer, std::string_view text,
                         const EvalOptions& options) {
  const auto ids = with_leading_eos(tokenizer, text);
  return -sliding_window_nll(model, ids, std::min(options.window, model.context_window()), options.stride).nll;
}

namespace {

MinimalPairResult tally(std::span<const MinimalPairItem> items, std::span<const double> good,
                        std::span<const double> bad) {
  MinimalPairResult r;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto outcome = judge_pair(good[i], bad[i]);
    auto& ph = r.by_phenomenon[items[i].phenomenon];
    ++ph.total;
    ++r.total;
    if (outcome == PairOutcome::Correct) {
      ++ph.correct;
      ++r.correct;
    } else if (outcome == PairOutcome::Tie) {
      ++r.ties;
    }
  }
  return r;
}

}  // namespace

MinimalPairResult score_minimal_pairs(const ScoringModel& model, std::span<const MinimalPairItem> items,
                                      const BpeModel& tokenizer, std::string_view prefix,
                                      const EvalOptions& options) {
  if (items.empty()) throw Error(ErrorCode::EmptyItemSet, "no minimal-pair items to score");
  std::vector<double> good(items.size()), bad(items.size());
  std::vector<std::size_t> unknown(items.size());
  const std::size_t window = std::min(options.window, model.context_window());
  parallel_for(items.size(), effective_workers(model, options), [&](std::size_t i) {
    const auto g = with_leading_eos(tokenizer, std::string(prefix) + items[i].good);
    const auto b = with_leading_eos(tokenizer, std::string(prefix) + items[i].bad);
    const auto gr = sliding_window_nll(model, g, window, options.stride);
    const auto br = sliding_window_nll(model, b, window, options.stride);
    good[i] = -gr.nll;
    bad[i] = -br.nll;
    unknown[i] = gr.unknown + br.unknown;
  });
  auto r = tally(items, good, bad);
  r.unknown_tokens = std::accumulate(unknown.begin(), unknown.end(), std::size_t{0});
  return r;
}

MinimalPairResult score_minimal_pairs(const std::function<double(const std::string&)>& score,
                                      std::span<const MinimalPairItem> items, std::string_view prefix) {
  if (items.empty()) throw Error(ErrorCode::EmptyItemSet, "no minimal-pair items to score");
  std::vector<double> good, bad;
  good.reserve(items.size());
  bad.reserve(items.size());
  for (const auto& item : items) {
    good.push_back(score(std::string(prefix) + item.good));
    bad.push_back(score(std::string(prefix) + item.bad));
  }
  return tally(items, good, bad);
}

// ---------------------------------------------------------------- word similarity

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw Error(ErrorCode::LengthMismatch, "spearman needs two inputs of equal length >= 2");
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::isnan(xs[i]) || std::isnan(ys[i])) throw Error(ErrorCode::DegenerateInput, "spearman input contains NaN");
  }
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::DegenerateInput, "spearman is undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double cosine(std::span<const double> a, std::span<const double> b) noexcept {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

std::vector<double> word_vector(const EmbeddingProvider& provider, const BpeModel& tokenizer, std::string_view word,
                                std::size_t layer) {
  std::vector<double> sum(provider.dim(), 0.0);
  std::size_t n = 0;
  for (TokenId t : encode_word(tokenizer, word)) {
    if (!provider.has_vector(t)) continue;
    const auto v = provider.vector(t, layer);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
    ++n;
  }
  bool nonzero = false;
  for (double x : sum) nonzero = nonzero || x != 0.0;
  if (n == 0 || !nonzero) throw Error(ErrorCode::MissingWordVector, "no vector for '" + std::string(word) + "'");
  for (double& x : sum) x /= static_cast<double>(n);
  return sum;
}

WordSimilarityResult word_similarity_eval(const EmbeddingProvider& provider, std::span<const WordPairItem> items,
                                          const BpeModel& tokenizer) {
  if (provider.n_layers() == 0) throw Error(ErrorCode::InvalidArgument, "provider has no layers");
  WordSimilarityResult r;
  const std::size_t layers = provider.n_layers();
  std::vector<std::vector<double>> sims(layers);
  std::vector<double> gold;
  for (const auto& item : items) {
    std::vector<double> row(layers);
    try {
      for (std::size_t l = 0; l < layers; ++l) {
        row[l] = cosine(word_vector(provider, tokenizer, item.w1, l), word_vector(provider, tokenizer, item.w2, l));
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingWordVector) throw;
      ++r.missing;
      continue;
    }
    for (std::size_t l = 0; l < layers; ++l) sims[l].push_back(row[l]);
    gold.push_back(item.gold);
  }
  r.used = gold.size();
  r.per_layer.assign(layers, std::numeric_limits<double>::quiet_NaN());
  bool any = false;
  for (std::size_t l = 0; l < layers; ++l) {
    try {
      r.per_layer[l] = spearman(gold, sims[l]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateInput && e.code() != ErrorCode::LengthMismatch) throw;
      continue;
    }
    if (!any || r.per_layer[l] > r.best) {
      r.best = r.per_layer[l];
      r.best_layer = l;
      any = true;
    }
  }
  if (!any) throw Error(ErrorCode::DegenerateInput, "no layer yields a defined word-similarity correlation");
  return r;
}

// ---------------------------------------------------------------- filtering

VocabSet build_vocab(const Corpus& corpus) {
  VocabSet v;
  for (const auto& d : corpus) {
    for (const auto& t : d.turns) {
      for (auto& tok : text::linguistic_tokens(t.text)) {
        if (text::is_content_token(tok)) v.insert(text::fold_case(tok));
      }
    }
  }
  return v;
}

bool covered_by(std::string_view s, std::span<const VocabSet* const> sets) {
  for (const auto& tok : text::linguistic_tokens(s)) {
    if (!text::is_content_token(tok)) continue;
    const auto folded = text::fold_case(tok);
    for (const VocabSet* set : sets) {
      if (!set->count(folded)) return false;
    }
  }
  return true;
}

Filtered<MinimalPairItem> filter_by_vocab(std::span<const MinimalPairItem> items,
                                          std::span<const VocabSet* const> sets) {
  Filtered<MinimalPairItem> out;
  out.total = items.size();
  for (const auto& item : items) {
    if (covered_by(item.good, sets) && covered_by(item.bad, sets)) out.kept.push_back(item);
  }
  return out;
}

Filtered<WordPairItem> filter_by_vocab(std::span<const WordPairItem> items, const LanguageVocabs& vocabs) {
  Filtered<WordPairItem> out;
  out.total = items.size();
  for (const auto& item : items) {
    if (covered_by(item.w1, vocabs.for_language(item.lang1)) && covered_by(item.w2, vocabs.for_language(item.lang2))) {
      out.kept.push_back(item);
    }
  }
  return out;
}

// ---------------------------------------------------------------- aggregation

AggregateReport aggregate_runs(std::span<const MetricMap> runs, std::optional<std::span<const MetricMap>> mirrored) {
  if (runs.empty()) throw Error(ErrorCode::InvalidArgument, "aggregate_runs needs at least one run");
  if (mirrored && mirrored->size() != runs.size()) {
    throw Error(ErrorCode::MismatchedMetricKeys, "mirrored runs must pair one-to-one with runs");
  }
  auto same_keys = [](const MetricMap& a, const MetricMap& b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) {
             return x.first == y.first;
           });
  };
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!same_keys(runs[i], runs[0]) || (mirrored && !same_keys((*mirrored)[i], runs[0]))) {
      throw Error(ErrorCode::MismatchedMetricKeys, "runs report different metric names");
    }
  }
  AggregateReport report;
  report.runs = runs.size();
  report.mirrored = mirrored.has_value();
  for (const auto& [key, _] : runs[0]) {
    MetricSummary s;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      double v = runs[i].at(key);
      if (mirrored) v = (v + (*mirrored)[i].at(key)) / 2.0;
      s.values.push_back(v);
    }
    const double n = static_cast<double>(s.values.size());
    s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
    if (s.values.size() > 1) {
      double ss = 0.0;
      for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
      s.std = std::sqrt(ss / (n - 1.0));
    }
    report.metrics.emplace(key, std::move(s));
  }
  return report;
}

nlohmann::json to_json(const AggregateReport& report) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [k, s] : report.metrics) metrics[k] = {{"mean", s.mean}, {"std", s.std}, {"values", s.values}};
  return {{"runs", report.runs}, {"mirrored_pair_averaged", report.mirrored}, {"metrics", metrics}};
}

nlohmann::json to_json(const MinimalPairResult& r) {
  nlohmann::json ph = nlohmann::json::object();
  for (const auto& [k, s] : r.by_phenomenon) ph[k] = {{"correct", s.correct}, {"total", s.total}};
  return {{"accuracy", r.accuracy()}, {"correct", r.correct},   {"ties", r.ties},
          {"total", r.total},         {"unknown_tokens", r.unknown_tokens}, {"by_phenomenon", ph},
          {"decision", "summed log-prob, ties counted incorrect"}};
}

nlohmann::json to_json(const WordSimilarityResult& r) {
  nlohmann::json layers = nlohmann::json::array();
  for (double v : r.per_layer) layers.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
  return {{"per_layer", layers}, {"best_layer", r.best_layer}, {"best", r.best}, {"used", r.used},
          {"missing", r.missing}};
}

nlohmann::json to_json(const PerplexityResult& r) {
  return {{"ppl", r.ppl}, {"nll", r.nll}, {"tokens", r.tokens}, {"lines", r.lines}, {"unknown", r.unknown}};
}

// ---------------------------------------------------------------- benchmark files

std::vector<MinimalPairItem> load_minimal_pairs(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<MinimalPairItem> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = split_tabs(line);
    if (lineno == 1 && !f.empty() && f[0] == "uid") continue;
    auto where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 4) throw Error(ErrorCode::BadBenchmarkFile, where + ": expected 4 columns");
    MinimalPairItem item{f[0], f[1], f[2], f[3]};
    if (item.good.empty() || item.bad.empty() || item.good == item.bad) {
      throw Error(ErrorCode::BadBenchmarkFile, where + ": sentences must be non-empty and differ");
    }
    if (!is_known_phenomenon(item.phenomenon)) {
      throw Error(ErrorCode::BadBenchmarkFile, where + ": unknown phenomenon '" + item.phenomenon + "'");
    }
    items.push_back(std::move(item));
  }
  return items;
}

void save_minimal_pairs(const std::filesystem::path& path, std::span<const MinimalPairItem> items) {
  std::string out = "uid\tphenomenon\tsentence_good\tsentence_bad\n";
  for (const auto& i : items) out += i.uid + '\t' + i.phenomenon + '\t' + i.good + '\t' + i.bad + '\n';
  write_file(path, out);
}

std::vector<WordPairItem> load_word_pairs(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<WordPairItem> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = split_tabs(line);
    if (lineno == 1 && !f.empty() && f[0] == "w1") continue;
    auto where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 5) throw Error(ErrorCode::BadBenchmarkFile, where + ": expected 5 columns");
    WordPairItem item;
    item.w1 = f[0];
    item.w2 = f[1];
    try {
      std::size_t used = 0;
      item.gold = std::stod(f[2], &used);
      if (used != f[2].size() || !std::isfinite(item.gold)) throw std::invalid_argument(f[2]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::BadBenchmarkFile, where + ": bad gold score '" + f[2] + "'");
    }
    item.lang1 = parse_language(f[3], path);
    item.lang2 = parse_language(f[4], path);
    if (item.w1.empty() || item.w2.empty()) throw Error(ErrorCode::BadBenchmarkFile, where + ": empty word");
    items.push_back(std::move(item));
  }
  return items;
}

void save_word_pairs(const std::filesystem::path& path, std::span<const WordPairItem> items) {
  std::string out = "w1\tw2\tgold\tlang1\tlang2\n";
  for (const auto& i : items) {
    char gold[32];
    std::snprintf(gold, sizeof gold, "%.17g", i.gold);
    out += i.w1 + '\t' + i.w2 + '\t' + gold + '\t' + text::fold_case(to_string(i.lang1)) + '\t' +
           text::fold_case(to_string(i.lang2)) + '\n';
  }
  write_file(path, out);
}

}  // namespace exposure
