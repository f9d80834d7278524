#include <benchmark/benchmark.h>

#include <vector>

#include "exposure/bpe.hpp"
#include "exposure/embanalysis.hpp"
#include "exposure/eval.hpp"
#include "exposure/fixture.hpp"
#include "exposure/models.hpp"
#include "exposure/random.hpp"

using namespace exposure;

namespace {

const std::vector<std::string>& fixture_lines() {
  static const std::vector<std::string> lines = [] {
    std::vector<std::string> out;
    for (const auto& d : generate_fixture(42, 1000, default_lexicons()).en) out.push_back(serialize_training_line(d));
    return out;
  }();
  return lines;
}

const BpeModel& fixture_bpe() {
  static const BpeModel bpe = train_bpe(fixture_lines(), 2000);
  return bpe;
}

TokenSeq fixture_stream() {
  TokenSeq stream;
  for (const auto& l : fixture_lines()) {
    stream.push_back(kEosId);
    const auto ids = fixture_bpe().encode(l);
    stream.insert(stream.end(), ids.begin(), ids.end());
  }
  return stream;
}

}  // namespace

static void BM_BpeTrain(benchmark::State& state) {
  const auto& lines = fixture_lines();
  for (auto _ : state) benchmark::DoNotOptimize(train_bpe(lines, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_BpeTrain)->Arg(1000)->Arg(3000)->Unit(benchmark::kMillisecond);

static void BM_BpeEncode(benchmark::State& state) {
  const auto& lines = fixture_lines();
  const auto& bpe = fixture_bpe();
  std::size_t bytes = 0;
  for (auto _ : state) {
    for (const auto& l : lines) {
      benchmark::DoNotOptimize(bpe.encode(l));
      bytes += l.size();
    }
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(bytes));
}
BENCHMARK(BM_BpeEncode)->Unit(benchmark::kMillisecond);

static void BM_NgramTrain(benchmark::State& state) {
  const auto stream = fixture_stream();
  for (auto _ : state) benchmark::DoNotOptimize(train_ngram(stream, static_cast<std::size_t>(state.range(0))));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * stream.size()));
}
BENCHMARK(BM_NgramTrain)->Arg(3)->Arg(5)->Unit(benchmark::kMillisecond);

static void BM_SlidingWindow(benchmark::State& state) {
  const auto stream = fixture_stream();
  const auto lm = train_ngram(stream, 3);
  const TokenSeq seq(stream.begin(), stream.begin() + state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sliding_window_nll(lm, seq, 1024, 512));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SlidingWindow)->Arg(1024)->Arg(8192)->Unit(benchmark::kMicrosecond);

static void BM_SgnsEpoch(benchmark::State& state) {
  const auto stream = fixture_stream();
  SgnsConfig cfg;
  cfg.epochs = 1;
  cfg.dim = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train_sgns(stream, fixture_bpe().vocab_size(), cfg));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * stream.size()));
}
BENCHMARK(BM_SgnsEpoch)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_Spearman(benchmark::State& state) {
  SplitMix64 rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<double>(rng.below(100));
    y[i] = rng.uniform();
  }
  for (auto _ : state) benchmark::DoNotOptimize(spearman(x, y));
}
BENCHMARK(BM_Spearman)->Arg(1000)->Arg(100000);

static void BM_Pca(benchmark::State& state) {
  SplitMix64 rng(2);
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 64;
  std::vector<double> data(rows * cols);
  for (auto& v : data) v = rng.uniform() - 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(project_2d(data, rows, cols));
}
BENCHMARK(BM_Pca)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
