#include "exposure/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "exposure/digest.hpp"
#include "exposure/errors.hpp"
#include "exposure/random.hpp"

namespace exposure {

double ScoringModel::last_log_prob(std::span<const TokenId> tokens) const {
  if (tokens.size() < 2) throw Error(ErrorCode::EmptySequence, "need at least two tokens to score the last one");
  return log_probs(tokens).back();
}

// ---------------------------------------------------------------- uniform

UniformLm::UniformLm(std::size_t vocab_size, std::size_t window)
    : window_(window), log_p_(-std::log(static_cast<double>(vocab_size) + 1.0)) {}

std::vector<double> UniformLm::log_probs(std::span<const TokenId> tokens) const {
  if (tokens.empty()) return {};
  return std::vector<double>(tokens.size() - 1, log_p_);
}

double UniformLm::last_log_prob(std::span<const TokenId>) const { return log_p_; }

// ---------------------------------------------------------------- n-gram

std::size_t NgramKeyHash::operator()(const NgramKey& k) const noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL ^ k.size;
  for (std::size_t i = 0; i < k.size; ++i) {
    h ^= k.ids[i];
    h *= 0x100000001B3ULL;
    h ^= h >> 29;
  }
  return static_cast<std::size_t>(h);
}

namespace {

NgramKey make_key(std::span<const TokenId> ids) {
  NgramKey k;
  k.size = static_cast<std::uint8_t>(ids.size());
  std::copy(ids.begin(), ids.end(), k.ids.begin());
  return k;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

NGramLm::NGramLm(std::size_t order, double discount, std::size_t window)
    : order_(order), discount_(discount), window_(window), counts_(order), contexts_(order) {
  if (order < 1 || order > kMaxNgramOrder) {
    throw Error(ErrorCode::InvalidArgument, "n-gram order must be in [1, " + std::to_string(kMaxNgramOrder) + "]");
  }
  if (!(discount > 0.0 && discount < 1.0)) throw Error(ErrorCode::InvalidArgument, "discount must be in (0, 1)");
  if (window < 2) throw Error(ErrorCode::InvalidArgument, "context window must be at least 2");
}

void NGramLm::add_stream(std::span<const TokenId> stream) {
  for (std::size_t i = 0; i < stream.size(); ++i) {
    ++vocab_[stream[i]];
    ++total_;
    for (std::size_t k = 2; k <= order_ && k <= i + 1; ++k) {
      auto gram = stream.subspan(i + 1 - k, k);
      auto& c = counts_[k - 1][make_key(gram)];
      auto& ctx = contexts_[k - 1][make_key(gram.first(k - 1))];
      if (c == 0) ++ctx.distinct;
      ++c;
      ++ctx.total;
    }
  }
}

std::vector<TokenId> NGramLm::vocab() const {
  std::vector<TokenId> out;
  out.reserve(vocab_.size());
  for (const auto& [id, _] : vocab_) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

double NGramLm::prob(TokenId w, std::span<const TokenId> history) const {
  const double d = discount_;
  const double v = static_cast<double>(vocab_.size());
  double p = 1.0 / (v + 1.0);
  if (total_ == 0) return p;

  w = map_unk(w);
  {
    auto it = vocab_.find(w);
    const double c = it == vocab_.end() ? 0.0 : static_cast<double>(it->second);
    const double n = static_cast<double>(total_);
    p = std::max(c - d, 0.0) / n + d * v / n * p;
  }
  std::array<TokenId, kMaxNgramOrder> gram{};
  for (std::size_t k = 2; k <= order_ && k - 1 <= history.size(); ++k) {
    // context = last k-1 history tokens
    const auto ctx_span = history.subspan(history.size() - (k - 1));
    bool has_unk = false;
    for (std::size_t j = 0; j < k - 1; ++j) {
      gram[j] = map_unk(ctx_span[j]);
      has_unk = has_unk || gram[j] == kUnkId;
    }
    if (has_unk) break;
    gram[k - 1] = w;
    auto ctx_it = contexts_[k - 1].find(make_key(std::span<const TokenId>(gram.data(), k - 1)));
    if (ctx_it == contexts_[k - 1].end()) break;  // longer contexts are unseen too
    const double ch = static_cast<double>(ctx_it->second.total);
    const double n1 = static_cast<double>(ctx_it->second.distinct);
    double c = 0.0;
    if (w != kUnkId) {
      auto it = counts_[k - 1].find(make_key(std::span<const TokenId>(gram.data(), k)));
      if (it != counts_[k - 1].end()) c = static_cast<double>(it->second);
    }
    p = std::max(c - d, 0.0) / ch + d * n1 / ch * p;
  }
  return p;
}

std::vector<double> NGramLm::log_probs(std::span<const TokenId> tokens) const {
  std::vector<double> out;
  if (tokens.size() < 2) return out;
  out.reserve(tokens.size() - 1);
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const std::size_t start = i + 1 > order_ ? i + 1 - order_ : 0;
    out.push_back(std::log(prob(tokens[i], tokens.subspan(start, i - start))));
  }
  return out;
}

double NGramLm::last_log_prob(std::span<const TokenId> tokens) const {
  if (tokens.size() < 2) throw Error(ErrorCode::EmptySequence, "need at least two tokens to score the last one");
  const std::size_t i = tokens.size() - 1;
  const std::size_t start = i + 1 > order_ ? i + 1 - order_ : 0;
  return std::log(prob(tokens[i], tokens.subspan(start, i - start)));
}

std::size_t NGramLm::unknown_count(std::span<const TokenId> tokens) const {
  std::size_t n = 0;
  for (std::size_t i = 1; i < tokens.size(); ++i) n += in_vocab(tokens[i]) ? 0 : 1;
  return n;
}

void NGramLm::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "ngram-counts 1\n"
      << "order " << order_ << "\n"
      << "discount " << format_double(discount_) << "\n"
      << "window " << window_ << "\n";
  const auto ids = vocab();
  out << "grams 1 " << ids.size() << "\n";
  for (TokenId id : ids) out << id << ' ' << vocab_.at(id) << '\n';
  for (std::size_t k = 2; k <= order_; ++k) {
    std::vector<std::pair<NgramKey, std::uint64_t>> grams(counts_[k - 1].begin(), counts_[k - 1].end());
    std::sort(grams.begin(), grams.end(), [](const auto& a, const auto& b) { return a.first.ids < b.first.ids; });
    out << "grams " << k << ' ' << grams.size() << "\n";
    for (const auto& [key, count] : grams) {
      for (std::size_t j = 0; j < k; ++j) out << key.ids[j] << ' ';
      out << count << '\n';
    }
  }
  write_file(path, out.str());
}

NGramLm NGramLm::load(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  auto fail = [&](const std::string& what) {
    return Error(ErrorCode::InvalidArgument, path.string() + ": " + what);
  };
  std::string tag;
  int version = 0;
  std::size_t order = 0, window = 0;
  double discount = 0;
  std::string k_order, k_discount, k_window;
  if (!(in >> tag >> version) || tag != "ngram-counts") throw fail("not an n-gram counts file");
  if (version != 1) throw Error(ErrorCode::VersionMismatch, path.string() + ": counts file version " + std::to_string(version));
  if (!(in >> k_order >> order >> k_discount >> discount >> k_window >> window)) throw fail("bad header");

  NGramLm lm(order, discount, window);
  for (std::size_t k = 1; k <= order; ++k) {
    std::string grams;
    std::size_t kk = 0, n = 0;
    if (!(in >> grams >> kk >> n) || grams != "grams" || kk != k) throw fail("bad section header");
    std::array<TokenId, kMaxNgramOrder> ids{};
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < k; ++j) {
        if (!(in >> ids[j])) throw fail("truncated");
      }
      std::uint64_t count = 0;
      if (!(in >> count)) throw fail("truncated");
      if (k == 1) {
        lm.vocab_[ids[0]] = count;
        lm.total_ += count;
      } else {
        std::span<const TokenId> gram(ids.data(), k);
        lm.counts_[k - 1][make_key(gram)] = count;
        auto& ctx = lm.contexts_[k - 1][make_key(gram.first(k - 1))];
        ++ctx.distinct;
        ctx.total += count;
      }
    }
  }
  return lm;
}

NGramLm train_ngram(std::span<const TokenId> stream, std::size_t order, double discount) {
  if (stream.empty()) throw Error(ErrorCode::EmptySequence, "n-gram training stream is empty");
  NGramLm lm(order, discount);
  lm.add_stream(stream);
  return lm;
}

// ---------------------------------------------------------------- skip-gram

namespace {

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Parameters of one sample laid out as [v | u_c | u_1 .. u_K].
struct LocalParams {
  std::size_t dim;
  std::size_t k;
  std::vector<double> theta;

  std::span<const double> v() const { return {theta.data(), dim}; }
  std::span<const double> u(std::size_t slot) const { return {theta.data() + (slot + 1) * dim, dim}; }
};

LocalParams gather(const SkipGramModel& m, const SgnsSample& s) {
  LocalParams p{m.dim(), s.negatives.size(), {}};
  p.theta.reserve(m.dim() * (2 + s.negatives.size()));
  auto append = [&](std::span<const double> x) { p.theta.insert(p.theta.end(), x.begin(), x.end()); };
  append(m.input(s.center));
  append(m.output(s.context));
  for (TokenId n : s.negatives) append(m.output(n));
  return p;
}

double local_loss(const LocalParams& p) {
  double loss = -log_sigmoid(dot(p.u(0), p.v()));
  for (std::size_t k = 0; k < p.k; ++k) loss -= log_sigmoid(-dot(p.u(k + 1), p.v()));
  return loss;
}

std::vector<double> local_gradient(const LocalParams& p) {
  std::vector<double> g(p.theta.size(), 0.0);
  const std::size_t dim = p.dim;
  const auto v = p.v();
  auto apply = [&](std::size_t slot, double coeff) {
    // coeff = dL/d(u.v)
    const auto u = p.u(slot);
    for (std::size_t i = 0; i < dim; ++i) {
      g[i] += coeff * u[i];
      g[(slot + 1) * dim + i] += coeff * v[i];
    }
  };
  apply(0, -(1.0 - sigmoid(dot(p.u(0), v))));
  for (std::size_t k = 0; k < p.k; ++k) apply(k + 1, sigmoid(dot(p.u(k + 1), v)));
  return g;
}

void check_sample(const SkipGramModel& m, const SgnsSample& s) {
  auto ok = [&](TokenId id) { return id < m.vocab_size(); };
  bool valid = ok(s.center) && ok(s.context);
  for (TokenId n : s.negatives) valid = valid && ok(n);
  if (!valid) throw Error(ErrorCode::MissingToken, "sample references an id outside the embedding table");
}

}  // namespace

SkipGramModel::SkipGramModel(std::size_t vocab_size, std::size_t dim, std::uint64_t seed)
    : vocab_size_(vocab_size), dim_(dim), in_(vocab_size * dim), out_(vocab_size * dim, 0.0), seen_(vocab_size, false) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be positive");
  SplitMix64 rng(seed);
  const double scale = 1.0 / static_cast<double>(dim);
  for (auto& x : in_) x = (rng.uniform() - 0.5) * scale;
}

std::vector<double> SkipGramModel::vector(TokenId id, std::size_t layer) const {
  if (layer != 0) throw Error(ErrorCode::InvalidArgument, "skip-gram model has a single layer");
  if (!has_vector(id)) throw Error(ErrorCode::MissingToken, "no vector for token id " + std::to_string(id));
  auto v = input(id);
  return {v.begin(), v.end()};
}

SkipGramModel train_sgns(std::span<const TokenId> stream, std::size_t vocab_size, const SgnsConfig& config) {
  if (config.window == 0 || config.dim == 0) throw Error(ErrorCode::InvalidArgument, "window and dim must be positive");
  if (stream.size() <= config.window) {
    throw Error(ErrorCode::InvalidArgument, "skip-gram stream must be longer than the window");
  }
  SkipGramModel model(vocab_size, config.dim, config.seed);
  std::vector<double> counts(vocab_size, 0.0);
  for (TokenId t : stream) {
    if (t >= vocab_size) throw Error(ErrorCode::MissingToken, "token id " + std::to_string(t) + " >= vocab size");
    counts[t] += 1.0;
    model.mark_seen(t);
  }
  // cumulative unigram^exponent table for negative draws
  std::vector<double> cumulative(vocab_size);
  double acc = 0.0;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    acc += counts[i] > 0 ? std::pow(counts[i], config.table_exponent) : 0.0;
    cumulative[i] = acc;
  }

  SplitMix64 rng(config.seed ^ 0x5EEDF00DULL);
  auto draw_negative = [&] {
    const double r = rng.uniform() * acc;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    return static_cast<TokenId>(std::min<std::size_t>(it - cumulative.begin(), vocab_size - 1));
  };

  const std::size_t dim = config.dim;
  const double total_steps = static_cast<double>(config.epochs) * static_cast<double>(stream.size());
  std::vector<double> grad_v(dim);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < stream.size(); ++i, ++step) {
      const double lr = config.learning_rate * std::max(1e-4, 1.0 - static_cast<double>(step) / total_steps);
      const std::size_t reach = config.window - rng.below(config.window);
      const std::size_t lo = i >= reach ? i - reach : 0;
      const std::size_t hi = std::min(stream.size() - 1, i + reach);
      auto v = model.input(stream[i]);
      for (std::size_t j = lo; j <= hi; ++j) {
        if (j == i) continue;
        std::fill(grad_v.begin(), grad_v.end(), 0.0);
        auto update = [&](TokenId target, double label) {
          auto u = model.output(target);
          const double score = dot(u, v);
          loss -= label > 0 ? log_sigmoid(score) : log_sigmoid(-score);
          const double g = (label - sigmoid(score)) * lr;
          for (std::size_t d = 0; d < dim; ++d) {
            grad_v[d] += g * u[d];
            u[d] += g * v[d];
          }
        };
        const TokenId context = stream[j];
        update(context, 1.0);
        for (std::size_t n = 0; n < config.negatives; ++n) {
          const TokenId neg = draw_negative();
          if (neg == context) continue;
          update(neg, 0.0);
        }
        for (std::size_t d = 0; d < dim; ++d) v[d] += grad_v[d];
        ++pairs;
      }
    }
    model.epoch_loss_.push_back(pairs ? loss / static_cast<double>(pairs) : 0.0);
  }
  return model;
}

double sgns_loss(const SkipGramModel& model, const SgnsSample& sample) {
  check_sample(model, sample);
  return local_loss(gather(model, sample));
}

SgnsGradient sgns_gradient(const SkipGramModel& model, const SgnsSample& sample) {
  check_sample(model, sample);
  const auto p = gather(model, sample);
  const auto g = local_gradient(p);
  const std::size_t dim = p.dim;
  SgnsGradient out;
  out.center.assign(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(dim));
  out.context.assign(g.begin() + static_cast<std::ptrdiff_t>(dim), g.begin() + static_cast<std::ptrdiff_t>(2 * dim));
  for (std::size_t k = 0; k < p.k; ++k) {
    auto b = g.begin() + static_cast<std::ptrdiff_t>((k + 2) * dim);
    out.negatives.emplace_back(b, b + static_cast<std::ptrdiff_t>(dim));
  }
  return out;
}

GradientCheck sgns_gradient_check(const SkipGramModel& model, const SgnsSample& sample, double epsilon,
                                  std::size_t coordinates, std::uint64_t seed) {
  check_sample(model, sample);
  auto p = gather(model, sample);
  for (double x : p.theta) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "gradient check needs finite parameters");
  }
  const auto analytic = local_gradient(p);
  SplitMix64 rng(seed);
  GradientCheck result;
  for (std::size_t c = 0; c < coordinates; ++c) {
    const std::size_t idx = rng.below(p.theta.size());
    const double saved = p.theta[idx];
    p.theta[idx] = saved + epsilon;
    const double plus = local_loss(p);
    p.theta[idx] = saved - epsilon;
    const double minus = local_loss(p);
    p.theta[idx] = saved;
    const double numeric = (plus - minus) / (2.0 * epsilon);
    const double a = analytic[idx];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    result.max_relative_error = std::max(result.max_relative_error, rel);
    ++result.coordinates;
  }
  return result;
}

// ---------------------------------------------------------------- external files

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(std::string data, std::string name) : data_(std::move(data)), name_(std::move(name)) {}

  bool done() const { return pos_ == data_.size(); }

  void expect_magic(std::string_view magic) {
    if (data_.size() < magic.size() || std::string_view(data_).substr(0, magic.size()) != magic) {
      throw Error(ErrorCode::BadMagic, name_ + ": expected magic " + std::string(magic));
    }
    pos_ = magic.size();
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::Io, name_ + ": truncated file");
  }
  std::string data_;
  std::string name_;
  std::size_t pos_ = 0;
};

void check_version(std::uint32_t v, const std::filesystem::path& path) {
  if (v != kExternalFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, path.string() + ": format version " + std::to_string(v));
  }
}

}  // namespace

std::uint64_t sequence_hash(std::span<const TokenId> tokens) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (TokenId t : tokens) {
    for (int i = 0; i < 4; ++i) {
      h ^= (t >> (8 * i)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

ExternalEmbeddings::ExternalEmbeddings(std::size_t n_layers, std::size_t vocab, std::size_t dim, std::vector<float> data)
    : n_layers_(n_layers), vocab_(vocab), dim_(dim), data_(std::move(data)) {
  if (n_layers == 0 || dim == 0) throw Error(ErrorCode::InvalidArgument, "embeddings need at least one layer and dim > 0");
  if (data_.size() != n_layers * vocab * dim) throw Error(ErrorCode::LengthMismatch, "embedding data size mismatch");
}

std::vector<double> ExternalEmbeddings::vector(TokenId id, std::size_t layer) const {
  if (id >= vocab_) throw Error(ErrorCode::MissingToken, "no vector for token id " + std::to_string(id));
  if (layer >= n_layers_) throw Error(ErrorCode::InvalidArgument, "layer " + std::to_string(layer) + " out of range");
  const float* row = data_.data() + (layer * vocab_ + id) * dim_;
  return {row, row + dim_};
}

ExternalEmbeddings ExternalEmbeddings::load(const std::filesystem::path& path) {
  Reader r(read_file(path), path.string());
  r.expect_magic("EMB1");
  check_version(r.u32(), path);
  const std::size_t n_layers = r.u32();
  const std::size_t vocab = r.u32();
  const std::size_t dim = r.u32();
  std::vector<float> data(n_layers * vocab * dim);
  for (auto& x : data) x = r.f32();
  if (!r.done()) throw Error(ErrorCode::LengthMismatch, path.string() + ": trailing bytes after embedding matrices");
  return ExternalEmbeddings(n_layers, vocab, dim, std::move(data));
}

void write_embeddings(const std::filesystem::path& path, std::size_t vocab, std::size_t dim,
                      std::span<const std::vector<float>> layers) {
  std::string out = "EMB1";
  put_u32(out, kExternalFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(layers.size()));
  put_u32(out, static_cast<std::uint32_t>(vocab));
  put_u32(out, static_cast<std::uint32_t>(dim));
  for (const auto& layer : layers) {
    if (layer.size() != vocab * dim) throw Error(ErrorCode::LengthMismatch, "layer matrix is not vocab x dim");
    for (float f : layer) put_f32(out, f);
  }
  write_file(path, out);
}

void SkipGramModel::save(const std::filesystem::path& path) const {
  std::vector<std::vector<float>> layer(1, std::vector<float>(in_.size(), 0.0f));
  for (std::size_t id = 0; id < vocab_size_; ++id) {
    if (!seen_[id]) continue;
    for (std::size_t d = 0; d < dim_; ++d) layer[0][id * dim_ + d] = static_cast<float>(in_[id * dim_ + d]);
  }
  write_embeddings(path, vocab_size_, dim_, layer);
}

void ExternalScores::add(std::span<const TokenId> tokens, std::span<const float> log_probs) {
  if (tokens.empty() || log_probs.size() != tokens.size() - 1) {
    throw Error(ErrorCode::LengthMismatch, "a score record needs len-1 log-probs");
  }
  records_[sequence_hash(tokens)] = {static_cast<std::uint32_t>(tokens.size()), {log_probs.begin(), log_probs.end()}};
}

std::vector<double> ExternalScores::log_probs(std::span<const TokenId> tokens) const {
  auto it = records_.find(sequence_hash(tokens));
  if (it == records_.end() || it->second.length != tokens.size()) {
    throw Error(ErrorCode::HashMiss, "no stored scores for a sequence of " + std::to_string(tokens.size()) + " tokens");
  }
  return {it->second.values.begin(), it->second.values.end()};
}

void ExternalScores::save(const std::filesystem::path& path) const {
  std::vector<std::uint64_t> keys;
  keys.reserve(records_.size());
  for (const auto& [k, _] : records_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  std::string out = "LSC1";
  put_u32(out, kExternalFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(window_));
  for (auto k : keys) {
    const auto& rec = records_.at(k);
    put_u64(out, k);
    put_u32(out, rec.length);
    for (float f : rec.values) put_f32(out, f);
  }
  write_file(path, out);
}

ExternalScores ExternalScores::load(const std::filesystem::path& path) {
  Reader r(read_file(path), path.string());
  r.expect_magic("LSC1");
  check_version(r.u32(), path);
  ExternalScores scores(r.u32());
  while (!r.done()) {
    const std::uint64_t hash = r.u64();
    const std::uint32_t len = r.u32();
    if (len == 0) throw Error(ErrorCode::LengthMismatch, path.string() + ": zero-length score record");
    Record rec{len, std::vector<float>(len - 1)};
    for (auto& f : rec.values) f = r.f32();
    scores.records_[hash] = std::move(rec);
  }
  return scores;
}

std::pair<std::unique_ptr<ScoringModel>, std::unique_ptr<EmbeddingProvider>> load_external_model(
    const std::filesystem::path& score_file, const std::filesystem::path& embed_file) {
  std::pair<std::unique_ptr<ScoringModel>, std::unique_ptr<EmbeddingProvider>> out;
  if (!score_file.empty()) out.first = std::make_unique<ExternalScores>(ExternalScores::load(score_file));
  if (!embed_file.empty()) out.second = std::make_unique<ExternalEmbeddings>(ExternalEmbeddings::load(embed_file));
  return out;
}

}  // namespace exposure
