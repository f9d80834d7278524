#include "exposure/embanalysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "exposure/errors.hpp"
#include "exposure/text.hpp"

namespace exposure {

std::string_view to_string(TokenLabel l) noexcept {
  switch (l) {
    case TokenLabel::English: return "English";
    case TokenLabel::Spanish: return "Spanish";
    case TokenLabel::Shared: return "Shared";
    case TokenLabel::Excluded: return "Excluded";
  }
  return "?";
}

TokenLabel token_label_from_string(std::string_view s) {
  for (auto l : {TokenLabel::English, TokenLabel::Spanish, TokenLabel::Shared, TokenLabel::Excluded}) {
    if (s == to_string(l)) return l;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown token label '" + std::string(s) + "'");
}

TokenLabel classify_fraction(double en_fraction, double threshold) {
  if (!(threshold > 0.5 && threshold <= 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be in (0.5, 1]");
  constexpr double kSlack = 1e-12;
  if (en_fraction >= threshold - kSlack) return TokenLabel::English;
  if (1.0 - en_fraction >= threshold - kSlack) return TokenLabel::Spanish;
  return TokenLabel::Shared;
}

namespace {

std::vector<std::uint64_t> count_tokens(const BpeModel& tokenizer, std::span<const std::string> lines, std::size_t limit) {
  std::vector<std::uint64_t> counts(tokenizer.vocab_size(), 0);
  CachedEncoder encoder(tokenizer);
  const std::size_t n = std::min(limit, lines.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (TokenId t : encoder.encode(lines[i])) ++counts[t];
  }
  return counts;
}

std::vector<std::string> serialized(const Corpus& c, std::size_t limit) {
  std::vector<std::string> lines;
  const std::size_t n = std::min(limit, c.size());
  lines.reserve(n);
  for (std::size_t i = 0; i < n; ++i) lines.push_back(serialize_training_line(c[i]));
  return lines;
}

std::string format_float(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::vector<TokenLanguageLabel> label_tokens(const BpeModel& tokenizer, std::span<const std::string> en_lines,
                                             std::span<const std::string> es_lines, const LabelOptions& options) {
  classify_fraction(0.0, options.threshold);  // validates the threshold
  const auto en = count_tokens(tokenizer, en_lines, options.sample_lines);
  const auto es = count_tokens(tokenizer, es_lines, options.sample_lines);
  std::vector<TokenLanguageLabel> labels(tokenizer.vocab_size());
  for (std::size_t id = 0; id < labels.size(); ++id) {
    auto& l = labels[id];
    l.id = static_cast<TokenId>(id);
    l.en_count = en[id];
    l.es_count = es[id];
    const std::uint64_t total = en[id] + es[id];
    if (total == 0) continue;
    l.en_fraction = static_cast<double>(en[id]) / static_cast<double>(total);
    l.label = classify_fraction(l.en_fraction, options.threshold);
  }
  return labels;
}

std::vector<TokenLanguageLabel> label_tokens(const BpeModel& tokenizer, const Corpus& en, const Corpus& es,
                                             const LabelOptions& options) {
  const auto en_lines = serialized(en, options.sample_lines);
  const auto es_lines = serialized(es, options.sample_lines);
  return label_tokens(tokenizer, en_lines, es_lines, options);
}

nlohmann::json label_summary(std::span<const TokenLanguageLabel> labels, double threshold) {
  std::size_t counts[4] = {0, 0, 0, 0};
  for (const auto& l : labels) ++counts[static_cast<int>(l.label)];
  return {{"English", counts[0]}, {"Spanish", counts[1]}, {"Shared", counts[2]},
          {"Excluded", counts[3]}, {"threshold", threshold}};
}

Projection project_2d(std::span<const double> data, std::size_t rows, std::size_t cols) {
  if (data.size() != rows * cols) throw Error(ErrorCode::LengthMismatch, "matrix data is not rows x cols");
  for (double v : data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "projection input must be finite");
  }
  Projection p;
  p.coords.assign(rows, {0.0, 0.0});
  if (rows < 2 || cols == 0) {
    p.rank_deficient = true;
    return p;
  }
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Matrix> x(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(rows - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const auto& values = solver.eigenvalues();  // ascending
  const auto& vectors = solver.eigenvectors();
  const Eigen::Index d = static_cast<Eigen::Index>(cols);
  const double top = std::max(values(d - 1), 0.0);
  const double tol = 1e-12 * std::max(top, 1e-300);

  for (int k = 0; k < 2; ++k) {
    if (k >= d) break;
    const double lambda = std::max(values(d - 1 - k), 0.0);
    if (lambda <= tol) break;
    p.variance[static_cast<std::size_t>(k)] = lambda;
    Eigen::VectorXd scores = centered * vectors.col(d - 1 - k);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i) {
      if (std::abs(scores(i)) > std::abs(scores(arg))) arg = i;
    }
    if (scores(arg) < 0) scores = -scores;
    for (std::size_t i = 0; i < rows; ++i) p.coords[i][static_cast<std::size_t>(k)] = scores(static_cast<Eigen::Index>(i));
  }
  p.rank_deficient = p.variance[1] == 0.0;
  return p;
}

std::vector<TokenId> select_tokens(std::span<const TokenLanguageLabel> labels, std::size_t max_tokens) {
  std::vector<TokenId> ids;
  for (const auto& l : labels) {
    if (ids.size() >= max_tokens) break;
    if (l.label != TokenLabel::Excluded) ids.push_back(l.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

Projection project_tokens(const EmbeddingProvider& provider, std::size_t layer, std::span<const TokenId> ids) {
  std::vector<double> data;
  data.reserve(ids.size() * provider.dim());
  for (TokenId id : ids) {
    const auto v = provider.vector(id, layer);
    data.insert(data.end(), v.begin(), v.end());
  }
  return project_2d(data, ids.size(), provider.dim());
}

std::string export_plot_data(std::span<const TokenId> ids, const Projection& projection,
                             std::span<const TokenLanguageLabel> labels, const BpeModel& tokenizer) {
  if (ids.size() != projection.coords.size()) {
    throw Error(ErrorCode::LengthMismatch, "token ids and coordinates differ in length");
  }
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });

  std::string out = "token_id\ttoken\tx\ty\tlabel\ten_fraction\n";
  for (std::size_t i : order) {
    const TokenId id = ids[i];
    if (id >= labels.size() || labels[id].id != id) {
      throw Error(ErrorCode::LengthMismatch, "no label for token id " + std::to_string(id));
    }
    const auto& l = labels[id];
    out += std::to_string(id);
    out += '\t';
    out += text::escape_bytes(tokenizer.token_bytes(id));
    out += '\t';
    out += format_float(projection.coords[i][0]);
    out += '\t';
    out += format_float(projection.coords[i][1]);
    out += '\t';
    out += to_string(l.label);
    out += '\t';
    out += format_float(l.en_fraction);
    out += '\n';
  }
  return out;
}

std::vector<PlotRow> parse_plot_data(std::string_view tsv) {
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::vector<PlotRow> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      if (line.rfind("token_id\t", 0) == 0) continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream fields(line);
    for (std::string field; std::getline(fields, field, '\t');) f.push_back(field);
    if (f.size() != 6) throw Error(ErrorCode::LengthMismatch, "plot row needs 6 columns: " + line);
    PlotRow r;
    r.id = static_cast<TokenId>(std::stoul(f[0]));
    r.token = text::unescape_bytes(f[1]);
    r.x = std::stod(f[2]);
    r.y = std::stod(f[3]);
    r.label = token_label_from_string(f[4]);
    r.en_fraction = std::stod(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace exposure
