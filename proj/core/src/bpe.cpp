#include "exposure/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <queue>
#include <sstream>

#include "exposure/digest.hpp"
#include "exposure/errors.hpp"
#include "exposure/text.hpp"

namespace exposure {
namespace {

using nlohmann::json;

constexpr std::uint32_t kFormatVersion = 1;

enum class CharClass { Letter, Number, Space, Other };

CharClass classify(char32_t cp) {
  if (text::is_letter(cp)) return CharClass::Letter;
  if (text::is_digit(cp)) return CharClass::Number;
  if (text::is_space(cp)) return CharClass::Space;
  return CharClass::Other;
}

std::uint64_t pair_key(TokenId l, TokenId r) { return (static_cast<std::uint64_t>(l) << 32) | r; }

// Calls `segment(text)` for text between specials and `special()` for each
// <|endoftext|> occurrence.
template <typename Segment, typename Special>
void split_specials(std::string_view s, Segment segment, Special special) {
  std::size_t pos = 0;
  while (true) {
    const auto hit = s.find(kEndOfText, pos);
    if (hit == std::string_view::npos) {
      if (pos < s.size()) segment(s.substr(pos));
      return;
    }
    if (hit > pos) segment(s.substr(pos, hit - pos));
    special();
    pos = hit + kEndOfText.size();
  }
}

}  // namespace

std::vector<std::string_view> pretokenize(std::string_view s) {
  struct Char {
    std::size_t offset;
    char32_t cp;
    CharClass cls;
  };
  std::vector<Char> chars;
  chars.reserve(s.size());
  for (std::size_t pos = 0; pos < s.size();) {
    auto d = text::decode_at(s, pos);
    chars.push_back({pos, d.cp, classify(d.cp)});
    pos += d.length;
  }
  const std::size_t n = chars.size();
  auto offset = [&](std::size_t i) { return i < n ? chars[i].offset : s.size(); };

  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto emit = [&](std::size_t begin, std::size_t end) {
    out.push_back(s.substr(offset(begin), offset(end) - offset(begin)));
    i = end;
  };
  while (i < n) {
    const Char& c = chars[i];
    if (c.cp == U'\'' && i + 1 < n) {
      auto at = [&](std::size_t k) { return i + k < n ? chars[i + k].cp : char32_t{0}; };
      const char32_t a = at(1);
      if (a == U's' || a == U't' || a == U'm' || a == U'd') {
        emit(i, i + 2);
        continue;
      }
      if ((a == U'r' && at(2) == U'e') || (a == U'v' && at(2) == U'e') || (a == U'l' && at(2) == U'l')) {
        emit(i, i + 3);
        continue;
      }
    }
    // " ?X+" for X in letter, number, other
    std::size_t start = i;
    std::size_t j = i;
    if (c.cp == U' ' && i + 1 < n && chars[i + 1].cls != CharClass::Space) ++j;
    if (chars[j].cls != CharClass::Space) {
      const CharClass cls = chars[j].cls;
      while (j < n && chars[j].cls == cls) ++j;
      emit(start, j);
      continue;
    }
    // whitespace run
    std::size_t end = i;
    while (end < n && chars[end].cls == CharClass::Space) ++end;
    if (end == n || end - i == 1) {
      emit(i, end);
    } else {
      emit(i, end - 1);  // leave the last space to prefix the next piece
    }
  }
  return out;
}

BpeModel::BpeModel() {
  tokens_.reserve(kByteAlphabet + 1);
  for (std::size_t b = 0; b < kByteAlphabet; ++b) {
    tokens_.emplace_back(1, static_cast<char>(b));
    index_.emplace(tokens_.back(), static_cast<TokenId>(b));
  }
  tokens_.emplace_back(kEndOfText);
}

const std::string& BpeModel::token_bytes(TokenId id) const {
  if (id >= tokens_.size()) throw Error(ErrorCode::UnknownId, "token id " + std::to_string(id));
  return tokens_[id];
}

std::optional<TokenId> BpeModel::find(std::string_view bytes) const {
  auto it = index_.find(std::string(bytes));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId BpeModel::add_merge(TokenId left, TokenId right) {
  std::string merged = tokens_[left] + tokens_[right];
  TokenId result;
  if (auto it = index_.find(merged); it != index_.end()) {
    result = it->second;
  } else {
    result = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(merged);
    index_.emplace(std::move(merged), result);
  }
  rank_.emplace(pair_key(left, right), static_cast<std::uint32_t>(merges_.size()));
  merges_.push_back({left, right, result});
  return result;
}

TokenSeq BpeModel::encode_piece(std::string_view piece) const {
  TokenSeq ids(piece.size());
  for (std::size_t i = 0; i < piece.size(); ++i) ids[i] = static_cast<unsigned char>(piece[i]);
  while (ids.size() > 1) {
    std::uint32_t best_rank = UINT32_MAX;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      auto it = rank_.find(pair_key(ids[i], ids[i + 1]));
      if (it != rank_.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == UINT32_MAX) break;
    const Merge& m = merges_[best_rank];
    TokenSeq next;
    next.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size();) {
      if (i + 1 < ids.size() && ids[i] == m.left && ids[i + 1] == m.right) {
        next.push_back(m.result);
        i += 2;
      } else {
        next.push_back(ids[i++]);
      }
    }
    ids.swap(next);
  }
  return ids;
}

TokenSeq BpeModel::encode(std::string_view text) const {
  TokenSeq out;
  split_specials(
      text,
      [&](std::string_view segment) {
        for (auto piece : pretokenize(segment)) {
          auto ids = encode_piece(piece);
          out.insert(out.end(), ids.begin(), ids.end());
        }
      },
      [&] { out.push_back(kEosId); });
  return out;
}

std::string BpeModel::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += token_bytes(id);
  return out;
}

bool BpeModel::operator==(const BpeModel& other) const {
  if (tokens_ != other.tokens_ || merges_.size() != other.merges_.size()) return false;
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    const auto& a = merges_[i];
    const auto& b = other.merges_[i];
    if (a.left != b.left || a.right != b.right || a.result != b.result) return false;
  }
  return true;
}

void BpeModel::save(const std::filesystem::path& dir) const {
  json header{{"version", kFormatVersion},
              {"vocab_size", vocab_size()},
              {"requested_vocab_size", requested_},
              {"undersized", undersized_},
              {"pretokenizer_pattern", std::string(kPretokenizerPattern)},
              {"eos_token", std::string(kEndOfText)},
              {"eos_id", kEosId},
              {"merges", merges_.size()},
              {"byte_escape", "gpt2-bytes-to-unicode"}};
  write_file(dir / "tokenizer.json", header.dump(1) + "\n");

  std::string vocab;
  for (std::size_t id = 0; id < tokens_.size(); ++id) {
    vocab += id == kEosId ? std::string(kEndOfText) : text::escape_bytes(tokens_[id]);
    vocab += '\t';
    vocab += std::to_string(id);
    vocab += '\n';
  }
  write_file(dir / "vocab.txt", vocab);

  std::string merges = "#version: 1\n";
  for (const auto& m : merges_) {
    merges += text::escape_bytes(tokens_[m.left]);
    merges += ' ';
    merges += text::escape_bytes(tokens_[m.right]);
    merges += '\n';
  }
  write_file(dir / "merges.txt", merges);
}

BpeModel BpeModel::load(const std::filesystem::path& dir) {
  json header;
  try {
    header = json::parse(read_file(dir / "tokenizer.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadTokenizerFile, (dir / "tokenizer.json").string() + ": " + e.what());
  }
  if (header.value("version", 0u) != kFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "tokenizer format version " + header.value("version", json()).dump());
  }
  if (header.value("eos_id", 0u) != kEosId) throw Error(ErrorCode::BadTokenizerFile, "unexpected eos_id");

  BpeModel model;
  std::istringstream merges(read_file(dir / "merges.txt"));
  std::string line;
  while (std::getline(merges, line)) {
    if (line.empty() || line.starts_with("#version")) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw Error(ErrorCode::BadTokenizerFile, "merge line without separator: " + line);
    std::string left, right;
    try {
      left = text::unescape_bytes(std::string_view(line).substr(0, sp));
      right = text::unescape_bytes(std::string_view(line).substr(sp + 1));
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorCode::BadTokenizerFile, e.what());
    }
    auto l = model.find(left);
    auto r = model.find(right);
    if (!l || !r) throw Error(ErrorCode::BadTokenizerFile, "merge references an unknown token: " + line);
    model.add_merge(*l, *r);
  }

  std::istringstream vocab(read_file(dir / "vocab.txt"));
  std::size_t expected = 0;
  while (std::getline(vocab, line)) {
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw Error(ErrorCode::BadTokenizerFile, "vocab line without id: " + line);
    const auto id = static_cast<std::size_t>(std::stoull(line.substr(tab + 1)));
    if (id != expected || id >= model.tokens_.size()) {
      throw Error(ErrorCode::BadTokenizerFile, "vocab.txt disagrees with merges.txt at id " + std::to_string(id));
    }
    if (id != kEosId && text::unescape_bytes(std::string_view(line).substr(0, tab)) != model.tokens_[id]) {
      throw Error(ErrorCode::BadTokenizerFile, "vocab.txt token mismatch at id " + std::to_string(id));
    }
    ++expected;
  }
  if (expected != model.tokens_.size() || header.value("vocab_size", std::size_t{0}) != expected) {
    throw Error(ErrorCode::BadTokenizerFile, "vocab size does not match the merge list");
  }
  model.undersized_ = header.value("undersized", false);
  model.requested_ = header.value("requested_vocab_size", expected);
  return model;
}

class BpeTrainer {
 public:
  explicit BpeTrainer(std::size_t vocab_size) { model_.requested_ = vocab_size; }

  void add(std::string_view line) {
    split_specials(
        line, [&](std::string_view segment) {
          for (auto piece : pretokenize(segment)) ++counts_[std::string(piece)];
        },
        [] {});
  }

  BpeModel finish() {
    build_words();
    build_pairs();
    const std::size_t target = model_.requested_;
    while (model_.vocab_size() < target) {
      auto best = pop_best();
      if (!best) break;
      apply(best->left, best->right);
    }
    model_.undersized_ = model_.vocab_size() < target;
    return std::move(model_);
  }

 private:
  struct Word {
    TokenSeq syms;
    std::int64_t freq;
  };

  struct Candidate {
    std::int64_t count;
    TokenId left;
    TokenId right;
  };

  // strict weak order: "a comes out of the heap after b"
  struct Later {
    const BpeTrainer* self;
    bool operator()(const Candidate& a, const Candidate& b) const {
      if (a.count != b.count) return a.count < b.count;
      const auto& tok = self->model_.tokens_;
      const std::string ab = tok[a.left] + tok[a.right];
      const std::string bb = tok[b.left] + tok[b.right];
      if (ab != bb) return ab > bb;
      return tok[a.left] > tok[b.left];
    }
  };

  void build_words() {
    // map iteration gives a canonical word order
    std::map<std::string, std::int64_t> sorted(counts_.begin(), counts_.end());
    counts_.clear();
    words_.reserve(sorted.size());
    for (const auto& [piece, freq] : sorted) {
      TokenSeq syms(piece.size());
      for (std::size_t i = 0; i < piece.size(); ++i) syms[i] = static_cast<unsigned char>(piece[i]);
      words_.push_back({std::move(syms), freq});
    }
  }

  void build_pairs() {
    for (std::uint32_t w = 0; w < words_.size(); ++w) {
      const auto& word = words_[w];
      for (std::size_t i = 0; i + 1 < word.syms.size(); ++i) {
        const auto key = pair_key(word.syms[i], word.syms[i + 1]);
        pair_counts_[key] += word.freq;
        where_[key].push_back(w);
      }
    }
    for (const auto& [key, count] : pair_counts_) push(key, count);
  }

  void push(std::uint64_t key, std::int64_t count) {
    if (count > 0) heap_.push({count, static_cast<TokenId>(key >> 32), static_cast<TokenId>(key & 0xFFFFFFFFu)});
  }

  std::optional<Candidate> pop_best() {
    while (!heap_.empty()) {
      Candidate c = heap_.top();
      heap_.pop();
      auto it = pair_counts_.find(pair_key(c.left, c.right));
      if (it == pair_counts_.end() || it->second != c.count) continue;  // stale
      if (c.count < 2) return std::nullopt;  // no pair repeats
      return c;
    }
    return std::nullopt;
  }

  void apply(TokenId left, TokenId right) {
    const TokenId result = model_.add_merge(left, right);
    const auto key = pair_key(left, right);
    auto occurrences = std::move(where_[key]);
    where_.erase(key);
    std::sort(occurrences.begin(), occurrences.end());
    occurrences.erase(std::unique(occurrences.begin(), occurrences.end()), occurrences.end());

    std::unordered_map<std::uint64_t, std::int64_t> delta;
    for (std::uint32_t w : occurrences) {
      auto& word = words_[w];
      bool present = false;
      for (std::size_t i = 0; i + 1 < word.syms.size(); ++i) {
        if (word.syms[i] == left && word.syms[i + 1] == right) {
          present = true;
          break;
        }
      }
      if (!present) continue;
      for (std::size_t i = 0; i + 1 < word.syms.size(); ++i) delta[pair_key(word.syms[i], word.syms[i + 1])] -= word.freq;
      TokenSeq next;
      next.reserve(word.syms.size());
      for (std::size_t i = 0; i < word.syms.size();) {
        if (i + 1 < word.syms.size() && word.syms[i] == left && word.syms[i + 1] == right) {
          next.push_back(result);
          i += 2;
        } else {
          next.push_back(word.syms[i++]);
        }
      }
      word.syms.swap(next);
      for (std::size_t i = 0; i + 1 < word.syms.size(); ++i) {
        const auto k = pair_key(word.syms[i], word.syms[i + 1]);
        delta[k] += word.freq;
        if (word.syms[i] == result || word.syms[i + 1] == result) where_[k].push_back(w);
      }
    }
    // apply in key order so the heap sees a deterministic push sequence
    std::vector<std::pair<std::uint64_t, std::int64_t>> changes(delta.begin(), delta.end());
    std::sort(changes.begin(), changes.end());
    for (const auto& [k, d] : changes) {
      if (d == 0) continue;
      auto& count = pair_counts_[k];
      count += d;
      if (count <= 0) {
        pair_counts_.erase(k);
      } else {
        push(k, count);
      }
    }
  }

  BpeModel model_;
  std::unordered_map<std::string, std::int64_t> counts_;
  std::vector<Word> words_;
  std::unordered_map<std::uint64_t, std::int64_t> pair_counts_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where_;
  std::priority_queue<Candidate, std::vector<Candidate>, Later> heap_{Later{this}};
};

BpeModel train_bpe(std::span<const std::string> lines, std::size_t vocab_size) {
  if (vocab_size < kByteAlphabet + 1) {
    throw Error(ErrorCode::InvalidArgument, "vocab_size must be at least 257 (bytes + <|endoftext|>)");
  }
  if (lines.empty()) throw Error(ErrorCode::InvalidArgument, "cannot train a tokenizer on an empty corpus");
  BpeTrainer trainer(vocab_size);
  for (const auto& line : lines) trainer.add(line);
  return trainer.finish();
}

BpeModel train_bpe(const Corpus& corpus, std::size_t vocab_size) {
  std::vector<std::string> lines;
  lines.reserve(corpus.size());
  for (const auto& d : corpus) lines.push_back(serialize_training_line(d));
  return train_bpe(lines, vocab_size);
}

TokenSeq CachedEncoder::encode(std::string_view text) {
  TokenSeq out;
  split_specials(
      text,
      [&](std::string_view segment) {
        for (auto piece : pretokenize(segment)) {
          auto it = cache_.find(std::string(piece));
          if (it == cache_.end()) it = cache_.emplace(std::string(piece), model_->encode_piece(piece)).first;
          out.insert(out.end(), it->second.begin(), it->second.end());
        }
      },
      [&] { out.push_back(kEosId); });
  return out;
}

TokenSeq encode_word(const BpeModel& model, std::string_view word) {
  std::string spaced;
  spaced.reserve(word.size() + 1);
  spaced.push_back(' ');
  spaced.append(word);
  TokenSeq ids = model.encode(spaced);
  if (!ids.empty() && model.token_bytes(ids.front()) == " ") ids.erase(ids.begin());
  return ids;
}

Fragmentation fragmentation_rate(const BpeModel& model, const Corpus& corpus) {
  std::unordered_map<std::string, std::size_t> cache;
  Fragmentation f;
  for (const auto& d : corpus) {
    for (const auto& t : d.turns) {
      for (auto w : text::regex_words(t.text)) {
        auto it = cache.find(std::string(w));
        if (it == cache.end()) it = cache.emplace(std::string(w), encode_word(model, w).size()).first;
        f.tokens += it->second;
        ++f.words;
      }
    }
  }
  return f;
}

}  // namespace exposure
