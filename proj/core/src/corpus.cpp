#include "exposure/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unordered_set>

#include "exposure/digest.hpp"
#include "exposure/errors.hpp"
#include "exposure/text.hpp"

namespace exposure {
namespace {

using nlohmann::json;

struct LabelMatch {
  std::string label;
  std::size_t text_start;
};

// Recognizes `**Label**:` and `**Label:**` at the start of `s`.
std::optional<LabelMatch> match_label(std::string_view s) {
  if (!s.starts_with("**")) return std::nullopt;
  auto close = s.find("**", 2);
  if (close == std::string_view::npos || close == 2) return std::nullopt;
  std::string_view label = s.substr(2, close - 2);
  std::size_t pos = close + 2;
  if (label.ends_with(':')) {
    label.remove_suffix(1);
  } else {
    while (pos < s.size() && s[pos] == ' ') ++pos;
    if (pos >= s.size() || s[pos] != ':') return std::nullopt;
    ++pos;
  }
  if (label.empty() || label.find('\n') != std::string_view::npos) return std::nullopt;
  return LabelMatch{text::trim(label), pos};
}

Speaker require_speaker(std::string_view label) {
  auto s = speaker_from_label(label);
  if (!s) throw Error(ErrorCode::UnknownSpeakerLabel, "cannot map label '" + std::string(label) + "'");
  return *s;
}

bool is_dialogue_header(std::string_view line) {
  std::string t = text::trim(line);
  std::string_view v = t;
  while (v.starts_with('*') || v.starts_with('#')) v.remove_prefix(1);
  while (v.ends_with('*')) v.remove_suffix(1);
  std::string folded = text::fold_case(text::trim(v));
  return folded == "dialogue:" || folded == "diálogo:" || folded == "dialogo:";
}

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) nl = s.size();
    std::string_view line = s.substr(start, nl - start);
    if (line.ends_with('\r')) line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

std::string replace_quotes_and_newlines(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t pos = 0; pos < s.size();) {
    auto d = text::decode_at(s, pos);
    switch (d.cp) {
      case 0x201C: case 0x201D: case 0x201E: case 0x201F:
        out.push_back('"');
        break;
      case 0x2018: case 0x2019: case 0x201A: case 0x201B:
        out.push_back('\'');
        break;
      case U'\r':
        out += "\\n";
        if (pos + 1 < s.size() && s[pos + 1] == '\n') ++pos;
        break;
      case U'\n':
        out += "\\n";
        break;
      default:
        out.append(s.substr(pos, d.length));
    }
    pos += d.length;
  }
  return out;
}

json meta_to_json(const DialogueMeta& m) {
  return json{{"id", m.id},
              {"adult_speaker", std::string(to_string(m.adult_speaker))},
              {"context", std::string(to_string(m.context))},
              {"child_age", m.child_age},
              {"language_variant", std::string(to_string(m.variant))}};
}

DialogueMeta meta_from_json(const json& j) {
  DialogueMeta m;
  m.id = j.at("id").get<std::string>();
  m.adult_speaker = speaker_from_string(j.at("adult_speaker").get<std::string>());
  m.context = context_from_string(j.at("context").get<std::string>());
  m.child_age = j.at("child_age").get<int>();
  m.variant = variant_from_string(j.at("language_variant").get<std::string>());
  return m;
}

}  // namespace

std::string_view to_string(Speaker s) noexcept {
  switch (s) {
    case Speaker::Mom: return "Mom";
    case Speaker::Dad: return "Dad";
    case Speaker::Child: return "Child";
  }
  return "?";
}

std::string_view to_string(Context c) noexcept { return c == Context::Home ? "home" : "public"; }

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::EN: return "EN";
    case Variant::ES: return "ES";
    case Variant::CS_SENT: return "CS_SENT";
    case Variant::CS_WORD: return "CS_WORD";
  }
  return "?";
}

Speaker speaker_from_string(std::string_view s) {
  if (s == "Mom") return Speaker::Mom;
  if (s == "Dad") return Speaker::Dad;
  if (s == "Child") return Speaker::Child;
  throw Error(ErrorCode::InvalidArgument, "unknown speaker '" + std::string(s) + "'");
}

Context context_from_string(std::string_view s) {
  if (s == "home") return Context::Home;
  if (s == "public") return Context::Public;
  throw Error(ErrorCode::InvalidArgument, "unknown context '" + std::string(s) + "'");
}

Variant variant_from_string(std::string_view s) {
  if (s == "EN") return Variant::EN;
  if (s == "ES") return Variant::ES;
  if (s == "CS_SENT") return Variant::CS_SENT;
  if (s == "CS_WORD") return Variant::CS_WORD;
  throw Error(ErrorCode::InvalidArgument, "unknown language variant '" + std::string(s) + "'");
}

std::optional<Speaker> speaker_from_label(std::string_view label) {
  const std::string key = text::fold_case(text::trim(label));
  static const std::pair<std::string_view, Speaker> kAliases[] = {
      {"mom", Speaker::Mom},     {"mother", Speaker::Mom},  {"mamá", Speaker::Mom},
      {"mama", Speaker::Mom},    {"madre", Speaker::Mom},   {"dad", Speaker::Dad},
      {"father", Speaker::Dad},  {"papá", Speaker::Dad},    {"papa", Speaker::Dad},
      {"padre", Speaker::Dad},   {"child", Speaker::Child}, {"niño", Speaker::Child},
      {"niña", Speaker::Child},  {"nino", Speaker::Child},  {"nina", Speaker::Child},
      {"hijo", Speaker::Child},  {"hija", Speaker::Child},
  };
  for (const auto& [alias, speaker] : kAliases) {
    if (key == alias) return speaker;
  }
  return std::nullopt;
}

void validate(const Dialogue& d) {
  if (d.meta.id.empty()) throw Error(ErrorCode::InvalidDialogue, "empty dialogue id");
  if (d.meta.adult_speaker == Speaker::Child) {
    throw Error(ErrorCode::InvalidDialogue, d.meta.id + ": adult speaker cannot be Child");
  }
  const int age = d.meta.child_age;
  if (age != 2 && age != 5 && age != 10 && age != 15) {
    throw Error(ErrorCode::InvalidDialogue, d.meta.id + ": child age must be 2, 5, 10 or 15");
  }
  if (d.turns.empty()) throw Error(ErrorCode::InvalidDialogue, d.meta.id + ": no turns");
  bool adult_seen = false;
  for (const auto& t : d.turns) {
    if (text::trim(t.text).empty()) throw Error(ErrorCode::InvalidDialogue, d.meta.id + ": empty turn");
    adult_seen = adult_seen || t.speaker == d.meta.adult_speaker;
  }
  if (!adult_seen) {
    throw Error(ErrorCode::InvalidDialogue,
                d.meta.id + ": adult speaker " + std::string(to_string(d.meta.adult_speaker)) +
                    " never speaks");
  }
}

Corpus::Corpus(std::vector<Dialogue> dialogues) : dialogues_(std::move(dialogues)) {
  std::sort(dialogues_.begin(), dialogues_.end(),
            [](const Dialogue& a, const Dialogue& b) { return a.meta.id < b.meta.id; });
  for (std::size_t i = 1; i < dialogues_.size(); ++i) {
    if (dialogues_[i].meta.id == dialogues_[i - 1].meta.id) {
      throw Error(ErrorCode::DuplicateId, "duplicate dialogue id " + dialogues_[i].meta.id);
    }
  }
}

const Dialogue* Corpus::find(std::string_view id) const noexcept {
  auto it = std::lower_bound(dialogues_.begin(), dialogues_.end(), id,
                             [](const Dialogue& d, std::string_view key) { return d.meta.id < key; });
  if (it == dialogues_.end() || it->meta.id != id) return nullptr;
  return &*it;
}

std::vector<std::string> Corpus::ids() const {
  std::vector<std::string> out;
  out.reserve(dialogues_.size());
  for (const auto& d : dialogues_) out.push_back(d.meta.id);
  return out;
}

std::optional<Variant> Corpus::variant() const noexcept {
  if (dialogues_.empty()) return std::nullopt;
  const Variant v = dialogues_.front().meta.variant;
  for (const auto& d : dialogues_) {
    if (d.meta.variant != v) return std::nullopt;
  }
  return v;
}

std::size_t Corpus::word_count() const {
  std::size_t n = 0;
  for (const auto& d : dialogues_) n += dialogue_words(d);
  return n;
}

std::size_t dialogue_words(const Dialogue& d) {
  std::size_t n = 0;
  for (const auto& t : d.turns) n += text::count_regex_words(t.text);
  return n;
}

Dialogue parse_dialogue(std::string_view raw, const DialogueMeta& meta) {
  auto lines = split_lines(raw);
  std::size_t header = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_dialogue_header(lines[i])) {
      header = i;
      break;
    }
  }
  if (header == lines.size()) {
    throw Error(ErrorCode::MissingDialogueSection, meta.id + ": no DIALOGUE: header");
  }

  Dialogue d{meta, {}};
  bool after_blank = false;
  for (std::size_t i = header + 1; i < lines.size(); ++i) {
    std::string line = text::trim(lines[i]);
    if (line.empty()) {
      after_blank = !d.turns.empty();
      continue;
    }
    if (auto m = match_label(line)) {
      d.turns.push_back(Turn{require_speaker(m->label), text::trim(std::string_view(line).substr(m->text_start))});
    } else if (d.turns.empty()) {
      throw Error(ErrorCode::InvalidDialogue, meta.id + ": dialogue text before the first speaker label");
    } else {
      auto& t = d.turns.back().text;
      t += after_blank ? "\n\n" : "\n";
      t += line;
    }
    after_blank = false;
  }
  if (d.turns.empty()) throw Error(ErrorCode::MissingDialogueSection, meta.id + ": DIALOGUE section is empty");
  validate(d);
  return d;
}

Dialogue parse_training_line(std::string_view line, const DialogueMeta& meta) {
  if (!line.ends_with(kEndOfText) || line.find(kEndOfText) != line.size() - kEndOfText.size()) {
    throw Error(ErrorCode::InvalidDialogue, meta.id + ": line must end with exactly one end-of-text marker");
  }
  if (line.find('\n') != std::string_view::npos) {
    throw Error(ErrorCode::UnnormalizedInput, meta.id + ": raw newline in training line");
  }
  std::string_view body = line.substr(0, line.size() - kEndOfText.size());
  Dialogue d{meta, {}};
  std::size_t pos = 0;
  while (true) {
    auto m = match_label(body.substr(pos));
    if (!m) throw Error(ErrorCode::InvalidDialogue, meta.id + ": expected a speaker label at offset " + std::to_string(pos));
    const Speaker speaker = require_speaker(m->label);
    const std::size_t text_begin = pos + m->text_start;
    // the next turn starts at a separator immediately followed by a label
    std::size_t search = text_begin;
    std::size_t next = std::string_view::npos;
    while ((search = body.find(kTurnSeparator, search)) != std::string_view::npos) {
      if (match_label(body.substr(search + kTurnSeparator.size()))) {
        next = search;
        break;
      }
      search += kTurnSeparator.size();
    }
    const std::size_t text_end = next == std::string_view::npos ? body.size() : next;
    d.turns.push_back(Turn{speaker, text::trim(body.substr(text_begin, text_end - text_begin))});
    if (next == std::string_view::npos) break;
    pos = next + kTurnSeparator.size();
  }
  validate(d);
  return d;
}

Dialogue normalize_dialogue(const Dialogue& d) {
  Dialogue out{d.meta, {}};
  out.turns.reserve(d.turns.size());
  for (const auto& t : d.turns) {
    out.turns.push_back(Turn{t.speaker, text::trim(replace_quotes_and_newlines(text::trim(t.text)))});
  }
  return out;
}

Corpus normalize_corpus(const Corpus& c) {
  std::vector<Dialogue> out;
  out.reserve(c.size());
  for (const auto& d : c) out.push_back(normalize_dialogue(d));
  return Corpus(std::move(out));
}

std::string serialize_training_line(const Dialogue& d) {
  std::string line;
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const auto& t = d.turns[i];
    if (t.text.find_first_of("\r\n") != std::string::npos) {
      throw Error(ErrorCode::UnnormalizedInput, d.meta.id + ": raw newline in turn " + std::to_string(i));
    }
    if (i > 0) line += kTurnSeparator;
    line += "**";
    line += to_string(t.speaker);
    line += "**: ";
    line += t.text;
  }
  line += kEndOfText;
  return line;
}

CorpusStats word_stats(const Corpus& c) {
  CorpusStats stats;
  std::unordered_set<std::string> regex_vocab;
  std::unordered_set<std::string> linguistic_vocab;
  for (const auto& d : c) {
    for (const auto& t : d.turns) {
      for (auto w : text::regex_words(t.text)) {
        ++stats.total_words;
        regex_vocab.emplace(w);
      }
      for (auto& tok : text::linguistic_tokens(t.text)) linguistic_vocab.insert(std::move(tok));
    }
  }
  stats.unique_regex = regex_vocab.size();
  stats.unique_linguistic = linguistic_vocab.size();
  return stats;
}

std::string corpus_lines(const Corpus& c) {
  std::string out;
  for (const auto& d : c) {
    out += serialize_training_line(d);
    out.push_back('\n');
  }
  return out;
}

std::string corpus_metadata_json(const Corpus& c) {
  json arr = json::array();
  for (const auto& d : c) arr.push_back(meta_to_json(d.meta));
  return arr.dump(1) + "\n";
}

void write_corpus(const Corpus& c, const std::filesystem::path& lines_path,
                  const std::filesystem::path& meta_path) {
  write_file(lines_path, corpus_lines(c));
  write_file(meta_path, corpus_metadata_json(c));
}

Corpus read_corpus(const std::filesystem::path& lines_path, const std::filesystem::path& meta_path) {
  json meta;
  try {
    meta = json::parse(read_file(meta_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, meta_path.string() + ": " + e.what());
  }
  if (!meta.is_array()) throw Error(ErrorCode::Io, meta_path.string() + ": expected a JSON array");
  std::ifstream in(lines_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + lines_path.string());
  std::vector<Dialogue> dialogues;
  dialogues.reserve(meta.size());
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (i >= meta.size()) throw Error(ErrorCode::Io, lines_path.string() + ": more lines than metadata records");
    dialogues.push_back(parse_training_line(line, meta_from_json(meta[i])));
    ++i;
  }
  if (i != meta.size()) throw Error(ErrorCode::Io, lines_path.string() + ": fewer lines than metadata records");
  return Corpus(std::move(dialogues));
}

Corpus ingest_raw_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<Dialogue> dialogues;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const auto meta = meta_from_json(rec);
    dialogues.push_back(normalize_dialogue(parse_dialogue(rec.at("raw").get<std::string>(), meta)));
  }
  return Corpus(std::move(dialogues));
}

}  // namespace exposure
