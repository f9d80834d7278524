#pragma once

// Dialogue corpora: parsing raw generator output, normalization, the
// one-dialogue-per-line training format, and word statistics.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace exposure {

enum class Speaker : std::uint8_t { Mom, Dad, Child };
enum class Context : std::uint8_t { Home, Public };
enum class Variant : std::uint8_t { EN, ES, CS_SENT, CS_WORD };

std::string_view to_string(Speaker s) noexcept;
std::string_view to_string(Context c) noexcept;
std::string_view to_string(Variant v) noexcept;

Speaker speaker_from_string(std::string_view s);
Context context_from_string(std::string_view s);
Variant variant_from_string(std::string_view s);

/// Maps a (possibly Spanish, any case) participant label onto the fixed
/// speaker set. Closed table: Mom/Mother/Mamá/Mama/Madre,
/// Dad/Father/Papá/Papa/Padre, Child/Niño/Niña/Nino/Nina/Hijo/Hija.
std::optional<Speaker> speaker_from_label(std::string_view label);

inline constexpr std::string_view kEndOfText = "<|endoftext|>";
inline constexpr std::string_view kTurnSeparator = "\\n\\n";  // literal backslash-n twice

struct Turn {
  Speaker speaker;
  std::string text;

  bool operator==(const Turn&) const = default;
};

struct DialogueMeta {
  std::string id;
  Speaker adult_speaker = Speaker::Mom;
  Context context = Context::Home;
  int child_age = 5;
  Variant variant = Variant::EN;

  bool operator==(const DialogueMeta&) const = default;
};

struct Dialogue {
  DialogueMeta meta;
  std::vector<Turn> turns;

  const std::string& id() const noexcept { return meta.id; }
  bool operator==(const Dialogue&) const = default;
};

/// Throws Error(InvalidDialogue) when a Dialogue invariant is broken.
void validate(const Dialogue& d);

/// Ordered, id-unique dialogue collection. Dialogues are kept sorted by id so
/// every derived artifact has one canonical order.
class Corpus {
 public:
  Corpus() = default;
  /// Sorts by id; throws Error(DuplicateId) on a repeated id.
  explicit Corpus(std::vector<Dialogue> dialogues);

  const std::vector<Dialogue>& dialogues() const noexcept { return dialogues_; }
  std::size_t size() const noexcept { return dialogues_.size(); }
  bool empty() const noexcept { return dialogues_.empty(); }
  auto begin() const noexcept { return dialogues_.begin(); }
  auto end() const noexcept { return dialogues_.end(); }
  const Dialogue& operator[](std::size_t i) const { return dialogues_[i]; }

  const Dialogue* find(std::string_view id) const noexcept;
  std::vector<std::string> ids() const;

  /// The shared variant when every dialogue has the same one.
  std::optional<Variant> variant() const noexcept;

  /// Total regex-word count over turn texts.
  std::size_t word_count() const;

 private:
  std::vector<Dialogue> dialogues_;
};

struct CorpusStats {
  std::size_t total_words = 0;
  std::size_t unique_regex = 0;
  std::size_t unique_linguistic = 0;
};

/// Parses one block of generator output. Everything before the DIALOGUE:
/// header (PARTICIPANTS, SETTING) is discarded; turns are split on blank
/// lines and on lines that open with a `**Label**:` marker. A paragraph
/// without a label continues the previous turn.
Dialogue parse_dialogue(std::string_view raw, const DialogueMeta& meta);

/// Inverse of serialize_training_line for normalized dialogues.
Dialogue parse_training_line(std::string_view line, const DialogueMeta& meta);

/// ASCII quotes, `\n` escapes for raw newlines, trimmed turns. Idempotent.
Dialogue normalize_dialogue(const Dialogue& d);
Corpus normalize_corpus(const Corpus& c);

/// `**Mom**: text\n\n**Child**: text<|endoftext|>` with literal `\n`.
std::string serialize_training_line(const Dialogue& d);

/// Word and vocabulary counts over turn texts (speaker labels excluded).
CorpusStats word_stats(const Corpus& c);

/// Regex-word count of one dialogue's turns.
std::size_t dialogue_words(const Dialogue& d);

// Corpus files: one serialized dialogue per line plus a JSON metadata sidecar
// [{id, adult_speaker, context, child_age, language_variant}] in id order.
std::string corpus_lines(const Corpus& c);
std::string corpus_metadata_json(const Corpus& c);
void write_corpus(const Corpus& c, const std::filesystem::path& lines_path,
                  const std::filesystem::path& meta_path);
Corpus read_corpus(const std::filesystem::path& lines_path, const std::filesystem::path& meta_path);

/// Raw ingest: JSON Lines of {id, adult_speaker, context, child_age,
/// language_variant, raw}; each record is parsed and normalized.
Corpus ingest_raw_jsonl(const std::filesystem::path& path);

}  // namespace exposure
