#pragma once

// Experiment runner: corpora -> condition datasets -> tokenizers -> models ->
// evaluation -> analysis -> seed-aggregated report. Each stage writes a
// stage.json fragment recording the hash of its inputs and the sha256 of
// every file it produced; a stage whose inputs and outputs are unchanged is
// skipped on the next run.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "exposure/conditions.hpp"
#include "exposure/models.hpp"

namespace exposure {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct CorporaConfig {
  enum class Source { Fixture, Files, Raw };
  Source source = Source::Fixture;
  // Fixture
  std::size_t fixture_dialogues = 2000;
  std::uint64_t fixture_seed = 42;
  // Files: line file + metadata sidecar per side
  std::filesystem::path en_lines, en_meta, es_lines, es_meta, cs_word_lines, cs_word_meta;
  // Raw: JSON Lines generator output per side
  std::filesystem::path en_raw, es_raw, cs_word_raw;
};

struct ModelConfig {
  std::string type = "reference";  // reference | external
  std::size_t order = 3;
  double discount = 0.75;
  bool train_embeddings = true;
  SgnsConfig sgns;
  // External: path templates with {condition} and {seed} placeholders.
  std::string scores_template;
  std::string embeddings_template;
};

struct EvalConfig {
  bool perplexity = true;
  std::size_t window = 1024;
  std::size_t stride = 512;
  std::size_t workers = 1;
  std::filesystem::path minimal_pairs;  // empty: none (or fixture set)
  std::filesystem::path word_pairs;
  bool fixture_benchmarks = true;  // generate mini benchmarks when the corpora are the fixture
  bool speaker_prefix_ablation = true;
  // Conditions whose training vocabularies filter the benchmarks; unset
  // means every EN (ES) baseline condition in the config.
  std::optional<std::vector<std::string>> filter_en;
  std::optional<std::vector<std::string>> filter_es;
  std::vector<std::pair<std::string, std::string>> mirrored_pairs;
};

struct AnalyzeConfig {
  bool enabled = true;
  double threshold = 0.75;
  std::size_t sample_lines = 20000;
  std::size_t max_tokens = 20000;
};

struct ExperimentConfig {
  std::filesystem::path output_dir = "runs/default";
  std::uint64_t data_seed = 42;
  std::vector<std::uint64_t> seeds = {42, 0, 1};
  CorporaConfig corpora;
  std::vector<ExposureSpec> conditions;
  std::size_t vocab_size = 80000;
  ModelConfig model;
  EvalConfig eval;
  AnalyzeConfig analyze;
};

/// Topline, baselines (random and per speaker), multilingual (random and
/// both speaker assignments) and sentence-level code-switching, all on
/// `data_seed`.
std::vector<ExposureSpec> default_conditions(std::uint64_t data_seed);
/// The speaker-mirrored pairs among default_conditions.
std::vector<std::pair<std::string, std::string>> default_mirrored_pairs();

/// Relative input paths resolve against `base_dir`; a relative output_dir
/// resolves against $EXPOSURE_OUTPUT_ROOT when set. Throws Error(ConfigError).
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);
/// Throws Error(ConfigError).
void validate(const ExperimentConfig& config);

enum class Stage { Corpora, BuildData, TrainTokenizer, TrainModel, Eval, Analyze, Report };
std::string_view to_string(Stage s) noexcept;
Stage stage_from_string(std::string_view s);

struct StageRecord {
  std::string id;
  Stage stage = Stage::Corpora;
  std::string input_hash;
  std::map<std::string, std::string> outputs;  // path relative to the run dir -> sha256
  bool skipped = false;
  bool floating_point = false;  // outputs depend on floating-point training or evaluation
};

struct RunManifest {
  std::string config_hash;
  std::string tool_version{kToolVersion};
  std::vector<StageRecord> stages;
  nlohmann::json timestamps = nlohmann::json::object();  // excluded from every hash

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

struct RunResult {
  RunManifest manifest;
  nlohmann::json summary;  // seed-aggregated metrics per condition
};

/// Runs every stage up to and including `until`. Stage failures are rethrown
/// as Error(StageFailure) naming the stage; the manifest written so far is
/// kept on disk.
RunResult run_experiment(const ExperimentConfig& config, Stage until = Stage::Report, std::ostream* log = nullptr);

struct VerifyResult {
  std::vector<std::string> mismatched;
  std::vector<std::string> missing;
  bool ok() const noexcept { return mismatched.empty() && missing.empty(); }
};

/// Recomputes every artifact hash listed in run_manifest.json. Throws
/// Error(MissingManifest) when the directory has no manifest.
VerifyResult verify_manifest(const std::filesystem::path& run_dir);

}  // namespace exposure
