// exposure: command-line front end for the experiment pipeline.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>

#include "exposure/corpus.hpp"
#include "exposure/digest.hpp"
#include "exposure/errors.hpp"
#include "exposure/eval.hpp"
#include "exposure/fixture.hpp"
#include "exposure/fixture_bench.hpp"
#include "exposure/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace exposure;

namespace {

enum Exit { kOk = 0, kConfigError = 1, kStageFailure = 2, kVerifyMismatch = 3 };

struct Overrides {
  std::string output_dir;
  std::vector<std::uint64_t> seeds;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::size_t> vocab_size;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> dialogues;
  std::optional<std::size_t> order;
  std::optional<std::size_t> epochs;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--output-dir", o.output_dir, "Run directory (relative paths resolve under $EXPOSURE_OUTPUT_ROOT)");
  cmd->add_option("--seeds", o.seeds, "Training seeds")->delimiter(',');
  cmd->add_option("--data-seed", o.data_seed, "Seed for data construction");
  cmd->add_option("--vocab-size", o.vocab_size, "Tokenizer vocabulary size");
  cmd->add_option("--workers", o.workers, "Evaluation worker threads");
  cmd->add_option("--dialogues", o.dialogues, "Fixture corpus size");
  cmd->add_option("--order", o.order, "N-gram order");
  cmd->add_option("--epochs", o.epochs, "Embedding training epochs");
}

json read_config_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

ExperimentConfig load_with_overrides(const fs::path& path, const Overrides& o) {
  json j = read_config_json(path);
  if (!o.output_dir.empty()) j["output_dir"] = o.output_dir;
  if (!o.seeds.empty()) j["seeds"] = o.seeds;
  if (o.data_seed) j["data_seed"] = *o.data_seed;
  if (o.vocab_size) j["vocab_size"] = *o.vocab_size;
  if (o.workers) j["eval"]["workers"] = *o.workers;
  if (o.dialogues) j["corpora"]["dialogues"] = *o.dialogues;
  if (o.order) j["model"]["order"] = *o.order;
  if (o.epochs) j["model"]["sgns"]["epochs"] = *o.epochs;
  return config_from_json(j, path.parent_path());
}

int exit_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::MissingManifest:
      return kConfigError;
    default:
      return kStageFailure;
  }
}

int run_until(const fs::path& config_path, const Overrides& o, Stage until, bool print_summary) {
  const auto config = load_with_overrides(config_path, o);
  const auto result = run_experiment(config, until, &std::cerr);
  std::size_t skipped = 0;
  for (const auto& s : result.manifest.stages) skipped += s.skipped ? 1 : 0;
  std::cerr << result.manifest.stages.size() << " stages, " << skipped << " skipped; output in "
            << config.output_dir.string() << "\n";
  if (print_summary && !result.summary.is_null()) std::cout << result.summary.dump(2) << "\n";
  return kOk;
}

int write_fixture(const fs::path& out, std::size_t dialogues, std::uint64_t seed, std::size_t pairs,
                  std::size_t word_pairs) {
  const auto lex = default_lexicons();
  const auto corpora = generate_fixture(seed, dialogues, lex);
  write_corpus(corpora.en, out / "en.txt", out / "en.meta.json");
  write_corpus(corpora.es, out / "es.txt", out / "es.meta.json");
  save_minimal_pairs(out / "minimal_pairs.tsv", fixture_minimal_pairs(lex, pairs, seed));
  save_word_pairs(out / "word_pairs.tsv", fixture_word_pairs(lex, word_pairs, seed));
  const json config{{"output_dir", "runs/fixture"},
                    {"data_seed", seed},
                    {"seeds", {42, 0, 1}},
                    {"vocab_size", 2000},
                    {"corpora",
                     {{"source", "files"},
                      {"en", {{"lines", "en.txt"}, {"meta", "en.meta.json"}}},
                      {"es", {{"lines", "es.txt"}, {"meta", "es.meta.json"}}}}},
                    {"eval", {{"minimal_pairs", "minimal_pairs.tsv"}, {"word_pairs", "word_pairs.tsv"}}}};
  write_file(out / "config.json", config.dump(2) + "\n");
  std::cerr << "wrote " << dialogues << " dialogues per language to " << out.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Build controlled-exposure training sets, train reference models and evaluate them"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  fs::path config_path;
  Overrides overrides;
  struct StageCommand {
    const char* name;
    Stage until;
    const char* help;
  };
  const StageCommand stage_commands[] = {
      {"build-data", Stage::BuildData, "Write condition datasets and shared validation sets"},
      {"train-tokenizer", Stage::TrainTokenizer, "Train one BPE tokenizer per condition"},
      {"train-model", Stage::TrainModel, "Train (or import) models per condition and seed"},
      {"eval", Stage::Eval, "Perplexity, minimal pairs and word similarity per condition and seed"},
      {"analyze", Stage::Analyze, "Token language labels and embedding projections"},
      {"report", Stage::Report, "Aggregate metrics over seeds"},
      {"run", Stage::Report, "Run every stage"},
  };
  std::vector<std::pair<CLI::App*, Stage>> stage_apps;
  for (const auto& sc : stage_commands) {
    auto* cmd = app.add_subcommand(sc.name, sc.help);
    cmd->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    add_overrides(cmd, overrides);
    stage_apps.emplace_back(cmd, sc.until);
  }

  fs::path verify_dir;
  auto* verify = app.add_subcommand("verify", "Recompute artifact hashes of a run directory");
  verify->add_option("run_dir", verify_dir, "Run directory")->required();

  fs::path fixture_out;
  std::size_t fixture_dialogues = 2000;
  std::uint64_t fixture_seed = 42;
  std::size_t fixture_pairs = 400;
  std::size_t fixture_word_pairs = 150;
  auto* fixture = app.add_subcommand("fixture", "Write pseudo-parallel fixture corpora, mini benchmarks and a config");
  fixture->add_option("-o,--out", fixture_out, "Output directory")->required();
  fixture->add_option("--dialogues", fixture_dialogues, "Dialogues per language")->capture_default_str();
  fixture->add_option("--seed", fixture_seed, "Generator seed")->capture_default_str();
  fixture->add_option("--minimal-pairs", fixture_pairs, "Minimal pairs to generate")->capture_default_str();
  fixture->add_option("--word-pairs", fixture_word_pairs, "Word pairs per language pairing")->capture_default_str();

  fs::path ingest_in;
  fs::path ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Normalize raw JSON Lines dialogues into a line file and metadata");
  ingest->add_option("input", ingest_in, "JSON Lines file")->required()->check(CLI::ExistingFile);
  ingest->add_option("-o,--out", ingest_out, "Output prefix; writes <prefix>.txt and <prefix>.meta.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    for (const auto& [cmd, until] : stage_apps) {
      if (cmd->parsed()) return run_until(config_path, overrides, until, until == Stage::Report);
    }
    if (verify->parsed()) {
      const auto r = verify_manifest(verify_dir);
      for (const auto& m : r.mismatched) std::cout << "mismatch\t" << m << "\n";
      for (const auto& m : r.missing) std::cout << "missing\t" << m << "\n";
      if (r.ok()) std::cout << "ok\n";
      return r.ok() ? kOk : kVerifyMismatch;
    }
    if (fixture->parsed()) {
      return write_fixture(fixture_out, fixture_dialogues, fixture_seed, fixture_pairs, fixture_word_pairs);
    }
    if (ingest->parsed()) {
      const auto corpus = ingest_raw_jsonl(ingest_in);
      write_corpus(corpus, ingest_out.string() + ".txt", ingest_out.string() + ".meta.json");
      std::cerr << "ingested " << corpus.size() << " dialogues\n";
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageFailure;
  }
  return kOk;
}
