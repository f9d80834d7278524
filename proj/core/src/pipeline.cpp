#include "exposure/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "exposure/bpe.hpp"
#include "exposure/digest.hpp"
#include "exposure/embanalysis.hpp"
#include "exposure/errors.hpp"
#include "exposure/eval.hpp"
#include "exposure/fixture.hpp"
#include "exposure/fixture_bench.hpp"

namespace exposure {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kFixtureMinimalPairs = 400;
constexpr std::size_t kFixtureWordPairs = 150;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

bool name_is_safe(const std::string& name) {
  if (name.empty() || name == "." || name == "..") return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

json metric_value(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double metric_from_json(const json& v) { return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

// ---------------------------------------------------------------- config

std::vector<ExposureSpec> default_conditions(std::uint64_t data_seed) {
  const SpeakerAssignment mom_en{Language::EN, Language::ES};
  const SpeakerAssignment dad_en{Language::ES, Language::EN};
  auto spec = [&](std::string name, ConditionKind kind) {
    ExposureSpec s;
    s.name = std::move(name);
    s.kind = kind;
    s.seed = data_seed;
    return s;
  };
  std::vector<ExposureSpec> out;
  for (Language l : {Language::EN, Language::ES}) {
    const std::string prefix = l == Language::EN ? "en_" : "es_";
    auto topline = spec(prefix + "topline", ConditionKind::Topline);
    topline.language = l;
    out.push_back(topline);
    auto random = spec(prefix + "baseline_random", ConditionKind::BaselineRandom);
    random.language = l;
    out.push_back(random);
    // keep the parent who speaks l under each assignment
    auto mom = spec(prefix + "baseline_mom", ConditionKind::BaselineBySpeaker);
    mom.language = l;
    mom.speaker_assignment = l == Language::EN ? mom_en : dad_en;
    out.push_back(mom);
    auto dad = spec(prefix + "baseline_dad", ConditionKind::BaselineBySpeaker);
    dad.language = l;
    dad.speaker_assignment = l == Language::EN ? dad_en : mom_en;
    out.push_back(dad);
  }
  out.push_back(spec("multilingual_random", ConditionKind::MultilingualRandom));
  auto ml_mom = spec("multilingual_mom_en", ConditionKind::MultilingualBySpeaker);
  ml_mom.speaker_assignment = mom_en;
  out.push_back(ml_mom);
  auto ml_dad = spec("multilingual_dad_en", ConditionKind::MultilingualBySpeaker);
  ml_dad.speaker_assignment = dad_en;
  out.push_back(ml_dad);
  out.push_back(spec("cs_sentence", ConditionKind::CsSentence));
  return out;
}

std::vector<std::pair<std::string, std::string>> default_mirrored_pairs() {
  return {{"en_baseline_mom", "en_baseline_dad"},
          {"es_baseline_mom", "es_baseline_dad"},
          {"multilingual_mom_en", "multilingual_dad_en"}};
}

ExperimentConfig config_from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) config_error("config must be a JSON object");
    fs::path out = j.value("output_dir", c.output_dir.string());
    if (out.is_relative()) {
      if (const char* root = std::getenv("EXPOSURE_OUTPUT_ROOT"); root && *root) out = fs::path(root) / out;
    }
    c.output_dir = out;
    c.data_seed = j.value("data_seed", c.data_seed);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.vocab_size = j.value("vocab_size", c.vocab_size);

    if (j.contains("corpora")) {
      const auto& cj = j.at("corpora");
      const auto source = cj.value("source", std::string("fixture"));
      auto path = [&](const char* side, const char* key) -> fs::path {
        if (!cj.contains(side)) return {};
        const auto& s = cj.at(side);
        if (s.is_string()) return resolve(s.get<std::string>(), base_dir);
        return s.contains(key) ? resolve(s.at(key).get<std::string>(), base_dir) : fs::path{};
      };
      if (source == "fixture") {
        c.corpora.source = CorporaConfig::Source::Fixture;
        c.corpora.fixture_dialogues = cj.value("dialogues", c.corpora.fixture_dialogues);
        c.corpora.fixture_seed = cj.value("seed", c.data_seed);
      } else if (source == "files") {
        c.corpora.source = CorporaConfig::Source::Files;
        c.corpora.en_lines = path("en", "lines");
        c.corpora.en_meta = path("en", "meta");
        c.corpora.es_lines = path("es", "lines");
        c.corpora.es_meta = path("es", "meta");
        c.corpora.cs_word_lines = path("cs_word", "lines");
        c.corpora.cs_word_meta = path("cs_word", "meta");
      } else if (source == "raw") {
        c.corpora.source = CorporaConfig::Source::Raw;
        c.corpora.en_raw = path("en", "raw");
        c.corpora.es_raw = path("es", "raw");
        c.corpora.cs_word_raw = path("cs_word", "raw");
      } else {
        config_error("corpora.source must be fixture, files or raw");
      }
    } else {
      c.corpora.fixture_seed = c.data_seed;
    }

    if (j.contains("conditions")) {
      for (auto spec : j.at("conditions")) {
        if (!spec.contains("seed")) spec["seed"] = c.data_seed;
        c.conditions.push_back(exposure_spec_from_json(spec));
      }
    } else {
      c.conditions = default_conditions(c.data_seed);
    }

    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.model.type = m.value("type", c.model.type);
      c.model.order = m.value("order", c.model.order);
      c.model.discount = m.value("discount", c.model.discount);
      c.model.train_embeddings = m.value("embeddings", c.model.train_embeddings);
      if (m.contains("sgns")) {
        const auto& s = m.at("sgns");
        c.model.sgns.dim = s.value("dim", c.model.sgns.dim);
        c.model.sgns.window = s.value("window", c.model.sgns.window);
        c.model.sgns.negatives = s.value("negatives", c.model.sgns.negatives);
        c.model.sgns.epochs = s.value("epochs", c.model.sgns.epochs);
        c.model.sgns.learning_rate = s.value("learning_rate", c.model.sgns.learning_rate);
      }
      if (m.contains("scores")) c.model.scores_template = resolve(m.at("scores").get<std::string>(), base_dir).string();
      if (m.contains("embeddings_file")) {
        c.model.embeddings_template = resolve(m.at("embeddings_file").get<std::string>(), base_dir).string();
      }
    }

    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      c.eval.perplexity = e.value("perplexity", c.eval.perplexity);
      c.eval.window = e.value("window", c.eval.window);
      c.eval.stride = e.value("stride", c.eval.stride);
      c.eval.workers = e.value("workers", c.eval.workers);
      if (e.contains("minimal_pairs")) c.eval.minimal_pairs = resolve(e.at("minimal_pairs").get<std::string>(), base_dir);
      if (e.contains("word_pairs")) c.eval.word_pairs = resolve(e.at("word_pairs").get<std::string>(), base_dir);
      c.eval.fixture_benchmarks = e.value("fixture_benchmarks", c.eval.fixture_benchmarks);
      c.eval.speaker_prefix_ablation = e.value("speaker_prefix_ablation", c.eval.speaker_prefix_ablation);
      if (e.contains("filter_en")) c.eval.filter_en = e.at("filter_en").get<std::vector<std::string>>();
      if (e.contains("filter_es")) c.eval.filter_es = e.at("filter_es").get<std::vector<std::string>>();
      if (e.contains("mirrored_pairs")) {
        for (const auto& p : e.at("mirrored_pairs")) {
          c.eval.mirrored_pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
        }
      }
    }
    if (!j.contains("eval") || !j.at("eval").contains("mirrored_pairs")) {
      std::set<std::string> names;
      for (const auto& s : c.conditions) names.insert(s.name);
      for (const auto& p : default_mirrored_pairs()) {
        if (names.count(p.first) && names.count(p.second)) c.eval.mirrored_pairs.push_back(p);
      }
    }

    if (j.contains("analyze")) {
      const auto& a = j.at("analyze");
      c.analyze.enabled = a.value("enabled", c.analyze.enabled);
      c.analyze.threshold = a.value("threshold", c.analyze.threshold);
      c.analyze.sample_lines = a.value("sample_lines", c.analyze.sample_lines);
      c.analyze.max_tokens = a.value("max_tokens", c.analyze.max_tokens);
    }
  } catch (const json::exception& e) {
    config_error(std::string("malformed config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    config_error(e.what());
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    config_error(path.string() + ": " + e.what());
  } catch (const Error& e) {
    config_error(e.what());
  }
  return config_from_json(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  json corpora;
  switch (c.corpora.source) {
    case CorporaConfig::Source::Fixture:
      corpora = {{"source", "fixture"}, {"dialogues", c.corpora.fixture_dialogues}, {"seed", c.corpora.fixture_seed}};
      break;
    case CorporaConfig::Source::Files:
      corpora = {{"source", "files"},
                 {"en", {{"lines", c.corpora.en_lines.string()}, {"meta", c.corpora.en_meta.string()}}},
                 {"es", {{"lines", c.corpora.es_lines.string()}, {"meta", c.corpora.es_meta.string()}}}};
      if (!c.corpora.cs_word_lines.empty()) {
        corpora["cs_word"] = {{"lines", c.corpora.cs_word_lines.string()}, {"meta", c.corpora.cs_word_meta.string()}};
      }
      break;
    case CorporaConfig::Source::Raw:
      corpora = {{"source", "raw"}, {"en", {{"raw", c.corpora.en_raw.string()}}}, {"es", {{"raw", c.corpora.es_raw.string()}}}};
      if (!c.corpora.cs_word_raw.empty()) corpora["cs_word"] = {{"raw", c.corpora.cs_word_raw.string()}};
      break;
  }
  json conditions = json::array();
  for (const auto& s : c.conditions) conditions.push_back(to_json(s));
  json model{{"type", c.model.type},
             {"order", c.model.order},
             {"discount", c.model.discount},
             {"embeddings", c.model.train_embeddings},
             {"sgns",
              {{"dim", c.model.sgns.dim},
               {"window", c.model.sgns.window},
               {"negatives", c.model.sgns.negatives},
               {"epochs", c.model.sgns.epochs},
               {"learning_rate", c.model.sgns.learning_rate}}}};
  if (!c.model.scores_template.empty()) model["scores"] = c.model.scores_template;
  if (!c.model.embeddings_template.empty()) model["embeddings_file"] = c.model.embeddings_template;
  json pairs = json::array();
  for (const auto& [a, b] : c.eval.mirrored_pairs) pairs.push_back({a, b});
  json eval{{"perplexity", c.eval.perplexity},
            {"window", c.eval.window},
            {"stride", c.eval.stride},
            {"workers", c.eval.workers},
            {"fixture_benchmarks", c.eval.fixture_benchmarks},
            {"speaker_prefix_ablation", c.eval.speaker_prefix_ablation},
            {"mirrored_pairs", pairs}};
  if (!c.eval.minimal_pairs.empty()) eval["minimal_pairs"] = c.eval.minimal_pairs.string();
  if (!c.eval.word_pairs.empty()) eval["word_pairs"] = c.eval.word_pairs.string();
  if (c.eval.filter_en) eval["filter_en"] = *c.eval.filter_en;
  if (c.eval.filter_es) eval["filter_es"] = *c.eval.filter_es;
  return {{"output_dir", c.output_dir.string()},
          {"data_seed", c.data_seed},
          {"seeds", c.seeds},
          {"vocab_size", c.vocab_size},
          {"corpora", corpora},
          {"conditions", conditions},
          {"model", model},
          {"eval", eval},
          {"analyze",
           {{"enabled", c.analyze.enabled},
            {"threshold", c.analyze.threshold},
            {"sample_lines", c.analyze.sample_lines},
            {"max_tokens", c.analyze.max_tokens}}}};
}

void validate(const ExperimentConfig& c) {
  if (c.seeds.empty()) config_error("seeds must not be empty");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
    config_error("seeds must be distinct");
  }
  if (c.output_dir.empty()) config_error("output_dir is required");
  if (c.vocab_size < kByteAlphabet + 1) config_error("vocab_size must be at least 257");
  if (c.conditions.empty()) config_error("at least one condition is required");
  std::set<std::string> names;
  bool needs_cs_word = false;
  for (const auto& s : c.conditions) {
    if (!name_is_safe(s.name)) config_error("condition name '" + s.name + "' must be [A-Za-z0-9_.-]+");
    if (!names.insert(s.name).second) config_error("duplicate condition name '" + s.name + "'");
    needs_cs_word = needs_cs_word || s.kind == ConditionKind::CsWordIngest;
  }
  auto require_file = [](const fs::path& p, const std::string& what) {
    if (p.empty()) config_error(what + " is required");
    if (!fs::exists(p)) config_error(what + " not found: " + p.string());
  };
  switch (c.corpora.source) {
    case CorporaConfig::Source::Fixture:
      if (c.corpora.fixture_dialogues < 20) config_error("the fixture needs at least 20 dialogues");
      if (needs_cs_word) config_error("cs_word_ingest needs a word-level CS corpus; the fixture has none");
      break;
    case CorporaConfig::Source::Files:
      require_file(c.corpora.en_lines, "corpora.en.lines");
      require_file(c.corpora.en_meta, "corpora.en.meta");
      require_file(c.corpora.es_lines, "corpora.es.lines");
      require_file(c.corpora.es_meta, "corpora.es.meta");
      if (needs_cs_word) {
        require_file(c.corpora.cs_word_lines, "corpora.cs_word.lines");
        require_file(c.corpora.cs_word_meta, "corpora.cs_word.meta");
      }
      break;
    case CorporaConfig::Source::Raw:
      require_file(c.corpora.en_raw, "corpora.en.raw");
      require_file(c.corpora.es_raw, "corpora.es.raw");
      if (needs_cs_word) require_file(c.corpora.cs_word_raw, "corpora.cs_word.raw");
      break;
  }
  if (c.model.type != "reference" && c.model.type != "external") config_error("model.type must be reference or external");
  if (c.model.type == "external" && c.model.scores_template.empty() && c.model.embeddings_template.empty()) {
    config_error("external models need model.scores and/or model.embeddings_file");
  }
  if (c.model.order < 1 || c.model.order > kMaxNgramOrder) config_error("model.order out of range");
  if (!(c.model.discount > 0.0 && c.model.discount < 1.0)) config_error("model.discount must be in (0, 1)");
  if (c.eval.stride == 0 || c.eval.stride > c.eval.window || c.eval.window < 2) {
    config_error("eval needs 0 < stride <= window");
  }
  if (!c.eval.minimal_pairs.empty()) require_file(c.eval.minimal_pairs, "eval.minimal_pairs");
  if (!c.eval.word_pairs.empty()) require_file(c.eval.word_pairs, "eval.word_pairs");
  auto check_names = [&](const std::vector<std::string>& list, const std::string& what) {
    for (const auto& n : list) {
      if (!names.count(n)) config_error(what + " names unknown condition '" + n + "'");
    }
  };
  if (c.eval.filter_en) check_names(*c.eval.filter_en, "eval.filter_en");
  if (c.eval.filter_es) check_names(*c.eval.filter_es, "eval.filter_es");
  for (const auto& [a, b] : c.eval.mirrored_pairs) check_names({a, b}, "eval.mirrored_pairs");
  if (!(c.analyze.threshold > 0.5 && c.analyze.threshold <= 1.0)) config_error("analyze.threshold must be in (0.5, 1]");
}

// ---------------------------------------------------------------- manifest

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::Corpora: return "corpora";
    case Stage::BuildData: return "build-data";
    case Stage::TrainTokenizer: return "train-tokenizer";
    case Stage::TrainModel: return "train-model";
    case Stage::Eval: return "eval";
    case Stage::Analyze: return "analyze";
    case Stage::Report: return "report";
  }
  return "?";
}

Stage stage_from_string(std::string_view s) {
  for (auto st : {Stage::Corpora, Stage::BuildData, Stage::TrainTokenizer, Stage::TrainModel, Stage::Eval,
                  Stage::Analyze, Stage::Report}) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorCode::ConfigError, "unknown stage '" + std::string(s) + "'");
}

namespace {

json record_to_json(const StageRecord& r) {
  return {{"id", r.id},
          {"stage", std::string(to_string(r.stage))},
          {"input_hash", r.input_hash},
          {"outputs", r.outputs},
          {"floating_point", r.floating_point}};
}

StageRecord record_from_json(const json& j) {
  StageRecord r;
  r.id = j.at("id").get<std::string>();
  r.stage = stage_from_string(j.at("stage").get<std::string>());
  r.input_hash = j.at("input_hash").get<std::string>();
  r.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  r.floating_point = j.value("floating_point", false);
  return r;
}

}  // namespace

json RunManifest::to_json() const {
  json stages_json = json::array();
  for (const auto& s : stages) {
    auto j = record_to_json(s);
    j["skipped"] = s.skipped;
    stages_json.push_back(std::move(j));
  }
  return {{"config_hash", config_hash}, {"tool_version", tool_version}, {"stages", stages_json},
          {"timestamps", timestamps}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.tool_version = j.value("tool_version", std::string{});
  for (const auto& s : j.at("stages")) {
    auto r = record_from_json(s);
    r.skipped = s.value("skipped", false);
    m.stages.push_back(std::move(r));
  }
  m.timestamps = j.value("timestamps", json::object());
  return m;
}

// ---------------------------------------------------------------- runner

namespace {

struct Corpora {
  Corpus en;
  Corpus es;
  std::optional<Corpus> cs_word;
};

class Runner {
 public:
  Runner(const ExperimentConfig& config, std::ostream* log) : cfg_(config), root_(config.output_dir), log_(log) {
    json hashed = to_json(config);
    hashed.erase("output_dir");
    manifest_.config_hash = sha256_hex(hashed.dump());
    manifest_.timestamps["started"] = utc_now();
  }

  RunResult run(Stage until) {
    fs::create_directories(root_);
    write_file(root_ / "config.json", to_json(cfg_).dump(1) + "\n");
    corpora_stage();
    if (until >= Stage::BuildData) {
      for (const auto& spec : cfg_.conditions) build_data_stage(spec);
      eval_data_stage();
    }
    if (until >= Stage::TrainTokenizer) {
      for (const auto& spec : cfg_.conditions) tokenizer_stage(spec.name);
    }
    if (until >= Stage::TrainModel) {
      for (const auto& spec : cfg_.conditions) {
        for (auto seed : cfg_.seeds) model_stage(spec.name, seed);
      }
    }
    if (until >= Stage::Eval) {
      filter_stage();
      for (const auto& spec : cfg_.conditions) {
        for (auto seed : cfg_.seeds) eval_stage(spec.name, seed);
      }
    }
    if (until >= Stage::Analyze && cfg_.analyze.enabled) {
      for (const auto& spec : cfg_.conditions) analyze_stage(spec.name);
    }
    RunResult result;
    if (until >= Stage::Report) result.summary = report_stage();
    manifest_.timestamps["finished"] = utc_now();
    save_manifest();
    result.manifest = manifest_;
    return result;
  }

 private:
  using Produce = std::function<std::vector<std::string>()>;

  // Runs or skips one stage. `upstream` lists artifacts (relative paths) the
  // stage reads; their hashes enter the input hash.
  void stage(const std::string& id, Stage kind, json params, const std::vector<std::string>& upstream, bool fp,
             const Produce& produce) {
    StageRecord rec;
    rec.id = id;
    rec.stage = kind;
    rec.floating_point = fp;
    json up = json::object();
    for (const auto& path : upstream) up[path] = artifact_hash(path);
    rec.input_hash = sha256_hex(json{{"id", id}, {"params", params}, {"upstream", up}, {"tool", kToolVersion}}.dump());

    const fs::path record_path = root_ / "stages" / (id + ".json");
    try {
      if (auto previous = try_read_record(record_path); previous && previous->input_hash == rec.input_hash &&
                                                          outputs_intact(previous->outputs)) {
        rec.outputs = previous->outputs;
        rec.skipped = true;
      } else {
        for (const auto& path : produce()) rec.outputs[path] = sha256_file(root_ / path);
        write_file(record_path, record_to_json(rec).dump(1) + "\n");
      }
    } catch (const std::exception& e) {
      save_manifest();
      throw Error(ErrorCode::StageFailure, "stage " + id + ": " + e.what());
    }
    for (const auto& [path, hash] : rec.outputs) hashes_[path] = hash;
    if (log_) *log_ << "[" << to_string(kind) << "] " << id << ": " << (rec.skipped ? "skipped" : "done") << "\n";
    manifest_.stages.push_back(std::move(rec));
    save_manifest();
  }

  std::optional<StageRecord> try_read_record(const fs::path& p) const {
    if (!fs::exists(p)) return std::nullopt;
    try {
      return record_from_json(json::parse(read_file(p)));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  bool outputs_intact(const std::map<std::string, std::string>& outputs) const {
    for (const auto& [path, hash] : outputs) {
      if (!fs::exists(root_ / path) || sha256_file(root_ / path) != hash) return false;
    }
    return true;
  }

  std::string artifact_hash(const std::string& path) const {
    auto it = hashes_.find(path);
    if (it == hashes_.end()) throw Error(ErrorCode::StageFailure, "missing upstream artifact " + path);
    return it->second;
  }

  void save_manifest() const {
    if (fs::exists(root_)) write_file(root_ / "run_manifest.json", manifest_.to_json().dump(1) + "\n");
  }

  static std::string data_dir(const std::string& c) { return "data/" + c; }
  static std::string tok_dir(const std::string& c) { return "tokenizers/" + c; }
  static std::string model_dir(const std::string& c, std::uint64_t s) {
    return "models/" + c + "/seed-" + std::to_string(s);
  }
  static std::string report_path(const std::string& c, std::uint64_t s) {
    return "reports/" + c + "/seed-" + std::to_string(s) + "/report.json";
  }
  static std::vector<std::string> tokenizer_files(const std::string& c) {
    return {tok_dir(c) + "/tokenizer.json", tok_dir(c) + "/vocab.txt", tok_dir(c) + "/merges.txt"};
  }

  // ------------------------------------------------------------ stages

  void corpora_stage() {
    json params = {{"corpora", to_json(cfg_)["corpora"]}};
    auto add_hash = [&](const char* key, const fs::path& p) {
      if (!p.empty()) params["input_sha256"][key] = sha256_file(p);
    };
    add_hash("en_lines", cfg_.corpora.en_lines);
    add_hash("en_meta", cfg_.corpora.en_meta);
    add_hash("es_lines", cfg_.corpora.es_lines);
    add_hash("es_meta", cfg_.corpora.es_meta);
    add_hash("cs_word_lines", cfg_.corpora.cs_word_lines);
    add_hash("cs_word_meta", cfg_.corpora.cs_word_meta);
    add_hash("en_raw", cfg_.corpora.en_raw);
    add_hash("es_raw", cfg_.corpora.es_raw);
    add_hash("cs_word_raw", cfg_.corpora.cs_word_raw);
    add_hash("minimal_pairs", cfg_.eval.minimal_pairs);
    add_hash("word_pairs", cfg_.eval.word_pairs);
    params["fixture_benchmarks"] = cfg_.eval.fixture_benchmarks;

    stage("corpora", Stage::Corpora, params, {}, false, [&] {
      std::vector<std::string> out;
      Corpora c;
      std::optional<FixtureLexicons> lex;
      switch (cfg_.corpora.source) {
        case CorporaConfig::Source::Fixture: {
          lex = default_lexicons();
          auto pc = generate_fixture(cfg_.corpora.fixture_seed, cfg_.corpora.fixture_dialogues, *lex);
          c.en = std::move(pc.en);
          c.es = std::move(pc.es);
          break;
        }
        case CorporaConfig::Source::Files:
          c.en = read_corpus(cfg_.corpora.en_lines, cfg_.corpora.en_meta);
          c.es = read_corpus(cfg_.corpora.es_lines, cfg_.corpora.es_meta);
          if (!cfg_.corpora.cs_word_lines.empty()) {
            c.cs_word = read_corpus(cfg_.corpora.cs_word_lines, cfg_.corpora.cs_word_meta);
          }
          break;
        case CorporaConfig::Source::Raw:
          c.en = ingest_raw_jsonl(cfg_.corpora.en_raw);
          c.es = ingest_raw_jsonl(cfg_.corpora.es_raw);
          if (!cfg_.corpora.cs_word_raw.empty()) c.cs_word = ingest_raw_jsonl(cfg_.corpora.cs_word_raw);
          break;
      }
      auto write = [&](const Corpus& corpus, const std::string& name) {
        write_corpus(corpus, root_ / "corpora" / (name + ".txt"), root_ / "corpora" / (name + ".meta.json"));
        out.push_back("corpora/" + name + ".txt");
        out.push_back("corpora/" + name + ".meta.json");
      };
      write(c.en, "en");
      write(c.es, "es");
      if (c.cs_word) write(*c.cs_word, "cs_word");

      std::vector<MinimalPairItem> pairs;
      std::vector<WordPairItem> words;
      if (!cfg_.eval.minimal_pairs.empty()) {
        pairs = load_minimal_pairs(cfg_.eval.minimal_pairs);
      } else if (lex && cfg_.eval.fixture_benchmarks) {
        pairs = fixture_minimal_pairs(*lex, kFixtureMinimalPairs, cfg_.corpora.fixture_seed);
      }
      if (!cfg_.eval.word_pairs.empty()) {
        words = load_word_pairs(cfg_.eval.word_pairs);
      } else if (lex && cfg_.eval.fixture_benchmarks) {
        words = fixture_word_pairs(*lex, kFixtureWordPairs, cfg_.corpora.fixture_seed);
      }
      save_minimal_pairs(root_ / "benchmarks/minimal_pairs.tsv", pairs);
      save_word_pairs(root_ / "benchmarks/word_pairs.tsv", words);
      out.push_back("benchmarks/minimal_pairs.tsv");
      out.push_back("benchmarks/word_pairs.tsv");
      corpora_ = std::move(c);
      return out;
    });
  }

  const Corpora& corpora() {
    if (!corpora_) {
      Corpora c;
      c.en = read_corpus(root_ / "corpora/en.txt", root_ / "corpora/en.meta.json");
      c.es = read_corpus(root_ / "corpora/es.txt", root_ / "corpora/es.meta.json");
      if (hashes_.count("corpora/cs_word.txt")) {
        c.cs_word = read_corpus(root_ / "corpora/cs_word.txt", root_ / "corpora/cs_word.meta.json");
      }
      corpora_ = std::move(c);
    }
    return *corpora_;
  }

  ParallelInputs inputs() {
    const auto& c = corpora();
    return {&c.en, &c.es, c.cs_word ? &*c.cs_word : nullptr};
  }

  std::vector<std::string> corpora_files() const {
    std::vector<std::string> files = {"corpora/en.txt", "corpora/en.meta.json", "corpora/es.txt",
                                      "corpora/es.meta.json"};
    if (hashes_.count("corpora/cs_word.txt")) {
      files.push_back("corpora/cs_word.txt");
      files.push_back("corpora/cs_word.meta.json");
    }
    return files;
  }

  void build_data_stage(const ExposureSpec& spec) {
    const std::string dir = data_dir(spec.name);
    stage("build-data/" + spec.name, Stage::BuildData, {{"spec", to_json(spec)}}, corpora_files(), false, [&] {
      auto ds = build_condition(spec, inputs());
      write_condition(ds, root_ / dir);
      return std::vector<std::string>{dir + "/train.txt", dir + "/train.meta.json", dir + "/val.txt",
                                      dir + "/val.meta.json", dir + "/manifest.json"};
    });
  }

  // Shared validation sets: the universe's held-out ids in each language.
  void eval_data_stage() {
    ExposureSpec spec;
    spec.name = "eval-val";
    spec.kind = ConditionKind::Topline;
    spec.language = Language::EN;
    spec.seed = cfg_.data_seed;
    stage("build-data/eval-val", Stage::BuildData, {{"seed", cfg_.data_seed}}, corpora_files(), false, [&] {
      write_file(root_ / "eval/val_en.txt", corpus_lines(aligned_val_corpus(spec, inputs(), Language::EN)));
      write_file(root_ / "eval/val_es.txt", corpus_lines(aligned_val_corpus(spec, inputs(), Language::ES)));
      return std::vector<std::string>{"eval/val_en.txt", "eval/val_es.txt"};
    });
  }

  void tokenizer_stage(const std::string& name) {
    const std::string dir = tok_dir(name);
    stage("train-tokenizer/" + name, Stage::TrainTokenizer, {{"vocab_size", cfg_.vocab_size}},
          {data_dir(name) + "/train.txt", data_dir(name) + "/train.meta.json"}, false, [&] {
            const auto train = read_corpus(root_ / data_dir(name) / "train.txt", root_ / data_dir(name) / "train.meta.json");
            const auto lines = read_lines(root_ / data_dir(name) / "train.txt");
            const auto bpe = train_bpe(lines, cfg_.vocab_size);
            bpe.save(root_ / dir);
            const auto frag = fragmentation_rate(bpe, train);
            json stats{{"vocab_size", bpe.vocab_size()},
                       {"requested_vocab_size", cfg_.vocab_size},
                       {"undersized", bpe.undersized()},
                       {"fragmentation",
                        {{"tokens", frag.tokens}, {"words", frag.words}, {"rate", metric_value(frag.rate())}}}};
            write_file(root_ / dir / "stats.json", stats.dump(1) + "\n");
            auto files = tokenizer_files(name);
            files.push_back(dir + "/stats.json");
            return files;
          });
  }

  const BpeModel& tokenizer(const std::string& name) {
    auto it = tokenizers_.find(name);
    if (it == tokenizers_.end()) it = tokenizers_.emplace(name, BpeModel::load(root_ / tok_dir(name))).first;
    return it->second;
  }

  std::string external_path(const std::string& tmpl, const std::string& name, std::uint64_t seed) const {
    return replace_all(replace_all(tmpl, "{condition}", name), "{seed}", std::to_string(seed));
  }

  void model_stage(const std::string& name, std::uint64_t seed) {
    const std::string dir = model_dir(name, seed);
    auto upstream = tokenizer_files(name);
    upstream.push_back(data_dir(name) + "/train.txt");
    json params = to_json(cfg_)["model"];
    params["seed"] = seed;
    if (cfg_.model.type == "external") {
      const auto scores = external_path(cfg_.model.scores_template, name, seed);
      const auto emb = external_path(cfg_.model.embeddings_template, name, seed);
      // a missing file fails inside the stage so the error names it
      auto hash_or_null = [](const std::string& p) { return fs::exists(p) ? json(sha256_file(p)) : json(nullptr); };
      if (!cfg_.model.scores_template.empty()) params["scores_sha256"] = hash_or_null(scores);
      if (!cfg_.model.embeddings_template.empty()) params["embeddings_sha256"] = hash_or_null(emb);
      stage("train-model/" + name + "/seed-" + std::to_string(seed), Stage::TrainModel, params, upstream, true, [&, scores, emb] {
        std::vector<std::string> out;
        if (!cfg_.model.scores_template.empty()) {
          write_file(root_ / dir / "scores.lsc", read_file(scores));
          out.push_back(dir + "/scores.lsc");
        }
        if (!cfg_.model.embeddings_template.empty()) {
          write_file(root_ / dir / "embeddings.emb", read_file(emb));
          out.push_back(dir + "/embeddings.emb");
        }
        return out;
      });
      return;
    }
    stage("train-model/" + name + "/seed-" + std::to_string(seed), Stage::TrainModel, params, upstream, true, [&] {
      const auto& bpe = tokenizer(name);
      CachedEncoder enc(bpe);
      TokenSeq stream{kEosId};
      for (const auto& line : read_lines(root_ / data_dir(name) / "train.txt")) {
        auto ids = enc.encode(line);
        stream.insert(stream.end(), ids.begin(), ids.end());
      }
      std::vector<std::string> out;
      auto lm = train_ngram(stream, cfg_.model.order, cfg_.model.discount);
      lm.save(root_ / dir / "ngram.counts");
      out.push_back(dir + "/ngram.counts");
      json stats{{"stream_tokens", stream.size()}, {"ngram_types", lm.vocab_size()}};
      if (cfg_.model.train_embeddings) {
        SgnsConfig sc = cfg_.model.sgns;
        sc.seed = seed;
        auto sg = train_sgns(stream, bpe.vocab_size(), sc);
        sg.save(root_ / dir / "embeddings.emb");
        out.push_back(dir + "/embeddings.emb");
        stats["sgns_epoch_loss"] = sg.epoch_loss();
      }
      write_file(root_ / dir / "stats.json", stats.dump(1) + "\n");
      out.push_back(dir + "/stats.json");
      return out;
    });
  }

  std::vector<std::string> filter_conditions(Language l) const {
    const auto& explicit_list = l == Language::EN ? cfg_.eval.filter_en : cfg_.eval.filter_es;
    if (explicit_list) return *explicit_list;
    std::vector<std::string> out;
    for (const auto& s : cfg_.conditions) {
      const bool baseline = s.kind == ConditionKind::BaselineRandom || s.kind == ConditionKind::BaselineBySpeaker;
      if (baseline && s.language == l && !s.word_budget) out.push_back(s.name);
    }
    return out;
  }

  void filter_stage() {
    std::vector<std::string> upstream = {"benchmarks/minimal_pairs.tsv", "benchmarks/word_pairs.tsv"};
    const auto en = filter_conditions(Language::EN);
    const auto es = filter_conditions(Language::ES);
    for (const auto& n : en) upstream.push_back(data_dir(n) + "/train.txt");
    for (const auto& n : es) upstream.push_back(data_dir(n) + "/train.txt");
    json params{{"filter_en", en}, {"filter_es", es}};
    stage("eval/filter-benchmarks", Stage::Eval, params, upstream, false, [&] {
      auto load_vocabs = [&](const std::vector<std::string>& names) {
        std::vector<VocabSet> sets;
        for (const auto& n : names) {
          sets.push_back(build_vocab(read_corpus(root_ / data_dir(n) / "train.txt", root_ / data_dir(n) / "train.meta.json")));
        }
        return sets;
      };
      const auto en_sets = load_vocabs(en);
      const auto es_sets = load_vocabs(es);
      LanguageVocabs vocabs;
      for (const auto& s : en_sets) vocabs.en.push_back(&s);
      for (const auto& s : es_sets) vocabs.es.push_back(&s);

      const auto pairs = load_minimal_pairs(root_ / "benchmarks/minimal_pairs.tsv");
      const auto words = load_word_pairs(root_ / "benchmarks/word_pairs.tsv");
      // minimal pairs are English
      const auto kept_pairs = filter_by_vocab(pairs, vocabs.en);
      const auto kept_words = filter_by_vocab(words, vocabs);
      save_minimal_pairs(root_ / "benchmarks/filtered_minimal_pairs.tsv", kept_pairs.kept);
      save_word_pairs(root_ / "benchmarks/filtered_word_pairs.tsv", kept_words.kept);
      json counts{{"minimal_pairs", {{"kept", kept_pairs.kept.size()}, {"total", kept_pairs.total}}},
                  {"word_pairs", {{"kept", kept_words.kept.size()}, {"total", kept_words.total}}},
                  {"filter_en", en},
                  {"filter_es", es}};
      write_file(root_ / "benchmarks/filter.json", counts.dump(1) + "\n");
      return std::vector<std::string>{"benchmarks/filtered_minimal_pairs.tsv", "benchmarks/filtered_word_pairs.tsv",
                                      "benchmarks/filter.json"};
    });
  }

  void eval_stage(const std::string& name, std::uint64_t seed) {
    const std::string dir = model_dir(name, seed);
    auto upstream = tokenizer_files(name);
    const bool external = cfg_.model.type == "external";
    const std::string scores_file = dir + (external ? "/scores.lsc" : "/ngram.counts");
    const std::string emb_file = dir + "/embeddings.emb";
    const bool has_scores = hashes_.count(scores_file) > 0;
    const bool has_emb = hashes_.count(emb_file) > 0;
    if (has_scores) upstream.push_back(scores_file);
    if (has_emb) upstream.push_back(emb_file);
    for (const char* f : {"eval/val_en.txt", "eval/val_es.txt", "benchmarks/filtered_minimal_pairs.tsv",
                          "benchmarks/filtered_word_pairs.tsv", "benchmarks/filter.json"}) {
      upstream.push_back(f);
    }
    json params = {{"eval", to_json(cfg_)["eval"]}, {"condition", name}, {"seed", seed}};
    params["eval"].erase("workers");
    const std::string out_path = report_path(name, seed);
    stage("eval/" + name + "/seed-" + std::to_string(seed), Stage::Eval, params, upstream, true, [&] {
      const auto& bpe = tokenizer(name);
      EvalOptions opts{cfg_.eval.window, cfg_.eval.stride, cfg_.eval.workers};
      json metrics = json::object();
      json details = json::object();

      std::unique_ptr<ScoringModel> lm;
      if (has_scores) {
        if (external) {
          lm = std::make_unique<ExternalScores>(ExternalScores::load(root_ / scores_file));
        } else {
          lm = std::make_unique<NGramLm>(NGramLm::load(root_ / scores_file));
        }
        opts.window = std::min(opts.window, lm->context_window());
        opts.stride = std::min(opts.stride, opts.window);
      }
      if (lm && cfg_.eval.perplexity) {
        for (Language l : {Language::EN, Language::ES}) {
          const auto lines = read_lines(root_ / (l == Language::EN ? "eval/val_en.txt" : "eval/val_es.txt"));
          const std::string key = l == Language::EN ? "ppl_en" : "ppl_es";
          if (lines.empty()) continue;
          const auto r = perplexity(*lm, lines, bpe, opts);
          metrics[key] = metric_value(r.ppl);
          details[key] = to_json(r);
        }
      }
      const auto pairs = load_minimal_pairs(root_ / "benchmarks/filtered_minimal_pairs.tsv");
      if (lm && !pairs.empty()) {
        const auto r = score_minimal_pairs(*lm, pairs, bpe, {}, opts);
        metrics["zorro"] = r.accuracy() * 100.0;
        details["zorro"] = to_json(r);
        if (cfg_.eval.speaker_prefix_ablation) {
          const auto rm = score_minimal_pairs(*lm, pairs, bpe, kMomPrefix, opts);
          metrics["zorro_mom"] = rm.accuracy() * 100.0;
          details["zorro_mom"] = to_json(rm);
        }
      }
      const auto words = load_word_pairs(root_ / "benchmarks/filtered_word_pairs.tsv");
      if (has_emb && !words.empty()) {
        const auto emb = ExternalEmbeddings::load(root_ / emb_file);
        const std::pair<const char*, std::pair<Language, Language>> groups[] = {
            {"ws_en", {Language::EN, Language::EN}}, {"ws_es", {Language::ES, Language::ES}}, {"xws", {Language::EN, Language::ES}}};
        for (const auto& [key, langs] : groups) {
          std::vector<WordPairItem> subset;
          for (const auto& w : words) {
            const bool match = (w.lang1 == langs.first && w.lang2 == langs.second) ||
                               (w.lang1 == langs.second && w.lang2 == langs.first);
            if (match) subset.push_back(w);
          }
          if (subset.empty()) continue;
          try {
            const auto r = word_similarity_eval(emb, subset, bpe);
            metrics[key] = metric_value(r.best);
            details[key] = to_json(r);
          } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateInput) throw;
            metrics[key] = nullptr;
            details[key] = {{"error", e.what()}};
          }
        }
      }
      const auto filter = json::parse(read_file(root_ / "benchmarks/filter.json"));
      json report{{"condition", name}, {"seed", seed},      {"metrics", metrics},
                  {"details", details}, {"filtering", filter}, {"config", params["eval"]}};
      write_file(root_ / out_path, report.dump(1) + "\n");
      return std::vector<std::string>{out_path};
    });
  }

  void analyze_stage(const std::string& name) {
    const std::uint64_t seed = cfg_.seeds.front();
    const std::string emb_file = model_dir(name, seed) + "/embeddings.emb";
    const bool has_emb = hashes_.count(emb_file) > 0;
    auto upstream = tokenizer_files(name);
    for (const char* f : {"corpora/en.txt", "corpora/en.meta.json", "corpora/es.txt", "corpora/es.meta.json"}) {
      upstream.push_back(f);
    }
    if (has_emb) upstream.push_back(emb_file);
    json params{{"threshold", cfg_.analyze.threshold},
                {"sample_lines", cfg_.analyze.sample_lines},
                {"max_tokens", cfg_.analyze.max_tokens},
                {"seed", seed}};
    const std::string dir = "analysis/" + name;
    stage("analyze/" + name, Stage::Analyze, params, upstream, true, [&] {
      const auto& bpe = tokenizer(name);
      const auto en = read_lines(root_ / "corpora/en.txt");
      const auto es = read_lines(root_ / "corpora/es.txt");
      LabelOptions opts{cfg_.analyze.threshold, cfg_.analyze.sample_lines};
      const auto labels = label_tokens(bpe, en, es, opts);
      json summary = label_summary(labels, opts.threshold);
      std::vector<std::string> out;
      if (has_emb) {
        const auto emb = ExternalEmbeddings::load(root_ / emb_file);
        std::vector<TokenId> ids;
        for (TokenId id : select_tokens(labels, std::numeric_limits<std::size_t>::max())) {
          if (ids.size() >= cfg_.analyze.max_tokens) break;
          const auto v = emb.vector(id, 0);
          if (std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; })) ids.push_back(id);
        }
        const auto projection = project_tokens(emb, 0, ids);
        write_file(root_ / dir / "plot.tsv", export_plot_data(ids, projection, labels, bpe));
        out.push_back(dir + "/plot.tsv");
        summary["projection"] = {{"method", "pca"},
                                 {"tokens", ids.size()},
                                 {"variance", projection.variance},
                                 {"rank_deficient", projection.rank_deficient}};
      }
      write_file(root_ / dir / "summary.json", summary.dump(1) + "\n");
      out.push_back(dir + "/summary.json");
      return out;
    });
  }

  json report_stage() {
    std::vector<std::string> upstream;
    for (const auto& spec : cfg_.conditions) {
      for (auto seed : cfg_.seeds) upstream.push_back(report_path(spec.name, seed));
    }
    json params{{"seeds", cfg_.seeds}, {"mirrored_pairs", to_json(cfg_)["eval"]["mirrored_pairs"]}};
    json summary;
    stage("report", Stage::Report, params, upstream, true, [&] {
      std::map<std::string, std::vector<MetricMap>> runs;
      for (const auto& spec : cfg_.conditions) {
        for (auto seed : cfg_.seeds) {
          const auto report = json::parse(read_file(root_ / report_path(spec.name, seed)));
          MetricMap m;
          for (const auto& [k, v] : report.at("metrics").items()) m[k] = metric_from_json(v);
          runs[spec.name].push_back(std::move(m));
        }
      }
      json conditions = json::object();
      for (const auto& spec : cfg_.conditions) conditions[spec.name] = to_json(aggregate_runs(runs[spec.name]));
      json pairs = json::object();
      for (const auto& [a, b] : cfg_.eval.mirrored_pairs) {
        pairs[a + "+" + b] = to_json(aggregate_runs(runs[a], std::span<const MetricMap>(runs[b])));
      }
      summary = {{"config_hash", manifest_.config_hash},
                 {"seeds", cfg_.seeds},
                 {"conditions", conditions},
                 {"mirrored_pairs", pairs},
                 {"filtering", json::parse(read_file(root_ / "benchmarks/filter.json"))}};
      write_file(root_ / "reports/summary.json", summary.dump(1) + "\n");
      return std::vector<std::string>{"reports/summary.json"};
    });
    if (summary.is_null()) summary = json::parse(read_file(root_ / "reports/summary.json"));
    return summary;
  }

  const ExperimentConfig& cfg_;
  fs::path root_;
  std::ostream* log_;
  RunManifest manifest_;
  std::map<std::string, std::string> hashes_;
  std::optional<Corpora> corpora_;
  std::map<std::string, BpeModel> tokenizers_;
};

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, Stage until, std::ostream* log) {
  validate(config);
  Runner runner(config, log);
  return runner.run(until);
}

VerifyResult verify_manifest(const fs::path& run_dir) {
  const fs::path path = run_dir / "run_manifest.json";
  if (!fs::exists(path)) throw Error(ErrorCode::MissingManifest, "no run_manifest.json in " + run_dir.string());
  RunManifest m;
  try {
    m = RunManifest::from_json(json::parse(read_file(path)));
  } catch (const std::exception& e) {
    throw Error(ErrorCode::MissingManifest, path.string() + ": unreadable manifest: " + e.what());
  }
  VerifyResult r;
  for (const auto& s : m.stages) {
    for (const auto& [file, hash] : s.outputs) {
      const fs::path p = run_dir / file;
      if (!fs::exists(p)) {
        r.missing.push_back(file);
      } else if (sha256_file(p) != hash) {
        r.mismatched.push_back(file);
      }
    }
  }
  return r;
}

}  // namespace exposure
