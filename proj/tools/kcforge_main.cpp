// kcforge: extract knowledge components from MCQs with a three-turn LLM
// conversation, merge near-duplicate KC labels by embedding cosine
// similarity, fit an Additive Factor Model, and compare KC models under
// item-blocked cross-validated RMSE.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kcforge/afm.hpp"
#include "kcforge/cache.hpp"
#include "kcforge/chat.hpp"
#include "kcforge/embedding.hpp"
#include "kcforge/error.hpp"
#include "kcforge/evaluation.hpp"
#include "kcforge/extraction.hpp"
#include "kcforge/http_client.hpp"
#include "kcforge/ingestion.hpp"
#include "kcforge/manifest.hpp"
#include "kcforge/merge.hpp"
#include "kcforge/stats.hpp"
#include "kcforge/types.hpp"
#include "kcforge/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitPartial = 2;

constexpr const char* kApiKeyEnv = "KCFORGE_API_KEY";
constexpr const char* kBaseUrlEnv = "KCFORGE_BASE_URL";

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw kcforge::IoError("cannot open input file '" + path + "'");
  }
  return in;
}

std::ofstream open_output(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    fs::create_directories(parent, ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw kcforge::IoError("cannot open output file '" + path + "'");
  }
  return out;
}

std::string file_stem(const std::string& path) {
  return fs::path(path).stem().string();
}

// Refuses to let an output path alias an input path.
void guard_outputs(const std::vector<std::string>& inputs,
                   const std::vector<std::string>& outputs) {
  for (const auto& output : outputs) {
    for (const auto& input : inputs) {
      std::error_code ec;
      if (fs::weakly_canonical(output, ec) == fs::weakly_canonical(input, ec)) {
        throw kcforge::ValidationError("output path '" + output +
                                       "' would overwrite input '" + input +
                                       "'");
      }
    }
  }
}

// Flat key=value configuration file; '#' starts a comment.
std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::map<std::string, std::string> config;
  if (path.empty()) {
    return config;
  }
  std::ifstream in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) {
      continue;
    }
    const auto last = line.find_last_not_of(" \t");
    line = line.substr(first, last - first + 1);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw kcforge::ParseError("config file line " + std::to_string(line_no) +
                                ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string::npos) {
        return std::string();
      }
      const auto e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    config[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return config;
}

// Resolution order: flag > environment > config file > built-in default.
// Every resolved value lands in the manifest snapshot.
class Settings {
 public:
  Settings(const CLI::App* cmd, std::map<std::string, std::string> file_config)
      : cmd_(cmd), file_(std::move(file_config)) {}

  std::string get(const std::string& flag, const std::string& bound_value,
                  const std::string& key, const std::string& fallback,
                  const char* env_name = nullptr) {
    std::string value = fallback;
    if (cmd_->count(flag) > 0) {
      value = bound_value;
    } else if (env_name != nullptr) {
      if (const char* env = std::getenv(env_name); env && *env) {
        value = env;
      } else if (auto it = file_.find(key); it != file_.end()) {
        value = it->second;
      }
    } else if (auto it = file_.find(key); it != file_.end()) {
      value = it->second;
    }
    resolved_[key] = value;
    return value;
  }

  double get_double(const std::string& flag, const std::string& bound,
                    const std::string& key, const std::string& fallback) {
    return parse_double(get(flag, bound, key, fallback), key);
  }

  int get_int(const std::string& flag, const std::string& bound,
              const std::string& key, const std::string& fallback) {
    const std::string value = get(flag, bound, key, fallback);
    try {
      return std::stoi(value);
    } catch (const std::exception&) {
      throw kcforge::ValidationError("option '" + key +
                                     "' is not an integer: '" + value + "'");
    }
  }

  void note(const std::string& key, const std::string& value) {
    resolved_[key] = value;
  }

  const std::map<std::string, std::string>& resolved() const {
    return resolved_;
  }

  static double parse_double(const std::string& value, const std::string& key) {
    try {
      std::size_t used = 0;
      const double parsed = std::stod(value, &used);
      if (used != value.size()) {
        throw std::invalid_argument(value);
      }
      return parsed;
    } catch (const std::exception&) {
      throw kcforge::ValidationError("option '" + key +
                                     "' is not a number: '" + value + "'");
    }
  }

 private:
  const CLI::App* cmd_;
  std::map<std::string, std::string> file_;
  std::map<std::string, std::string> resolved_;
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream stream(text);
  std::string token;
  while (std::getline(stream, token, ',')) {
    if (token.empty()) {
      continue;
    }
    try {
      seeds.push_back(std::stoull(token));
    } catch (const std::exception&) {
      throw kcforge::ValidationError("bad seed '" + token + "' in seed list");
    }
  }
  if (seeds.empty()) {
    throw kcforge::ValidationError("seed list is empty");
  }
  return seeds;
}

std::vector<double> parse_double_list(const std::string& text,
                                      const std::string& what) {
  std::vector<double> values;
  std::stringstream stream(text);
  std::string token;
  while (std::getline(stream, token, ',')) {
    if (token.empty()) {
      continue;
    }
    values.push_back(Settings::parse_double(token, what));
  }
  return values;
}

std::string format_fixed(double value, int digits) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", digits, value);
  return buffer;
}

std::string format_compact(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.6g", value);
  return buffer;
}

std::string require_api_key() {
  const char* key = std::getenv(kApiKeyEnv);
  if (key == nullptr || *key == '\0') {
    throw kcforge::ValidationError(
        std::string("environment variable ") + kApiKeyEnv +
        " is not set (required unless --mock-script is given)");
  }
  return key;
}

void print_error(const std::string& message) {
  std::cerr << "kcforge: error: " << message << "\n";
}

// ---------------------------------------------------------------------------
// extract

struct ExtractArgs {
  std::string mcqs, out, traces, name, mock_script, config_file;
  std::string model, base_url, cache_dir;
  std::string temperature = "0", timeout = "30", max_retries = "3";
  std::string parallelism = "1", failure_threshold = "0.1";
  bool no_cache = false;
};

int run_extract(const CLI::App* cmd, const ExtractArgs& args) {
  Settings settings(cmd, load_config_file(args.config_file));
  const std::string base_url =
      settings.get("--base-url", args.base_url, "base_url",
                   "https://api.openai.com/v1", kBaseUrlEnv);
  const std::string model =
      settings.get("--model", args.model, "model", "gpt-4o-mini-2024-07-18");
  const double temperature = settings.get_double("--temperature",
                                                 args.temperature,
                                                 "temperature", "0");
  const int timeout_s =
      settings.get_int("--timeout", args.timeout, "timeout", "30");
  const int max_retries =
      settings.get_int("--max-retries", args.max_retries, "max_retries", "3");
  const std::string cache_dir = settings.get("--cache-dir", args.cache_dir,
                                             "cache_dir", ".kcforge-cache");
  const int parallelism = settings.get_int("--parallelism", args.parallelism,
                                           "parallelism", "1");
  const double failure_threshold =
      settings.get_double("--failure-threshold", args.failure_threshold,
                          "failure_threshold", "0.1");

  const std::string traces_path =
      args.traces.empty() ? args.out + ".traces.jsonl" : args.traces;
  const std::string name = args.name.empty() ? file_stem(args.out) : args.name;
  settings.note("model_name", name);
  settings.note("mcqs", args.mcqs);
  settings.note("out", args.out);
  settings.note("traces", traces_path);
  settings.note("mock_script", args.mock_script);

  std::vector<std::string> inputs{args.mcqs};
  if (!args.mock_script.empty()) {
    inputs.push_back(args.mock_script);
  }
  guard_outputs(inputs, {args.out, traces_path});

  auto mcq_stream = open_input(args.mcqs);
  const std::vector<kcforge::Mcq> mcqs = kcforge::parse_mcqs(mcq_stream);

  kcforge::LlmConfig llm;
  llm.base_url = base_url;
  llm.model = model;
  llm.temperature = temperature;
  llm.max_retries = max_retries;
  llm.timeout = std::chrono::seconds(timeout_s);

  std::unique_ptr<kcforge::ChatClient> backend;
  if (!args.mock_script.empty()) {
    auto script_stream = open_input(args.mock_script);
    backend = std::make_unique<kcforge::ScriptedChatClient>(
        kcforge::load_mock_script(script_stream, mcqs));
  } else {
    backend = std::make_unique<kcforge::HttpChatClient>(llm, require_api_key());
  }

  std::optional<kcforge::ResponseCache> cache;
  std::unique_ptr<kcforge::ChatClient> client;
  if (args.no_cache) {
    client = std::move(backend);
  } else {
    cache.emplace(cache_dir);
    client = std::make_unique<kcforge::CachingChatClient>(*backend, *cache, llm);
  }

  kcforge::ExtractAllOptions options;
  options.parallelism = parallelism;
  options.failure_threshold = failure_threshold;
  options.model_name = name;

  kcforge::ExtractionBatch batch;
  try {
    batch = kcforge::extract_all(mcqs, *client, options);
  } catch (const kcforge::ExtractionBatchError& ex) {
    // Too many per-item failures: persist the traces for debugging and fail.
    auto trace_sink = open_output(traces_path);
    kcforge::write_traces(ex.outcomes(), trace_sink);
    print_error(ex.what());
    return kExitFailure;
  }

  {
    auto model_sink = open_output(args.out);
    kcforge::write_kc_model(batch.model, model_sink);
  }
  {
    auto trace_sink = open_output(traces_path);
    kcforge::write_traces(batch.outcomes, trace_sink);
  }

  kcforge::RunManifest manifest;
  manifest.command = "extract";
  manifest.config = settings.resolved();
  for (const auto& input : inputs) {
    kcforge::add_input(manifest, input);
  }
  if (!args.config_file.empty()) {
    kcforge::add_input(manifest, args.config_file);
  }
  manifest.timestamp = kcforge::manifest_timestamp();
  kcforge::write_manifest(manifest, args.out + ".manifest.json");

  std::cout << "extracted " << (mcqs.size() - batch.failure_count) << " of "
            << mcqs.size() << " MCQs into '" << args.out << "' ("
            << batch.model.label_count() << " distinct KC labels)\n";
  if (batch.failure_count > 0) {
    std::cerr << "failed items:\n";
    for (const auto& outcome : batch.outcomes) {
      if (outcome.error) {
        std::cerr << "  " << outcome.trace.mcq_id << ": " << *outcome.error
                  << "\n";
      }
    }
    return kExitPartial;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// merge

struct MergeArgs {
  std::string in, out, plan_out, summary_out, config_file;
  std::string threshold, sweep;
  std::string embedder = "local", embedding_model, base_url, cache_dir;
  std::string embedding_dim = "256", timeout = "30", max_retries = "3";
};

std::string threshold_tag(double threshold) {
  return format_compact(threshold);
}

int run_merge(const CLI::App* cmd, const MergeArgs& args) {
  Settings settings(cmd, load_config_file(args.config_file));
  const std::string embedder =
      settings.get("--embedder", args.embedder, "embedder", "local");
  const std::string embedding_model = settings.get(
      "--embedding-model", args.embedding_model, "embedding_model", "");
  const std::string base_url =
      settings.get("--base-url", args.base_url, "base_url",
                   "https://api.openai.com/v1", kBaseUrlEnv);
  const std::string cache_dir = settings.get("--cache-dir", args.cache_dir,
                                             "cache_dir", ".kcforge-cache");
  const int embedding_dim = settings.get_int("--embedding-dim",
                                             args.embedding_dim,
                                             "embedding_dim", "256");
  const int timeout_s =
      settings.get_int("--timeout", args.timeout, "timeout", "30");
  const int max_retries =
      settings.get_int("--max-retries", args.max_retries, "max_retries", "3");
  settings.note("in", args.in);
  settings.note("out", args.out);

  std::vector<double> thresholds;
  const bool sweep = !args.sweep.empty();
  if (sweep) {
    thresholds = parse_double_list(args.sweep, "sweep");
    if (thresholds.empty()) {
      throw kcforge::ValidationError("--sweep lists no thresholds");
    }
    settings.note("sweep", args.sweep);
  } else {
    if (args.threshold.empty()) {
      throw kcforge::ValidationError(
          "either --threshold or --sweep is required");
    }
    thresholds.push_back(Settings::parse_double(args.threshold, "threshold"));
    settings.note("threshold", args.threshold);
  }
  for (const double threshold : thresholds) {
    if (threshold < -1.0 || threshold > 1.0) {
      throw kcforge::ValidationError("threshold " + format_compact(threshold) +
                                     " is outside [-1, 1]");
    }
  }

  auto model_stream = open_input(args.in);
  const kcforge::KcModel model =
      kcforge::parse_kc_model(model_stream, file_stem(args.in));

  std::unique_ptr<kcforge::EmbeddingClient> backend;
  std::optional<kcforge::ResponseCache> cache;
  std::unique_ptr<kcforge::EmbeddingClient> client;
  if (embedder == "local") {
    client = std::make_unique<kcforge::LocalNgramEmbedder>(
        static_cast<std::size_t>(embedding_dim));
  } else if (embedder == "http") {
    if (embedding_model.empty()) {
      throw kcforge::ValidationError(
          "--embedding-model is required with --embedder http (no default)");
    }
    kcforge::EmbeddingConfig config;
    config.base_url = base_url;
    config.model = embedding_model;
    config.max_retries = max_retries;
    config.timeout = std::chrono::seconds(timeout_s);
    backend = std::make_unique<kcforge::HttpEmbeddingClient>(config,
                                                             require_api_key());
    cache.emplace(cache_dir);
    client = std::make_unique<kcforge::CachingEmbeddingClient>(*backend, *cache,
                                                               embedding_model);
  } else {
    throw kcforge::ValidationError("unknown embedder '" + embedder +
                                   "' (expected 'local' or 'http')");
  }

  const std::vector<std::string> labels(model.labels().begin(),
                                        model.labels().end());
  const auto vectors = kcforge::embed_labels(labels, *client);
  const auto usage = model.label_usage();

  struct SweepRow {
    double threshold;
    std::size_t kc_count;
    std::string model_path;
  };
  std::vector<SweepRow> rows;
  std::vector<std::string> outputs;

  const std::string out_stem = [&] {
    std::string stem = args.out;
    if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".tsv") {
      stem.resize(stem.size() - 4);
    }
    return stem;
  }();

  for (const double threshold : thresholds) {
    const kcforge::MergePlan plan =
        kcforge::build_merge_plan(vectors, threshold, usage);
    const kcforge::KcModel merged = kcforge::apply_merge(model, plan);
    const std::string model_path =
        sweep ? out_stem + "-t" + threshold_tag(threshold) + ".tsv" : args.out;
    const std::string plan_path =
        sweep ? out_stem + "-t" + threshold_tag(threshold) + ".plan.tsv"
              : (args.plan_out.empty() ? args.out + ".plan.tsv"
                                       : args.plan_out);
    guard_outputs({args.in}, {model_path, plan_path});
    {
      auto sink = open_output(model_path);
      kcforge::write_kc_model(merged, sink);
    }
    {
      auto sink = open_output(plan_path);
      kcforge::write_merge_plan(plan, sink);
    }
    rows.push_back({threshold, merged.label_count(), model_path});
    outputs.push_back(model_path);
  }

  std::cout << "model '" << model.name() << "': " << model.label_count()
            << " KC labels before merge\n";
  std::cout << "threshold\tkc_count\tout\n";
  for (const auto& row : rows) {
    std::cout << threshold_tag(row.threshold) << '\t' << row.kc_count << '\t'
              << row.model_path << "\n";
  }
  if (!args.summary_out.empty()) {
    auto sink = open_output(args.summary_out);
    sink << "threshold,kc_count,out\n";
    for (const auto& row : rows) {
      sink << threshold_tag(row.threshold) << ',' << row.kc_count << ','
           << row.model_path << "\n";
    }
  }

  kcforge::RunManifest manifest;
  manifest.command = "merge";
  manifest.config = settings.resolved();
  kcforge::add_input(manifest, args.in);
  if (!args.config_file.empty()) {
    kcforge::add_input(manifest, args.config_file);
  }
  manifest.timestamp = kcforge::manifest_timestamp();
  kcforge::write_manifest(manifest, args.out + ".manifest.json");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit / crossval / compare shared pieces

struct FitFlagArgs {
  std::string l2_theta = "1.0", l2_beta = "0.001", l2_gamma = "0.001";
  std::string tolerance = "1e-6", max_iterations = "20000";
};

kcforge::FitConfig resolve_fit_config(Settings& settings,
                                      const FitFlagArgs& args) {
  kcforge::FitConfig config;
  config.l2_theta =
      settings.get_double("--l2-theta", args.l2_theta, "l2_theta", "1.0");
  config.l2_beta =
      settings.get_double("--l2-beta", args.l2_beta, "l2_beta", "0.001");
  config.l2_gamma =
      settings.get_double("--l2-gamma", args.l2_gamma, "l2_gamma", "0.001");
  config.tolerance =
      settings.get_double("--tolerance", args.tolerance, "tolerance", "1e-6");
  config.max_iterations = settings.get_int(
      "--max-iterations", args.max_iterations, "max_iterations", "20000");
  kcforge::validate(config);
  return config;
}

void add_fit_flags(CLI::App* cmd, FitFlagArgs& args) {
  cmd->add_option("--l2-theta", args.l2_theta,
                  "L2 penalty on student proficiency (default 1.0)");
  cmd->add_option("--l2-beta", args.l2_beta,
                  "L2 penalty on KC easiness (default 0.001)");
  cmd->add_option("--l2-gamma", args.l2_gamma,
                  "L2 penalty on KC learning rate (default 0.001)");
  cmd->add_option("--tolerance", args.tolerance,
                  "gradient infinity-norm at convergence (default 1e-6)");
  cmd->add_option("--max-iterations", args.max_iterations,
                  "optimizer iteration cap (default 20000)");
}

// Fails fast, listing up to 10 step items the model does not map.
void check_items_mapped(const std::vector<kcforge::StepRecord>& steps,
                        const kcforge::KcModel& model) {
  std::set<std::string> unmapped;
  for (const auto& step : steps) {
    if (!model.contains_item(step.item_id)) {
      unmapped.insert(step.item_id);
    }
  }
  if (unmapped.empty()) {
    return;
  }
  std::string message = "steps reference items not mapped in KC model '" +
                        model.name() + "':";
  std::size_t shown = 0;
  for (const auto& item : unmapped) {
    if (shown == 10) {
      message += " (+" + std::to_string(unmapped.size() - shown) + " more)";
      break;
    }
    message += " '" + item + "'";
    ++shown;
  }
  throw kcforge::ValidationError(message);
}

json repeated_cv_to_json(const kcforge::KcModel& model,
                         const kcforge::RepeatedCvResult& result, int k,
                         const std::vector<std::uint64_t>& seeds) {
  json runs = json::array();
  for (const auto& report : result.reports) {
    runs.push_back(kcforge::report_to_json(report));
  }
  return {{"model_name", model.name()},
          {"kc_count", model.label_count()},
          {"item_count", model.item_count()},
          {"k", k},
          {"seeds", seeds},
          {"runs", runs},
          {"summary",
           {{"mean_pooled_rmse", result.mean_pooled_rmse},
            {"std_pooled_rmse", result.std_pooled_rmse},
            {"std_is_degenerate", result.std_is_degenerate}}}};
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string steps, model, params_out, config_file;
  FitFlagArgs fit;
};

int run_fit(const CLI::App* cmd, const FitArgs& args) {
  Settings settings(cmd, load_config_file(args.config_file));
  const kcforge::FitConfig fit_config = resolve_fit_config(settings, args.fit);
  settings.note("steps", args.steps);
  settings.note("model", args.model);
  settings.note("params_out", args.params_out);
  guard_outputs({args.steps, args.model}, {args.params_out});

  auto steps_stream = open_input(args.steps);
  const auto steps = kcforge::parse_steps(steps_stream);
  auto model_stream = open_input(args.model);
  const auto model =
      kcforge::parse_kc_model(model_stream, file_stem(args.model));
  check_items_mapped(steps, model);

  const kcforge::Design design = kcforge::build_design(steps, model);
  int iterations = 0;
  const kcforge::AfmParams params =
      kcforge::fit(design, fit_config, [&iterations](const auto& it) {
        iterations = it.iteration;
      });
  {
    auto sink = open_output(args.params_out);
    kcforge::write_afm_params(params, design, sink);
  }

  kcforge::RunManifest manifest;
  manifest.command = "fit";
  manifest.config = settings.resolved();
  kcforge::add_input(manifest, args.steps);
  kcforge::add_input(manifest, args.model);
  if (!args.config_file.empty()) {
    kcforge::add_input(manifest, args.config_file);
  }
  manifest.timestamp = kcforge::manifest_timestamp();
  kcforge::write_manifest(manifest, args.params_out + ".manifest.json");

  std::cout << "fitted AFM for model '" << model.name() << "': "
            << design.rows.size() << " rows, " << design.num_students()
            << " students, " << design.num_kcs() << " KCs, " << iterations
            << " iterations, NLL "
            << format_compact(kcforge::negative_log_likelihood(
                   params, design.rows, fit_config))
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// crossval

struct CrossvalArgs {
  std::string steps, model, report_out, config_file;
  std::string k = "3", seeds = "0,1,2,3,4,5,6,7,8,9";
  FitFlagArgs fit;
};

int run_crossval(const CLI::App* cmd, const CrossvalArgs& args) {
  Settings settings(cmd, load_config_file(args.config_file));
  const kcforge::FitConfig fit_config = resolve_fit_config(settings, args.fit);
  const int k = settings.get_int("--k", args.k, "k", "3");
  const std::vector<std::uint64_t> seeds =
      parse_seed_list(settings.get("--seeds", args.seeds, "seeds",
                                   "0,1,2,3,4,5,6,7,8,9"));
  settings.note("steps", args.steps);
  settings.note("model", args.model);
  settings.note("report_out", args.report_out);
  guard_outputs({args.steps, args.model}, {args.report_out});

  auto steps_stream = open_input(args.steps);
  const auto steps = kcforge::parse_steps(steps_stream);
  auto model_stream = open_input(args.model);
  const auto model =
      kcforge::parse_kc_model(model_stream, file_stem(args.model));
  check_items_mapped(steps, model);

  const kcforge::RepeatedCvResult result =
      kcforge::repeated_cv(steps, model, k, seeds, fit_config);
  {
    auto sink = open_output(args.report_out);
    sink << repeated_cv_to_json(model, result, k, seeds).dump(2) << '\n';
  }

  kcforge::RunManifest manifest;
  manifest.command = "crossval";
  manifest.config = settings.resolved();
  manifest.seeds = seeds;
  kcforge::add_input(manifest, args.steps);
  kcforge::add_input(manifest, args.model);
  if (!args.config_file.empty()) {
    kcforge::add_input(manifest, args.config_file);
  }
  manifest.timestamp = kcforge::manifest_timestamp();
  kcforge::write_manifest(manifest, args.report_out + ".manifest.json");

  std::cout << "model '" << model.name() << "' (" << model.label_count()
            << " KCs): k=" << k << " seeds=" << seeds.size()
            << " mean pooled RMSE " << format_fixed(result.mean_pooled_rmse, 4)
            << " (std " << format_fixed(result.std_pooled_rmse, 4) << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// compare

struct CompareArgs {
  std::string steps, model_a, model_b, out, config_file;
  std::string k = "3", seeds = "0,1,2,3,4,5,6,7,8,9";
  FitFlagArgs fit;
};

int run_compare(const CLI::App* cmd, const CompareArgs& args) {
  Settings settings(cmd, load_config_file(args.config_file));
  const kcforge::FitConfig fit_config = resolve_fit_config(settings, args.fit);
  const int k = settings.get_int("--k", args.k, "k", "3");
  const std::vector<std::uint64_t> seeds =
      parse_seed_list(settings.get("--seeds", args.seeds, "seeds",
                                   "0,1,2,3,4,5,6,7,8,9"));
  settings.note("steps", args.steps);
  settings.note("model_a", args.model_a);
  settings.note("model_b", args.model_b);
  if (!args.out.empty()) {
    guard_outputs({args.steps, args.model_a, args.model_b}, {args.out});
  }

  auto steps_stream = open_input(args.steps);
  const auto steps = kcforge::parse_steps(steps_stream);
  auto stream_a = open_input(args.model_a);
  const auto model_a =
      kcforge::parse_kc_model(stream_a, file_stem(args.model_a));
  auto stream_b = open_input(args.model_b);
  const auto model_b =
      kcforge::parse_kc_model(stream_b, file_stem(args.model_b));
  check_items_mapped(steps, model_a);
  check_items_mapped(steps, model_b);

  const auto result_a = kcforge::repeated_cv(steps, model_a, k, seeds,
                                             fit_config);
  const auto result_b = kcforge::repeated_cv(steps, model_b, k, seeds,
                                             fit_config);
  std::vector<double> pooled_a;
  std::vector<double> pooled_b;
  for (const auto& report : result_a.reports) {
    pooled_a.push_back(report.pooled_rmse);
  }
  for (const auto& report : result_b.reports) {
    pooled_b.push_back(report.pooled_rmse);
  }
  const kcforge::ComparisonResult comparison =
      kcforge::two_sample_t_test(pooled_a, pooled_b);

  std::cout << "model_a\tmodel_b\tmean_a\tmean_b\tt\tdf\tp\n";
  std::cout << model_a.name() << '\t' << model_b.name() << '\t'
            << format_fixed(comparison.mean_a, 4) << '\t'
            << format_fixed(comparison.mean_b, 4) << '\t'
            << format_fixed(comparison.t_statistic, 4) << '\t'
            << comparison.degrees_of_freedom << '\t'
            << format_compact(comparison.p_value) << "\n";

  if (!args.out.empty()) {
    json doc = {{"model_a", model_a.name()},
                {"model_b", model_b.name()},
                {"k", k},
                {"seeds", seeds},
                {"pooled_rmse_a", pooled_a},
                {"pooled_rmse_b", pooled_b},
                {"mean_a", comparison.mean_a},
                {"mean_b", comparison.mean_b},
                {"t", comparison.t_statistic},
                {"df", comparison.degrees_of_freedom},
                {"p", comparison.p_value}};
    auto sink = open_output(args.out);
    sink << doc.dump(2) << '\n';

    kcforge::RunManifest manifest;
    manifest.command = "compare";
    manifest.config = settings.resolved();
    manifest.seeds = seeds;
    kcforge::add_input(manifest, args.steps);
    kcforge::add_input(manifest, args.model_a);
    kcforge::add_input(manifest, args.model_b);
    if (!args.config_file.empty()) {
      kcforge::add_input(manifest, args.config_file);
    }
    manifest.timestamp = kcforge::manifest_timestamp();
    kcforge::write_manifest(manifest, args.out + ".manifest.json");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::vector<std::string> reports;
  std::string table_out = "kc_report.txt";
  std::string csv_out = "kc_report.csv";
};

int run_report(const CLI::App* cmd, const ReportArgs& args) {
  struct Row {
    std::string model;
    std::size_t kc_count;
    double mean;
    double stddev;
  };
  std::vector<Row> rows;
  int k = -1;
  for (const auto& path : args.reports) {
    auto in = open_input(path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& ex) {
      throw kcforge::ParseError("report file '" + path +
                                "' is not valid JSON: " + ex.what());
    }
    try {
      const int report_k = doc.at("k").get<int>();
      if (k == -1) {
        k = report_k;
      } else if (k != report_k) {
        throw kcforge::ValidationError(
            "report files mix different k values (" + std::to_string(k) +
            " vs " + std::to_string(report_k) + " in '" + path +
            "'); results are not comparable");
      }
      rows.push_back({doc.at("model_name").get<std::string>(),
                      doc.at("kc_count").get<std::size_t>(),
                      doc.at("summary").at("mean_pooled_rmse").get<double>(),
                      doc.at("summary").at("std_pooled_rmse").get<double>()});
    } catch (const json::exception& ex) {
      throw kcforge::ParseError("report file '" + path +
                                "' is missing fields: " + ex.what());
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.mean < b.mean; });

  std::vector<std::vector<std::string>> cells;
  cells.push_back({"model", "kc_count", "mean_pooled_rmse", "std"});
  for (const auto& row : rows) {
    cells.push_back({row.model, std::to_string(row.kc_count),
                     format_fixed(row.mean, 4), format_fixed(row.stddev, 4)});
  }
  std::vector<std::size_t> widths(cells[0].size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      widths[c] = std::max(widths[c], line[c].size());
    }
  }
  std::string table;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      table += line[c];
      if (c + 1 < line.size()) {
        table += std::string(widths[c] - line[c].size() + 2, ' ');
      }
    }
    table += '\n';
  }
  std::cout << table;

  {
    auto sink = open_output(args.table_out);
    sink << table;
  }
  {
    auto sink = open_output(args.csv_out);
    sink << "model,kc_count,mean_pooled_rmse,std_pooled_rmse\n";
    for (const auto& row : rows) {
      sink << row.model << ',' << row.kc_count << ','
           << format_fixed(row.mean, 6) << ',' << format_fixed(row.stddev, 6)
           << "\n";
    }
  }

  kcforge::RunManifest manifest;
  manifest.command = "report";
  manifest.config = {{"table_out", args.table_out}, {"csv_out", args.csv_out}};
  (void)cmd;
  for (const auto& path : args.reports) {
    kcforge::add_input(manifest, path);
  }
  manifest.timestamp = kcforge::manifest_timestamp();
  kcforge::write_manifest(manifest, args.table_out + ".manifest.json");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kcforge: KC extraction, label merging and AFM evaluation"};
  app.set_version_flag("--version", KCFORGE_VERSION);
  app.require_subcommand(1);

  ExtractArgs extract_args;
  CLI::App* extract = app.add_subcommand(
      "extract", "run the three-turn KC extraction over an MCQ bank");
  extract->add_option("--mcqs", extract_args.mcqs,
                      "MCQ bank (line-delimited JSON)")->required();
  extract->add_option("--out", extract_args.out, "KC model TSV to write")
      ->required();
  extract->add_option("--traces", extract_args.traces,
                      "extraction trace JSONL (default <out>.traces.jsonl)");
  extract->add_option("--name", extract_args.name,
                      "model name (default: stem of --out)");
  extract->add_option("--mock-script", extract_args.mock_script,
                      "scripted responses keyed by MCQ id; no API key needed");
  extract->add_option("--model", extract_args.model, "chat model identifier");
  extract->add_option("--base-url", extract_args.base_url,
                      "chat API base URL");
  extract->add_option("--temperature", extract_args.temperature,
                      "sampling temperature (default 0)");
  extract->add_option("--timeout", extract_args.timeout,
                      "request timeout in seconds");
  extract->add_option("--max-retries", extract_args.max_retries,
                      "transport retry budget");
  extract->add_option("--cache-dir", extract_args.cache_dir,
                      "response cache directory (default .kcforge-cache)");
  extract->add_flag("--no-cache", extract_args.no_cache,
                    "disable the response cache");
  extract->add_option("--parallelism", extract_args.parallelism,
                      "concurrent MCQ extractions (default 1)");
  extract->add_option("--failure-threshold", extract_args.failure_threshold,
                      "max tolerated per-item failure fraction (default 0.1)");
  extract->add_option("--config", extract_args.config_file,
                      "key=value configuration file");

  MergeArgs merge_args;
  CLI::App* merge = app.add_subcommand(
      "merge", "merge semantically close KC labels by cosine similarity");
  merge->add_option("--in", merge_args.in, "KC model TSV to read")->required();
  merge->add_option("--out", merge_args.out, "merged KC model TSV to write")
      ->required();
  merge->add_option("--threshold", merge_args.threshold,
                    "cosine threshold in [-1, 1]");
  merge->add_option("--sweep", merge_args.sweep,
                    "comma-separated thresholds; writes one model each");
  merge->add_option("--plan-out", merge_args.plan_out,
                    "merge-plan TSV (default <out>.plan.tsv)");
  merge->add_option("--summary-out", merge_args.summary_out,
                    "sweep summary CSV");
  merge->add_option("--embedder", merge_args.embedder,
                    "'local' (deterministic, offline) or 'http'");
  merge->add_option("--embedding-model", merge_args.embedding_model,
                    "embedding model identifier (required for http)");
  merge->add_option("--embedding-dim", merge_args.embedding_dim,
                    "local embedder dimension (default 256)");
  merge->add_option("--base-url", merge_args.base_url,
                    "embeddings API base URL");
  merge->add_option("--timeout", merge_args.timeout,
                    "request timeout in seconds");
  merge->add_option("--max-retries", merge_args.max_retries,
                    "transport retry budget");
  merge->add_option("--cache-dir", merge_args.cache_dir,
                    "response cache directory");
  merge->add_option("--config", merge_args.config_file,
                    "key=value configuration file");

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "fit an AFM on steps + KC model");
  fit->add_option("--steps", fit_args.steps, "steps TSV")->required();
  fit->add_option("--model", fit_args.model, "KC model TSV")->required();
  fit->add_option("--params-out", fit_args.params_out,
                  "fitted parameter TSV to write")->required();
  add_fit_flags(fit, fit_args.fit);
  fit->add_option("--config", fit_args.config_file,
                  "key=value configuration file");

  CrossvalArgs crossval_args;
  CLI::App* crossval = app.add_subcommand(
      "crossval", "item-blocked k-fold CV, repeated over seeds");
  crossval->add_option("--steps", crossval_args.steps, "steps TSV")
      ->required();
  crossval->add_option("--model", crossval_args.model, "KC model TSV")
      ->required();
  crossval->add_option("--report-out", crossval_args.report_out,
                       "CV report JSON to write")->required();
  crossval->add_option("--k", crossval_args.k, "fold count (default 3)");
  crossval->add_option("--seeds", crossval_args.seeds,
                       "comma-separated seeds (default 0..9)");
  add_fit_flags(crossval, crossval_args.fit);
  crossval->add_option("--config", crossval_args.config_file,
                       "key=value configuration file");

  CompareArgs compare_args;
  CLI::App* compare = app.add_subcommand(
      "compare", "cross-validate two KC models and t-test the RMSEs");
  compare->add_option("--steps", compare_args.steps, "steps TSV")->required();
  compare->add_option("--model-a", compare_args.model_a, "first KC model TSV")
      ->required();
  compare->add_option("--model-b", compare_args.model_b, "second KC model TSV")
      ->required();
  compare->add_option("--out", compare_args.out, "comparison JSON to write");
  compare->add_option("--k", compare_args.k, "fold count (default 3)");
  compare->add_option("--seeds", compare_args.seeds,
                      "comma-separated seeds (default 0..9)");
  add_fit_flags(compare, compare_args.fit);
  compare->add_option("--config", compare_args.config_file,
                      "key=value configuration file");

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand(
      "report", "tabulate CV reports sorted by mean pooled RMSE");
  report->add_option("reports", report_args.reports, "CV report JSON files")
      ->required();
  report->add_option("--table-out", report_args.table_out,
                     "plain-text table path (default kc_report.txt)");
  report->add_option("--csv-out", report_args.csv_out,
                     "CSV table path (default kc_report.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitFailure;
  }

  try {
    if (extract->parsed()) {
      return run_extract(extract, extract_args);
    }
    if (merge->parsed()) {
      return run_merge(merge, merge_args);
    }
    if (fit->parsed()) {
      return run_fit(fit, fit_args);
    }
    if (crossval->parsed()) {
      return run_crossval(crossval, crossval_args);
    }
    if (compare->parsed()) {
      return run_compare(compare, compare_args);
    }
    if (report->parsed()) {
      return run_report(report, report_args);
    }
  } catch (const kcforge::Error& ex) {
    print_error(ex.what());
    return kExitFailure;
  } catch (const std::exception& ex) {
    print_error(std::string("unexpected: ") + ex.what());
    return kExitFailure;
  }
  return kExitFailure;
}
