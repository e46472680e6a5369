// textdial: ingest -> synthesize -> evaluate -> stats / correlate -> export.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "textdial/providers/http.hpp"
#include "textdial/textdial.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace textdial;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit : int {
  kOk = 0,
  kUnexpected = 1,
  kConfigError = 2,
  kDataError = 3,
  kAllFailed = 4,
  kProviderExhausted = 5,
};

// Carries an exit code to main().
struct CliError {
  int code;
  std::string kind;
  std::string message;
};

[[noreturn]] void fail(int code, std::string kind, std::string message) {
  throw CliError{code, std::move(kind), std::move(message)};
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidTurnCap:
      return kConfigError;
    case ErrorKind::Provider:
      return kProviderExhausted;
    case ErrorKind::Schema:
    case ErrorKind::EmptyBook:
    case ErrorKind::Io:
    case ErrorKind::UnmatchedJoin:
    case ErrorKind::EmptyDataset:
    case ErrorKind::NoBigrams:
    case ErrorKind::EmptySection:
      return kDataError;
    default:
      return kUnexpected;
  }
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string iso_utc(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Fixed under --mock so outputs are byte-identical across runs; SOURCE_DATE_EPOCH
// overrides either way.
std::string run_timestamp(bool mock) {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      return iso_utc(static_cast<std::time_t>(std::stoll(epoch)));
    } catch (const std::exception&) {
      fail(kConfigError, "invalid_config", "SOURCE_DATE_EPOCH is not an integer");
    }
  }
  return iso_utc(mock ? 0 : std::time(nullptr));
}

json read_json_file(const fs::path& path, int code_on_error) {
  std::ifstream in(path);
  if (!in) fail(code_on_error, "io", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(code_on_error, "schema", path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(kDataError, "io", "cannot write " + path.string());
  out << text;
}

// Runs job(i) for i in [0, n) on up to `workers` threads. The first exception
// by index is rethrown after all jobs finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto count = static_cast<std::size_t>(std::max(1, workers));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(count, n); ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// --- shared options --------------------------------------------------------

struct ProviderOptions {
  bool mock = false;
  bool verbose = false;
  std::string config_path;
  json config = json::object();
};

void load_config(ProviderOptions& p) {
  if (p.config_path.empty()) return;
  p.config = read_json_file(p.config_path, kConfigError);
  if (!p.config.is_object()) fail(kConfigError, "invalid_config", "config must be a JSON object");
}

template <typename T>
void from_config(const json& cfg, const char* key, T& target, bool overridden) {
  if (overridden || !cfg.contains(key)) return;
  try {
    target = cfg.at(key).get<T>();
  } catch (const json::exception&) {
    fail(kConfigError, "invalid_config", std::string("config key '") + key + "' has the wrong type");
  }
}

HttpProviderConfig http_config(const ProviderOptions& p) {
  const json provider = p.config.value("provider", json::object());
  HttpProviderConfig c;
  c.chat_url = provider.value("chat_url", "");
  c.embeddings_url = provider.value("embeddings_url", "");
  c.qa_url = provider.value("qa_url", "");
  c.chat_model = provider.value("chat_model", "");
  c.embedding_model = provider.value("embedding_model", "");
  c.timeout = std::chrono::seconds(provider.value("timeout_s", 60));
  c.max_in_flight = provider.value("max_in_flight", 4);
  c.min_interval = std::chrono::milliseconds(provider.value("min_interval_ms", 0));
  c.verbose = p.verbose;
  if (const char* key = std::getenv("B2D_API_KEY")) c.api_key = key;
  if (c.max_in_flight < 1) fail(kConfigError, "invalid_config", "max_in_flight must be >= 1");
  return c;
}

json provider_fingerprint(const ProviderOptions& p) {
  if (p.mock) return "mock";
  const auto c = http_config(p);
  return {{"chat_url", c.chat_url},
          {"embeddings_url", c.embeddings_url},
          {"qa_url", c.qa_url},
          {"chat_model", c.chat_model},
          {"embedding_model", c.embedding_model}};
}

std::unique_ptr<Provider> make_provider(const ProviderOptions& p,
                                        const std::vector<std::string>& needs) {
  if (p.mock) return std::make_unique<MockProvider>();
  auto c = http_config(p);
  for (const auto& n : needs) {
    if ((n == "chat" && c.chat_url.empty()) || (n == "embeddings" && c.embeddings_url.empty()) ||
        (n == "qa" && c.qa_url.empty())) {
      fail(kConfigError, "invalid_config",
           "no " + n + " endpoint configured (set provider." + n +
               "_url in --config, or pass --mock)");
    }
  }
  return std::make_unique<HttpProvider>(std::move(c));
}

Corpus load_corpus(const std::string& path) {
  try {
    return Corpus::load(path);
  } catch (const Error& e) {
    fail(kDataError, std::string(to_string(e.kind())), e.what());
  }
}

std::vector<Dialogue> load_dataset(const std::string& path) {
  try {
    return read_dialogues(path);
  } catch (const Error& e) {
    fail(kDataError, std::string(to_string(e.kind())), e.what());
  }
}

// --- ingest ---------------------------------------------------------------------

struct IngestArgs {
  std::string corpus;
};

int cmd_ingest(const IngestArgs& a) {
  const Corpus corpus = load_corpus(a.corpus);
  json books = json::array();
  for (const auto& b : corpus.books()) {
    json chapters = json::array();
    std::size_t empty = 0;
    for (const auto& ch : b.chapters) {
      json sections = json::array();
      for (const auto& s : ch.sections) {
        if (trim(s.content).empty()) ++empty;
        sections.push_back({{"id", s.id},
                            {"title", s.title},
                            {"sentences", trim(s.content).empty()
                                              ? 0
                                              : segment_sentences(s.content).size()},
                            {"tokens", tokenize(s.content).size()}});
      }
      chapters.push_back({{"index", ch.index}, {"title", ch.title}, {"sections", sections}});
    }
    books.push_back({{"id", b.id},
                     {"title", b.title},
                     {"domain", b.domain_label},
                     {"n_chapters", b.chapters.size()},
                     {"n_sections", b.section_count()},
                     {"n_empty_sections", empty},
                     {"chapters", chapters}});
  }
  std::cout << json{{"books", books}, {"corpus_fingerprint", hex(corpus.fingerprint())}}.dump(2)
            << "\n";
  return kOk;
}

// --- synthesize -----------------------------------------------------------------------

struct SynthesizeArgs {
  std::string corpus;
  std::string out;
  std::string strategy = "persona-dual";
  std::string info_level = "high";
  int max_turns = 12;
  double temperature = 0.7;
  std::int64_t seed = 0;
  int concurrency = 4;
  std::vector<std::string> sections;
  ProviderOptions provider;
  // Which options were given on the command line (they beat the config file).
  std::map<std::string, bool> given;
};

SynthesisConfig synthesis_config(SynthesizeArgs& a) {
  const json& cfg = a.provider.config;
  from_config(cfg, "strategy", a.strategy, a.given["strategy"]);
  from_config(cfg, "info_level", a.info_level, a.given["info_level"]);
  from_config(cfg, "max_turns", a.max_turns, a.given["max_turns"]);
  from_config(cfg, "temperature", a.temperature, a.given["temperature"]);
  from_config(cfg, "seed", a.seed, a.given["seed"]);
  from_config(cfg, "concurrency", a.concurrency, a.given["concurrency"]);

  SynthesisConfig c;
  const auto strategy = parse_strategy(a.strategy);
  if (!strategy) fail(kConfigError, "invalid_config", "unknown strategy '" + a.strategy + "'");
  const auto level = parse_info_level(a.info_level);
  if (!level) fail(kConfigError, "invalid_config", "unknown info level '" + a.info_level + "'");
  c.strategy = *strategy;
  c.info_level = *level;
  c.max_turns = a.max_turns;
  c.params.temperature = a.temperature;
  c.seed = a.seed;
  from_config(cfg, "student_max_output_tokens", c.params.max_output_tokens, false);
  from_config(cfg, "teacher_max_output_tokens", c.teacher_max_output_tokens, false);
  try {
    c.validate();
  } catch (const Error& e) {
    fail(kConfigError, "invalid_config", e.what());
  }
  if (a.concurrency < 1) fail(kConfigError, "invalid_config", "concurrency must be >= 1");
  return c;
}

struct Job {
  const Book* book;
  const Chapter* chapter;
  const Section* section;
};

int cmd_synthesize(SynthesizeArgs& a) {
  load_config(a.provider);
  SynthesisConfig config = synthesis_config(a);
  const Corpus corpus = load_corpus(a.corpus);
  config.created_at = run_timestamp(a.provider.mock);

  std::vector<Job> jobs;
  std::vector<std::string> skipped;
  for (const auto& b : corpus.books()) {
    for (const auto& ch : b.chapters) {
      for (const auto& s : ch.sections) {
        if (!a.sections.empty() &&
            std::find(a.sections.begin(), a.sections.end(), s.id) == a.sections.end() &&
            std::find(a.sections.begin(), a.sections.end(), b.id + "/" + s.id) ==
                a.sections.end()) {
          continue;
        }
        if (trim(s.content).empty()) {
          skipped.push_back(b.id + "/" + s.id);
          continue;
        }
        jobs.push_back({&b, &ch, &s});
      }
    }
  }
  if (jobs.empty()) fail(kDataError, "empty_section", "no eligible sections in corpus");

  auto provider = make_provider(a.provider, {"chat"});
  if (config.strategy == Strategy::QGQA && !a.provider.mock) {
    make_provider(a.provider, {"qa"});  // validates the endpoint only
  }

  struct Outcome {
    std::optional<Dialogue> dialogue;
    std::vector<std::string> warnings;
    std::string error_kind;
    std::string error;
  };
  std::vector<Outcome> outcomes(jobs.size());
  std::mutex log_mu;
  parallel_for(jobs.size(), a.concurrency, [&](std::size_t i) {
    const Job& job = jobs[i];
    Outcome& o = outcomes[i];
    try {
      o.dialogue = synthesize(*job.section, config, *provider,
                              {job.book->id, job.chapter->index}, &o.warnings);
    } catch (const ProviderError& e) {
      o.error_kind = std::string(to_string(e.provider_kind()));
      o.error = e.what();
    } catch (const Error& e) {
      o.error_kind = std::string(to_string(e.kind()));
      o.error = e.what();
    }
    if (a.provider.verbose) {
      std::lock_guard lock(log_mu);
      std::cerr << "[synthesize] " << job.book->id << "/" << job.section->id << ": "
                << (o.dialogue ? std::to_string(o.dialogue->size()) + " pairs" : o.error) << "\n";
    }
  });

  std::vector<Dialogue> dialogues;
  json failures = json::array();
  json warnings = json::array();
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    for (const auto& w : outcomes[i].warnings) warnings.push_back(w);
    if (outcomes[i].dialogue) {
      pairs += outcomes[i].dialogue->size();
      dialogues.push_back(std::move(*outcomes[i].dialogue));
    } else {
      failures.push_back({{"section", jobs[i].book->id + "/" + jobs[i].section->id},
                          {"kind", outcomes[i].error_kind},
                          {"message", outcomes[i].error}});
    }
  }

  const fs::path out_dir = a.out;
  fs::create_directories(out_dir);
  write_dialogues(out_dir / "dialogues.jsonl", dialogues);

  const json hashed_config = {{"strategy", to_string(config.strategy)},
                              {"info_level", to_string(config.effective_info_level())},
                              {"max_turns", config.max_turns},
                              {"temperature", config.params.temperature},
                              {"student_max_output_tokens", config.params.max_output_tokens},
                              {"teacher_max_output_tokens", config.teacher_max_output_tokens},
                              {"seed", config.seed},
                              {"sections", a.sections},
                              {"provider", provider_fingerprint(a.provider)}};
  const json manifest = {
      {"tool", "textdial"},
      {"version", kVersion},
      {"created_at", config.created_at},
      {"config", hashed_config},
      {"config_hash", hex(fnv1a(hashed_config.dump()))},
      {"corpus_fingerprint", hex(corpus.fingerprint())},
      {"seed", config.seed},
      {"dataset", "dialogues.jsonl"},
      {"counts",
       {{"eligible_sections", jobs.size()},
        {"dialogues", dialogues.size()},
        {"failed", failures.size()},
        {"pairs", pairs},
        {"skipped_empty_sections", skipped.size()}}},
      {"failures", failures},
      {"warnings", warnings},
  };
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");

  std::cerr << "synthesized " << dialogues.size() << "/" << jobs.size() << " sections ("
            << pairs << " pairs) into " << (out_dir / "dialogues.jsonl").string() << "\n";
  if (dialogues.empty()) {
    std::string first = failures.empty() ? "" : failures[0]["message"].get<std::string>();
    fail(kAllFailed, "all_sections_failed", "every section failed; first error: " + first);
  }
  return kOk;
}

// --- evaluate -------------------------------------------------------------------------

struct EvaluateArgs {
  std::string dataset;
  std::string corpus;
  std::string out;
  bool offline = false;
  double alpha = 1.0;
  double beta = 1.0;
  std::string aggregation = "max";
  int concurrency = 4;
  ProviderOptions provider;
};

std::string report_file_name(std::size_t index, const std::string& id) {
  std::string safe;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '.';
    safe.push_back(ok ? c : '_');
  }
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%04zu_", index + 1);
  return prefix + safe + ".json";
}

void check_manifest(const fs::path& dataset, const Corpus& corpus) {
  const fs::path manifest_path = dataset.parent_path() / "manifest.json";
  if (!fs::exists(manifest_path)) return;
  const json manifest = read_json_file(manifest_path, kDataError);
  if (!manifest.contains("corpus_fingerprint")) return;
  const std::string expected = manifest["corpus_fingerprint"].get<std::string>();
  if (expected != hex(corpus.fingerprint())) {
    fail(kDataError, "corpus_mismatch",
         "dataset was synthesized from a different corpus (manifest fingerprint " + expected +
             ", corpus " + hex(corpus.fingerprint()) + ")");
  }
}

int cmd_evaluate(EvaluateArgs& a) {
  load_config(a.provider);
  from_config(a.provider.config, "alpha", a.alpha, false);
  from_config(a.provider.config, "beta", a.beta, false);
  if (a.alpha < 0 || a.beta < 0) fail(kConfigError, "invalid_config", "alpha and beta must be >= 0");
  if (a.offline && a.provider.mock) {
    fail(kConfigError, "invalid_config", "--offline and --mock are mutually exclusive");
  }
  if (a.concurrency < 1) fail(kConfigError, "invalid_config", "concurrency must be >= 1");

  const Corpus corpus = load_corpus(a.corpus);
  const std::vector<Dialogue> dialogues = load_dataset(a.dataset);
  if (dialogues.empty()) fail(kDataError, "empty_dataset", a.dataset + " has no dialogues");
  check_manifest(a.dataset, corpus);

  std::vector<const Section*> sources;
  for (const auto& d : dialogues) {
    const auto loc = corpus.find(d.meta.book_id, d.meta.section_id);
    if (!loc) {
      fail(kDataError, "unresolved_grounding",
           "dialogue " + d.meta.id + " references unknown section '" + d.meta.section_id +
               "' of book '" + d.meta.book_id + "'");
    }
    sources.push_back(loc->section);
  }

  std::unique_ptr<Provider> inner;
  std::unique_ptr<CachingProvider> cached;
  if (!a.offline) {
    inner = make_provider(a.provider, {"embeddings", "qa"});
    cached = std::make_unique<CachingProvider>(*inner);
  }
  EvalOptions options;
  options.alpha = a.alpha;
  options.beta = a.beta;
  options.coherence_all_aggregation =
      a.aggregation == "mean" ? ReferenceAggregation::Mean : ReferenceAggregation::Max;

  std::vector<MetricReport> reports(dialogues.size());
  try {
    parallel_for(dialogues.size(), a.concurrency, [&](std::size_t i) {
      reports[i] = evaluate_dialogue(dialogues[i], sources[i]->content, cached.get(), options);
    });
  } catch (const ProviderError& e) {
    fail(kProviderExhausted, std::string(to_string(e.provider_kind())), e.what());
  }

  const fs::path out_dir = a.out;
  fs::create_directories(out_dir / "reports");
  for (std::size_t i = 0; i < reports.size(); ++i) {
    write_text(out_dir / "reports" / report_file_name(i, reports[i].dialogue_id),
               to_json(reports[i]).dump(2) + "\n");
  }
  const std::string csv = metrics_csv(reports);
  write_text(out_dir / "metrics.csv", csv);

  json means = json::object();
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.per_dialogue) {
      acc[k].first += v;
      acc[k].second += 1;
    }
  }
  for (const auto& [k, sn] : acc) means[k] = sn.first / static_cast<double>(sn.second);
  json skipped = json::object();
  if (a.offline) {
    for (const auto& [k, reason] : reports.front().skipped) skipped[k] = reason;
  }
  write_text(out_dir / "summary.json",
             json{{"dialogues", reports.size()},
                  {"mode", a.offline ? "offline" : (a.provider.mock ? "mock" : "live")},
                  {"alpha", a.alpha},
                  {"beta", a.beta},
                  {"coherence_all_aggregation", a.aggregation},
                  {"means", means},
                  {"skipped", skipped}}
                     .dump(2) +
                 "\n");
  std::cerr << "evaluated " << reports.size() << " dialogues into " << out_dir.string() << "\n";
  return kOk;
}

// --- stats ---------------------------------------------------------------------------

struct StatsArgs {
  std::string dataset;
  std::string out;
  bool json_only = false;
};

int cmd_stats(const StatsArgs& a) {
  const auto dialogues = load_dataset(a.dataset);
  DatasetStats s;
  try {
    s = dataset_stats(dialogues);
  } catch (const Error& e) {
    fail(kDataError, std::string(to_string(e.kind())), a.dataset + ": " + e.what());
  }
  const std::string j = to_json(s).dump(2) + "\n";
  if (!a.out.empty()) write_text(a.out, j);
  if (a.json_only) {
    std::cout << j;
  } else {
    std::cout << render_table(s);
  }
  return kOk;
}

// --- correlate ---------------------------------------------------------------------------

struct CorrelateArgs {
  std::string reports;
  std::string annotations;
  std::string metric;
  std::string criterion;
  std::string out;
};

std::map<std::string, MetricReport> load_reports(const fs::path& dir_arg) {
  fs::path dir = dir_arg;
  if (fs::is_directory(dir / "reports")) dir /= "reports";
  if (!fs::is_directory(dir)) fail(kDataError, "io", "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, MetricReport> out;
  for (const auto& f : files) {
    try {
      auto r = metric_report_from_json(read_json_file(f, kDataError));
      out[r.dialogue_id] = std::move(r);
    } catch (const Error& e) {
      fail(kDataError, "schema", f.string() + ": " + e.what());
    }
  }
  if (out.empty()) fail(kDataError, "empty_dataset", "no metric reports under " + dir.string());
  return out;
}

int cmd_correlate(const CorrelateArgs& a) {
  const auto reports = load_reports(a.reports);
  std::vector<AnnotationRecord> joined;
  try {
    joined = join_annotations(read_annotations(fs::path(a.annotations)), reports, a.metric,
                              a.criterion);
  } catch (const Error& e) {
    fail(exit_code_for(e.kind()), std::string(to_string(e.kind())), e.what());
  }
  std::vector<double> metric_scores;
  std::vector<double> human_scores;
  for (const auto& r : joined) {
    metric_scores.push_back(r.metric_score);
    human_scores.push_back(r.human_score);
  }
  json result = {{"metric", a.metric}, {"criterion", a.criterion}, {"n", joined.size()}};
  try {
    result["pearson"] = to_json(pearson(metric_scores, human_scores));
    result["spearman"] = to_json(spearman(metric_scores, human_scores));
  } catch (const Error& e) {
    fail(kDataError, std::string(to_string(e.kind())), e.what());
  }
  const std::string text = result.dump(2) + "\n";
  if (!a.out.empty()) write_text(a.out, text);
  std::cout << text;
  return kOk;
}

// --- export --------------------------------------------------------------------------

struct ExportArgs {
  std::string dataset;
  std::string corpus;
  std::string out;
  std::string format = "pretrain";
};

int cmd_export(const ExportArgs& a) {
  const Corpus corpus = load_corpus(a.corpus);
  const auto dialogues = load_dataset(a.dataset);
  std::string lines;
  for (const auto& d : dialogues) {
    const auto loc = corpus.find(d.meta.book_id, d.meta.section_id);
    if (!loc) {
      fail(kDataError, "unresolved_grounding",
           "dialogue " + d.meta.id + " references unknown section '" + d.meta.section_id + "'");
    }
    Dialogue history;
    history.meta = d.meta;
    for (const auto& p : d.pairs) {
      lines += json{{"dialogue_id", d.meta.id},
                    {"t", p.index},
                    {"history", render_history(history)},
                    {"source", loc->section->content},
                    {"question", p.question},
                    {"answer", p.answer}}
                   .dump() +
               "\n";
      history.pairs.push_back(p);
    }
  }
  write_text(a.out, lines);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthesize and evaluate teacher-student dialogues from textbooks"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log provider requests (API key redacted)");

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse a corpus and print its structure");
  ingest_cmd->add_option("--corpus", ingest.corpus, "Textbook JSON file or directory")->required();

  SynthesizeArgs synth;
  auto* synth_cmd = app.add_subcommand("synthesize", "Generate one dialogue per section");
  synth_cmd->add_option("--corpus", synth.corpus, "Textbook JSON file or directory")->required();
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  auto* o_strategy = synth_cmd->add_option(
      "--strategy", synth.strategy, "persona-dual | persona-single | inpainting | qgqa");
  auto* o_level = synth_cmd->add_option("--info-level", synth.info_level,
                                        "Student information level: low | medium | high");
  auto* o_turns = synth_cmd->add_option("--max-turns", synth.max_turns,
                                        "Utterance cap; pairs = turns / 2");
  auto* o_temp = synth_cmd->add_option("--temperature", synth.temperature);
  auto* o_seed = synth_cmd->add_option("--seed", synth.seed);
  auto* o_conc = synth_cmd->add_option("--concurrency", synth.concurrency,
                                       "Sections synthesized in parallel");
  synth_cmd->add_option("--section", synth.sections,
                        "Restrict to these section ids (or book/section); repeatable");
  synth_cmd->add_flag("--mock", synth.provider.mock, "Use deterministic mock providers");
  synth_cmd->add_option("--config", synth.provider.config_path, "JSON config file");

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a dialogue dataset");
  eval_cmd->add_option("--dataset", eval.dataset, "dialogues.jsonl")->required();
  eval_cmd->add_option("--corpus", eval.corpus, "Textbook JSON file or directory")->required();
  eval_cmd->add_option("--out", eval.out, "Report directory")->required();
  eval_cmd->add_flag("--mock", eval.provider.mock, "Use deterministic mock providers");
  eval_cmd->add_flag("--offline", eval.offline, "Skip provider-backed metrics");
  eval_cmd->add_option("--alpha", eval.alpha, "QFactScore weight of the QA term");
  eval_cmd->add_option("--beta", eval.beta, "QFactScore weight of the question term");
  eval_cmd->add_option("--coherence-aggregation", eval.aggregation)
      ->check(CLI::IsMember({"max", "mean"}));
  eval_cmd->add_option("--concurrency", eval.concurrency);
  eval_cmd->add_option("--config", eval.provider.config_path, "JSON config file");

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Dataset statistics");
  stats_cmd->add_option("--dataset", stats.dataset, "dialogues.jsonl")->required();
  stats_cmd->add_option("--out", stats.out, "Also write the JSON here");
  stats_cmd->add_flag("--json", stats.json_only, "Print JSON instead of the table");

  CorrelateArgs corr;
  auto* corr_cmd = app.add_subcommand("correlate", "Correlate a metric with human annotations");
  corr_cmd->add_option("--reports", corr.reports, "Report directory from evaluate")->required();
  corr_cmd->add_option("--annotations", corr.annotations, "Annotation CSV")->required();
  corr_cmd->add_option("--metric", corr.metric)->required();
  corr_cmd->add_option("--criterion", corr.criterion)->required();
  corr_cmd->add_option("--out", corr.out, "Also write the JSON here");

  ExportArgs exp;
  auto* exp_cmd = app.add_subcommand("export", "Flatten dialogues into training records");
  exp_cmd->add_option("--dataset", exp.dataset, "dialogues.jsonl")->required();
  exp_cmd->add_option("--corpus", exp.corpus, "Textbook JSON file or directory")->required();
  exp_cmd->add_option("--out", exp.out, "Output JSONL")->required();
  exp_cmd->add_option("--format", exp.format)->check(CLI::IsMember({"pretrain"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc != 0) std::cerr << "error_code=" << kConfigError << " kind=usage\n";
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*ingest_cmd) return cmd_ingest(ingest);
    if (*synth_cmd) {
      synth.provider.verbose = verbose;
      synth.given = {{"strategy", o_strategy->count() > 0},
                     {"info_level", o_level->count() > 0},
                     {"max_turns", o_turns->count() > 0},
                     {"temperature", o_temp->count() > 0},
                     {"seed", o_seed->count() > 0},
                     {"concurrency", o_conc->count() > 0}};
      return cmd_synthesize(synth);
    }
    if (*eval_cmd) {
      eval.provider.verbose = verbose;
      return cmd_evaluate(eval);
    }
    if (*stats_cmd) return cmd_stats(stats);
    if (*corr_cmd) return cmd_correlate(corr);
    if (*exp_cmd) return cmd_export(exp);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    std::cerr << "error_code=" << e.code << " kind=" << e.kind << "\n";
    return e.code;
  } catch (const Error& e) {
    const int code = exit_code_for(e.kind());
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << "error_code=" << code << " kind=" << to_string(e.kind()) << "\n";
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << "error_code=" << kUnexpected << " kind=internal\n";
    return kUnexpected;
  }
  return kOk;
}
