#include "commands.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "persuade/corpus.hpp"
#include "persuade/episode.hpp"
#include "persuade/http_api.hpp"
#include "persuade/knowledge_base.hpp"
#include "persuade/metrics.hpp"
#include "persuade/session_service.hpp"

namespace fs = std::filesystem;

namespace persuade::cli {

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) { g_cancel.store(true); }

/// Bad flag combination, detected before any work starts.
struct FlagConflict : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool is_breach(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation:
    case ErrorKind::kSchema:
    case ErrorKind::kReferential:
    case ErrorKind::kDuplicateId:
    case ErrorKind::kFrozen:
    case ErrorKind::kConflict:
      return true;
    default:
      return false;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

json records_json(const std::vector<EpisodeRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) arr.push_back(record_to_json(r));
  return arr;
}

/// A records file (array or single record) or a directory of record files.
std::vector<EpisodeRecord> load_records(const fs::path& path) {
  std::vector<json> docs;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) docs.push_back(read_json_file(f));
  } else {
    json doc = read_json_file(path);
    if (doc.is_array()) {
      for (auto& d : doc) docs.push_back(std::move(d));
    } else {
      docs.push_back(std::move(doc));
    }
  }
  std::vector<EpisodeRecord> out;
  for (const auto& d : docs) out.push_back(record_from_json(d));
  return out;
}

std::vector<AbJudgment> load_judgments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::vector<AbJudgment> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      throw Error(ErrorKind::kSchema, fmt::format("{}:{}: invalid JSON", path.string(), lineno));
    }
    try {
      out.push_back(doc.get<AbJudgment>());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kSchema, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// kb

int cmd_kb_init(const fs::path& kb_path, bool force, std::ostream& out) {
  if (fs::exists(kb_path) && !force) {
    throw Error(ErrorKind::kIo, kb_path.string() + " exists; pass --force to overwrite");
  }
  const KnowledgeBase kb = KnowledgeBase::seed_default();
  save_kb(kb, kb_path);
  out << fmt::format("wrote {} with {} strategies\n", kb_path.string(), kb.strategies().size());
  return kOk;
}

int cmd_kb_show(const fs::path& kb_path, std::ostream& out) {
  const KnowledgeBase kb = load_kb(kb_path);
  out << fmt::format("{} strategies, revision {}\n", kb.strategies().size(), kb.revision());
  for (const auto& [name, _] : kb.strategies()) {
    out << name << "\n";
    for (const auto& [key, count] : kb.case_counts()) {
      if (key.strategy == name) out << fmt::format("  {}: {}\n", key.domain, count);
    }
  }
  return kOk;
}

int cmd_kb_verify(const fs::path& kb_path, std::ostream& out, std::ostream& err) {
  const auto problems = verify_kb_document(read_json_file(kb_path));
  if (problems.empty()) {
    out << kb_path.string() << ": ok\n";
    return kOk;
  }
  for (const auto& p : problems) err << kb_path.string() << ": " << p << "\n";
  return kBreach;
}

// ---------------------------------------------------------------------------
// run

struct RunFlags {
  fs::path corpus;
  fs::path kb;
  std::string phase;
  std::string backend;
  int t_max = 4;
  int workers = 1;
  std::string kb_mode = "full";
  bool kb_mode_set = false;
  fs::path out = "out";
  bool kb_write = false;
  std::uint64_t seed = 0;
  std::optional<fs::path> checkpoints;
  std::optional<std::size_t> stop_after;
  std::string model = "default";
};

int cmd_run(const RunFlags& f, std::ostream& out) {
  // Flag checks come first so a bad invocation does no work.
  if (f.phase == "evaluate" && f.kb_write) {
    throw FlagConflict("--kb-write cannot be combined with --phase evaluate (the KB is frozen)");
  }
  if (f.phase == "warmup" && f.kb_mode_set) {
    throw FlagConflict("--kb-mode applies to --phase evaluate; warm-up sets its own modes");
  }
  if (f.t_max < 1) throw FlagConflict("--t-max must be at least 1");

  BatchOptions options;
  options.episode.t_max = f.t_max;
  options.episode.model_id = f.model;
  options.episode.kb_mode = f.kb_mode == "no-kb" ? KbMode::kNoKb : KbMode::kFull;
  options.workers = f.workers;
  options.seed = f.seed;
  options.checkpoint_dir = f.checkpoints ? *f.checkpoints : f.out / "checkpoints";
  options.stop_after = f.stop_after;
  options.cancel = &g_cancel;

  const Corpus corpus = load_corpus(f.corpus);
  auto backend = make_backend(f.backend);
  std::signal(SIGINT, on_sigint);

  if (f.phase == "warmup") {
    KnowledgeBase kb = load_kb(f.kb);
    const WarmupResult r = warmup(kb, corpus.select(corpus.manifest().seed_ids),
                                  corpus.select(corpus.manifest().update_ids), *backend, options);
    write_json_atomic(f.out / "warmup_records.json", records_json(r.records));
    if (r.progress.interrupted) {
      out << fmt::format("warm-up interrupted after {} new episode(s); rerun to resume\n",
                         r.progress.executed);
      return kOperational;
    }
    save_kb(r.kb, f.kb);
    out << fmt::format("warm-up done: {} executed, {} resumed, revision {} -> {}\n",
                       r.progress.executed, r.progress.resumed, kb.revision(), r.kb.revision());
    out << "kb checksum " << kb_checksum(r.kb) << "\n";
    return kOk;
  }

  KbStore store(load_kb(f.kb), KbAccess::kReadOnly);
  const EvaluateResult r =
      evaluate(store, corpus.select(corpus.manifest().test_ids), *backend, options);
  write_json_atomic(f.out / "records.json", records_json(r.records));
  if (r.progress.interrupted) {
    out << fmt::format("evaluation interrupted after {} new episode(s); rerun to resume\n",
                       r.progress.executed);
    return kOperational;
  }
  for (const auto& rec : r.records) {
    const auto problems = check_record_invariants(rec);
    if (!problems.empty()) {
      throw Error(ErrorKind::kValidation, "record " + rec.scenario_id + ": " + problems.front());
    }
  }
  write_json_atomic(f.out / "report.json", report_to_json(r.report));
  const std::string table = render_table(r.report);
  write_text(f.out / "report.txt", table);
  out << table;
  return kOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportFlags {
  std::vector<fs::path> records;
  std::optional<std::string> backend;
  std::optional<fs::path> corpus;
  bool score = false;
  std::vector<fs::path> judgments;
  std::optional<fs::path> llm_judgments;
  fs::path out = "out";
  std::uint64_t seed = 0;
  std::string model = "default";
};

int cmd_report(const ReportFlags& f, std::ostream& out, std::ostream& err) {
  if (f.records.size() > 2) throw FlagConflict("--records takes one or two record sets");
  if (f.records.empty() && f.judgments.empty()) {
    throw FlagConflict("nothing to report: give --records and/or --judgments");
  }
  if ((f.score || f.records.size() == 2) && (!f.backend || !f.corpus)) {
    throw FlagConflict("scoring and A/B comparison need --backend and --corpus");
  }
  if (!f.judgments.empty() && !f.llm_judgments) {
    throw FlagConflict("--judgments needs --llm-judgments to compare against");
  }

  std::unique_ptr<ChatBackend> backend;
  if (f.backend) backend = make_backend(*f.backend);
  std::optional<Corpus> corpus;
  if (f.corpus) corpus.emplace(load_corpus(*f.corpus));
  JudgeOptions judge;
  judge.model_id = f.model;

  std::vector<std::vector<EpisodeRecord>> sets;
  for (const auto& p : f.records) sets.push_back(load_records(p));

  for (std::size_t i = 0; i < sets.size(); ++i) {
    ScoreTable scores;
    if (f.score) scores = score_records(*backend, sets[i], corpus->by_id(), judge);
    const MetricsReport report = build_report(sets[i], f.score ? &scores : nullptr);
    const std::string tag = sets.size() == 1 ? "report" : fmt::format("report_{}", i + 1);
    write_json_atomic(f.out / (tag + ".json"), report_to_json(report));
    out << "== " << f.records[i].string() << "\n" << render_table(report) << "\n";
  }

  if (sets.size() == 2) {
    // First set is the baseline, second the treatment; pairs match by id.
    std::map<std::string, const EpisodeRecord*> baseline;
    for (const auto& r : sets[0]) {
      if (!r.aborted()) baseline[r.scenario_id] = &r;
    }
    std::vector<AbJudgment> judgments;
    std::vector<AnnotationTask> tasks;
    std::set<std::string> matched;
    for (const auto& t : sets[1]) {
      auto it = baseline.find(t.scenario_id);
      if (t.aborted() || it == baseline.end()) {
        err << "unmatched scenario " << t.scenario_id << " skipped\n";
        continue;
      }
      matched.insert(t.scenario_id);
      auto j = ab_compare(*backend, t.scenario_id, it->second->transcript, t.transcript,
                          corpus->get(t.scenario_id), f.seed, judge);
      AnnotationTask task{t.scenario_id, t.scenario_id, it->second->transcript, t.transcript,
                          std::nullopt};
      if (j) {
        task.llm_outcome = j->outcome;
        judgments.push_back(*j);
      }
      tasks.push_back(std::move(task));
    }
    for (const auto& [id, _] : baseline) {
      if (!matched.count(id)) err << "unmatched scenario " << id << " skipped\n";
    }
    const AbTally t = tally(judgments);
    std::string jsonl;
    for (const auto& j : judgments) jsonl += json(j).dump() + "\n";
    write_text(f.out / "ab_judgments.jsonl", jsonl);
    write_json_atomic(f.out / "annotation_tasks.json", annotation_tasks_to_json(tasks));
    out << fmt::format("A/B (second set vs first): win {} tie {} lose {} (n={})\n", t.win, t.tie,
                       t.lose, t.total());
  }

  if (!f.judgments.empty()) {
    std::map<std::string, AbOutcome> llm;
    for (const auto& j : load_judgments(*f.llm_judgments)) llm[j.item_id] = j.outcome;
    std::vector<std::pair<std::vector<AbOutcome>, std::vector<AbOutcome>>> subsets;
    for (const auto& path : f.judgments) {
      std::pair<std::vector<AbOutcome>, std::vector<AbOutcome>> seqs;
      for (const auto& j : load_judgments(path)) {
        auto it = llm.find(j.item_id);
        if (it == llm.end()) {
          err << path.string() << ": item " << j.item_id << " has no LLM verdict; skipped\n";
          continue;
        }
        seqs.first.push_back(it->second);
        seqs.second.push_back(j.outcome);
      }
      subsets.push_back(std::move(seqs));
    }
    const AgreementReport a = agreement_report(subsets);
    for (std::size_t i = 0; i < a.per_subset.size(); ++i) {
      out << fmt::format("kappa_w {}: {:.4f}{}\n", f.judgments[i].string(), a.per_subset[i].kappa,
                         a.per_subset[i].degenerate ? " (single category)" : "");
    }
    out << fmt::format("kappa_w mean: {:.4f}\n", a.mean_kappa);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// serve

struct ServeFlags {
  fs::path corpus;
  fs::path kb;
  std::string backend;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<fs::path> tasks;
  std::optional<fs::path> data;
  std::optional<fs::path> static_dir;
  std::optional<std::string> rater_token;
  int t_max = 4;
  std::uint64_t seed = 0;
  std::string model = "default";
  int idle_timeout = 1800;
};

int cmd_serve(const ServeFlags& f) {
  const Corpus corpus = load_corpus(f.corpus);
  auto backend = make_backend(f.backend);
  ServiceConfig config;
  config.episode.t_max = f.t_max;
  config.episode.model_id = f.model;
  config.seed = f.seed;
  config.data_dir = f.data;
  config.idle_timeout = std::chrono::seconds(f.idle_timeout);
  SessionService service(corpus.by_id(), load_kb(f.kb), *backend, config);
  if (f.tasks) service.add_tasks(annotation_tasks_from_json(read_json_file(*f.tasks)));
  HttpOptions http;
  http.rater_token = f.rater_token;
  http.static_dir = f.static_dir;
  serve(service, http, f.host, f.port);
  return kOk;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Persuasion dialogue engine and evaluation harness"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  // kb
  auto* kb = app.add_subcommand("kb", "Create, inspect or check a knowledge-base file");
  kb->require_subcommand(1);
  fs::path kb_path;
  bool force = false;
  auto* kb_init = kb->add_subcommand("init", "Write the default seven-strategy knowledge base");
  kb_init->add_option("--kb", kb_path, "Knowledge-base file")->required();
  kb_init->add_flag("--force", force, "Overwrite an existing file");
  auto* kb_show = kb->add_subcommand("show", "Print strategies with per-domain counts");
  kb_show->add_option("--kb", kb_path, "Knowledge-base file")->required();
  auto* kb_verify = kb->add_subcommand("verify", "Check structural invariants");
  kb_verify->add_option("--kb", kb_path, "Knowledge-base file")->required();

  // run
  RunFlags rf;
  std::size_t stop_after = 0;
  fs::path checkpoints;
  auto* run_cmd = app.add_subcommand("run", "Run a warm-up or evaluation batch");
  run_cmd->add_option("--corpus", rf.corpus, "Corpus directory or scenario file")->required();
  run_cmd->add_option("--kb", rf.kb, "Knowledge-base file")->required();
  run_cmd->add_option("--phase", rf.phase, "warmup or evaluate")
      ->required()
      ->check(CLI::IsMember({"warmup", "evaluate"}));
  run_cmd->add_option("--backend", rf.backend, "live | scripted:<file> | replay:<dir> | record:<dir>")
      ->required();
  run_cmd->add_option("--t-max", rf.t_max, "Turn limit")->capture_default_str();
  run_cmd->add_option("--workers", rf.workers, "Parallel episodes (evaluate)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  auto* kb_mode_opt = run_cmd->add_option("--kb-mode", rf.kb_mode, "full or no-kb")
                          ->check(CLI::IsMember({"full", "no-kb"}));
  run_cmd->add_option("--out", rf.out, "Output directory")->capture_default_str();
  run_cmd->add_flag("--kb-write", rf.kb_write, "Allow knowledge-base write-back");
  run_cmd->add_option("--seed", rf.seed, "Seed for credit draws")->capture_default_str();
  auto* cp_opt = run_cmd->add_option("--checkpoints", checkpoints,
                                     "Checkpoint directory (default <out>/checkpoints)");
  auto* stop_opt =
      run_cmd->add_option("--stop-after", stop_after, "Stop after N new episodes");
  run_cmd->add_option("--model", rf.model, "Model id")->capture_default_str();

  // report
  ReportFlags pf;
  std::string report_backend;
  fs::path report_corpus, llm_judgments;
  auto* report = app.add_subcommand("report", "Metrics, A/B comparison and rater agreement");
  report->add_option("--records", pf.records, "Record set (file or directory); twice for A/B");
  auto* rb_opt = report->add_option("--backend", report_backend, "Judge backend");
  auto* rc_opt = report->add_option("--corpus", report_corpus, "Corpus for scenario context");
  report->add_flag("--score", pf.score, "Score dialogues on the three quality dimensions");
  report->add_option("--judgments", pf.judgments, "Human verdict file (JSONL), one per subset");
  auto* lj_opt = report->add_option("--llm-judgments", llm_judgments, "LLM verdict file (JSONL)");
  report->add_option("--out", pf.out, "Output directory")->capture_default_str();
  report->add_option("--seed", pf.seed, "Seed for A/B display order")->capture_default_str();
  report->add_option("--model", pf.model, "Model id")->capture_default_str();

  // serve
  ServeFlags sf;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP API for human sessions and annotation");
  serve_cmd->add_option("--corpus", sf.corpus, "Corpus")->required();
  serve_cmd->add_option("--kb", sf.kb, "Knowledge-base file (read-only)")->required();
  serve_cmd->add_option("--backend", sf.backend, "Backend spec")->required();
  serve_cmd->add_option("--host", sf.host)->capture_default_str();
  serve_cmd->add_option("--port", sf.port)->capture_default_str();
  serve_cmd->add_option("--tasks", sf.tasks, "Annotation task file");
  serve_cmd->add_option("--data", sf.data, "Directory for session records and verdicts");
  serve_cmd->add_option("--static", sf.static_dir, "Web client directory served at /");
  serve_cmd->add_option("--rater-token", sf.rater_token, "Shared token for annotation routes");
  serve_cmd->add_option("--t-max", sf.t_max)->capture_default_str();
  serve_cmd->add_option("--seed", sf.seed)->capture_default_str();
  serve_cmd->add_option("--model", sf.model)->capture_default_str();
  serve_cmd->add_option("--idle-timeout", sf.idle_timeout, "Seconds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kBreach;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (kb_init->parsed()) return cmd_kb_init(kb_path, force, out);
    if (kb_show->parsed()) return cmd_kb_show(kb_path, out);
    if (kb_verify->parsed()) return cmd_kb_verify(kb_path, out, err);
    if (run_cmd->parsed()) {
      rf.kb_mode_set = kb_mode_opt->count() > 0;
      if (cp_opt->count()) rf.checkpoints = checkpoints;
      if (stop_opt->count()) rf.stop_after = stop_after;
      return cmd_run(rf, out);
    }
    if (report->parsed()) {
      if (rb_opt->count()) pf.backend = report_backend;
      if (rc_opt->count()) pf.corpus = report_corpus;
      if (lj_opt->count()) pf.llm_judgments = llm_judgments;
      return cmd_report(pf, out, err);
    }
    if (serve_cmd->parsed()) return cmd_serve(sf);
  } catch (const FlagConflict& e) {
    err << "error: " << e.what() << "\n";
    return kBreach;
  } catch (const Error& e) {
    err << "error [" << error_kind_name(e.kind()) << "]: " << e.what() << "\n";
    return is_breach(e.kind()) ? kBreach : kOperational;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kOperational;
  }
  return kOperational;
}

}  // namespace persuade::cli
