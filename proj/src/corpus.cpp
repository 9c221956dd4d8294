#include "persuade/corpus.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "persuade/hashing.hpp"

namespace fs = std::filesystem;

namespace persuade {

namespace {

std::vector<std::string> string_list(const json& doc, const char* key) {
  if (!doc.contains(key)) return {};
  const json& v = doc[key];
  if (!v.is_array()) throw Error(ErrorKind::kSchema, std::string(key) + ": must be a list");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i].is_string()) {
      out.push_back(v[i].get<std::string>());
    } else if (v[i].is_number_integer()) {
      out.push_back(std::to_string(v[i].get<long long>()));
    } else {
      throw Error(ErrorKind::kSchema, fmt::format("{}[{}]: must be an id", key, i));
    }
  }
  return out;
}

/// File stem for a scenario id: the id itself when it is filename-safe.
std::string checkpoint_stem(const std::string& id) {
  const bool safe = !id.empty() && id.size() <= 100 && id[0] != '.' &&
                    std::all_of(id.begin(), id.end(), [](char c) {
                      return std::isalnum(static_cast<unsigned char>(c)) || c == '-' ||
                             c == '_' || c == '.';
                    });
  return safe ? id : "id-" + sha256_hex(id).substr(0, 32);
}

fs::path checkpoint_path(const BatchOptions& options, const char* phase, const std::string& id) {
  return *options.checkpoint_dir / phase / (checkpoint_stem(id) + ".json");
}

std::optional<EpisodeRecord> load_checkpoint(const BatchOptions& options, const char* phase,
                                             const Scenario& scenario) {
  if (!options.checkpoint_dir) return std::nullopt;
  const fs::path path = checkpoint_path(options, phase, scenario.id);
  if (!fs::exists(path)) return std::nullopt;
  EpisodeRecord r = record_from_json(read_json_file(path));
  if (r.scenario_id != scenario.id || r.t_max != options.episode.t_max) {
    throw Error(ErrorKind::kConflict,
                "checkpoint " + path.string() + " does not match this batch configuration");
  }
  return r;
}

void save_checkpoint(const BatchOptions& options, const char* phase, const EpisodeRecord& r) {
  if (!options.checkpoint_dir) return;
  write_json_atomic(checkpoint_path(options, phase, r.scenario_id), record_to_json(r));
}

bool cancelled(const BatchOptions& options) {
  return options.cancel && options.cancel->load();
}

struct PhaseRun {
  const char* name;
  const std::vector<Scenario>* pool;
  EpisodeConfig config;
};

}  // namespace

// ---------------------------------------------------------------------------
// Files

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json doc = json::parse(buf.str(), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorKind::kSchema, path.string() + ": invalid JSON");
  return doc;
}

void write_json_atomic(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out << doc.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::kIo, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Manifest

json manifest_to_json(const CorpusManifest& m) {
  return {{"test_ids", m.test_ids},
          {"seed_ids", m.seed_ids},
          {"update_ids", m.update_ids},
          {"domain_set", m.domain_set}};
}

CorpusManifest manifest_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::kSchema, "manifest must be an object");
  CorpusManifest m;
  m.test_ids = string_list(doc, "test_ids");
  m.seed_ids = string_list(doc, "seed_ids");
  m.update_ids = string_list(doc, "update_ids");
  m.domain_set = string_list(doc, "domain_set");
  return m;
}

void check_manifest(const std::vector<Scenario>& scenarios, const CorpusManifest& m) {
  std::set<std::string> known;
  for (const auto& s : scenarios) known.insert(s.id);

  std::map<std::string, std::string> owner;
  const std::pair<const char*, const std::vector<std::string>*> splits[] = {
      {"test_ids", &m.test_ids}, {"seed_ids", &m.seed_ids}, {"update_ids", &m.update_ids}};
  for (const auto& [name, ids] : splits) {
    for (const auto& id : *ids) {
      if (!known.count(id)) {
        throw Error(ErrorKind::kReferential,
                    std::string(name) + ": unknown scenario id '" + id + "'");
      }
      auto [it, fresh] = owner.emplace(id, name);
      if (!fresh) {
        throw Error(ErrorKind::kValidation, "scenario '" + id + "' appears in both " +
                                                it->second + " and " + name);
      }
    }
  }
  const std::set<std::string> domains(m.domain_set.begin(), m.domain_set.end());
  for (const auto& s : scenarios) {
    if (!domains.count(s.domain)) {
      throw Error(ErrorKind::kValidation,
                  "domain_set: missing domain '" + s.domain + "' of scenario " + s.id);
    }
  }
}

// ---------------------------------------------------------------------------
// Corpus

Corpus::Corpus(std::vector<Scenario> scenarios, CorpusManifest manifest)
    : scenarios_(std::move(scenarios)), manifest_(std::move(manifest)) {
  for (std::size_t i = 0; i < scenarios_.size(); ++i) {
    if (!index_.emplace(scenarios_[i].id, i).second) {
      throw Error(ErrorKind::kDuplicateId, "duplicate scenario id " + scenarios_[i].id);
    }
  }
  check_manifest(scenarios_, manifest_);
}

const Scenario& Corpus::get(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorKind::kNotFound, "unknown scenario id " + id);
  return scenarios_[it->second];
}

std::vector<Scenario> Corpus::select(const std::vector<std::string>& ids) const {
  std::vector<Scenario> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(get(id));
  return out;
}

std::map<std::string, Scenario> Corpus::by_id() const {
  std::map<std::string, Scenario> out;
  for (const auto& s : scenarios_) out.emplace(s.id, s);
  return out;
}

std::string Corpus::summary() const {
  std::string out = fmt::format("scenarios={} test={} seed={} update={} domains={}\n",
                                scenarios_.size(), manifest_.test_ids.size(),
                                manifest_.seed_ids.size(), manifest_.update_ids.size(),
                                manifest_.domain_set.size());
  std::map<std::string, int> per_domain;
  for (const auto& s : scenarios_) ++per_domain[s.domain];
  for (const auto& [d, n] : per_domain) out += fmt::format("  {}: {}\n", d, n);
  return out;
}

Corpus load_corpus(const fs::path& path) {
  std::vector<Scenario> scenarios;
  std::optional<CorpusManifest> manifest;
  if (fs::is_regular_file(path)) {
    scenarios = validate_scenarios(read_json_file(path));
  } else if (fs::is_directory(path)) {
    if (fs::exists(path / "scenarios.json")) {
      scenarios = validate_scenarios(read_json_file(path / "scenarios.json"));
    } else if (fs::is_directory(path / "scenarios")) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(path / "scenarios")) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
          files.push_back(entry.path());
        }
      }
      std::sort(files.begin(), files.end());
      json all = json::array();
      for (const auto& f : files) all.push_back(read_json_file(f));
      scenarios = validate_scenarios(all);
    } else {
      throw Error(ErrorKind::kIo, path.string() + ": no scenarios.json or scenarios/ directory");
    }
    if (fs::exists(path / "manifest.json")) {
      manifest = manifest_from_json(read_json_file(path / "manifest.json"));
    }
  } else {
    throw Error(ErrorKind::kIo, "corpus not found: " + path.string());
  }

  if (!manifest) {
    manifest.emplace();
    for (const auto& s : scenarios) manifest->test_ids.push_back(s.id);
  }
  if (manifest->domain_set.empty()) {
    std::set<std::string> domains;
    for (const auto& s : scenarios) domains.insert(s.domain);
    manifest->domain_set.assign(domains.begin(), domains.end());
  }
  return Corpus(std::move(scenarios), std::move(*manifest));
}

// ---------------------------------------------------------------------------
// Phases

WarmupResult warmup(const KnowledgeBase& kb, const std::vector<Scenario>& seed_pool,
                    const std::vector<Scenario>& update_pool, ChatBackend& backend,
                    const BatchOptions& options) {
  if (options.frozen) {
    throw Error(ErrorKind::kConfig, "warm-up cannot run against a frozen knowledge base");
  }
  options.episode.validate();

  EpisodeConfig seed_cfg = options.episode;
  seed_cfg.kb_mode = KbMode::kNoKb;
  seed_cfg.persuadee_source = PersuadeeSource::kSimulated;
  seed_cfg.write_back = true;
  seed_cfg.attribution_seed = options.seed;

  EpisodeConfig update_cfg = options.episode;
  update_cfg.kb_mode = KbMode::kFull;
  update_cfg.persuadee_source = PersuadeeSource::kSimulated;
  update_cfg.write_back = true;
  update_cfg.attribution_seed.reset();

  KbStore store(kb, KbAccess::kReadWrite);
  WarmupResult result;
  const PhaseRun phases[] = {{"seed", &seed_pool, seed_cfg}, {"update", &update_pool, update_cfg}};
  for (const auto& phase : phases) {
    for (const auto& scenario : *phase.pool) {
      std::optional<EpisodeRecord> record = load_checkpoint(options, phase.name, scenario);
      if (record) {
        ++result.progress.resumed;
      } else {
        if (cancelled(options) ||
            (options.stop_after && result.progress.executed >= *options.stop_after)) {
          result.progress.interrupted = true;
          result.kb = store.snapshot();
          return result;
        }
        record = run_episode(store.snapshot(), scenario, phase.config, backend).record;
        save_checkpoint(options, phase.name, *record);
        ++result.progress.executed;
      }
      // Credits are applied from the record, so a resumed record counts once.
      if (record->kb_increment) {
        store.record_success(record->kb_increment->strategy, record->kb_increment->domain);
      }
      result.records.push_back(std::move(*record));
    }
  }
  result.kb = store.snapshot();
  return result;
}

EvaluateResult evaluate(KbStore& store, const std::vector<Scenario>& test, ChatBackend& backend,
                        const BatchOptions& options) {
  if (!store.read_only()) {
    throw Error(ErrorKind::kPrecondition, "evaluation needs a read-only knowledge base");
  }
  if (options.episode.write_back) {
    throw Error(ErrorKind::kConfig, "write-back is not allowed during evaluation");
  }
  options.episode.validate();
  EpisodeConfig cfg = options.episode;
  cfg.persuadee_source = PersuadeeSource::kSimulated;
  cfg.write_back = false;
  cfg.attribution_seed.reset();

  const std::uint64_t revision_before = store.revision();
  const KnowledgeBase kb = store.snapshot();

  std::vector<std::optional<EpisodeRecord>> slots(test.size());
  BatchProgress progress;
  for (std::size_t i = 0; i < test.size(); ++i) {
    slots[i] = load_checkpoint(options, "evaluate", test[i]);
    if (slots[i]) ++progress.resumed;
  }

  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        while (next < test.size() && slots[next]) ++next;
        if (next >= test.size() || failure) return;
        if (cancelled(options) ||
            (options.stop_after && progress.executed >= *options.stop_after)) {
          progress.interrupted = true;
          return;
        }
        i = next++;
        ++progress.executed;
      }
      try {
        EpisodeRecord r = run_episode(kb, test[i], cfg, backend).record;
        if (r.kb_increment) {
          throw Error(ErrorKind::kFrozen, "episode " + r.scenario_id + " tried to credit the KB");
        }
        save_checkpoint(options, "evaluate", r);
        std::lock_guard lock(mu);
        slots[i] = std::move(r);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const int n_workers = std::max(1, options.workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  if (store.revision() != revision_before) {
    throw Error(ErrorKind::kFrozen, "knowledge-base revision changed during evaluation");
  }

  EvaluateResult result;
  result.kb_revision = revision_before;
  for (auto& s : slots) {
    if (s) {
      result.records.push_back(std::move(*s));
    } else {
      progress.interrupted = true;
    }
  }
  result.progress = progress;
  result.report = build_report(result.records);
  return result;
}

}  // namespace persuade
