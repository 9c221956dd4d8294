#pragma once

// Scenario corpora, split manifests, and the batch phases: knowledge-base
// warm-up over the seed and update pools, then frozen evaluation.

#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "persuade/episode.hpp"
#include "persuade/knowledge_base.hpp"
#include "persuade/metrics.hpp"

namespace persuade {

struct CorpusManifest {
  std::vector<std::string> test_ids;
  std::vector<std::string> seed_ids;
  std::vector<std::string> update_ids;
  std::vector<std::string> domain_set;
};

json manifest_to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(const json& doc);

/// Throws Error(kValidation) on overlapping splits, Error(kReferential) on
/// ids that do not resolve, and Error(kValidation) when a scenario's domain
/// is missing from domain_set.
void check_manifest(const std::vector<Scenario>& scenarios, const CorpusManifest& manifest);

class Corpus {
 public:
  Corpus(std::vector<Scenario> scenarios, CorpusManifest manifest);

  const std::vector<Scenario>& scenarios() const noexcept { return scenarios_; }
  const CorpusManifest& manifest() const noexcept { return manifest_; }
  const Scenario& get(const std::string& id) const;
  std::vector<Scenario> select(const std::vector<std::string>& ids) const;
  std::map<std::string, Scenario> by_id() const;

  /// Split and per-domain counts, one line each.
  std::string summary() const;

 private:
  std::vector<Scenario> scenarios_;
  CorpusManifest manifest_;
  std::map<std::string, std::size_t> index_;
};

/// Reads `<dir>/scenarios.json` (an array) or `<dir>/scenarios/*.json` (one
/// record per file) plus `<dir>/manifest.json`. A single array file is also
/// accepted. Without a manifest every scenario is a test id and domain_set
/// is derived.
Corpus load_corpus(const std::filesystem::path& path);

json read_json_file(const std::filesystem::path& path);
/// Write to a sibling temp file, then rename over the target.
void write_json_atomic(const std::filesystem::path& path, const json& doc);

struct BatchOptions {
  /// t_max, model id and attempt limits; mode and write-back are set per phase.
  EpisodeConfig episode;
  int workers = 1;
  /// Per-episode records under <dir>/<phase>/; existing ones are reused.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Seeds the no-KB credit draw and A/B ordering.
  std::uint64_t seed = 0;
  /// KB opened frozen; incompatible with warm-up.
  bool frozen = false;
  /// Stop after this many newly executed episodes (the rest stay pending).
  std::optional<std::size_t> stop_after;
  const std::atomic<bool>* cancel = nullptr;
};

struct BatchProgress {
  std::size_t executed = 0;
  std::size_t resumed = 0;
  bool interrupted = false;
};

struct WarmupResult {
  KnowledgeBase kb;
  std::vector<EpisodeRecord> records;
  BatchProgress progress;
};

/// Seed pool in no-KB mode with bookkeeping credit, then the update pool in
/// full mode, both writing back. Episodes run in pool order so each one sees
/// the credits of the episodes before it.
WarmupResult warmup(const KnowledgeBase& kb, const std::vector<Scenario>& seed_pool,
                    const std::vector<Scenario>& update_pool, ChatBackend& backend,
                    const BatchOptions& options);

struct EvaluateResult {
  std::vector<EpisodeRecord> records;
  MetricsReport report;
  std::uint64_t kb_revision = 0;
  BatchProgress progress;
};

/// Runs the test split against a read-only store with write-back disabled,
/// in parallel. Throws Error(kPrecondition) when the store is writable and
/// Error(kFrozen) if the revision moves.
EvaluateResult evaluate(KbStore& store, const std::vector<Scenario>& test, ChatBackend& backend,
                        const BatchOptions& options);

}  // namespace persuade
