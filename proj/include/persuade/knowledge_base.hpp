#pragma once

// Three-layer knowledge base: meta-strategies, the domains each has been
// applied in, and per (strategy, domain) success counts.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "persuade/domain.hpp"

namespace persuade {

struct CaseKey {
  std::string strategy;
  std::string domain;

  auto operator<=>(const CaseKey&) const = default;
  bool operator==(const CaseKey&) const = default;
};

class KnowledgeBase {
 public:
  using Counts = std::map<CaseKey, std::int64_t>;

  KnowledgeBase() = default;
  /// Builds a KB from its layers. Throws Error(kReferential) when a case
  /// names an undeclared strategy and Error(kSchema) on negative counts.
  KnowledgeBase(std::vector<MetaStrategy> strategies, Counts counts,
                std::uint64_t revision = 0);

  /// The seven influence principles, no cases, revision 0.
  static KnowledgeBase seed_default();

  const std::map<std::string, MetaStrategy>& strategies() const noexcept {
    return strategies_;
  }
  const Counts& case_counts() const noexcept { return counts_; }
  std::uint64_t revision() const noexcept { return revision_; }

  const MetaStrategy* find(const std::string& name) const;
  /// Recorded count, 0 when no entry exists.
  std::int64_t count(const std::string& strategy, const std::string& domain) const;

  /// Strategies with an entry under `domain`; every strategy when the
  /// domain has no entries at all.
  std::vector<MetaStrategy> candidates(const std::string& domain) const;

  /// Highest count for the scenario's domain, ties broken by ascending name.
  /// Empty when the KB holds no strategies.
  std::optional<MetaStrategy> select(const Scenario& scenario) const;

  /// Adds one success to (meta, domain) and bumps the revision.
  void record_success(const std::string& meta, const std::string& domain);

  bool operator==(const KnowledgeBase&) const = default;

 private:
  std::map<std::string, MetaStrategy> strategies_;
  Counts counts_;
  std::uint64_t revision_ = 0;
};

// Free-function forms of the KB operations.
std::vector<MetaStrategy> candidates(const KnowledgeBase& kb, const std::string& domain);
std::optional<MetaStrategy> select_meta_strategy(const KnowledgeBase& kb,
                                                 const Scenario& scenario);
KnowledgeBase record_success(KnowledgeBase kb, const std::string& meta,
                             const std::string& domain);

/// {"cases": [...], "revision": n, "strategies": [...]}, keys and rows sorted.
json kb_to_json(const KnowledgeBase& kb);
/// Throws Error(kSchema / kReferential) naming the offending key path.
KnowledgeBase kb_from_json(const json& doc);
std::string kb_serialize(const KnowledgeBase& kb);
std::string kb_checksum(const KnowledgeBase& kb);

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path);
KnowledgeBase load_kb(const std::filesystem::path& path);

/// Structural problems of a KB document, one "key.path: message" per line;
/// empty when valid.
std::vector<std::string> verify_kb_document(const json& doc);

enum class KbAccess { kReadWrite, kReadOnly };

/// Shared KB with a single serialized writer. Reads take a shared lock;
/// record_success takes the exclusive lock and fails hard when the store
/// was opened read-only.
class KbStore {
 public:
  explicit KbStore(KnowledgeBase kb, KbAccess access = KbAccess::kReadWrite);

  KnowledgeBase snapshot() const;
  std::uint64_t revision() const;
  bool read_only() const noexcept { return access_ == KbAccess::kReadOnly; }
  void record_success(const std::string& meta, const std::string& domain);

 private:
  mutable std::shared_mutex mu_;
  KnowledgeBase kb_;
  KbAccess access_;
};

}  // namespace persuade
