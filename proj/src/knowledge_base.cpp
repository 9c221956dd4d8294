#include "persuade/knowledge_base.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "persuade/error.hpp"
#include "persuade/hashing.hpp"

namespace persuade {

namespace {

const std::vector<MetaStrategy>& default_strategies() {
  static const std::vector<MetaStrategy> kDefaults = {
      {"Authority",
       "People defer to credible experts and legitimate institutions. Ground the "
       "request in the judgment of recognized professionals, official guidance, or "
       "demonstrated expertise so that accepting it feels like following sound advice."},
      {"Commitment and Consistency",
       "People want their actions to match what they have already said and done. "
       "Secure a small, easy agreement first and connect the goal to values or "
       "choices the persuadee has already expressed, so that moving forward feels "
       "like staying true to themselves."},
      {"Liking",
       "People say yes to those they like and feel similar to. Build rapport through "
       "genuine warmth, shared experiences, and sincere compliments before and while "
       "making the case."},
      {"Reciprocity",
       "People feel obliged to return favors. Offer something of real value first, "
       "such as help, information, or a concession, so that engaging with the request "
       "feels like a fair exchange."},
      {"Scarcity",
       "People value what is rare or about to disappear. Point out what would be "
       "lost by waiting and what is uniquely available now, without inventing false "
       "deadlines."},
      {"Social Proof",
       "People look to what others like them are doing when they are unsure. Share "
       "examples, numbers, or stories of peers who made the same choice and were "
       "glad they did."},
      {"Unity",
       "People are moved by those they share an identity with. Frame the goal as "
       "something 'we' do together, appealing to family, community, or group "
       "belonging."},
  };
  return kDefaults;
}

void check_counts(const std::map<std::string, MetaStrategy>& strategies,
                  const KnowledgeBase::Counts& counts) {
  for (const auto& [key, value] : counts) {
    if (!strategies.count(key.strategy)) {
      throw Error(ErrorKind::kReferential,
                  "case (" + key.strategy + ", " + key.domain + ") references undeclared "
                  "strategy '" + key.strategy + "'");
    }
    if (value < 0) {
      throw Error(ErrorKind::kSchema, "case (" + key.strategy + ", " + key.domain +
                                          ") has negative count " + std::to_string(value));
    }
  }
}

}  // namespace

KnowledgeBase::KnowledgeBase(std::vector<MetaStrategy> strategies, Counts counts,
                             std::uint64_t revision)
    : counts_(std::move(counts)), revision_(revision) {
  for (auto& s : strategies) {
    if (s.name.empty()) {
      throw Error(ErrorKind::kSchema, "meta-strategy name is empty");
    }
    std::string name = s.name;
    if (!strategies_.emplace(name, std::move(s)).second) {
      throw Error(ErrorKind::kSchema, "duplicate meta-strategy '" + name + "'");
    }
  }
  check_counts(strategies_, counts_);
}

KnowledgeBase KnowledgeBase::seed_default() {
  return KnowledgeBase(default_strategies(), {}, 0);
}

const MetaStrategy* KnowledgeBase::find(const std::string& name) const {
  auto it = strategies_.find(name);
  return it == strategies_.end() ? nullptr : &it->second;
}

std::int64_t KnowledgeBase::count(const std::string& strategy,
                                  const std::string& domain) const {
  auto it = counts_.find(CaseKey{strategy, domain});
  return it == counts_.end() ? 0 : it->second;
}

std::vector<MetaStrategy> KnowledgeBase::candidates(const std::string& domain) const {
  std::vector<MetaStrategy> out;
  for (const auto& [key, value] : counts_) {
    if (key.domain == domain) out.push_back(strategies_.at(key.strategy));
  }
  if (out.empty()) {
    for (const auto& [name, s] : strategies_) out.push_back(s);
  }
  return out;
}

std::optional<MetaStrategy> KnowledgeBase::select(const Scenario& scenario) const {
  std::optional<MetaStrategy> best;
  std::int64_t best_count = -1;
  // candidates() yields names in ascending order, so the first strict maximum
  // is also the lexicographically smallest among ties.
  for (auto& m : candidates(scenario.domain)) {
    const auto c = count(m.name, scenario.domain);
    if (c > best_count) {
      best_count = c;
      best = std::move(m);
    }
  }
  return best;
}

void KnowledgeBase::record_success(const std::string& meta, const std::string& domain) {
  if (!strategies_.count(meta)) {
    throw Error(ErrorKind::kUnknownStrategy, "unknown meta-strategy '" + meta + "'");
  }
  if (domain.empty()) {
    throw Error(ErrorKind::kValidation, "domain is empty");
  }
  ++counts_[CaseKey{meta, domain}];
  ++revision_;
}

std::vector<MetaStrategy> candidates(const KnowledgeBase& kb, const std::string& domain) {
  return kb.candidates(domain);
}

std::optional<MetaStrategy> select_meta_strategy(const KnowledgeBase& kb,
                                                 const Scenario& scenario) {
  return kb.select(scenario);
}

KnowledgeBase record_success(KnowledgeBase kb, const std::string& meta,
                             const std::string& domain) {
  kb.record_success(meta, domain);
  return kb;
}

json kb_to_json(const KnowledgeBase& kb) {
  json strategies = json::array();
  for (const auto& [name, s] : kb.strategies()) {
    strategies.push_back(json{{"name", s.name}, {"description", s.description}});
  }
  json cases = json::array();
  for (const auto& [key, value] : kb.case_counts()) {
    cases.push_back(json{{"strategy", key.strategy}, {"domain", key.domain}, {"count", value}});
  }
  return json{{"strategies", std::move(strategies)},
              {"cases", std::move(cases)},
              {"revision", kb.revision()}};
}

std::vector<std::string> verify_kb_document(const json& doc) {
  std::vector<std::string> problems;
  if (!doc.is_object()) {
    problems.push_back("$: knowledge base must be an object");
    return problems;
  }
  for (const auto& [key, value] : doc.items()) {
    if (key != "strategies" && key != "cases" && key != "revision") {
      problems.push_back(key + ": unexpected key");
    }
  }
  auto rev = doc.find("revision");
  if (rev == doc.end() || !rev->is_number_integer() ||
      (!rev->is_number_unsigned() && rev->get<long long>() < 0)) {
    problems.push_back("revision: must be a non-negative integer");
  }

  std::set<std::string> names;
  auto strategies = doc.find("strategies");
  if (strategies == doc.end() || !strategies->is_array()) {
    problems.push_back("strategies: must be an array");
  } else {
    for (std::size_t i = 0; i < strategies->size(); ++i) {
      const auto& s = (*strategies)[i];
      const std::string path = "strategies[" + std::to_string(i) + "]";
      if (!s.is_object() || !s.contains("name") || !s["name"].is_string() ||
          s["name"].get<std::string>().empty()) {
        problems.push_back(path + ".name: must be non-empty text");
        continue;
      }
      if (!s.contains("description") || !s["description"].is_string()) {
        problems.push_back(path + ".description: must be text");
      }
      if (!names.insert(s["name"].get<std::string>()).second) {
        problems.push_back(path + ".name: duplicate strategy '" +
                           s["name"].get<std::string>() + "'");
      }
    }
  }

  auto cases = doc.find("cases");
  if (cases == doc.end() || !cases->is_array()) {
    problems.push_back("cases: must be an array");
  } else {
    std::set<std::pair<std::string, std::string>> keys;
    for (std::size_t i = 0; i < cases->size(); ++i) {
      const auto& c = (*cases)[i];
      const std::string path = "cases[" + std::to_string(i) + "]";
      if (!c.is_object()) {
        problems.push_back(path + ": must be an object");
        continue;
      }
      const bool strategy_ok = c.contains("strategy") && c["strategy"].is_string();
      const bool domain_ok = c.contains("domain") && c["domain"].is_string() &&
                             !c["domain"].get<std::string>().empty();
      if (!strategy_ok) problems.push_back(path + ".strategy: must be text");
      if (!domain_ok) problems.push_back(path + ".domain: must be non-empty text");
      if (!c.contains("count") || !c["count"].is_number_integer()) {
        problems.push_back(path + ".count: must be an integer");
      } else if (c["count"].get<long long>() < 0) {
        problems.push_back(path + ".count: negative count " +
                           std::to_string(c["count"].get<long long>()));
      }
      if (strategy_ok && !names.count(c["strategy"].get<std::string>())) {
        problems.push_back(path + ".strategy: undeclared strategy '" +
                           c["strategy"].get<std::string>() + "'");
      }
      if (strategy_ok && domain_ok &&
          !keys.emplace(c["strategy"].get<std::string>(), c["domain"].get<std::string>())
               .second) {
        problems.push_back(path + ": duplicate case entry");
      }
    }
  }
  return problems;
}

KnowledgeBase kb_from_json(const json& doc) {
  auto problems = verify_kb_document(doc);
  if (!problems.empty()) {
    const bool referential = problems.front().find("undeclared strategy") != std::string::npos;
    throw Error(referential ? ErrorKind::kReferential : ErrorKind::kSchema, problems.front());
  }
  std::vector<MetaStrategy> strategies;
  for (const auto& s : doc["strategies"]) {
    strategies.push_back({s["name"].get<std::string>(), s["description"].get<std::string>()});
  }
  KnowledgeBase::Counts counts;
  for (const auto& c : doc["cases"]) {
    counts[CaseKey{c["strategy"].get<std::string>(), c["domain"].get<std::string>()}] =
        c["count"].get<std::int64_t>();
  }
  return KnowledgeBase(std::move(strategies), std::move(counts),
                       doc["revision"].get<std::uint64_t>());
}

std::string kb_serialize(const KnowledgeBase& kb) { return kb_to_json(kb).dump(2) + "\n"; }

std::string kb_checksum(const KnowledgeBase& kb) { return sha256_hex(kb_serialize(kb)); }

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out << kb_serialize(kb);
    if (!out) throw Error(ErrorKind::kIo, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

KnowledgeBase load_kb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json doc = json::parse(buf.str(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) {
    throw Error(ErrorKind::kSchema, path.string() + ": not a valid JSON document");
  }
  return kb_from_json(doc);
}

KbStore::KbStore(KnowledgeBase kb, KbAccess access) : kb_(std::move(kb)), access_(access) {}

KnowledgeBase KbStore::snapshot() const {
  std::shared_lock lock(mu_);
  return kb_;
}

std::uint64_t KbStore::revision() const {
  std::shared_lock lock(mu_);
  return kb_.revision();
}

void KbStore::record_success(const std::string& meta, const std::string& domain) {
  if (access_ == KbAccess::kReadOnly) {
    throw Error(ErrorKind::kFrozen, "knowledge base is frozen; write of (" + meta + ", " +
                                        domain + ") rejected");
  }
  std::unique_lock lock(mu_);
  kb_.record_success(meta, domain);
}

}  // namespace persuade
