#include "persuade/prompts.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <set>

#include "persuade/error.hpp"
#include "persuade/hashing.hpp"

namespace persuade {

namespace detail {
struct EmbeddedAsset {
  std::string_view name;
  std::string_view bytes;
};
extern const EmbeddedAsset kEmbeddedAssets[];
extern const std::size_t kEmbeddedAssetCount;
}  // namespace detail

namespace {

constexpr std::array<std::pair<TemplateId, std::string_view>, 11> kNames = {{
    {TemplateId::kWmFirst, "wm_first"},
    {TemplateId::kWmMulti, "wm_multi"},
    {TemplateId::kPersuaderFirst, "persuader_first"},
    {TemplateId::kPersuaderMulti, "persuader_multi"},
    {TemplateId::kPerception, "perception"},
    {TemplateId::kPersuadee, "persuadee"},
    {TemplateId::kJudgeSuccess, "judge_success"},
    {TemplateId::kAbJudge, "ab_judge"},
    {TemplateId::kScorePersuasive, "score_persuasive"},
    {TemplateId::kScoreLogic, "score_logic"},
    {TemplateId::kScoreHelpful, "score_helpful"},
}};

std::string_view asset(std::string_view name) {
  for (std::size_t i = 0; i < detail::kEmbeddedAssetCount; ++i) {
    if (detail::kEmbeddedAssets[i].name == name) return detail::kEmbeddedAssets[i].bytes;
  }
  throw Error(ErrorKind::kUnknownTemplate, "prompt asset '" + std::string(name) + "' missing");
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

/// A slot marker found in a template body.
struct Marker {
  std::size_t pos;
  std::size_t len;
  std::string slot;
};

std::vector<Marker> scan_markers(std::string_view body,
                                 const std::vector<std::string>& declared,
                                 const std::vector<std::string>& positional) {
  std::vector<Marker> out;
  std::size_t next_positional = 0;
  const std::set<std::string> names(declared.begin(), declared.end());
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{') continue;
    if (i + 1 < body.size() && body[i + 1] == '}') {
      if (next_positional >= positional.size()) {
        throw Error(ErrorKind::kUnknownTemplate, "template has more {} markers than slots");
      }
      out.push_back({i, 2, positional[next_positional++]});
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < body.size() && is_ident_char(body[j])) ++j;
    if (j > i + 1 && j < body.size() && body[j] == '}') {
      std::string name(body.substr(i + 1, j - i - 1));
      if (names.count(name)) {
        out.push_back({i, j - i + 1, name});
        i = j;
      }
    }
  }
  if (next_positional != positional.size()) {
    throw Error(ErrorKind::kUnknownTemplate, "template has fewer {} markers than slots");
  }
  return out;
}

struct Registry {
  std::vector<PromptTemplate> templates;
  std::vector<std::vector<Marker>> markers;
};

const Registry& registry() {
  static const Registry reg = [] {
    Registry r;
    const auto manifest = nlohmann::json::parse(asset("manifest.json"));
    for (const auto& [id, name] : kNames) {
      const nlohmann::json* entry = nullptr;
      for (const auto& t : manifest.at("templates")) {
        if (t.at("id").get<std::string>() == name) entry = &t;
      }
      if (!entry) {
        throw Error(ErrorKind::kUnknownTemplate,
                    "manifest lacks template '" + std::string(name) + "'");
      }
      PromptTemplate t;
      t.id = id;
      t.body = asset(entry->at("path").get<std::string>());
      t.slots = entry->at("slots").get<std::vector<std::string>>();
      t.manifest_sha256 = entry->at("sha256").get<std::string>();
      // Bare {} markers take the declared slot names in order, except in
      // templates that only use named markers.
      const bool has_positional = t.body.find("{}") != std::string_view::npos;
      auto markers = scan_markers(t.body, t.slots,
                                  has_positional ? t.slots : std::vector<std::string>{});
      r.templates.push_back(std::move(t));
      r.markers.push_back(std::move(markers));
    }
    return r;
  }();
  return reg;
}

std::size_t index_of(TemplateId id) { return static_cast<std::size_t>(id); }

}  // namespace

std::string_view template_name(TemplateId id) { return kNames[index_of(id)].second; }

std::optional<TemplateId> template_from_name(std::string_view name) {
  for (const auto& [id, n] : kNames) {
    if (n == name) return id;
  }
  return std::nullopt;
}

const std::vector<TemplateId>& all_templates() {
  static const std::vector<TemplateId> kAll = [] {
    std::vector<TemplateId> v;
    for (const auto& [id, n] : kNames) v.push_back(id);
    return v;
  }();
  return kAll;
}

const PromptTemplate& get_template(TemplateId id) {
  return registry().templates.at(index_of(id));
}

std::string template_checksum(TemplateId id) { return sha256_hex(get_template(id).body); }

std::vector<std::string> verify_templates() {
  std::vector<std::string> bad;
  for (TemplateId id : all_templates()) {
    if (template_checksum(id) != get_template(id).manifest_sha256) {
      bad.emplace_back(template_name(id));
    }
  }
  return bad;
}

std::string render(TemplateId id, const Slots& slots) {
  const auto& tmpl = get_template(id);
  for (const auto& [name, value] : slots) {
    if (std::find(tmpl.slots.begin(), tmpl.slots.end(), name) == tmpl.slots.end()) {
      throw Error(ErrorKind::kValidation, "template '" + std::string(template_name(id)) +
                                              "' has no slot '" + name + "'");
    }
  }
  for (const auto& name : tmpl.slots) {
    if (!slots.count(name)) {
      throw Error(ErrorKind::kMissingSlot, "template '" + std::string(template_name(id)) +
                                               "' slot '" + name + "' is unfilled");
    }
  }
  std::string out;
  out.reserve(tmpl.body.size() + 256);
  std::size_t cursor = 0;
  for (const auto& m : registry().markers.at(index_of(id))) {
    out.append(tmpl.body.substr(cursor, m.pos - cursor));
    out.append(slots.at(m.slot));
    cursor = m.pos + m.len;
  }
  out.append(tmpl.body.substr(cursor));
  return out;
}

std::string render(std::string_view id, const Slots& slots) {
  auto parsed = template_from_name(id);
  if (!parsed) {
    throw Error(ErrorKind::kUnknownTemplate, "unknown template '" + std::string(id) + "'");
  }
  return render(*parsed, slots);
}

}  // namespace persuade
