#pragma once

// Agent prompt templates. Bodies are shipped verbatim; each `{}` marker is
// bound to a slot name through the asset manifest, and `{name}` markers are
// bound directly.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace persuade {

enum class TemplateId {
  kWmFirst,
  kWmMulti,
  kPersuaderFirst,
  kPersuaderMulti,
  kPerception,
  kPersuadee,
  kJudgeSuccess,
  kAbJudge,
  kScorePersuasive,
  kScoreLogic,
  kScoreHelpful,
};

std::string_view template_name(TemplateId id);
std::optional<TemplateId> template_from_name(std::string_view name);
const std::vector<TemplateId>& all_templates();

struct PromptTemplate {
  TemplateId id;
  std::string_view body;
  /// Slot names in order of first appearance.
  std::vector<std::string> slots;
  /// Digest recorded in the manifest.
  std::string manifest_sha256;
};

const PromptTemplate& get_template(TemplateId id);

/// Digest of the compiled-in body.
std::string template_checksum(TemplateId id);

/// Ids whose compiled-in body does not match its manifest digest.
std::vector<std::string> verify_templates();

using Slots = std::map<std::string, std::string>;

/// Fills every slot. Throws Error(kMissingSlot) naming the first unfilled
/// slot, and Error(kValidation) for a slot the template does not declare.
std::string render(TemplateId id, const Slots& slots);
/// Same, by template name; throws Error(kUnknownTemplate) for unknown names.
std::string render(std::string_view id, const Slots& slots);

}  // namespace persuade
