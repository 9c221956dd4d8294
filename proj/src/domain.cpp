#include "persuade/domain.hpp"

#include <set>

#include "persuade/error.hpp"
#include "text_util.hpp"

namespace persuade {

std::string_view speaker_name(Speaker speaker) {
  return speaker == Speaker::kPersuader ? "persuader" : "persuadee";
}

void Transcript::append(Utterance utterance) {
  if (trim(utterance.text).empty()) {
    throw Error(ErrorKind::kValidation, "utterance text is empty");
  }
  if (utterances_.empty()) {
    if (utterance.speaker != Speaker::kPersuader || utterance.turn_index != 1) {
      throw Error(ErrorKind::kValidation,
                  "transcript must open with the persuader at turn 1");
    }
  } else {
    const Utterance& last = utterances_.back();
    if (utterance.speaker == last.speaker) {
      throw Error(ErrorKind::kValidation,
                  std::string("speakers must alternate; got two consecutive ") +
                      std::string(speaker_name(utterance.speaker)) + " utterances");
    }
    const int expected = utterance.speaker == Speaker::kPersuadee ? last.turn_index
                                                                  : last.turn_index + 1;
    if (utterance.turn_index != expected) {
      throw Error(ErrorKind::kValidation,
                  "turn index " + std::to_string(utterance.turn_index) +
                      " out of sequence; expected " + std::to_string(expected));
    }
  }
  utterances_.push_back(std::move(utterance));
}

int Transcript::persuader_turns() const noexcept {
  return static_cast<int>((utterances_.size() + 1) / 2);
}

int Transcript::complete_turns() const noexcept {
  return static_cast<int>(utterances_.size() / 2);
}

bool Transcript::awaiting_reply() const noexcept {
  return !utterances_.empty() && utterances_.back().speaker == Speaker::kPersuader;
}

std::string format_dialogue(const Transcript& transcript) {
  std::string out;
  for (const auto& u : transcript.utterances()) {
    if (!out.empty()) out += '\n';
    out += speaker_name(u.speaker);
    out += ": ";
    out += u.text;
  }
  return out;
}

void check_strategy_set(const StrategySet& set) {
  const auto n = set.items.size();
  if (set.turn_index <= 1) {
    if (n < 1 || n > 4) {
      throw Error(ErrorKind::kValidation,
                  "first-turn strategy set needs 1 to 4 strategies, got " +
                      std::to_string(n));
    }
  } else if (n != 5) {
    throw Error(ErrorKind::kValidation,
                "strategy set for turn " + std::to_string(set.turn_index) +
                    " needs exactly 5 strategies, got " + std::to_string(n));
  }
  std::set<std::string> seen;
  for (const auto& item : set.items) {
    if (trim(item.name).empty()) {
      throw Error(ErrorKind::kValidation, "strategy name is empty");
    }
    if (!seen.insert(item.name).second) {
      throw Error(ErrorKind::kValidation, "duplicate strategy name '" + item.name + "'");
    }
  }
}

const MentalStateEstimate* ShortTermMemory::estimate_for(int turn) const {
  for (const auto& e : estimates) {
    if (e.turn_index == turn) return &e;
  }
  return nullptr;
}

namespace {

std::string optional_text(const json& raw, const char* key) {
  auto it = raw.find(key);
  if (it == raw.end() || it->is_null()) return {};
  if (!it->is_string()) {
    throw Error(ErrorKind::kValidation, std::string("field '") + key + "' must be text");
  }
  return it->get<std::string>();
}

std::string required_text(const json& raw, const char* key) {
  std::string value = optional_text(raw, key);
  if (trim(value).empty()) {
    throw Error(ErrorKind::kValidation, std::string("missing required field '") + key + "'");
  }
  return value;
}

std::string facet(const json& block, const char* key) {
  auto it = block.find(key);
  if (it == block.end() || it->is_null()) return std::string(kNone);
  if (!it->is_string()) {
    throw Error(ErrorKind::kValidation, std::string("mental-state field '") + key +
                                            "' must be text");
  }
  std::string value = trim(it->get<std::string>());
  return value.empty() ? std::string(kNone) : value;
}

}  // namespace

MentalState mental_state_from_json(const json& j) {
  MentalState m;
  if (j.is_null()) return m;
  if (!j.is_object()) {
    throw Error(ErrorKind::kValidation, "mental state must be an object");
  }
  m.content = facet(j, "content");
  m.belief = facet(j, "belief");
  m.desire = facet(j, "desire");
  return m;
}

Scenario validate_scenario(const json& raw) {
  if (!raw.is_object()) {
    throw Error(ErrorKind::kValidation, "scenario record must be an object");
  }
  Scenario s;
  auto id = raw.find("id");
  if (id != raw.end() && id->is_number_integer()) {
    s.id = std::to_string(id->get<long long>());
  } else {
    s.id = required_text(raw, "id");
  }
  s.goal = required_text(raw, "goal");
  s.background = required_text(raw, "background");
  s.tag = optional_text(raw, "tag");
  s.persuader_name = optional_text(raw, "persuader");
  s.persuadee_name = optional_text(raw, "persuadee");

  auto domain = raw.find("domain");
  if (domain == raw.end() || domain->is_null()) {
    throw Error(ErrorKind::kValidation, "missing required field 'domain'");
  }
  if (domain->is_string()) {
    s.domain = trim(domain->get<std::string>());
  } else if (domain->is_array()) {
    for (const auto& d : *domain) {
      if (!d.is_string()) {
        throw Error(ErrorKind::kValidation, "domain entries must be text");
      }
      std::string label = trim(d.get<std::string>());
      if (label.empty()) continue;
      if (s.domain.empty()) {
        s.domain = label;
      } else {
        s.extra_domains.push_back(label);
      }
    }
  } else {
    throw Error(ErrorKind::kValidation, "field 'domain' must be text or a list");
  }
  if (s.domain.empty()) {
    throw Error(ErrorKind::kValidation, "missing required field 'domain'");
  }
  s.preventive = mental_state_from_json(raw.value("preventive", json()));
  s.generative = mental_state_from_json(raw.value("generative", json()));
  return s;
}

std::vector<Scenario> validate_scenarios(const json& records) {
  if (!records.is_array()) {
    throw Error(ErrorKind::kValidation, "scenario batch must be an array");
  }
  std::vector<Scenario> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < records.size(); ++i) {
    Scenario s;
    try {
      s = validate_scenario(records[i]);
    } catch (const Error& e) {
      throw Error(e.kind(), "record " + std::to_string(i) + ": " + e.what());
    }
    if (!ids.insert(s.id).second) {
      throw Error(ErrorKind::kDuplicateId, "duplicate scenario id '" + s.id + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

void to_json(json& j, const MentalState& m) {
  j = json{{"content", m.content}, {"belief", m.belief}, {"desire", m.desire}};
}

json encode_scenario(const Scenario& s) {
  json domain = json::array({s.domain});
  for (const auto& d : s.extra_domains) domain.push_back(d);
  return json{{"id", s.id},
              {"tag", s.tag},
              {"background", s.background},
              {"goal", s.goal},
              {"domain", s.extra_domains.empty() ? json(s.domain) : domain},
              {"persuader", s.persuader_name},
              {"persuadee", s.persuadee_name},
              {"preventive", s.preventive},
              {"generative", s.generative}};
}

void to_json(json& j, const Utterance& u) {
  j = json{{"speaker", speaker_name(u.speaker)}, {"turn", u.turn_index}, {"text", u.text}};
}

void from_json(const json& j, Utterance& u) {
  const auto speaker = j.at("speaker").get<std::string>();
  if (speaker == "persuader") {
    u.speaker = Speaker::kPersuader;
  } else if (speaker == "persuadee") {
    u.speaker = Speaker::kPersuadee;
  } else {
    throw Error(ErrorKind::kSchema, "unknown speaker '" + speaker + "'");
  }
  u.turn_index = j.at("turn").get<int>();
  u.text = j.at("text").get<std::string>();
}

void to_json(json& j, const MentalStateEstimate& e) {
  j = json{{"turn", e.turn_index},
           {"preventive", e.preventive_guess},
           {"generative", e.generative_guess}};
}

void from_json(const json& j, MentalStateEstimate& e) {
  e.turn_index = j.at("turn").get<int>();
  e.preventive_guess = mental_state_from_json(j.at("preventive"));
  e.generative_guess = mental_state_from_json(j.at("generative"));
}

void to_json(json& j, const StrategySet& s) {
  json items = json::array();
  for (const auto& item : s.items) {
    items.push_back(json{{"name", item.name}, {"directive", item.directive}});
  }
  j = json{{"turn", s.turn_index}, {"items", std::move(items)}};
}

void from_json(const json& j, StrategySet& s) {
  s.turn_index = j.at("turn").get<int>();
  s.items.clear();
  for (const auto& item : j.at("items")) {
    s.items.push_back({item.at("name").get<std::string>(),
                       item.at("directive").get<std::string>()});
  }
}

void to_json(json& j, const EvaluationRules& r) {
  j = json{{"success_criteria", r.success_criteria},
           {"rubric_text", r.rubric_text},
           {"meta_strategy", r.meta_strategy_name ? json(*r.meta_strategy_name) : json()}};
}

void from_json(const json& j, EvaluationRules& r) {
  r.success_criteria = j.at("success_criteria").get<std::vector<std::string>>();
  r.rubric_text = j.at("rubric_text").get<std::string>();
  const auto& meta = j.at("meta_strategy");
  r.meta_strategy_name =
      meta.is_null() ? std::nullopt : std::optional<std::string>(meta.get<std::string>());
}

void to_json(json& j, const EpisodeOutcome& o) {
  j = json{{"success", o.success},
           {"success_turn", o.success_turn ? json(*o.success_turn) : json()},
           {"turns_used", o.turns_used},
           {"selected_meta_strategy",
            o.selected_meta_strategy ? json(*o.selected_meta_strategy) : json()}};
}

void from_json(const json& j, EpisodeOutcome& o) {
  o.success = j.at("success").get<bool>();
  const auto& st = j.at("success_turn");
  o.success_turn = st.is_null() ? std::nullopt : std::optional<int>(st.get<int>());
  o.turns_used = j.at("turns_used").get<int>();
  const auto& meta = j.at("selected_meta_strategy");
  o.selected_meta_strategy =
      meta.is_null() ? std::nullopt : std::optional<std::string>(meta.get<std::string>());
}

}  // namespace persuade
