#include "persuade/parsers.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cctype>
#include <optional>
#include <set>

#include "persuade/error.hpp"
#include "text_util.hpp"

namespace persuade {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string excerpt(std::string_view raw) {
  constexpr std::size_t kMax = 120;
  if (raw.size() <= kMax) return std::string(raw);
  return std::string(raw.substr(0, kMax)) + "...";
}

[[noreturn]] void fail(const std::string& message, std::string_view raw,
                       ErrorKind kind = ErrorKind::kParse) {
  throw ParseError(message + " in reply: " + excerpt(raw), std::string(raw), kind);
}

/// End (one past the closing brace) of the balanced object opening at
/// `open`, honoring JSON string quoting.
std::optional<std::size_t> balanced_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::nullopt;
}

/// Text of the object value of the first `"key": {...}` member.
std::optional<std::string_view> find_keyed_object(std::string_view text,
                                                  std::string_view key) {
  const std::string quoted = "\"" + std::string(key) + "\"";
  std::size_t from = 0;
  while (true) {
    const std::size_t at = text.find(quoted, from);
    if (at == std::string_view::npos) return std::nullopt;
    std::size_t i = at + quoted.size();
    while (i < text.size() && is_space(text[i])) ++i;
    if (i < text.size() && text[i] == ':') {
      ++i;
      while (i < text.size() && is_space(text[i])) ++i;
      if (i < text.size() && text[i] == '{') {
        if (auto end = balanced_end(text, i)) return text.substr(i, *end - i);
      }
    }
    from = at + 1;
  }
}

/// Parses a flat object, keeping member order and reporting duplicates,
/// which a plain parse would silently merge.
struct OrderedMembers {
  std::vector<std::pair<std::string, ordered_json>> members;
  std::vector<std::string> keys_seen;
};

OrderedMembers parse_members(std::string_view object_text, std::string_view raw) {
  OrderedMembers out;
  ordered_json parsed;
  try {
    parsed = ordered_json::parse(
        object_text,
        [&out](int depth, ordered_json::parse_event_t event, ordered_json& value) {
          if (event == ordered_json::parse_event_t::key && depth == 1) {
            out.keys_seen.push_back(value.get<std::string>());
          }
          return true;
        });
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed JSON object (") + e.what() + ")", raw);
  }
  if (!parsed.is_object()) fail("expected a JSON object", raw);
  for (auto& [k, v] : parsed.items()) out.members.emplace_back(k, v);
  return out;
}

/// In strict mode the reply must be nothing but the payload: either one
/// object or its members without the outer braces.
std::optional<ordered_json> strict_document(std::string_view raw) {
  const std::string body = trim(raw);
  for (const std::string& candidate : {body, "{" + body + "}"}) {
    ordered_json doc = ordered_json::parse(candidate, nullptr, false);
    if (!doc.is_discarded() && doc.is_object()) return doc;
  }
  return std::nullopt;
}

std::string facet_text(const ordered_json& block, const char* key) {
  auto it = block.find(key);
  if (it == block.end() || it->is_null()) return std::string(kNone);
  std::string value = it->is_string() ? it->get<std::string>() : it->dump();
  value = trim(value);
  return value.empty() ? std::string(kNone) : value;
}

MentalState mental_from(const ordered_json& block) {
  MentalState m;
  m.content = facet_text(block, "content");
  m.belief = facet_text(block, "belief");
  m.desire = facet_text(block, "desire");
  return m;
}

}  // namespace

StrategySet parse_strategy_set(std::string_view raw, int turn_index, ParseOptions options) {
  if (options.strict) {
    auto doc = strict_document(raw);
    if (!doc || !doc->contains("strategy") || !(*doc)["strategy"].is_object()) {
      fail("strict mode: reply is not a bare \"strategy\" object", raw);
    }
  }
  auto object_text = find_keyed_object(raw, "strategy");
  if (!object_text) fail("no \"strategy\" object found", raw);
  auto members = parse_members(*object_text, raw);

  StrategySet set;
  set.turn_index = turn_index;
  std::set<std::string> seen;
  for (const auto& key : members.keys_seen) {
    if (!seen.insert(key).second) fail("duplicate strategy name '" + key + "'", raw);
  }
  for (auto& [name, value] : members.members) {
    if (!value.is_string()) fail("directive for '" + name + "' is not text", raw);
    std::string directive = trim(value.get<std::string>());
    if (trim(name).empty()) fail("empty strategy name", raw);
    if (directive.empty()) fail("empty directive for '" + name + "'", raw);
    set.items.push_back({name, std::move(directive)});
  }
  try {
    check_strategy_set(set);
  } catch (const Error& e) {
    fail(e.what(), raw);
  }
  return set;
}

MentalStateEstimate parse_mental_estimate(std::string_view raw, int turn_index,
                                          ParseOptions options) {
  if (options.strict) {
    auto doc = strict_document(raw);
    if (!doc || (!doc->contains("preventive") && !doc->contains("generative"))) {
      fail("strict mode: reply is not a bare preventive/generative object", raw);
    }
  }
  auto preventive = find_keyed_object(raw, "preventive");
  auto generative = find_keyed_object(raw, "generative");
  if (!preventive && !generative) fail("no preventive or generative block found", raw);

  auto parse_block = [&](std::string_view text) {
    ordered_json block = ordered_json::parse(text, nullptr, false);
    if (block.is_discarded() || !block.is_object()) fail("malformed mental-state block", raw);
    return mental_from(block);
  };
  MentalStateEstimate estimate;
  estimate.turn_index = turn_index;
  if (preventive) estimate.preventive_guess = parse_block(*preventive);
  if (generative) estimate.generative_guess = parse_block(*generative);
  return estimate;
}

Utterance parse_utterance(std::string_view raw, Speaker expected, int turn_index) {
  const std::string_view prefix = speaker_name(expected);
  std::size_t i = 0;
  while (i < raw.size() && is_space(raw[i])) ++i;
  if (!istarts_with(raw.substr(i), prefix)) {
    fail("reply must start with \"" + std::string(prefix) + ":\"", raw);
  }
  i += prefix.size();
  while (i < raw.size() && is_space(raw[i])) ++i;
  if (i >= raw.size() || raw[i] != ':') {
    fail("reply must start with \"" + std::string(prefix) + ":\"", raw);
  }
  std::string body = trim(raw.substr(i + 1));
  if (body.empty()) fail("empty utterance after prefix", raw);
  return Utterance{expected, turn_index, std::move(body)};
}

std::string format_utterance(const Utterance& utterance) {
  return std::string(speaker_name(utterance.speaker)) + ": " + utterance.text;
}

int count_sentences(std::string_view text) {
  int count = 0;
  bool pending = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      if (pending) {
        ++count;
        pending = false;
      }
    } else if (!is_space(c) && c != '"' && c != '\'') {
      pending = true;
    }
  }
  return pending ? count + 1 : count;
}

bool parse_bool_judgment(std::string_view raw) {
  std::size_t i = 0;
  while (i < raw.size()) {
    while (i < raw.size() && !std::isalpha(static_cast<unsigned char>(raw[i]))) ++i;
    const std::size_t start = i;
    while (i < raw.size() && std::isalpha(static_cast<unsigned char>(raw[i]))) ++i;
    const std::string word = to_lower(raw.substr(start, i - start));
    if (word == "true") return true;
    if (word == "false") return false;
  }
  fail("no True/False verdict", raw);
}

std::string_view score_label(ScoreDimension dimension) {
  switch (dimension) {
    case ScoreDimension::kPersuasive: return "Persuasive";
    case ScoreDimension::kLogic: return "Logical-Coherence";
    case ScoreDimension::kHelpful: return "Helpfulness";
  }
  return "";
}

namespace {

/// Parses [+-]?digits at `i`; nullopt when no digit follows.
std::optional<long> read_integer(std::string_view s, std::size_t i, std::size_t* end) {
  bool negative = false;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
    negative = s[i] == '-';
    ++i;
  }
  std::size_t digits = 0;
  long value = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
    if (digits < 6) value = value * 10 + (s[i] - '0');
    ++digits;
    ++i;
  }
  if (digits == 0) return std::nullopt;
  if (digits >= 6) value = 999999;
  if (end) *end = i;
  return negative ? -value : value;
}

int checked_score(long value, std::string_view raw) {
  if (value < 1 || value > 10) {
    fail("score " + std::to_string(value) + " outside 1..10", raw, ErrorKind::kOutOfRange);
  }
  return static_cast<int>(value);
}

}  // namespace

int parse_score(std::string_view raw, ScoreDimension dimension) {
  const std::string lower = to_lower(raw);
  const std::string label = to_lower(score_label(dimension));
  std::size_t from = 0;
  while (true) {
    const std::size_t at = lower.find(label, from);
    if (at == std::string::npos) break;
    std::size_t i = at + label.size();
    auto skip = [&] {
      while (i < raw.size() && (is_space(raw[i]) || raw[i] == '*')) ++i;
    };
    skip();
    if (i < raw.size() && raw[i] == ':') {
      ++i;
      skip();
      if (auto value = read_integer(raw, i, nullptr)) return checked_score(*value, raw);
    }
    from = at + 1;
  }
  const std::string bare = trim(raw);
  std::size_t end = 0;
  if (auto value = read_integer(bare, 0, &end); value && end == bare.size()) {
    return checked_score(*value, raw);
  }
  fail("no " + std::string(score_label(dimension)) + " score", raw);
}

std::string_view ab_option_string(AbVerdict verdict) {
  switch (verdict) {
    case AbVerdict::kDialogue1: return "1. More Persuasive: Dialogue 1";
    case AbVerdict::kDialogue2: return "2. More Persuasive: Dialogue 2";
    case AbVerdict::kTie: return "3. Equally Persuasive: Both dialogues";
  }
  return "";
}

AbVerdict parse_ab_verdict(std::string_view raw) {
  constexpr std::array<AbVerdict, 3> kOptions = {AbVerdict::kDialogue1,
                                                 AbVerdict::kDialogue2, AbVerdict::kTie};
  auto blank = [](char c) { return c == ' ' || c == '\t'; };
  std::optional<AbVerdict> best;
  std::size_t best_pos = 0;
  for (AbVerdict option : kOptions) {
    const std::string_view text = ab_option_string(option);
    std::size_t from = 0;
    while (true) {
      const std::size_t at = raw.find(text, from);
      if (at == std::string_view::npos) break;
      from = at + 1;
      std::size_t before = at;
      while (before > 0 && blank(raw[before - 1])) --before;
      std::size_t after = at + text.size();
      while (after < raw.size() && blank(raw[after])) ++after;
      const bool opened = before >= 3 && raw.substr(before - 3, 3) == "###";
      const bool closed = raw.substr(after, 3) == "###";
      if (opened && closed && (!best || at > best_pos)) {
        best = option;
        best_pos = at;
      }
    }
  }
  if (!best) fail("no ###...### decision block", raw);
  return *best;
}

std::string format_strategy_set(const StrategySet& set) {
  ordered_json inner = ordered_json::object();
  for (const auto& item : set.items) inner[item.name] = item.directive;
  return ordered_json{{"strategy", inner}}.dump();
}

std::string format_mental_state(const MentalState& state) {
  return ordered_json{
      {"content", state.content}, {"belief", state.belief}, {"desire", state.desire}}
      .dump();
}

}  // namespace persuade
