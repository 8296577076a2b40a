#include "simlab/dialogue.hpp"

#include <algorithm>
#include <cctype>

#include "simlab/common.hpp"
#include "simlab/ontology.hpp"

namespace simlab {

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string &s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto first = std::find_if_not(s.begin(), s.end(), is_space);
  auto last = std::find_if_not(s.rbegin(), s.rend(), is_space).base();
  return first < last ? std::string(first, last) : std::string();
}

namespace {

constexpr std::array<std::string_view, kNumActTypes> kActNames = {
    "inform", "request", "confirm",  "deny",     "affirm",   "negate",
    "hello",  "bye",     "reqalts",  "thankyou", "ack",      "repeat",
    "offer",  "canthelp", "welcomemsg", "null",
};

enum class ArgRule {
  None,          // no slot, no value
  SlotOnly,      // slot, no value
  OptionalPair,  // nothing, or slot=value
};

ArgRule arg_rule(ActType t) {
  switch (t) {
  case ActType::Request:
    return ArgRule::SlotOnly;
  case ActType::Inform:
  case ActType::Confirm:
  case ActType::Deny:
  case ActType::Offer:
  case ActType::Reqalts:
  case ActType::Canthelp:
    return ArgRule::OptionalPair;
  default:
    return ArgRule::None;
  }
}

} // namespace

std::string_view act_type_name(ActType t) { return kActNames[static_cast<std::size_t>(t)]; }

ActType act_type_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kActNames.size(); ++i)
    if (kActNames[i] == name) return static_cast<ActType>(i);
  throw VocabularyError("unknown act type '" + std::string(name) + "'");
}

const std::array<ActType, kNumActTypes> &all_act_types() {
  static const std::array<ActType, kNumActTypes> types = [] {
    std::array<ActType, kNumActTypes> a{};
    for (std::size_t i = 0; i < kNumActTypes; ++i) a[i] = static_cast<ActType>(i);
    return a;
  }();
  return types;
}

DialogueAct::DialogueAct(ActType type, std::optional<std::string> slot,
                         std::optional<std::string> value)
    : type_(type), slot_(std::move(slot)), value_(std::move(value)) {
  const std::string name(act_type_name(type_));
  if (slot_ && slot_->empty()) throw ValidationError(name + ": empty slot name");
  switch (arg_rule(type_)) {
  case ArgRule::None:
    if (slot_ || value_) throw ValidationError(name + " takes no slot or value");
    break;
  case ArgRule::SlotOnly:
    if (!slot_) throw ValidationError(name + " requires a slot");
    if (value_) throw ValidationError(name + " takes no value");
    break;
  case ArgRule::OptionalPair:
    if (value_ && !slot_) throw ValidationError(name + ": value without slot");
    if (slot_ && !value_) throw ValidationError(name + "(" + *slot_ + ") requires a value");
    break;
  }
}

DialogueAct parse_act(std::string_view text) {
  const std::string s(text);
  std::size_t pos = 0;
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  const std::size_t name_start = pos;
  while (pos < s.size() && (std::isalpha(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
    ++pos;
  if (pos == name_start) throw ParseError("expected act type", pos);
  const std::string name = to_lower(s.substr(name_start, pos - name_start));
  if (pos >= s.size() || s[pos] != '(') throw ParseError("expected '('", pos);
  const std::size_t open = pos;
  const std::size_t close = s.rfind(')');
  if (close == std::string::npos || close < open) throw ParseError("missing ')'", s.size());
  for (std::size_t i = close + 1; i < s.size(); ++i)
    if (!std::isspace(static_cast<unsigned char>(s[i])))
      throw ParseError("unexpected trailing input", i);

  const ActType type = act_type_from_name(name);
  const std::string inner = s.substr(open + 1, close - open - 1);
  std::optional<std::string> slot, value;
  if (!trim(inner).empty()) {
    const std::size_t eq = inner.find('=');
    if (eq == std::string::npos) {
      slot = to_lower(trim(inner));
    } else {
      slot = to_lower(trim(inner.substr(0, eq)));
      value = to_lower(trim(inner.substr(eq + 1)));
      if (slot->empty()) throw ParseError("empty slot name", open + 1);
      if (value->empty()) throw ParseError("empty value", open + 1 + eq + 1);
    }
    if (slot->find_first_of("(),") != std::string::npos)
      throw ParseError("invalid character in slot name", open + 1);
  }
  try {
    return DialogueAct(type, std::move(slot), std::move(value));
  } catch (const ValidationError &e) {
    throw ParseError(e.what(), open);
  }
}

std::string serialize_act(const DialogueAct &act) {
  std::string out(act_type_name(act.type()));
  out += '(';
  if (act.slot()) {
    out += *act.slot();
    if (act.value()) {
      out += '=';
      out += *act.value();
    }
  }
  out += ')';
  return out;
}

std::vector<DialogueAct> parse_acts(const std::vector<std::string> &texts) {
  std::vector<DialogueAct> acts;
  acts.reserve(texts.size());
  for (const auto &t : texts) acts.push_back(parse_act(t));
  return acts;
}

std::vector<std::string> serialize_acts(const std::vector<DialogueAct> &acts) {
  std::vector<std::string> out;
  out.reserve(acts.size());
  for (const auto &a : acts) out.push_back(serialize_act(a));
  return out;
}

nlohmann::json goal_to_json(const UserGoal &goal) {
  nlohmann::json j;
  j["constraints"] = nlohmann::json::object();
  for (const auto &[slot, value] : goal.constraints) j["constraints"][slot] = value;
  j["requests"] = nlohmann::json::array();
  for (const auto &r : goal.requests) j["requests"].push_back(r);
  return j;
}

UserGoal goal_from_json(const nlohmann::json &j) {
  UserGoal g;
  if (!j.is_object()) throw DataError("goal must be an object");
  if (j.contains("constraints")) {
    for (const auto &[slot, value] : j.at("constraints").items())
      g.constraints[to_lower(trim(slot))] = to_lower(trim(value.get<std::string>()));
  }
  if (j.contains("requests")) {
    for (const auto &r : j.at("requests")) g.requests.insert(to_lower(trim(r.get<std::string>())));
  }
  return g;
}

nlohmann::json dialogue_to_json(const Dialogue &d) {
  nlohmann::json j;
  j["id"] = d.id;
  j["goal"] = goal_to_json(d.goal);
  j["turns"] = nlohmann::json::array();
  for (const auto &t : d.turns) {
    nlohmann::json tj;
    tj["system"] = serialize_acts(t.system_acts);
    tj["user"] = serialize_acts(t.user_acts);
    j["turns"].push_back(std::move(tj));
  }
  return j;
}

Dialogue dialogue_from_json(const nlohmann::json &j) {
  if (!j.is_object()) throw DataError("dialogue must be a JSON object");
  Dialogue d;
  d.id = j.at("id").get<std::string>();
  d.goal = goal_from_json(j.at("goal"));
  for (const auto &tj : j.at("turns")) {
    Turn t;
    t.system_acts = parse_acts(tj.value("system", std::vector<std::string>{}));
    t.user_acts = parse_acts(tj.value("user", std::vector<std::string>{}));
    d.turns.push_back(std::move(t));
  }
  return d;
}

namespace {

bool known_entity_value(const Ontology &o, const std::string &slot, const std::string &value) {
  for (const auto &e : o.entities()) {
    auto it = e.find(slot);
    if (it != e.end() && it->second == value) return true;
  }
  return false;
}

std::optional<std::string> act_violation(const DialogueAct &act, const Ontology &o) {
  if (!act.slot()) return std::nullopt;
  const std::string &slot = *act.slot();
  const std::string text = serialize_act(act);
  if (slot == "name") {
    if (act.value() && !o.find_entity(*act.value()))
      return text + ": unknown entity '" + *act.value() + "'";
    return std::nullopt;
  }
  if (o.is_informable(slot)) {
    if (act.value() && *act.value() != kDontcare && !o.has_value(slot, *act.value()))
      return text + ": value '" + *act.value() + "' not in ontology for slot '" + slot + "'";
    return std::nullopt;
  }
  if (o.is_requestable(slot)) {
    if (act.value() && !known_entity_value(o, slot, *act.value()))
      return text + ": value '" + *act.value() + "' matches no entity";
    return std::nullopt;
  }
  return text + ": unknown slot '" + slot + "'";
}

} // namespace

std::vector<Violation> validate_dialogue(const Dialogue &d, const Ontology &o) {
  std::vector<Violation> report;
  if (d.turns.empty()) report.push_back({std::nullopt, "dialogue has no turns"});
  for (const auto &[slot, value] : d.goal.constraints) {
    if (!o.is_informable(slot))
      report.push_back({std::nullopt, "goal constraint on unknown slot '" + slot + "'"});
    else if (value != kDontcare && !o.has_value(slot, value))
      report.push_back({std::nullopt, "goal value '" + value + "' not in ontology for '" + slot + "'"});
  }
  for (const auto &r : d.goal.requests)
    if (!o.is_requestable(r)) report.push_back({std::nullopt, "goal request on unknown slot '" + r + "'"});
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    for (const auto *acts : {&d.turns[t].system_acts, &d.turns[t].user_acts})
      for (const auto &a : *acts)
        if (auto v = act_violation(a, o)) report.push_back({t, *v});
  }
  return report;
}

} // namespace simlab
