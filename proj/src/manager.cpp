#include "simlab/manager.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "simlab/resources_embedded.hpp"

namespace simlab {

DialogueState initial_state(const Ontology &o) {
  DialogueState s;
  for (const auto &slot : o.informable_slots()) s.slots[slot] = SlotBelief{};
  return s;
}

Constraints state_constraints(const DialogueState &s) {
  Constraints c;
  for (const auto &[slot, belief] : s.slots)
    if (belief.value) c[slot] = *belief.value;
  return c;
}

DialogueState track(DialogueState state, const std::vector<DialogueAct> &user_acts) {
  for (const auto &act : user_acts) {
    switch (act.type()) {
    case ActType::Inform: {
      if (!act.slot() || !act.value()) break;
      auto it = state.slots.find(*act.slot());
      if (it == state.slots.end()) break;
      auto &belief = it->second;
      if (belief.value == act.value()) {
        belief.grounded = true;
      } else {
        belief.value = act.value();
        belief.grounded = false;
        state.offered_entity.reset();
      }
      break;
    }
    case ActType::Deny: {
      if (!act.slot()) break;
      auto it = state.slots.find(*act.slot());
      if (it != state.slots.end() && it->second.value == act.value()) it->second = SlotBelief{};
      break;
    }
    case ActType::Affirm:
      if (state.last_confirmed_slot) state.slots[*state.last_confirmed_slot].grounded = true;
      break;
    case ActType::Negate:
      if (state.last_confirmed_slot) {
        state.slots[*state.last_confirmed_slot] = SlotBelief{};
        state.offered_entity.reset();
      }
      break;
    case ActType::Request:
      state.requested.insert(*act.slot());
      break;
    case ActType::Reqalts:
      if (state.offered_entity) state.rejected.insert(*state.offered_entity);
      state.offered_entity.reset();
      break;
    case ActType::Bye:
      state.user_said_bye = true;
      break;
    default:
      break;
    }
  }
  state.last_user_acts = user_acts;
  ++state.turn;
  return state;
}

void observe_system(DialogueState &state, const std::vector<DialogueAct> &system_acts) {
  state.last_confirmed_slot.reset();
  for (const auto &act : system_acts) {
    if (act.type() == ActType::Confirm && act.slot()) state.last_confirmed_slot = act.slot();
    if (act.type() == ActType::Offer && act.slot() == "name") state.offered_entity = act.value();
    if (act.type() == ActType::Inform && act.slot()) state.requested.erase(*act.slot());
  }
}

std::vector<SummaryAction> summary_actions(const Ontology &o) {
  std::vector<SummaryAction> out;
  for (const auto &s : o.informable_slots()) out.push_back({SummaryKind::Request, s});
  for (const auto &s : o.informable_slots()) out.push_back({SummaryKind::Confirm, s});
  out.push_back({SummaryKind::Offer, std::nullopt});
  out.push_back({SummaryKind::InformRequested, std::nullopt});
  out.push_back({SummaryKind::Canthelp, std::nullopt});
  out.push_back({SummaryKind::Repeat, std::nullopt});
  out.push_back({SummaryKind::Bye, std::nullopt});
  return out;
}

std::string summary_action_name(const SummaryAction &a) {
  switch (a.kind) {
  case SummaryKind::Request:
    return "request(" + *a.slot + ")";
  case SummaryKind::Confirm:
    return "confirm(" + *a.slot + ")";
  case SummaryKind::Offer:
    return "offer";
  case SummaryKind::InformRequested:
    return "inform_requested";
  case SummaryKind::Canthelp:
    return "canthelp";
  case SummaryKind::Repeat:
    return "repeat";
  case SummaryKind::Bye:
    return "bye";
  }
  return "?";
}

namespace {

const Entity *first_offerable(const DialogueState &state, const Ontology &o) {
  for (const Entity *e : matching_entities(o, state_constraints(state)))
    if (!state.rejected.count(e->at("name"))) return e;
  return nullptr;
}

std::vector<DialogueAct> offer_acts(const Entity &e, const DialogueState &state) {
  std::vector<DialogueAct> acts;
  acts.emplace_back(ActType::Offer, std::string("name"), e.at("name"));
  for (const auto &[slot, belief] : state.slots) {
    if (!belief.value || *belief.value == kDontcare) continue;
    auto it = e.find(slot);
    if (it != e.end()) acts.emplace_back(ActType::Inform, slot, it->second);
  }
  return acts;
}

std::vector<DialogueAct> realize_offer(const DialogueState &state, const Ontology &o) {
  if (const Entity *e = first_offerable(state, o)) return offer_acts(*e, state);
  return {DialogueAct(ActType::Canthelp)};
}

} // namespace

std::vector<DialogueAct> realize_action(const SummaryAction &a, const DialogueState &state, const Ontology &o,
                                        Rng & /*rng*/) {
  switch (a.kind) {
  case SummaryKind::Request:
    return {DialogueAct(ActType::Request, *a.slot)};
  case SummaryKind::Confirm: {
    auto it = state.slots.find(*a.slot);
    if (it == state.slots.end() || !it->second.value) return {DialogueAct(ActType::Request, *a.slot)};
    return {DialogueAct(ActType::Confirm, *a.slot, *it->second.value)};
  }
  case SummaryKind::Offer:
    return realize_offer(state, o);
  case SummaryKind::InformRequested: {
    const Entity *e = state.offered_entity ? o.find_entity(*state.offered_entity) : nullptr;
    if (!e) return realize_offer(state, o);
    if (state.requested.empty()) return {DialogueAct(ActType::Offer, std::string("name"), e->at("name"))};
    std::vector<DialogueAct> acts;
    for (const auto &slot : state.requested) {
      auto it = e->find(slot);
      if (it != e->end()) acts.emplace_back(ActType::Inform, slot, it->second);
    }
    if (acts.empty()) acts.emplace_back(ActType::Offer, std::string("name"), e->at("name"));
    return acts;
  }
  case SummaryKind::Canthelp:
    return {DialogueAct(ActType::Canthelp)};
  case SummaryKind::Repeat:
    return {DialogueAct(ActType::Repeat)};
  case SummaryKind::Bye:
    return {DialogueAct(ActType::Bye)};
  }
  throw std::logic_error("unknown summary action");
}

SummaryAction handcrafted_action(const DialogueState &state, const Ontology &o) {
  if (state.user_said_bye) return {SummaryKind::Bye, std::nullopt};
  if (state.offered_entity && !state.requested.empty()) return {SummaryKind::InformRequested, std::nullopt};
  if (state.offered_entity) return {SummaryKind::InformRequested, std::nullopt};
  std::optional<std::string> missing;
  for (const auto &slot : o.informable_slots()) {
    if (!state.slots.at(slot).value) {
      missing = slot;
      break;
    }
  }
  const std::size_t matches = first_offerable(state, o) ? matching_entities(o, state_constraints(state)).size() : 0;
  if (matches == 0) {
    if (missing) return {SummaryKind::Request, missing};
    return {SummaryKind::Canthelp, std::nullopt};
  }
  if (matches == 1 || !missing) return {SummaryKind::Offer, std::nullopt};
  return {SummaryKind::Request, missing};
}

TemplateTable::TemplateTable() : TemplateTable(nlohmann::json::parse(resources::kTemplatesJson)) {}

TemplateTable::TemplateTable(const nlohmann::json &j) {
  if (!j.is_object()) throw DataError("template table must be a JSON object");
  for (const auto &[key, value] : j.items()) templates_[key] = value.get<std::string>();
}

TemplateTable TemplateTable::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open template file '" + path.string() + "'");
  try {
    return TemplateTable(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception &e) {
    throw DataError("malformed template file '" + path.string() + "': " + e.what());
  }
}

namespace {

void replace_all(std::string &s, const std::string &from, const std::string &to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

} // namespace

std::string TemplateTable::realize(const DialogueAct &act) const {
  const std::string type(act_type_name(act.type()));
  auto it = templates_.end();
  if (act.slot()) it = templates_.find(type + "(" + *act.slot() + ")");
  if (it == templates_.end()) it = templates_.find(type);
  if (it == templates_.end()) return serialize_act(act);
  std::string text = it->second;
  const std::string value = act.value().value_or("");
  std::string capitalized = value;
  if (!capitalized.empty()) capitalized[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(capitalized[0])));
  replace_all(text, "{slot}", act.slot().value_or(""));
  replace_all(text, "{value}", value);
  replace_all(text, "{Value}", capitalized);
  return text;
}

std::string TemplateTable::realize(const std::vector<DialogueAct> &acts) const {
  std::string out;
  for (const auto &a : acts) {
    const std::string piece = realize(a);
    if (piece.empty()) continue;
    if (!out.empty()) out += ' ';
    out += piece;
  }
  return out;
}

std::string realize_text(const std::vector<DialogueAct> &acts) {
  static const TemplateTable table;
  return table.realize(acts);
}

} // namespace simlab
