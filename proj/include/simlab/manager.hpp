#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "simlab/common.hpp"
#include "simlab/dialogue.hpp"
#include "simlab/ontology.hpp"

namespace simlab {

inline constexpr int kTurnCap = 30;
inline constexpr int kActionInventoryVersion = 1;

struct SlotBelief {
  std::optional<std::string> value;
  bool grounded = false;

  bool operator==(const SlotBelief &) const = default;
};

// Rule-based dialogue state over (possibly corrupted) user acts.
struct DialogueState {
  std::map<std::string, SlotBelief> slots;  // one entry per informable slot
  std::set<std::string> requested;
  std::optional<std::string> offered_entity;
  std::set<std::string> rejected;
  std::vector<DialogueAct> last_user_acts;
  std::optional<std::string> last_confirmed_slot;
  bool user_said_bye = false;
  int turn = 0;

  bool operator==(const DialogueState &) const = default;
};

DialogueState initial_state(const Ontology &o);

// Hypotheses as constraints (slots without a hypothesis are omitted).
Constraints state_constraints(const DialogueState &s);

// Focus rule: the latest inform overwrites the hypothesis. affirm grounds and
// negate clears the last confirmed slot; request(s) marks s requested;
// reqalts drops the offered entity.
DialogueState track(DialogueState state, const std::vector<DialogueAct> &user_acts);

// Records what the system just said: offered entity, pending confirmation and
// answered requests.
void observe_system(DialogueState &state, const std::vector<DialogueAct> &system_acts);

enum class SummaryKind { Request, Confirm, Offer, InformRequested, Canthelp, Repeat, Bye };

struct SummaryAction {
  SummaryKind kind;
  std::optional<std::string> slot;

  bool operator==(const SummaryAction &) const = default;
};

// request(s) per slot, confirm(s) per slot, offer, inform_requested, canthelp,
// repeat, bye. Size 2*|informable| + 5.
std::vector<SummaryAction> summary_actions(const Ontology &o);
std::string summary_action_name(const SummaryAction &a);

std::vector<DialogueAct> realize_action(const SummaryAction &a, const DialogueState &state, const Ontology &o,
                                        Rng &rng);

// Handcrafted rule policy used for synthetic corpus generation.
SummaryAction handcrafted_action(const DialogueState &state, const Ontology &o);

class TemplateTable {
public:
  TemplateTable();  // bundled defaults
  explicit TemplateTable(const nlohmann::json &j);
  static TemplateTable load(const std::filesystem::path &path);

  std::string realize(const DialogueAct &act) const;
  std::string realize(const std::vector<DialogueAct> &acts) const;

private:
  std::map<std::string, std::string> templates_;
};

std::string realize_text(const std::vector<DialogueAct> &acts);

} // namespace simlab
