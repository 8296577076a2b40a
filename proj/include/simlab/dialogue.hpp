#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace simlab {

enum class ActType {
  Inform,
  Request,
  Confirm,
  Deny,
  Affirm,
  Negate,
  Hello,
  Bye,
  Reqalts,
  Thankyou,
  Ack,
  Repeat,
  Offer,
  Canthelp,
  Welcomemsg,
  Null,
};

inline constexpr std::size_t kNumActTypes = 16;

std::string_view act_type_name(ActType t);
// Throws VocabularyError for names outside the closed inventory.
ActType act_type_from_name(std::string_view name);
const std::array<ActType, kNumActTypes> &all_act_types();

inline constexpr std::string_view kDontcare = "dontcare";

// Single-slot semantic act. Invariants are checked by the constructor, so
// every DialogueAct in the program is well-formed.
class DialogueAct {
public:
  DialogueAct(ActType type, std::optional<std::string> slot = std::nullopt,
              std::optional<std::string> value = std::nullopt);

  ActType type() const { return type_; }
  const std::optional<std::string> &slot() const { return slot_; }
  const std::optional<std::string> &value() const { return value_; }

  auto operator<=>(const DialogueAct &) const = default;
  bool operator==(const DialogueAct &) const = default;

private:
  ActType type_;
  std::optional<std::string> slot_;
  std::optional<std::string> value_;
};

// Grammar: acttype '(' [slot ['=' value]] ')'. Values are lowercased and
// trimmed.
DialogueAct parse_act(std::string_view text);
std::string serialize_act(const DialogueAct &act);

std::vector<DialogueAct> parse_acts(const std::vector<std::string> &texts);
std::vector<std::string> serialize_acts(const std::vector<DialogueAct> &acts);

struct UserGoal {
  std::map<std::string, std::string> constraints;
  std::set<std::string> requests;

  bool operator==(const UserGoal &) const = default;
};

struct Turn {
  std::vector<DialogueAct> system_acts;
  std::vector<DialogueAct> user_acts;

  bool operator==(const Turn &) const = default;
};

struct Dialogue {
  std::string id;
  UserGoal goal;
  std::vector<Turn> turns;

  bool operator==(const Dialogue &) const = default;
};

nlohmann::json goal_to_json(const UserGoal &goal);
UserGoal goal_from_json(const nlohmann::json &j);
nlohmann::json dialogue_to_json(const Dialogue &d);
Dialogue dialogue_from_json(const nlohmann::json &j);

class Ontology;

struct Violation {
  std::optional<std::size_t> turn;
  std::string message;
};

// Report-only: an empty result means the dialogue is consistent with o.
std::vector<Violation> validate_dialogue(const Dialogue &d, const Ontology &o);

} // namespace simlab
