#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "simlab/common.hpp"
#include "simlab/dialogue.hpp"
#include "simlab/ontology.hpp"
#include "simlab/usersim.hpp"

namespace simlab {

struct UserResponse {
  std::vector<DialogueAct> acts;
  bool violation = false;  // system ignored the user's bye()
  bool done = false;       // the user has said bye()
};

// Receive system acts, emit user acts. Implemented by the agenda and neural
// simulators so the policy trainer and the harness are simulator-agnostic.
class UserSimulator {
public:
  virtual ~UserSimulator() = default;
  virtual std::string id() const = 0;
  virtual void reset(const UserGoal &goal, Rng &rng) = 0;
  virtual UserResponse respond(const std::vector<DialogueAct> &system_acts, Rng &rng) = 0;
  virtual const UserGoal &goal() const = 0;
  virtual bool success() const = 0;
};

// User-side bookkeeping of what the system has delivered for a goal.
class GoalMonitor {
public:
  GoalMonitor() = default;
  GoalMonitor(const UserGoal &goal, const Ontology &o);

  struct Observation {
    std::set<std::string> violated_slots;  // constraints contradicted this turn
    bool consistent_offer = false;
    std::set<std::string> newly_fulfilled;
    bool canthelp = false;
  };

  Observation observe(const std::vector<DialogueAct> &system_acts);

  const std::optional<std::string> &offered_entity() const { return offered_; }
  const std::set<std::string> &fulfilled() const { return fulfilled_; }
  bool canthelp_seen() const { return canthelp_seen_; }
  bool goal_satisfiable() const { return satisfiable_; }
  bool success() const;

private:
  const Ontology *ontology_ = nullptr;
  UserGoal goal_;
  bool satisfiable_ = false;
  std::optional<std::string> offered_;
  std::set<std::string> fulfilled_;
  bool canthelp_seen_ = false;
};

struct Agenda {
  std::vector<DialogueAct> stack;  // back() is the top
  UserGoal goal;
  std::set<std::string> fulfilled_requests;
  std::optional<std::string> offered_entity;
  bool violation_flag = false;

  std::set<std::string> conveyed;
  std::vector<DialogueAct> last_user_acts;
  bool user_said_bye = false;
  GoalMonitor monitor;
  const Ontology *ontology = nullptr;
};

struct AgendaConfig {
  double pop_geometric_p = 0.6;
  double reqalts_probability = 0.5;
};

// Stack bottom-to-top: bye, requests (random order), informs (random order),
// hello.
Agenda agenda_init(const UserGoal &goal, const Ontology &o, Rng &rng);
void agenda_receive(Agenda &a, const std::vector<DialogueAct> &system_acts, Rng &rng, const AgendaConfig &cfg = {});
std::vector<DialogueAct> agenda_respond(Agenda &a, Rng &rng, const AgendaConfig &cfg = {});
bool agenda_outcome(const Agenda &a, const Ontology &o);

class AgendaSimulator : public UserSimulator {
public:
  explicit AgendaSimulator(const Ontology &o, AgendaConfig cfg = {});
  std::string id() const override { return "agenda"; }
  void reset(const UserGoal &goal, Rng &rng) override;
  UserResponse respond(const std::vector<DialogueAct> &system_acts, Rng &rng) override;
  const UserGoal &goal() const override { return agenda_.goal; }
  bool success() const override;
  const Agenda &agenda() const { return agenda_; }

private:
  const Ontology &ontology_;
  AgendaConfig cfg_;
  Agenda agenda_;
};

// Deployed seq2seq simulator: featurize -> encode -> sample -> relexicalize.
class NeuralSimulator : public UserSimulator {
public:
  NeuralSimulator(std::shared_ptr<const GeneratorModel> model, const Ontology &o, std::string id,
                  DecodeMode mode = DecodeMode::Sample);
  std::string id() const override { return id_; }
  void reset(const UserGoal &goal, Rng &rng) override;
  UserResponse respond(const std::vector<DialogueAct> &system_acts, Rng &rng) override;
  const UserGoal &goal() const override { return goal_; }
  bool success() const override { return monitor_.success(); }

private:
  std::shared_ptr<const GeneratorModel> model_;
  const Ontology &ontology_;
  std::string id_;
  DecodeMode mode_;
  UserGoal goal_;
  GoalMonitor monitor_;
  nn::RecurrentState state_;
  std::vector<std::string> last_user_tokens_;
  bool first_turn_ = true;
  bool user_said_bye_ = false;
};

bool contains_act(const std::vector<DialogueAct> &acts, ActType type);

} // namespace simlab
