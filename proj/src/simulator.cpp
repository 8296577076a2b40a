#include "simlab/simulator.hpp"

#include <algorithm>

namespace simlab {

bool contains_act(const std::vector<DialogueAct> &acts, ActType type) {
  return std::any_of(acts.begin(), acts.end(), [type](const DialogueAct &a) { return a.type() == type; });
}

GoalMonitor::GoalMonitor(const UserGoal &goal, const Ontology &o)
    : ontology_(&o), goal_(goal), satisfiable_(!matching_entities(o, goal.constraints).empty()) {}

GoalMonitor::Observation GoalMonitor::observe(const std::vector<DialogueAct> &system_acts) {
  Observation obs;
  for (const auto &act : system_acts) {
    if (act.type() == ActType::Canthelp) {
      obs.canthelp = true;
      canthelp_seen_ = true;
    }
    if (act.type() != ActType::Offer || act.slot() != "name" || !act.value()) continue;
    const Entity *e = ontology_ ? ontology_->find_entity(*act.value()) : nullptr;
    if (e && entity_matches(*e, goal_.constraints)) {
      if (offered_ != act.value()) fulfilled_.clear();
      offered_ = act.value();
      obs.consistent_offer = true;
    } else {
      offered_.reset();
      fulfilled_.clear();
      if (e) {
        for (const auto &[slot, value] : goal_.constraints) {
          if (value == kDontcare) continue;
          auto it = e->find(slot);
          if (it != e->end() && it->second != value) obs.violated_slots.insert(slot);
        }
      }
    }
  }
  for (const auto &act : system_acts) {
    if (act.type() != ActType::Inform || !act.slot() || !act.value()) continue;
    const std::string &slot = *act.slot();
    auto wanted = goal_.constraints.find(slot);
    if (wanted != goal_.constraints.end() && wanted->second != kDontcare && *act.value() != wanted->second &&
        *act.value() != kDontcare)
      obs.violated_slots.insert(slot);
    if (offered_ && goal_.requests.count(slot) && fulfilled_.insert(slot).second) obs.newly_fulfilled.insert(slot);
  }
  return obs;
}

bool GoalMonitor::success() const {
  if (offered_ && std::includes(fulfilled_.begin(), fulfilled_.end(), goal_.requests.begin(), goal_.requests.end()))
    return true;
  return !satisfiable_ && canthelp_seen_;
}

namespace {

void push_unique(Agenda &a, const DialogueAct &act) {
  auto it = std::find(a.stack.begin(), a.stack.end(), act);
  if (it != a.stack.end()) a.stack.erase(it);
  a.stack.push_back(act);
}

bool on_stack(const Agenda &a, const DialogueAct &act) {
  return std::find(a.stack.begin(), a.stack.end(), act) != a.stack.end();
}

std::string goal_value_or_dontcare(const UserGoal &g, const std::string &slot) {
  auto it = g.constraints.find(slot);
  return it == g.constraints.end() ? std::string(kDontcare) : it->second;
}

void clear_to_bye(Agenda &a) { a.stack.assign(1, DialogueAct(ActType::Bye)); }

} // namespace

Agenda agenda_init(const UserGoal &goal, const Ontology &o, Rng &rng) {
  Agenda a;
  a.goal = goal;
  a.ontology = &o;
  a.monitor = GoalMonitor(goal, o);
  a.stack.emplace_back(ActType::Bye);
  std::vector<std::string> requests(goal.requests.begin(), goal.requests.end());
  rng.shuffle(requests);
  for (const auto &r : requests) a.stack.emplace_back(ActType::Request, r);
  std::vector<std::pair<std::string, std::string>> informs(goal.constraints.begin(), goal.constraints.end());
  rng.shuffle(informs);
  for (const auto &[slot, value] : informs) a.stack.emplace_back(ActType::Inform, slot, value);
  a.stack.emplace_back(ActType::Hello);
  return a;
}

void agenda_receive(Agenda &a, const std::vector<DialogueAct> &system_acts, Rng &rng, const AgendaConfig &cfg) {
  a.violation_flag = a.user_said_bye && !contains_act(system_acts, ActType::Bye);
  if (a.user_said_bye) return;

  const auto obs = a.monitor.observe(system_acts);

  // R1: answer system requests (and confirmations) from the goal.
  for (const auto &act : system_acts) {
    if (!act.slot() || !a.ontology->is_informable(*act.slot())) continue;
    const std::string &slot = *act.slot();
    const std::string wanted = goal_value_or_dontcare(a.goal, slot);
    if (act.type() == ActType::Request) {
      push_unique(a, DialogueAct(ActType::Inform, slot, wanted));
    } else if (act.type() == ActType::Confirm && act.value()) {
      if (*act.value() == wanted || wanted == kDontcare) {
        push_unique(a, DialogueAct(ActType::Affirm));
      } else {
        push_unique(a, DialogueAct(ActType::Inform, slot, wanted));
        push_unique(a, DialogueAct(ActType::Negate));
      }
    }
  }

  // R2: contradicted constraints are restated, sometimes with reqalts.
  if (!obs.violated_slots.empty()) {
    for (const auto &slot : obs.violated_slots) push_unique(a, DialogueAct(ActType::Inform, slot, a.goal.constraints.at(slot)));
    if (rng.bernoulli(cfg.reqalts_probability)) push_unique(a, DialogueAct(ActType::Reqalts));
  }

  // R3: while a consistent offer stands, unanswered requests stay pending.
  a.offered_entity = a.monitor.offered_entity();
  if (a.offered_entity) {
    for (const auto &r : a.goal.requests) {
      if (a.monitor.fulfilled().count(r)) continue;
      DialogueAct req(ActType::Request, r);
      if (!on_stack(a, req)) push_unique(a, req);
    }
  }

  // R4: answered requests leave the agenda.
  a.fulfilled_requests = a.monitor.fulfilled();
  for (const auto &slot : a.fulfilled_requests) {
    DialogueAct req(ActType::Request, slot);
    a.stack.erase(std::remove(a.stack.begin(), a.stack.end(), req), a.stack.end());
  }

  // R5: repeat / null from the system replays the previous user turn.
  if (system_acts.empty() || contains_act(system_acts, ActType::Repeat) || contains_act(system_acts, ActType::Null)) {
    for (auto it = a.last_user_acts.rbegin(); it != a.last_user_acts.rend(); ++it)
      if (it->type() != ActType::Bye) push_unique(a, *it);
  }

  if (obs.canthelp) {
    if (!a.monitor.goal_satisfiable()) {
      clear_to_bye(a);
      return;
    }
    for (const auto &[slot, value] : a.goal.constraints) push_unique(a, DialogueAct(ActType::Inform, slot, value));
  }

  // R6: everything achieved, only the goodbye remains.
  const bool all_conveyed = std::all_of(a.goal.constraints.begin(), a.goal.constraints.end(),
                                        [&](const auto &kv) { return a.conveyed.count(kv.first) > 0; });
  const bool all_fulfilled = std::includes(a.fulfilled_requests.begin(), a.fulfilled_requests.end(),
                                           a.goal.requests.begin(), a.goal.requests.end());
  if (all_conveyed && a.offered_entity && all_fulfilled) clear_to_bye(a);
}

std::vector<DialogueAct> agenda_respond(Agenda &a, Rng &rng, const AgendaConfig &cfg) {
  std::vector<DialogueAct> out;
  if (a.user_said_bye) {
    out.emplace_back(ActType::Bye);
  } else if (a.stack.empty()) {
    out.emplace_back(ActType::Null);
  } else {
    const std::size_t k = std::min<std::size_t>({static_cast<std::size_t>(1 + rng.geometric(cfg.pop_geometric_p)),
                                                  a.stack.size(), kMaxUserActs});
    while (out.size() < k && !a.stack.empty()) {
      const DialogueAct top = a.stack.back();
      // bye() is only ever said on its own, once nothing else is pending.
      if (top.type() == ActType::Bye && !out.empty()) break;
      a.stack.pop_back();
      out.push_back(top);
      if (top.type() == ActType::Bye) {
        a.user_said_bye = true;
        break;
      }
    }
  }
  for (const auto &act : out)
    if (act.type() == ActType::Inform && act.slot() && a.goal.constraints.count(*act.slot())) a.conveyed.insert(*act.slot());
  a.last_user_acts = out;
  return out;
}

bool agenda_outcome(const Agenda &a, const Ontology & /*o*/) { return a.monitor.success(); }

AgendaSimulator::AgendaSimulator(const Ontology &o, AgendaConfig cfg) : ontology_(o), cfg_(cfg) {}

void AgendaSimulator::reset(const UserGoal &goal, Rng &rng) { agenda_ = agenda_init(goal, ontology_, rng); }

UserResponse AgendaSimulator::respond(const std::vector<DialogueAct> &system_acts, Rng &rng) {
  agenda_receive(agenda_, system_acts, rng, cfg_);
  UserResponse r;
  r.violation = agenda_.violation_flag;
  r.acts = agenda_respond(agenda_, rng, cfg_);
  r.done = agenda_.user_said_bye;
  return r;
}

bool AgendaSimulator::success() const { return agenda_outcome(agenda_, ontology_); }

NeuralSimulator::NeuralSimulator(std::shared_ptr<const GeneratorModel> model, const Ontology &o, std::string id,
                                 DecodeMode mode)
    : model_(std::move(model)), ontology_(o), id_(std::move(id)), mode_(mode) {}

void NeuralSimulator::reset(const UserGoal &goal, Rng & /*rng*/) {
  goal_ = goal;
  monitor_ = GoalMonitor(goal, ontology_);
  state_ = nn::RecurrentState::zeros(model_->hidden());
  last_user_tokens_.clear();
  first_turn_ = true;
  user_said_bye_ = false;
}

UserResponse NeuralSimulator::respond(const std::vector<DialogueAct> &system_acts, Rng &rng) {
  UserResponse r;
  r.violation = user_said_bye_ && !contains_act(system_acts, ActType::Bye);
  monitor_.observe(system_acts);
  const auto x = model_->layout().featurize(last_user_tokens_, system_acts, goal_, first_turn_);
  first_turn_ = false;
  state_ = encode_turn(*model_, state_, x);
  const auto rollout = generate_response(*model_, state_, mode_, rng);
  const auto &vocab = model_->layout().user_vocab();
  for (int id : rollout.tokens) {
    if (vocab.is_special(id)) continue;
    try {
      r.acts.push_back(relexicalize(ActToken::from_string(vocab.token(id)), goal_, rng, ontology_));
    } catch (const Error &) {
      // token pattern that cannot be realized against this goal/ontology
    }
  }
  last_user_tokens_ = delexicalize_all(r.acts, goal_);
  if (contains_act(r.acts, ActType::Bye)) user_said_bye_ = true;
  r.done = user_said_bye_;
  return r;
}

} // namespace simlab
