#include "simlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace simlab {

nlohmann::json RewardConfig::to_json() const {
  return {{"success_bonus", success_bonus},
          {"turn_penalty", turn_penalty},
          {"violation_penalty", violation_penalty},
          {"gamma", gamma},
          {"turn_cap", turn_cap}};
}

RewardConfig RewardConfig::from_json(const nlohmann::json &j) {
  RewardConfig r;
  r.success_bonus = j.value("success_bonus", r.success_bonus);
  r.turn_penalty = j.value("turn_penalty", r.turn_penalty);
  r.violation_penalty = j.value("violation_penalty", r.violation_penalty);
  r.gamma = j.value("gamma", r.gamma);
  r.turn_cap = j.value("turn_cap", r.turn_cap);
  if (r.turn_cap < 1) throw UsageError("turn_cap must be >= 1");
  return r;
}

void ErrorChannelConfig::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) throw UsageError("error rate must lie in [0,1]");
  const double parts[] = {value_substitution, slot_substitution, act_type_substitution, deletion};
  double sum = 0.0;
  for (double p : parts) {
    if (p < 0.0) throw UsageError("corruption mixture weights must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw UsageError("corruption mixture must sum to 1");
}

nlohmann::json ErrorChannelConfig::to_json() const {
  return {{"rate", rate},
          {"value_substitution", value_substitution},
          {"slot_substitution", slot_substitution},
          {"act_type_substitution", act_type_substitution},
          {"deletion", deletion}};
}

ErrorChannelConfig ErrorChannelConfig::from_json(const nlohmann::json &j) {
  ErrorChannelConfig c;
  c.rate = j.value("rate", c.rate);
  c.value_substitution = j.value("value_substitution", c.value_substitution);
  c.slot_substitution = j.value("slot_substitution", c.slot_substitution);
  c.act_type_substitution = j.value("act_type_substitution", c.act_type_substitution);
  c.deletion = j.value("deletion", c.deletion);
  c.validate();
  return c;
}

namespace {

const std::vector<ActType> &user_act_types() {
  static const std::vector<ActType> types = {ActType::Inform, ActType::Request, ActType::Confirm, ActType::Deny,
                                             ActType::Affirm, ActType::Negate,  ActType::Hello,   ActType::Bye,
                                             ActType::Reqalts, ActType::Thankyou, ActType::Ack,   ActType::Repeat};
  return types;
}

template <typename T> const T &pick(const std::vector<T> &items, Rng &rng) { return items[rng.below(items.size())]; }

std::vector<std::string> without(const std::vector<std::string> &items, const std::string &drop) {
  std::vector<std::string> out;
  for (const auto &s : items)
    if (s != drop) out.push_back(s);
  return out;
}

DialogueAct substitute_type(const DialogueAct &act, const Ontology &o, Rng &rng) {
  std::vector<ActType> choices;
  for (ActType t : user_act_types())
    if (t != act.type()) choices.push_back(t);
  const ActType t = pick(choices, rng);
  switch (t) {
  case ActType::Inform:
  case ActType::Confirm:
  case ActType::Deny:
    if (act.slot() && act.value() && o.is_informable(*act.slot())) return DialogueAct(t, *act.slot(), *act.value());
    {
      const std::string &slot = pick(o.informable_slots(), rng);
      return DialogueAct(t, slot, pick(o.values(slot), rng));
    }
  case ActType::Request:
    if (act.slot()) return DialogueAct(t, *act.slot());
    return DialogueAct(t, pick(o.requestable_slots(), rng));
  default:
    return DialogueAct(t);
  }
}

std::optional<DialogueAct> substitute_value(const DialogueAct &act, const Ontology &o, Rng &rng) {
  if (!act.slot() || !act.value() || !o.is_informable(*act.slot())) return std::nullopt;
  const auto alts = without(o.values(*act.slot()), *act.value());
  if (alts.empty()) return std::nullopt;
  return DialogueAct(act.type(), *act.slot(), pick(alts, rng));
}

std::optional<DialogueAct> substitute_slot(const DialogueAct &act, const Ontology &o, Rng &rng) {
  if (!act.slot()) return std::nullopt;
  if (act.value()) {
    if (!o.is_informable(*act.slot())) return std::nullopt;
    const auto alts = without(o.informable_slots(), *act.slot());
    if (alts.empty()) return std::nullopt;
    const std::string &slot = pick(alts, rng);
    return DialogueAct(act.type(), slot, pick(o.values(slot), rng));
  }
  const auto alts = without(o.requestable_slots(), *act.slot());
  if (alts.empty()) return std::nullopt;
  return DialogueAct(act.type(), pick(alts, rng));
}

} // namespace

std::vector<DialogueAct> corrupt(const std::vector<DialogueAct> &user_acts, const ErrorChannelConfig &cfg,
                                 const Ontology &o, Rng &rng, std::size_t *corrupted) {
  if (cfg.rate <= 0.0) return user_acts;
  const std::vector<double> mixture = {cfg.value_substitution, cfg.slot_substitution, cfg.act_type_substitution,
                                       cfg.deletion};
  std::vector<DialogueAct> out;
  for (const auto &act : user_acts) {
    if (!rng.bernoulli(cfg.rate)) {
      out.push_back(act);
      continue;
    }
    if (corrupted) ++*corrupted;
    std::optional<DialogueAct> changed;
    switch (rng.categorical(mixture)) {
    case 0:
      changed = substitute_value(act, o, rng);
      break;
    case 1:
      changed = substitute_slot(act, o, rng);
      break;
    case 2:
      changed = substitute_type(act, o, rng);
      break;
    default:
      continue;  // deleted
    }
    out.push_back(changed ? *changed : substitute_type(act, o, rng));
  }
  if (out.empty() && !user_acts.empty()) out.emplace_back(ActType::Null);
  return out;
}

FeatureSpace::FeatureSpace(const Ontology &o)
    : ontology_(&o), slots_(o.informable_slots()), requestable_(o.requestable_slots()),
      width_(2 * slots_.size() + 4 + all_act_types().size() + 1 + requestable_.size()) {}

std::vector<double> FeatureSpace::features(const DialogueState &s) const {
  std::vector<double> phi(width_, 0.0);
  std::size_t k = 0;
  for (const auto &slot : slots_) {
    auto it = s.slots.find(slot);
    if (it != s.slots.end() && it->second.value) phi[k] = 1.0;
    if (it != s.slots.end() && it->second.grounded) phi[k + 1] = 1.0;
    k += 2;
  }
  std::size_t matches = 0;
  for (const Entity *e : matching_entities(*ontology_, state_constraints(s)))
    if (!s.rejected.count(e->at("name"))) ++matches;
  const std::size_t bucket = matches == 0 ? 0 : matches == 1 ? 1 : matches <= 4 ? 2 : 3;
  phi[k + bucket] = 1.0;
  k += 4;
  const auto &types = all_act_types();
  if (!s.last_user_acts.empty()) {
    const ActType last = s.last_user_acts.back().type();
    const auto pos = std::find(types.begin(), types.end(), last) - types.begin();
    phi[k + static_cast<std::size_t>(pos)] = 1.0;
  }
  k += types.size();
  if (s.offered_entity) phi[k] = 1.0;
  k += 1;
  for (const auto &slot : requestable_) {
    if (s.requested.count(slot)) phi[k] = 1.0;
    ++k;
  }
  return phi;
}

std::vector<std::string> FeatureSpace::names() const {
  std::vector<std::string> out;
  for (const auto &slot : slots_) {
    out.push_back("present(" + slot + ")");
    out.push_back("grounded(" + slot + ")");
  }
  for (const char *b : {"matches=0", "matches=1", "matches=2-4", "matches>=5"}) out.emplace_back(b);
  for (ActType t : all_act_types()) out.push_back("last_user=" + std::string(act_type_name(t)));
  out.emplace_back("offered");
  for (const auto &slot : requestable_) out.push_back("requested(" + slot + ")");
  return out;
}

PolicyModel::PolicyModel(const Ontology &o)
    : actions_(summary_actions(o)), num_features_(FeatureSpace(o).width()),
      weights_(actions_.size(), std::vector<double>(num_features_, 0.0)) {}

double PolicyModel::q(std::size_t a, const std::vector<double> &phi) const {
  const auto &w = weights_.at(a);
  double s = 0.0;
  for (std::size_t i = 0; i < num_features_; ++i) s += w[i] * phi[i];
  return s;
}

std::vector<double> PolicyModel::q_values(const std::vector<double> &phi) const {
  if (phi.size() != num_features_) throw ShapeError("feature vector width mismatch");
  std::vector<double> q(actions_.size());
  for (std::size_t a = 0; a < actions_.size(); ++a) q[a] = this->q(a, phi);
  return q;
}

double PolicyModel::max_abs_weight() const {
  double m = 0.0;
  for (const auto &w : weights_)
    for (double x : w) m = std::max(m, std::abs(x));
  return m;
}

nlohmann::json PolicyModel::to_json() const {
  nlohmann::json actions = nlohmann::json::array();
  for (const auto &a : actions_) actions.push_back(summary_action_name(a));
  return {{"kind", "policy"},
          {"feature_layout_version", kFeatureLayoutVersion},
          {"action_inventory_version", kActionInventoryVersion},
          {"actions", actions},
          {"num_features", num_features_},
          {"weights", weights_},
          {"metadata",
           {{"simulator", metadata.simulator},
            {"seed", metadata.seed},
            {"error_rate", metadata.error_rate},
            {"episodes", metadata.episodes}}}};
}

PolicyModel PolicyModel::from_json(const nlohmann::json &j, const Ontology &o) {
  try {
    if (j.at("kind") != "policy") throw DataError("not a policy file");
    if (j.at("feature_layout_version") != kFeatureLayoutVersion)
      throw DataError("policy feature layout version mismatch");
    if (j.at("action_inventory_version") != kActionInventoryVersion)
      throw DataError("policy action inventory version mismatch");
    PolicyModel p(o);
    std::vector<std::string> names = j.at("actions").get<std::vector<std::string>>();
    if (names.size() != p.actions_.size()) throw DataError("policy action set does not match the ontology");
    for (std::size_t a = 0; a < names.size(); ++a)
      if (names[a] != summary_action_name(p.actions_[a])) throw DataError("policy action '" + names[a] + "' unexpected");
    if (j.at("num_features").get<std::size_t>() != p.num_features_)
      throw DataError("policy feature width does not match the ontology");
    auto w = j.at("weights").get<std::vector<std::vector<double>>>();
    if (w.size() != p.actions_.size()) throw DataError("policy weight rows mismatch");
    for (const auto &row : w)
      if (row.size() != p.num_features_) throw DataError("policy weight columns mismatch");
    p.weights_ = std::move(w);
    const auto &m = j.at("metadata");
    p.metadata.simulator = m.value("simulator", "");
    p.metadata.seed = m.value("seed", std::uint64_t{0});
    p.metadata.error_rate = m.value("error_rate", 0.0);
    p.metadata.episodes = m.value("episodes", std::size_t{0});
    return p;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("malformed policy: ") + e.what());
  }
}

void PolicyModel::save(const std::filesystem::path &path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write policy '" + path.string() + "'");
  out << to_json().dump(1) << '\n';
}

PolicyModel PolicyModel::load(const std::filesystem::path &path, const Ontology &o) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open policy '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw DataError("malformed policy '" + path.string() + "': " + e.what());
  }
  return from_json(j, o);
}

std::size_t greedy_action(const std::vector<double> &q) {
  return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

std::vector<double> boltzmann_probs(const std::vector<double> &q, double tau) {
  std::vector<double> p(q.size(), 0.0);
  if (q.empty()) return p;
  if (tau <= 0.0) {
    p[greedy_action(q)] = 1.0;
    return p;
  }
  const double m = *std::max_element(q.begin(), q.end());
  double z = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) z += p[i] = std::exp((q[i] - m) / tau);
  for (double &x : p) x /= z;
  return p;
}

double EpisodeRecord::total_reward() const {
  double g = 0.0;
  for (const auto &s : steps) g += s.reward;
  return g;
}

EpisodeRecord run_dialogue(const ActionChooser &choose, UserSimulator &sim, const UserGoal &goal, const Ontology &o,
                           const RewardConfig &rc, const ErrorChannelConfig &err, Rng &rng) {
  const FeatureSpace space(o);
  const auto actions = summary_actions(o);
  EpisodeRecord rec;
  rec.goal = goal;
  sim.reset(goal, rng);
  DialogueState state = initial_state(o);

  std::vector<DialogueAct> sys = {DialogueAct(ActType::Welcomemsg)};
  UserResponse ur = sim.respond(sys, rng);
  rec.turns.push_back({sys, ur.acts});
  for (;;) {
    state = track(std::move(state), corrupt(ur.acts, err, o, rng));
    auto phi = space.features(state);
    const std::size_t a = choose(state, phi, rng);
    sys = realize_action(actions.at(a), state, o, rng);
    observe_system(state, sys);
    rec.steps.push_back({std::move(phi), a, -rc.turn_penalty});
    ++rec.length;

    const bool user_done = ur.done;
    ur = sim.respond(sys, rng);
    if (ur.violation) {
      ++rec.violations;
      rec.steps.back().reward -= rc.violation_penalty;
    }
    rec.turns.push_back({sys, ur.acts});
    if (user_done && contains_act(sys, ActType::Bye)) break;
    if (rec.length >= rc.turn_cap) {
      rec.hit_cap = true;
      break;
    }
  }
  rec.success = sim.success();
  if (rec.success) rec.steps.back().reward += rc.success_bonus;
  return rec;
}

EpisodeRecord run_episode(const PolicyModel &policy, UserSimulator &sim, const Ontology &o, const RewardConfig &rc,
                          const ErrorChannelConfig &err, double tau, Rng &rng) {
  // goal is drawn from the episode stream so one seed fixes the whole episode
  const UserGoal goal = sample_goal(o, rng);
  auto choose = [&](const DialogueState &, const std::vector<double> &phi, Rng &r) -> std::size_t {
    const auto q = policy.q_values(phi);
    if (tau <= 0.0) return greedy_action(q);
    return r.categorical(boltzmann_probs(q, tau));
  };
  return run_dialogue(choose, sim, goal, o, rc, err, rng);
}

namespace {

double linear(double start, double end, std::size_t i, std::size_t n) {
  if (n <= 1) return start;
  return start + (end - start) * static_cast<double>(i) / static_cast<double>(n - 1);
}

} // namespace

PolicyTrainResult train_policy(UserSimulator &sim, const Ontology &o, const PolicyTrainConfig &cfg) {
  cfg.error.validate();
  PolicyTrainResult res{PolicyModel(o), {}};
  res.model.metadata = {sim.id(), cfg.seed, cfg.error.rate, cfg.episodes};
  Rng master(cfg.seed);
  std::vector<double> window_success, window_reward;
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    const double alpha = linear(cfg.alpha_start, cfg.alpha_end, ep, cfg.episodes);
    const double tau = linear(cfg.tau_start, cfg.tau_end, ep, cfg.episodes);
    Rng rng = master.split();
    const UserGoal goal = sample_goal(o, rng, cfg.goals);
    auto choose = [&](const DialogueState &, const std::vector<double> &phi, Rng &r) -> std::size_t {
      return r.categorical(boltzmann_probs(res.model.q_values(phi), tau));
    };
    const EpisodeRecord rec = run_dialogue(choose, sim, goal, o, cfg.reward, cfg.error, rng);

    // every-visit MC: returns accumulated backwards, then updated in order
    std::vector<double> returns(rec.steps.size());
    double g = 0.0;
    for (std::size_t t = rec.steps.size(); t-- > 0;) {
      g = rec.steps[t].reward + cfg.reward.gamma * g;
      returns[t] = g;
    }
    for (std::size_t t = 0; t < rec.steps.size(); ++t) {
      const auto &step = rec.steps[t];
      const double delta = returns[t] - res.model.q(step.action, step.features);
      auto &w = res.model.weights(step.action);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += alpha * delta * step.features[i];
    }
    if (!std::isfinite(res.model.max_abs_weight())) throw NumericalError("policy weights diverged");

    window_success.push_back(rec.success ? 1.0 : 0.0);
    window_reward.push_back(rec.total_reward());
    if (window_success.size() == cfg.window || ep + 1 == cfg.episodes) {
      CurvePoint pt;
      pt.episode = ep + 1;
      for (std::size_t i = 0; i < window_success.size(); ++i) {
        pt.windowed_success += window_success[i];
        pt.windowed_reward += window_reward[i];
      }
      pt.windowed_success /= static_cast<double>(window_success.size());
      pt.windowed_reward /= static_cast<double>(window_reward.size());
      pt.alpha = alpha;
      pt.tau = tau;
      res.curve.push_back(pt);
      window_success.clear();
      window_reward.clear();
    }
  }
  return res;
}

nlohmann::json PolicyEvalResult::to_json() const {
  return {{"dialogues", dialogues},
          {"success_rate", success_rate},
          {"mean_reward", mean_reward},
          {"mean_length", mean_length}};
}

PolicyEvalResult evaluate_policy(const PolicyModel &policy, UserSimulator &sim, const Ontology &o, std::size_t n,
                                 const ErrorChannelConfig &err, std::uint64_t seed, const RewardConfig &rc,
                                 const GoalSamplerConfig &goals) {
  if (n == 0) throw UsageError("evaluation needs at least one dialogue");
  err.validate();
  Rng master(seed);
  PolicyEvalResult r;
  r.dialogues = n;
  auto greedy = [&](const DialogueState &, const std::vector<double> &phi, Rng &) {
    return greedy_action(policy.q_values(phi));
  };
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = master.split();
    const UserGoal goal = sample_goal(o, rng, goals);
    const auto rec = run_dialogue(greedy, sim, goal, o, rc, err, rng);
    r.success_rate += rec.success ? 1.0 : 0.0;
    r.mean_reward += rec.total_reward();
    r.mean_length += rec.length;
  }
  r.success_rate /= static_cast<double>(n);
  r.mean_reward /= static_cast<double>(n);
  r.mean_length /= static_cast<double>(n);
  return r;
}

} // namespace simlab
