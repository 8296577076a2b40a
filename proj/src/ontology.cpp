#include "simlab/ontology.hpp"

#include <algorithm>
#include <fstream>

#include "simlab/resources_embedded.hpp"

namespace simlab {

Ontology::Ontology(std::vector<std::pair<std::string, std::vector<std::string>>> informable,
                   std::vector<std::string> requestable, std::vector<Entity> entities)
    : requestable_(std::move(requestable)), entities_(std::move(entities)) {
  for (auto &[slot, values] : informable) {
    if (informable_.count(slot)) throw ValidationError("duplicate informable slot '" + slot + "'");
    if (values.empty()) throw ValidationError("informable slot '" + slot + "' has no values");
    slot_order_.push_back(slot);
    informable_[slot] = std::move(values);
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < entities_.size(); ++i) {
    const auto &e = entities_[i];
    auto name = e.find("name");
    if (name == e.end()) throw ValidationError("entity " + std::to_string(i) + " has no name");
    if (!names.insert(name->second).second)
      throw ValidationError("duplicate entity name '" + name->second + "'");
    for (const auto &[slot, value] : e) {
      if (!is_informable(slot)) continue;
      if (!has_value(slot, value))
        throw ValidationError("entity '" + name->second + "' has value '" + value +
                              "' outside the value set of slot '" + slot + "'");
    }
  }
  if (entities_.empty()) warnings_.push_back("ontology has no entities");
}

const std::vector<std::string> &Ontology::values(const std::string &slot) const {
  auto it = informable_.find(slot);
  if (it == informable_.end()) throw ValidationError("unknown informable slot '" + slot + "'");
  return it->second;
}

bool Ontology::is_informable(const std::string &slot) const { return informable_.count(slot) > 0; }

bool Ontology::is_requestable(const std::string &slot) const {
  return std::find(requestable_.begin(), requestable_.end(), slot) != requestable_.end();
}

bool Ontology::has_value(const std::string &slot, const std::string &value) const {
  auto it = informable_.find(slot);
  if (it == informable_.end()) return false;
  return std::find(it->second.begin(), it->second.end(), value) != it->second.end();
}

const Entity *Ontology::find_entity(const std::string &name) const {
  for (const auto &e : entities_) {
    auto it = e.find("name");
    if (it != e.end() && it->second == name) return &e;
  }
  return nullptr;
}

nlohmann::json Ontology::to_json() const {
  nlohmann::json j;
  j["informable"] = nlohmann::json::object();
  for (const auto &slot : slot_order_) j["informable"][slot] = informable_.at(slot);
  j["requestable"] = requestable_;
  j["entities"] = nlohmann::json::array();
  for (const auto &e : entities_) j["entities"].push_back(e);
  return j;
}

Ontology Ontology::from_json(const nlohmann::json &j) {
  if (!j.is_object()) throw DataError("ontology must be a JSON object");
  for (const char *key : {"informable", "requestable", "entities"})
    if (!j.contains(key)) throw DataError(std::string("ontology is missing '") + key + "'");
  std::vector<std::pair<std::string, std::vector<std::string>>> informable;
  try {
    for (const auto &[slot, values] : j.at("informable").items()) {
      std::vector<std::string> vs;
      for (const auto &v : values) vs.push_back(to_lower(trim(v.get<std::string>())));
      informable.emplace_back(to_lower(trim(slot)), std::move(vs));
    }
    std::vector<std::string> requestable;
    for (const auto &r : j.at("requestable")) requestable.push_back(to_lower(trim(r.get<std::string>())));
    std::vector<Entity> entities;
    for (const auto &ej : j.at("entities")) {
      Entity e;
      for (const auto &[slot, value] : ej.items())
        e[to_lower(trim(slot))] = to_lower(trim(value.get<std::string>()));
      entities.push_back(std::move(e));
    }
    return Ontology(std::move(informable), std::move(requestable), std::move(entities));
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("malformed ontology: ") + e.what());
  }
}

Ontology load_ontology(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ontology file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error &e) {
    throw DataError("malformed ontology file '" + path.string() + "': " + e.what());
  }
  return Ontology::from_json(j);
}

const Ontology &toy_ontology() {
  static const Ontology o = Ontology::from_json(nlohmann::json::parse(resources::kToyOntologyJson));
  return o;
}

void validate_goal(const UserGoal &goal, const Ontology &o) {
  if (goal.constraints.empty()) throw ValidationError("goal has no constraints");
  if (goal.requests.empty()) throw ValidationError("goal has no requests");
  for (const auto &[slot, value] : goal.constraints) {
    if (!o.is_informable(slot)) throw ValidationError("goal constraint slot '" + slot + "' is not informable");
    if (value != kDontcare && !o.has_value(slot, value))
      throw ValidationError("goal value '" + value + "' unknown for slot '" + slot + "'");
  }
  for (const auto &r : goal.requests)
    if (!o.is_requestable(r)) throw ValidationError("goal request slot '" + r + "' is not requestable");
}

bool entity_matches(const Entity &e, const Constraints &constraints) {
  for (const auto &[slot, value] : constraints) {
    if (value == kDontcare) continue;
    auto it = e.find(slot);
    if (it == e.end() || it->second != value) return false;
  }
  return true;
}

std::vector<const Entity *> matching_entities(const Ontology &o, const Constraints &constraints) {
  for (const auto &[slot, value] : constraints)
    if (!o.is_informable(slot)) throw ValidationError("unknown constraint slot '" + slot + "'");
  std::vector<const Entity *> out;
  for (const auto &e : o.entities())
    if (entity_matches(e, constraints)) out.push_back(&e);
  return out;
}

namespace {

std::vector<std::string> pick_distinct(const std::vector<std::string> &pool, int count, Rng &rng) {
  std::vector<std::string> items = pool;
  rng.shuffle(items);
  items.resize(static_cast<std::size_t>(std::min<int>(count, static_cast<int>(items.size()))));
  return items;
}

int draw_count(int lo, int hi, int available, Rng &rng) {
  hi = std::min(hi, available);
  lo = std::min(lo, hi);
  return lo + static_cast<int>(rng.below(static_cast<std::size_t>(hi - lo + 1)));
}

UserGoal draw_unconstrained(const Ontology &o, const GoalSamplerConfig &cfg, Rng &rng) {
  UserGoal g;
  const auto &slots = o.informable_slots();
  const int nc = draw_count(cfg.min_constraints, cfg.max_constraints, static_cast<int>(slots.size()), rng);
  for (const auto &slot : pick_distinct(slots, nc, rng)) {
    const auto &values = o.values(slot);
    g.constraints[slot] = values[rng.below(values.size())];
  }
  const auto &req = o.requestable_slots();
  const int nr = draw_count(cfg.min_requests, cfg.max_requests, static_cast<int>(req.size()), rng);
  for (const auto &r : pick_distinct(req, nr, rng)) g.requests.insert(r);
  return g;
}

} // namespace

UserGoal sample_goal(const Ontology &o, Rng &rng, const GoalSamplerConfig &cfg) {
  if (o.informable_slots().empty() || o.requestable_slots().empty())
    throw ValidationError("cannot sample goals from an ontology without informable/requestable slots");
  const bool want_satisfiable = rng.bernoulli(cfg.satisfiable_bias);
  UserGoal g = draw_unconstrained(o, cfg, rng);
  if (!want_satisfiable || o.entities().empty()) return g;
  for (int tries = 0; tries < cfg.max_rejection_tries; ++tries) {
    if (!matching_entities(o, g.constraints).empty()) return g;
    g = draw_unconstrained(o, cfg, rng);
  }
  return g;
}

} // namespace simlab
