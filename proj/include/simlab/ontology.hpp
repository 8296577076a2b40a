#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "simlab/common.hpp"
#include "simlab/dialogue.hpp"

namespace simlab {

using Entity = std::map<std::string, std::string>;
using Constraints = std::map<std::string, std::string>;

// Single-domain ontology. Informable slots keep their declaration order, which
// fixes feature layouts downstream.
class Ontology {
public:
  Ontology(std::vector<std::pair<std::string, std::vector<std::string>>> informable,
           std::vector<std::string> requestable, std::vector<Entity> entities);

  const std::vector<std::string> &informable_slots() const { return slot_order_; }
  const std::vector<std::string> &values(const std::string &slot) const;
  bool is_informable(const std::string &slot) const;
  bool is_requestable(const std::string &slot) const;
  bool has_value(const std::string &slot, const std::string &value) const;
  const std::vector<std::string> &requestable_slots() const { return requestable_; }
  const std::vector<Entity> &entities() const { return entities_; }
  const Entity *find_entity(const std::string &name) const;

  // Non-fatal findings from construction (e.g. an empty entity list).
  const std::vector<std::string> &warnings() const { return warnings_; }

  nlohmann::json to_json() const;
  static Ontology from_json(const nlohmann::json &j);

private:
  std::vector<std::string> slot_order_;
  std::map<std::string, std::vector<std::string>> informable_;
  std::vector<std::string> requestable_;
  std::vector<Entity> entities_;
  std::vector<std::string> warnings_;
};

Ontology load_ontology(const std::filesystem::path &path);

// The bundled toy restaurant domain (identical to resources/toy_ontology.json).
const Ontology &toy_ontology();

struct GoalSamplerConfig {
  int min_constraints = 1;
  int max_constraints = 3;
  int min_requests = 1;
  int max_requests = 3;
  double satisfiable_bias = 0.9;
  int max_rejection_tries = 1000;
};

// Throws ValidationError when constraint slots are not informable, request
// slots not requestable, or either set is empty.
void validate_goal(const UserGoal &goal, const Ontology &o);

UserGoal sample_goal(const Ontology &o, Rng &rng, const GoalSamplerConfig &cfg = {});

// "dontcare" matches every value. Unknown slots raise ValidationError.
std::vector<const Entity *> matching_entities(const Ontology &o, const Constraints &constraints);

bool entity_matches(const Entity &e, const Constraints &constraints);

} // namespace simlab
