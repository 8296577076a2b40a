#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simlab/common.hpp"
#include "simlab/manager.hpp"
#include "simlab/ontology.hpp"
#include "simlab/simulator.hpp"

namespace simlab {

inline constexpr int kFeatureLayoutVersion = 1;

// The step penalty is charged per system turn.
struct RewardConfig {
  double success_bonus = 100.0;
  double turn_penalty = 1.0;
  double violation_penalty = 5.0;
  double gamma = 1.0;
  int turn_cap = kTurnCap;

  nlohmann::json to_json() const;
  static RewardConfig from_json(const nlohmann::json &j);
};

struct ErrorChannelConfig {
  double rate = 0.25;
  double value_substitution = 0.5;
  double slot_substitution = 0.2;
  double act_type_substitution = 0.15;
  double deletion = 0.15;

  void validate() const;  // throws UsageError
  nlohmann::json to_json() const;
  static ErrorChannelConfig from_json(const nlohmann::json &j);
};

// Each act is corrupted independently with probability cfg.rate. An act that
// cannot take the drawn corruption (e.g. value substitution on bye()) gets an
// act-type substitution instead, so every selected act is altered. A turn
// whose acts were all deleted becomes null().
std::vector<DialogueAct> corrupt(const std::vector<DialogueAct> &user_acts, const ErrorChannelConfig &cfg,
                                 const Ontology &o, Rng &rng, std::size_t *corrupted = nullptr);

// Binary state features: per slot {present, grounded}, match-count bucket
// {0,1,2-4,5+}, last user act type, offered flag, requested slots.
class FeatureSpace {
public:
  explicit FeatureSpace(const Ontology &o);
  std::size_t width() const { return width_; }
  std::vector<double> features(const DialogueState &s) const;
  std::vector<std::string> names() const;

private:
  const Ontology *ontology_;
  std::vector<std::string> slots_;
  std::vector<std::string> requestable_;
  std::size_t width_;
};

struct PolicyMetadata {
  std::string simulator;
  std::uint64_t seed = 0;
  double error_rate = 0.0;
  std::size_t episodes = 0;
};

class PolicyModel {
public:
  PolicyModel() = default;
  explicit PolicyModel(const Ontology &o);

  std::size_t num_actions() const { return actions_.size(); }
  std::size_t num_features() const { return num_features_; }
  const std::vector<SummaryAction> &actions() const { return actions_; }
  std::vector<double> &weights(std::size_t a) { return weights_[a]; }
  const std::vector<double> &weights(std::size_t a) const { return weights_[a]; }

  double q(std::size_t a, const std::vector<double> &phi) const;
  std::vector<double> q_values(const std::vector<double> &phi) const;
  double max_abs_weight() const;

  PolicyMetadata metadata;

  nlohmann::json to_json() const;
  static PolicyModel from_json(const nlohmann::json &j, const Ontology &o);
  void save(const std::filesystem::path &path) const;
  static PolicyModel load(const std::filesystem::path &path, const Ontology &o);

private:
  std::vector<SummaryAction> actions_;
  std::size_t num_features_ = 0;
  std::vector<std::vector<double>> weights_;
};

// Ties go to the lowest index.
std::size_t greedy_action(const std::vector<double> &q);
std::vector<double> boltzmann_probs(const std::vector<double> &q, double tau);

struct EpisodeStep {
  std::vector<double> features;
  std::size_t action = 0;
  double reward = 0.0;
};

struct EpisodeRecord {
  UserGoal goal;
  std::vector<EpisodeStep> steps;
  std::vector<Turn> turns;  // system acts and (uncorrupted) user reply per exchange
  bool success = false;
  int violations = 0;
  int length = 0;           // system policy turns
  bool hit_cap = false;
  double total_reward() const;
};

// Picks a summary-action index from the current state.
using ActionChooser = std::function<std::size_t(const DialogueState &, const std::vector<double> &phi, Rng &)>;

// Shared episode loop. The system opens with welcomemsg(); each system turn
// costs turn_penalty, every violation raised by the simulator costs
// violation_penalty and success earns success_bonus at termination. Ends on
// mutual bye (the system answers a user bye() with bye()) or at the turn cap.
EpisodeRecord run_dialogue(const ActionChooser &choose, UserSimulator &sim, const UserGoal &goal, const Ontology &o,
                           const RewardConfig &rc, const ErrorChannelConfig &err, Rng &rng);

// tau <= 0 means greedy.
EpisodeRecord run_episode(const PolicyModel &policy, UserSimulator &sim, const Ontology &o, const RewardConfig &rc,
                          const ErrorChannelConfig &err, double tau, Rng &rng);

struct PolicyTrainConfig {
  std::size_t episodes = 5000;
  std::uint64_t seed = 0;
  double alpha_start = 0.01;
  double alpha_end = 0.001;
  double tau_start = 10.0;
  double tau_end = 1.0;
  std::size_t window = 500;
  RewardConfig reward;
  ErrorChannelConfig error;
  GoalSamplerConfig goals;
};

struct CurvePoint {
  std::size_t episode = 0;
  double windowed_success = 0.0;
  double windowed_reward = 0.0;
  double alpha = 0.0;
  double tau = 0.0;
};

struct PolicyTrainResult {
  PolicyModel model;
  std::vector<CurvePoint> curve;  // one point per completed window
};

PolicyTrainResult train_policy(UserSimulator &sim, const Ontology &o, const PolicyTrainConfig &cfg);

struct PolicyEvalResult {
  std::size_t dialogues = 0;
  double success_rate = 0.0;  // fraction in [0,1]
  double mean_reward = 0.0;
  double mean_length = 0.0;
  nlohmann::json to_json() const;
};

PolicyEvalResult evaluate_policy(const PolicyModel &policy, UserSimulator &sim, const Ontology &o, std::size_t n,
                                 const ErrorChannelConfig &err, std::uint64_t seed, const RewardConfig &rc = {},
                                 const GoalSamplerConfig &goals = {});

} // namespace simlab
