#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "simlab/manager.hpp"
#include "simlab/ontology.hpp"
#include "simlab/policy.hpp"
#include "simlab/simulator.hpp"

namespace simlab {

// Request-level failures of the service, mapped onto HTTP statuses.
class NotFoundError : public Error {
public:
  using Error::Error;
};
class BadRequestError : public Error {
public:
  using Error::Error;
};
class ConflictError : public Error {
public:
  using Error::Error;
};

struct Questionnaire {
  bool q1 = false;  // recommended venue matched the constraints
  bool q2 = false;  // got all requested information
  int q3 = 1, q4 = 1, q5 = 1, q6 = 1;

  // Throws ValidationError on any missing, extra or out-of-range field.
  static Questionnaire from_json(const nlohmann::json &j);
  nlohmann::json to_json() const;
};

// Text to acts: the value aliases and regex patterns of patterns.json plus
// every ontology value matched as a whole word.
class PatternMatcher {
public:
  explicit PatternMatcher(const Ontology &o);  // bundled pattern table
  PatternMatcher(const Ontology &o, const nlohmann::json &table);
  static PatternMatcher load(const Ontology &o, const std::filesystem::path &path);

  // Acts in order of first appearance; null() when nothing matched.
  std::vector<DialogueAct> parse(const std::string &text) const;

private:
  struct Rule {
    std::regex re;
    DialogueAct act;
  };
  struct ValueRule {
    std::regex re;
    std::string slot, value;
  };
  std::vector<std::pair<std::regex, std::string>> aliases_;
  std::vector<Rule> rules_;
  std::vector<ValueRule> values_;
};

// "inform(food=indian), request(address)" style input. Returns nullopt when
// the text is not entirely act expressions.
std::optional<std::vector<DialogueAct>> parse_act_expressions(const std::string &text);

// Instruction text for a goal, e.g. "You want to find a restaurant in the
// moderate price range that serves Indian food, and get the address."
std::string scenario_text(const UserGoal &goal);

std::string sha256_hex(const std::string &data);

struct ServedPolicy {
  std::string id;
  PolicyModel model;
};

// One conversation between a person and a policy. Not thread-safe on its own.
class ChatSession {
public:
  struct Reply {
    std::vector<DialogueAct> user_acts;
    std::vector<DialogueAct> system_acts;
    std::string text;
    bool done = false;
    int turn = 0;
    nlohmann::json to_json() const;
  };

  ChatSession(std::string id, const ServedPolicy &policy, UserGoal goal, const Ontology &o,
              const TemplateTable &templates, std::uint64_t seed, int turn_cap = kTurnCap);

  const std::string &id() const { return id_; }
  const ServedPolicy &policy() const { return *policy_; }
  const UserGoal &goal() const { return goal_; }
  const std::string &scenario() const { return scenario_; }
  const Reply &opening() const { return opening_; }
  Reply step(const std::vector<DialogueAct> &user_acts);

  bool done() const { return done_; }
  bool success() const { return monitor_.success(); }
  int length() const { return length_; }  // system turns after the welcome
  nlohmann::json transcript() const;
  std::string transcript_digest() const;

  bool closed = false;  // questionnaire stored or session abandoned

private:
  std::string id_;
  const ServedPolicy *policy_;
  UserGoal goal_;
  const Ontology *ontology_;
  const TemplateTable *templates_;
  std::string scenario_;
  Rng rng_;
  int turn_cap_;
  DialogueState state_;
  GoalMonitor monitor_;
  FeatureSpace space_;
  std::vector<SummaryAction> actions_;
  std::vector<Reply> turns_;
  Reply opening_;
  int length_ = 0;
  bool done_ = false;
};

struct ServiceConfig {
  std::filesystem::path results_path = "results.jsonl";
  std::uint64_t seed = 0;
  int turn_cap = kTurnCap;
  GoalSamplerConfig goals;
};

// Session registry behind the HTTP endpoints. Sessions are created in
// round-robin order over the policies; each request locks only its session.
class EvaluationService {
public:
  EvaluationService(const Ontology &o, std::vector<ServedPolicy> policies, ServiceConfig cfg,
                    TemplateTable templates = {}, std::optional<PatternMatcher> matcher = std::nullopt);

  nlohmann::json create_session();
  nlohmann::json utterance(const std::string &id, const nlohmann::json &body);
  void questionnaire(const std::string &id, const nlohmann::json &body);
  void abandon(const std::string &id);
  nlohmann::json transcript(const std::string &id);
  nlohmann::json health() const;
  // Stores every open session as abandoned (questionnaire: null).
  void abandon_all();

  std::size_t num_policies() const { return policies_.size(); }

private:
  struct Slot {
    std::mutex mu;
    std::unique_ptr<ChatSession> session;
  };
  std::shared_ptr<Slot> find(const std::string &id);
  void append_record(const ChatSession &s, const std::optional<Questionnaire> &q);

  const Ontology &ontology_;
  std::vector<ServedPolicy> policies_;
  ServiceConfig cfg_;
  TemplateTable templates_;
  PatternMatcher matcher_;

  mutable std::mutex registry_mu_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::size_t created_ = 0;
  Rng rng_;

  std::mutex results_mu_;
};

// HTTP front end under /v1. start() binds (port 0 picks a free port) and
// serves on a background thread.
class HttpServer {
public:
  explicit HttpServer(EvaluationService &service, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~HttpServer();
  HttpServer(const HttpServer &) = delete;
  HttpServer &operator=(const HttpServer &) = delete;

  int start(const std::string &host, int port);
  void stop();
  void wait();  // blocks until stop()
  int port() const { return port_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

// Terminal chat: one session, act expressions or free text per line, /quit to
// end. Prints the success verdict at the end.
void run_chat(const ServedPolicy &policy, const Ontology &o, const UserGoal &goal, std::istream &in,
              std::ostream &out, std::uint64_t seed, const TemplateTable &templates = {},
              const std::optional<PatternMatcher> &matcher = std::nullopt);

} // namespace simlab
