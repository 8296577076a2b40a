#include "simlab/service.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include "simlab/resources_embedded.hpp"

namespace simlab {

// --- questionnaire ---------------------------------------------------------

namespace {

bool yes_no(const nlohmann::json &v, const std::string &key) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = to_lower(trim(v.get<std::string>()));
    if (s == "yes") return true;
    if (s == "no") return false;
  }
  throw ValidationError(key + " must be yes or no");
}

int likert(const nlohmann::json &v, const std::string &key) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) throw ValidationError(key + " must be an integer 1..6");
  const auto x = v.get<long long>();
  if (x < 1 || x > 6) throw ValidationError(key + " must be in 1..6, got " + std::to_string(x));
  return static_cast<int>(x);
}

} // namespace

Questionnaire Questionnaire::from_json(const nlohmann::json &j) {
  if (!j.is_object()) throw ValidationError("questionnaire must be an object");
  for (const auto &[key, _] : j.items())
    if (key.size() != 2 || key[0] != 'q' || key[1] < '1' || key[1] > '6')
      throw ValidationError("unknown questionnaire field: " + key);
  for (int i = 1; i <= 6; ++i)
    if (!j.contains("q" + std::to_string(i))) throw ValidationError("missing q" + std::to_string(i));
  Questionnaire q;
  q.q1 = yes_no(j.at("q1"), "q1");
  q.q2 = yes_no(j.at("q2"), "q2");
  q.q3 = likert(j.at("q3"), "q3");
  q.q4 = likert(j.at("q4"), "q4");
  q.q5 = likert(j.at("q5"), "q5");
  q.q6 = likert(j.at("q6"), "q6");
  return q;
}

nlohmann::json Questionnaire::to_json() const {
  return {{"q1", q1 ? "yes" : "no"}, {"q2", q2 ? "yes" : "no"}, {"q3", q3}, {"q4", q4}, {"q5", q5}, {"q6", q6}};
}

// --- text understanding ----------------------------------------------------

namespace {

std::regex word_regex(const std::string &phrase) {
  std::string escaped;
  for (char c : phrase) {
    if (std::string("\\^$.|?*+()[]{}").find(c) != std::string::npos) escaped += '\\';
    escaped += c;
  }
  return std::regex("\\b" + escaped + "\\b", std::regex::ECMAScript | std::regex::icase);
}

} // namespace

PatternMatcher::PatternMatcher(const Ontology &o) : PatternMatcher(o, nlohmann::json::parse(resources::kPatternsJson)) {}

PatternMatcher::PatternMatcher(const Ontology &o, const nlohmann::json &table) {
  try {
    const auto aliases = table.value("value_aliases", nlohmann::json::object());
    for (const auto &[alias, value] : aliases.items())
      aliases_.emplace_back(word_regex(alias), value.get<std::string>());
    for (const auto &p : table.at("patterns"))
      rules_.push_back({std::regex(p.at("match").get<std::string>(), std::regex::ECMAScript | std::regex::icase),
                        parse_act(p.at("act").get<std::string>())});
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("malformed pattern table: ") + e.what());
  } catch (const std::regex_error &e) {
    throw DataError(std::string("bad pattern in table: ") + e.what());
  }
  for (const auto &slot : o.informable_slots())
    for (const auto &v : o.values(slot)) values_.push_back({word_regex(v), slot, v});
}

PatternMatcher PatternMatcher::load(const Ontology &o, const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pattern table: " + path.string());
  try {
    return PatternMatcher(o, nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception &e) {
    throw DataError("pattern table is not valid JSON: " + std::string(e.what()));
  }
}

std::vector<DialogueAct> PatternMatcher::parse(const std::string &raw) const {
  std::string text = to_lower(raw);
  for (const auto &[re, value] : aliases_) text = std::regex_replace(text, re, value);

  std::vector<std::pair<std::size_t, DialogueAct>> found;
  std::set<std::string> dontcare_slots;
  for (const auto &r : rules_) {
    std::smatch m;
    if (!std::regex_search(text, m, r.re)) continue;
    found.emplace_back(static_cast<std::size_t>(m.position(0)), r.act);
    if (r.act.type() == ActType::Inform && r.act.value() == kDontcare) dontcare_slots.insert(*r.act.slot());
  }
  for (const auto &v : values_) {
    if (dontcare_slots.count(v.slot)) continue;
    std::smatch m;
    if (std::regex_search(text, m, v.re))
      found.emplace_back(static_cast<std::size_t>(m.position(0)), DialogueAct(ActType::Inform, v.slot, v.value));
  }
  std::stable_sort(found.begin(), found.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
  std::vector<DialogueAct> acts;
  for (auto &[_, act] : found)
    if (std::find(acts.begin(), acts.end(), act) == acts.end()) acts.push_back(act);
  if (acts.empty()) acts.emplace_back(ActType::Null);
  return acts;
}

std::optional<std::vector<DialogueAct>> parse_act_expressions(const std::string &text) {
  static const std::regex expr(R"(\s*([a-z_]+\([^()]*\))\s*[,;]?)", std::regex::icase);
  std::vector<DialogueAct> acts;
  auto begin = std::sregex_iterator(text.begin(), text.end(), expr);
  std::size_t consumed = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    if (static_cast<std::size_t>(it->position(0)) != consumed) return std::nullopt;
    consumed += static_cast<std::size_t>(it->length(0));
    try {
      acts.push_back(parse_act((*it)[1].str()));
    } catch (const Error &) {
      return std::nullopt;
    }
  }
  if (acts.empty() || !trim(text.substr(consumed)).empty()) return std::nullopt;
  return acts;
}

// --- scenario --------------------------------------------------------------

namespace {

std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string join_and(const std::vector<std::string> &parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += i + 1 == parts.size() ? " and " : ", ";
    out += parts[i];
  }
  return out;
}

std::string request_phrase(const std::string &slot) {
  if (slot == "phone") return "phone number";
  if (slot == "pricerange") return "price range";
  return slot;
}

} // namespace

std::string scenario_text(const UserGoal &goal) {
  std::vector<std::string> where, dontcare;
  std::string serves;
  for (const auto &[slot, value] : goal.constraints) {
    if (value == kDontcare) {
      dontcare.push_back(slot == "food" ? "the type of food" : "the " + request_phrase(slot));
      continue;
    }
    if (slot == "food") {
      serves = " that serves " + capitalized(value) + " food";
    } else if (slot == "area") {
      where.push_back(value == "centre" ? "in the centre of town" : "in the " + value + " part of town");
    } else if (slot == "pricerange") {
      where.push_back("in the " + value + " price range");
    } else {
      where.push_back("with " + request_phrase(slot) + " " + value);
    }
  }
  std::string s = "You want to find a restaurant";
  if (!where.empty()) s += " " + join_and(where);
  s += serves;
  std::vector<std::string> reqs;
  for (const auto &r : goal.requests) reqs.push_back(request_phrase(r));
  if (!reqs.empty()) s += ", and get the " + join_and(reqs);
  s += ".";
  if (!dontcare.empty()) s += " You don't care about " + join_and(dontcare) + ".";
  return s;
}

std::string sha256_hex(const std::string &data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return out.str();
}

// --- session ---------------------------------------------------------------

nlohmann::json ChatSession::Reply::to_json() const {
  return {{"user_acts", serialize_acts(user_acts)},
          {"system", {{"acts", serialize_acts(system_acts)}, {"text", text}}},
          {"done", done},
          {"turn", turn}};
}

ChatSession::ChatSession(std::string id, const ServedPolicy &policy, UserGoal goal, const Ontology &o,
                         const TemplateTable &templates, std::uint64_t seed, int turn_cap)
    : id_(std::move(id)), policy_(&policy), goal_(std::move(goal)), ontology_(&o), templates_(&templates),
      scenario_(scenario_text(goal_)), rng_(seed), turn_cap_(turn_cap), state_(initial_state(o)), monitor_(goal_, o),
      space_(o), actions_(summary_actions(o)) {
  if (policy.model.num_features() != space_.width() || policy.model.num_actions() != actions_.size())
    throw DataError("policy " + policy.id + " does not fit this ontology");
  opening_.system_acts = {DialogueAct(ActType::Welcomemsg)};
  opening_.text = templates.realize(opening_.system_acts);
}

ChatSession::Reply ChatSession::step(const std::vector<DialogueAct> &user_acts) {
  if (done_) throw ConflictError("session " + id_ + " has ended");
  Reply r;
  r.user_acts = user_acts.empty() ? std::vector<DialogueAct>{DialogueAct(ActType::Null)} : user_acts;
  state_ = track(std::move(state_), r.user_acts);
  const auto a = greedy_action(policy_->model.q_values(space_.features(state_)));
  r.system_acts = realize_action(actions_.at(a), state_, *ontology_, rng_);
  observe_system(state_, r.system_acts);
  monitor_.observe(r.system_acts);
  r.text = templates_->realize(r.system_acts);
  ++length_;
  r.turn = length_;
  done_ = contains_act(r.user_acts, ActType::Bye) || length_ >= turn_cap_;
  r.done = done_;
  turns_.push_back(r);
  return r;
}

nlohmann::json ChatSession::transcript() const {
  nlohmann::json turns = nlohmann::json::array();
  turns.push_back(opening_.to_json());
  for (const auto &t : turns_) turns.push_back(t.to_json());
  return {{"session", id_},         {"policy", policy_->id}, {"scenario", scenario_},  {"goal", goal_to_json(goal_)},
          {"turns", turns},         {"done", done_},         {"success", success()}, {"length", length_}};
}

std::string ChatSession::transcript_digest() const { return sha256_hex(transcript().at("turns").dump()); }

// --- service ---------------------------------------------------------------

EvaluationService::EvaluationService(const Ontology &o, std::vector<ServedPolicy> policies, ServiceConfig cfg,
                                     TemplateTable templates, std::optional<PatternMatcher> matcher)
    : ontology_(o), policies_(std::move(policies)), cfg_(std::move(cfg)), templates_(std::move(templates)),
      matcher_(matcher ? std::move(*matcher) : PatternMatcher(o)), rng_(cfg_.seed) {
  if (policies_.empty()) throw UsageError("the service needs at least one policy");
}

nlohmann::json EvaluationService::create_session() {
  std::unique_ptr<ChatSession> s;
  {
    std::lock_guard<std::mutex> lock(registry_mu_);
    const std::size_t k = created_++;
    char id[32];
    std::snprintf(id, sizeof id, "s%06zu", k + 1);
    Rng r = rng_.split();
    UserGoal goal = sample_goal(ontology_, r, cfg_.goals);
    s = std::make_unique<ChatSession>(id, policies_[k % policies_.size()], std::move(goal), ontology_, templates_,
                                      r.next(), cfg_.turn_cap);
  }
  nlohmann::json out = {{"session", s->id()}, {"scenario", s->scenario()}, {"goal", goal_to_json(s->goal())}};
  const auto open = s->opening().to_json();
  out["system"] = open.at("system");
  out["turn"] = 0;
  out["done"] = false;
  auto slot = std::make_shared<Slot>();
  slot->session = std::move(s);
  std::lock_guard<std::mutex> lock(registry_mu_);
  sessions_[out.at("session").get<std::string>()] = slot;
  return out;
}

std::shared_ptr<EvaluationService::Slot> EvaluationService::find(const std::string &id) {
  std::lock_guard<std::mutex> lock(registry_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session: " + id);
  return it->second;
}

nlohmann::json EvaluationService::utterance(const std::string &id, const nlohmann::json &body) {
  auto slot = find(id);
  std::vector<DialogueAct> acts;
  if (!body.is_object()) throw BadRequestError("body must be a JSON object");
  if (body.contains("acts")) {
    const auto &a = body.at("acts");
    if (!a.is_array()) throw BadRequestError("acts must be an array of act strings");
    try {
      for (const auto &x : a) {
        if (!x.is_string()) throw BadRequestError("acts must be an array of act strings");
        acts.push_back(parse_act(x.get<std::string>()));
      }
    } catch (const DataError &e) {
      throw BadRequestError(std::string("bad act: ") + e.what());
    }
  } else if (body.contains("text") && body.at("text").is_string()) {
    const auto text = body.at("text").get<std::string>();
    auto exprs = parse_act_expressions(text);
    acts = exprs ? *exprs : matcher_.parse(text);
  } else {
    throw BadRequestError("body needs either \"text\" (string) or \"acts\" (array)");
  }
  std::lock_guard<std::mutex> lock(slot->mu);
  if (slot->session->closed) throw ConflictError("session " + id + " is closed");
  return slot->session->step(acts).to_json();
}

void EvaluationService::questionnaire(const std::string &id, const nlohmann::json &body) {
  auto slot = find(id);
  if (!body.is_object()) throw BadRequestError("body must be a JSON object");
  const auto q = Questionnaire::from_json(body);
  std::lock_guard<std::mutex> lock(slot->mu);
  if (slot->session->closed) throw ConflictError("session " + id + " already has a stored record");
  append_record(*slot->session, q);
  slot->session->closed = true;
}

void EvaluationService::abandon(const std::string &id) {
  auto slot = find(id);
  std::lock_guard<std::mutex> lock(slot->mu);
  if (slot->session->closed) throw ConflictError("session " + id + " already has a stored record");
  append_record(*slot->session, std::nullopt);
  slot->session->closed = true;
}

void EvaluationService::abandon_all() {
  std::vector<std::shared_ptr<Slot>> all;
  {
    std::lock_guard<std::mutex> lock(registry_mu_);
    for (auto &[_, s] : sessions_) all.push_back(s);
  }
  for (auto &slot : all) {
    std::lock_guard<std::mutex> lock(slot->mu);
    if (slot->session->closed) continue;
    append_record(*slot->session, std::nullopt);
    slot->session->closed = true;
  }
}

nlohmann::json EvaluationService::transcript(const std::string &id) {
  auto slot = find(id);
  std::lock_guard<std::mutex> lock(slot->mu);
  auto t = slot->session->transcript();
  t["closed"] = slot->session->closed;
  return t;
}

nlohmann::json EvaluationService::health() const {
  std::lock_guard<std::mutex> lock(registry_mu_);
  nlohmann::json ids = nlohmann::json::array();
  for (const auto &p : policies_) ids.push_back(p.id);
  return {{"status", "ok"}, {"policies", ids}, {"sessions", sessions_.size()}};
}

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace

void EvaluationService::append_record(const ChatSession &s, const std::optional<Questionnaire> &q) {
  nlohmann::json rec = {{"session", s.id()},
                        {"policy", s.policy().id},
                        {"policy_sim", s.policy().model.metadata.simulator},
                        {"scenario", s.scenario()},
                        {"goal", goal_to_json(s.goal())},
                        {"length", s.length()},
                        {"done", s.done()},
                        {"success", s.success()},
                        {"transcript_digest", s.transcript_digest()},
                        {"questionnaire", q ? q->to_json() : nlohmann::json(nullptr)},
                        {"timestamp", utc_timestamp()}};
  std::lock_guard<std::mutex> lock(results_mu_);
  std::ofstream f(cfg_.results_path, std::ios::app);
  if (!f) throw DataError("cannot append to " + cfg_.results_path.string());
  f << rec.dump() << "\n";
  f.flush();
  if (!f) throw DataError("write failed: " + cfg_.results_path.string());
}

// --- HTTP ------------------------------------------------------------------

struct HttpServer::Impl {
  httplib::Server server;
  std::thread thread;
};

namespace {

void send_json(httplib::Response &res, int status, const nlohmann::json &j) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

template <typename F> void guarded(httplib::Response &res, F &&f) {
  try {
    f();
  } catch (const NotFoundError &e) {
    send_json(res, 404, {{"error", e.what()}});
  } catch (const BadRequestError &e) {
    send_json(res, 400, {{"error", e.what()}});
  } catch (const ValidationError &e) {
    send_json(res, 422, {{"error", e.what()}});
  } catch (const ConflictError &e) {
    send_json(res, 409, {{"error", e.what()}});
  } catch (const std::exception &e) {
    send_json(res, 500, {{"error", e.what()}});
  }
}

nlohmann::json parse_body(const httplib::Request &req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception &) {
    throw BadRequestError("body is not valid JSON");
  }
}

} // namespace

HttpServer::HttpServer(EvaluationService &service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>()) {
  auto &svr = impl_->server;
  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"}});
  svr.Options(R"(/v1/.*)", [](const httplib::Request &, httplib::Response &res) { res.status = 204; });
  svr.Get("/v1/health", [&service](const httplib::Request &, httplib::Response &res) {
    guarded(res, [&] { send_json(res, 200, service.health()); });
  });
  svr.Post("/v1/session", [&service](const httplib::Request &, httplib::Response &res) {
    guarded(res, [&] { send_json(res, 201, service.create_session()); });
  });
  svr.Post(R"(/v1/session/([^/]+)/utterance)", [&service](const httplib::Request &req, httplib::Response &res) {
    guarded(res, [&] { send_json(res, 200, service.utterance(req.matches[1], parse_body(req))); });
  });
  svr.Post(R"(/v1/session/([^/]+)/questionnaire)", [&service](const httplib::Request &req, httplib::Response &res) {
    guarded(res, [&] {
      service.questionnaire(req.matches[1], parse_body(req));
      res.status = 204;
    });
  });
  svr.Get(R"(/v1/session/([^/]+)/transcript)", [&service](const httplib::Request &req, httplib::Response &res) {
    guarded(res, [&] { send_json(res, 200, service.transcript(req.matches[1])); });
  });
  svr.Delete(R"(/v1/session/([^/]+))", [&service](const httplib::Request &req, httplib::Response &res) {
    guarded(res, [&] {
      service.abandon(req.matches[1]);
      res.status = 204;
    });
  });
  if (static_dir && !svr.set_mount_point("/", static_dir->string()))
    throw UsageError("static directory not found: " + static_dir->string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string &host, int port) {
  auto &svr = impl_->server;
  if (port == 0) {
    port_ = svr.bind_to_any_port(host);
  } else {
    port_ = svr.bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) throw UsageError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void HttpServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

// --- terminal chat ---------------------------------------------------------

void run_chat(const ServedPolicy &policy, const Ontology &o, const UserGoal &goal, std::istream &in, std::ostream &out,
              std::uint64_t seed, const TemplateTable &templates, const std::optional<PatternMatcher> &matcher) {
  const PatternMatcher pm = matcher ? *matcher : PatternMatcher(o);
  ChatSession s("chat", policy, goal, o, templates, seed);
  out << "Scenario: " << s.scenario() << "\n";
  out << "system: " << s.opening().text << "\n";
  std::string line;
  while (!s.done()) {
    out << "> " << std::flush;
    if (!std::getline(in, line)) break;
    const auto text = trim(line);
    if (text == "/quit") break;
    if (text.empty()) continue;
    auto exprs = parse_act_expressions(text);
    const auto acts = exprs ? *exprs : pm.parse(text);
    const auto r = s.step(acts);
    std::vector<std::string> parsed = serialize_acts(r.user_acts);
    out << "  [";
    for (std::size_t i = 0; i < parsed.size(); ++i) out << (i ? ", " : "") << parsed[i];
    out << "]\n";
    out << "system: " << r.text << "\n";
  }
  out << "Dialogue " << (s.success() ? "successful" : "not successful") << " after " << s.length()
      << " system turn(s).\n";
}

} // namespace simlab
