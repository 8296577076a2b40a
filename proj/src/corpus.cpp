#include "simlab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace simlab {

namespace {

constexpr std::array<std::string_view, 3> kValueClassNames = {"VALUE_IN_GOAL", "VALUE_DONTCARE",
                                                              "VALUE_OTHER"};

} // namespace

std::string_view value_class_name(ValueClass c) { return kValueClassNames[static_cast<std::size_t>(c)]; }

std::string ActToken::to_string() const {
  std::string out(act_type_name(type));
  out += '(';
  if (slot) out += *slot;
  out += ')';
  if (value_class) {
    out += ':';
    out += value_class_name(*value_class);
  }
  return out;
}

ActToken ActToken::from_string(const std::string &text) {
  const auto open = text.find('(');
  const auto close = text.find(')', open == std::string::npos ? 0 : open);
  if (open == std::string::npos || close == std::string::npos)
    throw VocabularyError("malformed act token '" + text + "'");
  ActToken t{act_type_from_name(text.substr(0, open)), std::nullopt, std::nullopt};
  if (close > open + 1) t.slot = text.substr(open + 1, close - open - 1);
  if (close + 1 < text.size()) {
    if (text[close + 1] != ':') throw VocabularyError("malformed act token '" + text + "'");
    const std::string cls = text.substr(close + 2);
    bool found = false;
    for (std::size_t i = 0; i < kValueClassNames.size(); ++i) {
      if (kValueClassNames[i] == cls) {
        t.value_class = static_cast<ValueClass>(i);
        found = true;
      }
    }
    if (!found) throw VocabularyError("unknown value class in token '" + text + "'");
  }
  return t;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string> &content_tokens) {
  tokens_ = {std::string(kSosText), std::string(kEosText), std::string(kPadText), std::string(kUnkText)};
  std::set<std::string> sorted(content_tokens.begin(), content_tokens.end());
  for (const auto &t : tokens_) sorted.erase(t);
  tokens_.insert(tokens_.end(), sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i);
}

std::optional<int> Vocabulary::find(const std::string &token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::index_or_unk(const std::string &token) const { return find(token).value_or(kUnk); }

int Vocabulary::index(const std::string &token) const {
  auto i = find(token);
  if (!i) throw VocabularyError("token '" + token + "' is not in the vocabulary");
  return *i;
}

Vocabulary Vocabulary::from_json(const nlohmann::json &j) {
  auto tokens = j.get<std::vector<std::string>>();
  if (tokens.size() < kNumSpecialTokens || tokens[kSos] != kSosText || tokens[kEos] != kEosText ||
      tokens[kPad] != kPadText || tokens[kUnk] != kUnkText)
    throw DataError("vocabulary does not start with the reserved tokens");
  Vocabulary v(std::vector<std::string>(tokens.begin() + kNumSpecialTokens, tokens.end()));
  if (v.tokens_ != tokens) throw DataError("vocabulary tokens are not in canonical order");
  return v;
}

ActToken delexicalize(const DialogueAct &act, const UserGoal &goal) {
  ActToken t{act.type(), act.slot(), std::nullopt};
  if (act.value()) {
    auto it = goal.constraints.find(*act.slot());
    if (it != goal.constraints.end() && it->second == *act.value())
      t.value_class = ValueClass::InGoal;
    else if (*act.value() == kDontcare)
      t.value_class = ValueClass::Dontcare;
    else
      t.value_class = ValueClass::Other;
  }
  return t;
}

std::vector<std::string> delexicalize_all(const std::vector<DialogueAct> &acts, const UserGoal &goal) {
  std::vector<std::string> out;
  out.reserve(acts.size());
  for (const auto &a : acts) out.push_back(delexicalize(a, goal).to_string());
  return out;
}

namespace {

std::vector<std::string> slot_value_pool(const std::string &slot, const Ontology &o) {
  if (o.is_informable(slot)) return o.values(slot);
  std::set<std::string> pool;
  for (const auto &e : o.entities()) {
    auto it = e.find(slot);
    if (it != e.end()) pool.insert(it->second);
  }
  return {pool.begin(), pool.end()};
}

} // namespace

DialogueAct relexicalize(const ActToken &token, const UserGoal &goal, Rng &rng, const Ontology &o) {
  if (!token.value_class) return DialogueAct(token.type, token.slot);
  const std::string &slot = *token.slot;
  auto in_goal = goal.constraints.find(slot);
  switch (*token.value_class) {
  case ValueClass::InGoal:
    if (in_goal != goal.constraints.end()) return DialogueAct(token.type, slot, in_goal->second);
    return DialogueAct(token.type, slot, std::string(kDontcare));
  case ValueClass::Dontcare:
    return DialogueAct(token.type, slot, std::string(kDontcare));
  case ValueClass::Other: {
    std::vector<std::string> pool = slot_value_pool(slot, o);
    if (in_goal != goal.constraints.end())
      pool.erase(std::remove(pool.begin(), pool.end(), in_goal->second), pool.end());
    if (pool.empty()) return DialogueAct(token.type, slot, std::string(kDontcare));
    return DialogueAct(token.type, slot, pool[rng.below(pool.size())]);
  }
  }
  throw std::logic_error("unreachable value class");
}

std::vector<Dialogue> read_corpus(std::istream &in, const std::string &source_name) {
  std::vector<Dialogue> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(dialogue_from_json(nlohmann::json::parse(line)));
      if (out.back().turns.empty()) throw DataError("dialogue has no turns");
    } catch (const std::exception &e) {
      throw DataError(source_name + ":" + std::to_string(line_no) + ": malformed dialogue: " + e.what());
    }
  }
  return out;
}

std::vector<Dialogue> read_corpus(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file '" + path.string() + "'");
  return read_corpus(in, path.string());
}

void write_corpus(std::ostream &out, const std::vector<Dialogue> &dialogues) {
  for (const auto &d : dialogues) out << dialogue_to_json(d).dump() << '\n';
}

void write_corpus(const std::filesystem::path &path, const std::vector<Dialogue> &dialogues) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file '" + path.string() + "'");
  write_corpus(out, dialogues);
}

Vocabulary build_user_vocab(const std::vector<Dialogue> &dialogues) {
  std::vector<std::string> tokens;
  for (const auto &d : dialogues)
    for (const auto &t : d.turns)
      for (const auto &tok : delexicalize_all(t.user_acts, d.goal)) tokens.push_back(tok);
  return Vocabulary(tokens);
}

Vocabulary build_system_vocab(const std::vector<Dialogue> &dialogues) {
  std::vector<std::string> tokens;
  for (const auto &d : dialogues)
    for (const auto &t : d.turns)
      for (const auto &tok : delexicalize_all(t.system_acts, d.goal)) tokens.push_back(tok);
  return Vocabulary(tokens);
}

namespace {

void drop_null_user_turns(std::vector<Dialogue> &ds) {
  for (auto &d : ds) {
    std::vector<Turn> kept;
    for (auto &t : d.turns)
      if (!t.user_acts.empty()) kept.push_back(std::move(t));
    if (kept.empty() && !d.turns.empty()) kept.push_back(std::move(d.turns.front()));
    d.turns = std::move(kept);
  }
}

} // namespace

CorpusSplit make_split(std::vector<Dialogue> dialogues, const SplitSpec &spec) {
  if (spec.drop_null_turns) drop_null_user_turns(dialogues);
  CorpusSplit split;
  const bool by_ids = !spec.train_ids.empty() || !spec.dev_ids.empty() || !spec.test_ids.empty();
  if (by_ids) {
    std::map<std::string, int> assign;
    auto mark = [&](const std::vector<std::string> &ids, int which) {
      for (const auto &id : ids) {
        if (!assign.emplace(id, which).second) throw DataError("dialogue id '" + id + "' assigned to two splits");
      }
    };
    mark(spec.train_ids, 0);
    mark(spec.dev_ids, 1);
    mark(spec.test_ids, 2);
    for (auto &d : dialogues) {
      auto it = assign.find(d.id);
      if (it == assign.end()) continue;
      (it->second == 0 ? split.train : it->second == 1 ? split.dev : split.test).push_back(std::move(d));
    }
  } else {
    if (spec.train < 0 || spec.dev < 0 || spec.test < 0 || spec.train + spec.dev + spec.test > 1.0 + 1e-9)
      throw UsageError("split fractions must be non-negative and sum to at most 1");
    const std::size_t n = dialogues.size();
    const std::size_t n_train = std::min(n, static_cast<std::size_t>(std::llround(spec.train * n)));
    const std::size_t n_dev = std::min(n - n_train, static_cast<std::size_t>(std::llround(spec.dev * n)));
    const std::size_t n_test =
        std::min(n - n_train - n_dev, static_cast<std::size_t>(std::llround(spec.test * n)));
    for (std::size_t i = 0; i < n_train + n_dev + n_test; ++i) {
      auto &dst = i < n_train ? split.train : i < n_train + n_dev ? split.dev : split.test;
      dst.push_back(std::move(dialogues[i]));
    }
  }
  std::set<std::string> seen;
  for (const auto *part : {&split.train, &split.dev, &split.test})
    for (const auto &d : *part)
      if (!seen.insert(d.id).second) throw DataError("duplicate dialogue id '" + d.id + "'");
  if (split.train.empty()) throw DataError("training split is empty");
  split.vocab = build_user_vocab(split.train);
  split.sys_vocab = build_system_vocab(split.train);
  return split;
}

CorpusSplit load_corpus(const std::filesystem::path &path, const SplitSpec &spec) {
  return make_split(read_corpus(path), spec);
}

namespace {

std::string dstc2_slot(const std::string &slot) {
  if (slot == "addr") return "address";
  return slot;
}

std::optional<ActType> dstc2_act_type(const std::string &act) {
  static const std::map<std::string, ActType> aliases = {
      {"expl-conf", ActType::Confirm},
      {"impl-conf", ActType::Inform},
      {"canthelp.exception", ActType::Canthelp},
      {"confirm-domain", ActType::Null},
  };
  if (auto it = aliases.find(act); it != aliases.end()) return it->second;
  try {
    return act_type_from_name(act);
  } catch (const VocabularyError &) {
    return std::nullopt;
  }
}

void append_dstc2_acts(const nlohmann::json &acts, std::vector<DialogueAct> &out, std::size_t &skipped) {
  for (const auto &aj : acts) {
    const auto type = dstc2_act_type(aj.value("act", std::string()));
    if (!type) {
      ++skipped;
      continue;
    }
    const auto &slots = aj.contains("slots") ? aj.at("slots") : nlohmann::json::array();
    if (slots.empty()) {
      try {
        out.emplace_back(*type);
      } catch (const ValidationError &) {
        ++skipped;
      }
      continue;
    }
    for (const auto &pair : slots) {
      if (!pair.is_array() || pair.size() != 2) {
        ++skipped;
        continue;
      }
      std::string slot = to_lower(trim(pair[0].get<std::string>()));
      std::string value = pair[1].is_string() ? pair[1].get<std::string>() : pair[1].dump();
      value = to_lower(trim(value));
      try {
        if (*type == ActType::Request) {
          // DSTC-2 encodes requests as ["slot", <name>].
          out.emplace_back(*type, dstc2_slot(slot == "slot" ? value : slot));
        } else if (slot == "this" || slot == "count" || value.empty()) {
          ++skipped;
        } else {
          out.emplace_back(*type, dstc2_slot(slot), value);
        }
      } catch (const ValidationError &) {
        ++skipped;
      }
    }
  }
}

nlohmann::json read_json_file(const std::filesystem::path &p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error &e) {
    throw DataError("malformed JSON in '" + p.string() + "': " + e.what());
  }
}

} // namespace

std::vector<Dialogue> convert_dstc2(const std::filesystem::path &root, Dstc2ConvertStats *stats) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("DSTC-2 root '" + root.string() + "' is not a directory");
  std::vector<fs::path> sessions;
  for (const auto &entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().filename() == "label.json") sessions.push_back(entry.path().parent_path());
  std::sort(sessions.begin(), sessions.end());

  Dstc2ConvertStats local;
  std::vector<Dialogue> out;
  for (const auto &dir : sessions) {
    const auto log = read_json_file(dir / "log.json");
    const auto label = read_json_file(dir / "label.json");
    Dialogue d;
    d.id = label.value("session-id", dir.filename().string());
    const auto &goal = label.at("task-information").at("goal");
    for (const auto &c : goal.value("constraints", nlohmann::json::array()))
      d.goal.constraints[dstc2_slot(to_lower(c[0].get<std::string>()))] = to_lower(trim(c[1].get<std::string>()));
    for (const auto &r : goal.value("request-slots", nlohmann::json::array()))
      d.goal.requests.insert(dstc2_slot(to_lower(r.get<std::string>())));
    const auto &log_turns = log.at("turns");
    const auto &label_turns = label.at("turns");
    const std::size_t n = std::min(log_turns.size(), label_turns.size());
    for (std::size_t i = 0; i < n; ++i) {
      Turn t;
      append_dstc2_acts(log_turns[i].at("output").value("dialog-acts", nlohmann::json::array()), t.system_acts,
                        local.skipped_acts);
      append_dstc2_acts(label_turns[i].at("semantics").value("json", nlohmann::json::array()), t.user_acts,
                        local.skipped_acts);
      d.turns.push_back(std::move(t));
    }
    if (d.turns.empty()) continue;
    out.push_back(std::move(d));
    ++local.sessions;
  }
  if (stats) *stats = local;
  return out;
}

CorpusStats corpus_stats(const std::vector<Dialogue> &dialogues) {
  CorpusStats s;
  s.dialogues = dialogues.size();
  for (const auto &d : dialogues) {
    s.turns += d.turns.size();
    for (const auto &t : d.turns) {
      if (t.user_acts.empty()) ++s.null_user_turns;
      s.user_acts += t.user_acts.size();
      for (const auto &a : t.user_acts) ++s.act_type_counts[std::string(act_type_name(a.type()))];
    }
  }
  s.mean_turns = s.dialogues ? static_cast<double>(s.turns) / static_cast<double>(s.dialogues) : 0.0;
  return s;
}

nlohmann::json corpus_stats_to_json(const CorpusStats &s) {
  return {{"dialogues", s.dialogues},         {"turns", s.turns},
          {"user_acts", s.user_acts},         {"null_user_turns", s.null_user_turns},
          {"mean_turns", s.mean_turns},       {"user_act_types", s.act_type_counts}};
}

} // namespace simlab
