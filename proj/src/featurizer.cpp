#include "simlab/featurizer.hpp"

namespace simlab {

std::size_t context_dim(std::size_t user_vocab_size, std::size_t sys_vocab_size, std::size_t informable_slots) {
  return user_vocab_size + sys_vocab_size + informable_slots + 1;
}

FeatureLayout::FeatureLayout(Vocabulary user_vocab, Vocabulary sys_vocab, std::vector<std::string> informable_slots)
    : user_vocab_(std::move(user_vocab)), sys_vocab_(std::move(sys_vocab)), slots_(std::move(informable_slots)) {}

std::size_t FeatureLayout::width() const { return context_dim(user_vocab_.size(), sys_vocab_.size(), slots_.size()); }

bool system_contradicts_goal(const std::vector<DialogueAct> &system_acts, const UserGoal &goal,
                             const std::string &slot) {
  auto wanted = goal.constraints.find(slot);
  if (wanted == goal.constraints.end() || wanted->second == kDontcare) return false;
  for (const auto &a : system_acts) {
    if (a.type() != ActType::Inform && a.type() != ActType::Offer) continue;
    if (!a.slot() || *a.slot() != slot || !a.value()) continue;
    if (*a.value() != wanted->second && *a.value() != kDontcare) return true;
  }
  return false;
}

ContextVector FeatureLayout::featurize(const std::vector<std::string> &last_user_tokens,
                                       const std::vector<DialogueAct> &last_system, const UserGoal &goal,
                                       bool is_first_turn, FeaturizerDiagnostics *diag) const {
  ContextVector x(width(), 0.0);
  for (const auto &tok : last_user_tokens) {
    const auto idx = user_vocab_.find(tok);
    if (!idx && diag) ++diag->oov_user;
    x[user_offset() + static_cast<std::size_t>(idx.value_or(kUnk))] = 1.0;
  }
  for (const auto &tok : delexicalize_all(last_system, goal)) {
    const auto idx = sys_vocab_.find(tok);
    if (!idx && diag) ++diag->oov_system;
    x[system_offset() + static_cast<std::size_t>(idx.value_or(kUnk))] = 1.0;
  }
  for (std::size_t s = 0; s < slots_.size(); ++s)
    if (system_contradicts_goal(last_system, goal, slots_[s])) x[inconsistency_offset() + s] = 1.0;
  if (is_first_turn) x[start_flag_index()] = 1.0;
  return x;
}

nlohmann::json FeatureLayout::to_json() const {
  return {{"user_vocab", user_vocab_.to_json()},
          {"sys_vocab", sys_vocab_.to_json()},
          {"informable_slots", slots_},
          {"layout", "user_multi_hot+system_multi_hot+inconsistency+start_flag"}};
}

FeatureLayout FeatureLayout::from_json(const nlohmann::json &j) {
  return FeatureLayout(Vocabulary::from_json(j.at("user_vocab")), Vocabulary::from_json(j.at("sys_vocab")),
                       j.at("informable_slots").get<std::vector<std::string>>());
}

EncodedDialogue encode_dialogue(const Dialogue &d, const FeatureLayout &layout, FeaturizerDiagnostics *diag) {
  EncodedDialogue out;
  out.id = d.id;
  std::vector<std::string> last_user;
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    const auto &turn = d.turns[t];
    EncodedTurn et;
    et.context = layout.featurize(last_user, turn.system_acts, d.goal, t == 0, diag);
    const auto tokens = delexicalize_all(turn.user_acts, d.goal);
    et.truncated = tokens.size() > kMaxUserActs;
    for (std::size_t i = 0; i < std::min(tokens.size(), kMaxUserActs); ++i) {
      const auto idx = layout.user_vocab().find(tokens[i]);
      if (!idx && diag) ++diag->oov_user;
      et.target.push_back(idx.value_or(kUnk));
    }
    out.turns.push_back(std::move(et));
    last_user = tokens;
  }
  return out;
}

std::vector<EncodedDialogue> encode_dialogues(const std::vector<Dialogue> &ds, const FeatureLayout &layout,
                                              FeaturizerDiagnostics *diag) {
  std::vector<EncodedDialogue> out;
  out.reserve(ds.size());
  for (const auto &d : ds) out.push_back(encode_dialogue(d, layout, diag));
  return out;
}

} // namespace simlab
