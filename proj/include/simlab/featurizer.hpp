#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "simlab/corpus.hpp"

namespace simlab {

using ContextVector = std::vector<double>;

struct FeaturizerDiagnostics {
  std::size_t oov_user = 0;
  std::size_t oov_system = 0;
};

// Layout: [user-token multi-hot | system-token multi-hot | inconsistency per
// informable slot | dialogue-start flag].
class FeatureLayout {
public:
  FeatureLayout(Vocabulary user_vocab, Vocabulary sys_vocab, std::vector<std::string> informable_slots);

  std::size_t width() const;
  std::size_t user_offset() const { return 0; }
  std::size_t system_offset() const { return user_vocab_.size(); }
  std::size_t inconsistency_offset() const { return user_vocab_.size() + sys_vocab_.size(); }
  std::size_t start_flag_index() const { return width() - 1; }

  const Vocabulary &user_vocab() const { return user_vocab_; }
  const Vocabulary &sys_vocab() const { return sys_vocab_; }
  const std::vector<std::string> &informable_slots() const { return slots_; }

  ContextVector featurize(const std::vector<std::string> &last_user_tokens,
                          const std::vector<DialogueAct> &last_system, const UserGoal &goal,
                          bool is_first_turn, FeaturizerDiagnostics *diag = nullptr) const;

  nlohmann::json to_json() const;
  static FeatureLayout from_json(const nlohmann::json &j);

  bool operator==(const FeatureLayout &o) const {
    return user_vocab_ == o.user_vocab_ && sys_vocab_ == o.sys_vocab_ && slots_ == o.slots_;
  }

private:
  Vocabulary user_vocab_;
  Vocabulary sys_vocab_;
  std::vector<std::string> slots_;
};

std::size_t context_dim(std::size_t user_vocab_size, std::size_t sys_vocab_size, std::size_t informable_slots);

// 1 iff the system informed/offered a value for `slot` that contradicts the
// goal's constraint on it.
bool system_contradicts_goal(const std::vector<DialogueAct> &system_acts, const UserGoal &goal,
                             const std::string &slot);

// Per-turn model inputs derived from a corpus dialogue.
struct EncodedTurn {
  ContextVector context;
  std::vector<int> target;  // user token ids, at most kMaxUserActs
  bool truncated = false;   // reference had more than kMaxUserActs acts
};

struct EncodedDialogue {
  std::string id;
  std::vector<EncodedTurn> turns;
};

EncodedDialogue encode_dialogue(const Dialogue &d, const FeatureLayout &layout,
                                FeaturizerDiagnostics *diag = nullptr);
std::vector<EncodedDialogue> encode_dialogues(const std::vector<Dialogue> &ds, const FeatureLayout &layout,
                                              FeaturizerDiagnostics *diag = nullptr);

} // namespace simlab
