#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simlab/common.hpp"
#include "simlab/dialogue.hpp"
#include "simlab/ontology.hpp"

namespace simlab {

enum class ValueClass { InGoal, Dontcare, Other };

std::string_view value_class_name(ValueClass c);

// Delexicalized act pattern, e.g. "inform(food):VALUE_IN_GOAL" or "bye()".
struct ActToken {
  ActType type;
  std::optional<std::string> slot;
  std::optional<ValueClass> value_class;

  std::string to_string() const;
  static ActToken from_string(const std::string &text);

  bool operator==(const ActToken &) const = default;
};

inline constexpr int kSos = 0;
inline constexpr int kEos = 1;
inline constexpr int kPad = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNumSpecialTokens = 4;

inline constexpr std::string_view kSosText = "<SOS>";
inline constexpr std::string_view kEosText = "<EOS>";
inline constexpr std::string_view kPadText = "<PAD>";
inline constexpr std::string_view kUnkText = "<UNK>";

// Token vocabulary, fixed after construction. SOS/EOS/PAD/UNK occupy 0..3;
// content tokens follow in sorted order.
class Vocabulary {
public:
  Vocabulary();
  explicit Vocabulary(const std::vector<std::string> &content_tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string &token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  const std::vector<std::string> &tokens() const { return tokens_; }
  std::optional<int> find(const std::string &token) const;
  // Out-of-vocabulary tokens map to kUnk.
  int index_or_unk(const std::string &token) const;
  // Throws VocabularyError for unknown tokens.
  int index(const std::string &token) const;
  bool is_special(int index) const { return index < kNumSpecialTokens; }

  nlohmann::json to_json() const { return tokens_; }
  static Vocabulary from_json(const nlohmann::json &j);

  bool operator==(const Vocabulary &other) const { return tokens_ == other.tokens_; }

private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

ActToken delexicalize(const DialogueAct &act, const UserGoal &goal);
std::vector<std::string> delexicalize_all(const std::vector<DialogueAct> &acts, const UserGoal &goal);

// token must be a content token. VALUE_IN_GOAL for a slot missing from the
// goal resolves to "dontcare".
DialogueAct relexicalize(const ActToken &token, const UserGoal &goal, Rng &rng, const Ontology &o);

// User turns longer than this are truncated wherever a model consumes them.
inline constexpr std::size_t kMaxUserActs = 3;

struct SplitSpec {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
  // When non-empty, id lists override the fractions.
  std::vector<std::string> train_ids, dev_ids, test_ids;
  bool drop_null_turns = false;
};

struct CorpusSplit {
  std::vector<Dialogue> train, dev, test;
  Vocabulary vocab;
  Vocabulary sys_vocab;
};

std::vector<Dialogue> read_corpus(std::istream &in, const std::string &source_name = "<stream>");
std::vector<Dialogue> read_corpus(const std::filesystem::path &path);
void write_corpus(std::ostream &out, const std::vector<Dialogue> &dialogues);
void write_corpus(const std::filesystem::path &path, const std::vector<Dialogue> &dialogues);

// Builds vocabularies from the training split only.
CorpusSplit make_split(std::vector<Dialogue> dialogues, const SplitSpec &spec);
CorpusSplit load_corpus(const std::filesystem::path &path, const SplitSpec &spec);

Vocabulary build_user_vocab(const std::vector<Dialogue> &dialogues);
Vocabulary build_system_vocab(const std::vector<Dialogue> &dialogues);

struct SynthesisConfig {
  std::size_t dialogues = 500;
  std::uint64_t seed = 7;
  int turn_cap = 30;
};

// Agenda simulator against the handcrafted dialogue manager policy at zero
// error rate. Deterministic per seed.
std::vector<Dialogue> synthesize_corpus(const Ontology &o, const SynthesisConfig &cfg);

// Maps a DSTC-2 style tree (directories holding log.json + label.json) into
// dialogues. Unmappable acts are skipped and counted in `skipped_acts`.
struct Dstc2ConvertStats {
  std::size_t sessions = 0;
  std::size_t skipped_acts = 0;
};
std::vector<Dialogue> convert_dstc2(const std::filesystem::path &root, Dstc2ConvertStats *stats = nullptr);

struct CorpusStats {
  std::size_t dialogues = 0;
  std::size_t turns = 0;
  std::size_t user_acts = 0;
  std::size_t null_user_turns = 0;
  double mean_turns = 0.0;
  std::map<std::string, std::size_t> act_type_counts;
};
CorpusStats corpus_stats(const std::vector<Dialogue> &dialogues);
nlohmann::json corpus_stats_to_json(const CorpusStats &s);

} // namespace simlab
