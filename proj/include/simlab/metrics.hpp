#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "simlab/featurizer.hpp"
#include "simlab/usersim.hpp"

namespace simlab {

// Encoder state after consuming each turn's corpus context (teacher-forced
// history).
std::vector<nn::RecurrentState> encoder_states(const GeneratorModel &g, const EncodedDialogue &d);

struct OverlapCounts {
  double matched = 0.0;
  double predicted = 0.0;
  double reference = 0.0;

  void add(const std::vector<int> &pred, const std::vector<int> &ref);
  double f() const;
};

// Micro-averaged multiset-overlap F over aligned turns. A turn where both
// sides are empty counts as one matched token.
double f_score_sequences(const std::vector<std::vector<int>> &predicted, const std::vector<std::vector<int>> &reference);

double f_score(const GeneratorModel &g, const std::vector<EncodedDialogue> &test);

// KL(real || model) per distinct context, averaged over contexts (or weighted
// by context frequency). The model probability of a sequence in a context is
// the mean of exp(sequence_logprob) over that context's occurrences, since
// the encoder history differs between occurrences.
double kl_divergence(const GeneratorModel &g, const std::vector<EncodedDialogue> &test, bool weighted = false);

// Mean Shannon entropy (nats) of the output distribution over all
// teacher-forced decoding steps.
double entropy(const GeneratorModel &g, const std::vector<EncodedDialogue> &test);

// Mean per-turn negative log-likelihood.
double mean_nll(const GeneratorModel &g, const std::vector<EncodedDialogue> &data);

struct DirectEvalReport {
  std::string model;
  double f_score = 0.0;
  double kl_divergence = 0.0;
  double entropy = 0.0;
  std::size_t turns = 0;
  std::size_t contexts = 0;
  bool weighted_kl = false;

  nlohmann::json to_json() const;
  static DirectEvalReport from_json(const nlohmann::json &j);
};

DirectEvalReport direct_eval(const GeneratorModel &g, const std::vector<EncodedDialogue> &test,
                             const std::string &model_name = "", bool weighted_kl = false);

// Aligned-column table: Model | F-score | KL-div | Entropy.
std::string render_direct_table(const std::vector<DirectEvalReport> &rows);

// Baseline that always predicts the most frequent training sequence (ties:
// lexicographically smallest id sequence).
std::vector<int> majority_sequence(const std::vector<EncodedDialogue> &train);
double majority_baseline_f(const std::vector<EncodedDialogue> &train, const std::vector<EncodedDialogue> &test);

std::size_t count_turns(const std::vector<EncodedDialogue> &data);

} // namespace simlab
