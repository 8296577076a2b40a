#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simlab/common.hpp"
#include "simlab/featurizer.hpp"
#include "simlab/nn.hpp"

namespace simlab {

inline constexpr int kModelLayoutVersion = 1;
inline constexpr std::size_t kDefaultHidden = 32;
inline constexpr std::size_t kDiscriminatorHidden = 64;

enum class DecodeMode { Greedy, Sample };

// Output distribution over the user vocabulary with SOS and PAD masked out.
struct StepDistribution {
  std::vector<double> probs;
};

struct TurnRollout {
  ContextVector context;
  std::vector<int> tokens;                  // content tokens, EOS excluded
  std::vector<std::vector<double>> dists;   // one per decoding step
  std::vector<double> logprobs;             // log prob of the chosen token per step
  bool ended_with_eos = false;
};

// Per-turn decoder record used for backpropagation.
struct DecoderTape {
  std::vector<int> chosen;  // output token per step (EOS included when emitted)
  std::vector<nn::LstmCache> cells;
  std::vector<nn::DenseCache> outputs;
  std::vector<std::vector<double>> probs;
};

// Seq2seq user simulator: LSTM turn encoder over context vectors, LSTM act
// decoder initialised from the encoder state, linear projection to the user
// vocabulary.
class GeneratorModel {
public:
  GeneratorModel(FeatureLayout layout, std::size_t hidden = kDefaultHidden);

  const FeatureLayout &layout() const { return layout_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t vocab_size() const { return layout_.user_vocab().size(); }
  std::size_t context_width() const { return layout_.width(); }
  // Tokens that may be emitted (everything except SOS and PAD).
  const std::vector<bool> &output_mask() const { return mask_; }
  std::size_t visible_tokens() const;

  nn::ParamSet &params() { return params_; }
  const nn::ParamSet &params() const { return params_; }
  const nn::LstmCell &encoder() const { return encoder_; }
  const nn::LstmCell &decoder() const { return decoder_; }
  const nn::Dense &projection() const { return projection_; }

  void initialize(Rng &rng, double scale = 0.1);

  nlohmann::json to_json(const nlohmann::json &metadata = nlohmann::json::object()) const;
  static GeneratorModel from_json(const nlohmann::json &j);
  void save(const std::filesystem::path &path, const nlohmann::json &metadata = nlohmann::json::object()) const;
  static GeneratorModel load(const std::filesystem::path &path);

private:
  FeatureLayout layout_;
  std::size_t hidden_;
  nn::ParamSet params_;
  nn::LstmCell encoder_;
  nn::LstmCell decoder_;
  nn::Dense projection_;
  std::vector<bool> mask_;
};

nn::RecurrentState encode_turn(const GeneratorModel &g, const nn::RecurrentState &prev, const ContextVector &x,
                               nn::LstmCache *cache = nullptr);

// One decoder step: consumes `input_token`, returns the next-token
// distribution and advances `state`.
StepDistribution decoder_step(const GeneratorModel &g, nn::RecurrentState &state, int input_token,
                              nn::LstmCache *cell_cache = nullptr, nn::DenseCache *out_cache = nullptr);

// Decodes from SOS until EOS or kMaxUserActs content tokens.
TurnRollout generate_response(const GeneratorModel &g, const nn::RecurrentState &s, DecodeMode mode, Rng &rng,
                              DecoderTape *tape = nullptr);

// Runs the decoder along `tokens` (teacher forcing). The EOS step is scored
// when fewer than kMaxUserActs tokens are given.
DecoderTape teacher_forced_tape(const GeneratorModel &g, const nn::RecurrentState &s, const std::vector<int> &tokens);

double sequence_logprob(const GeneratorModel &g, const nn::RecurrentState &s, const std::vector<int> &tokens);

// Backpropagates sum_k weight * (-log p(chosen_k)) through the decoder tape.
// Returns the gradient w.r.t. the decoder's initial (h, c).
nn::RecurrentState decoder_backward(GeneratorModel &g, const DecoderTape &tape, double weight);

std::vector<int> token_ids(const Vocabulary &v, const std::vector<std::string> &tokens);

// Feedforward real-vs-simulated classifier over [context | 3 positional
// one-hots]. Output index 1 is "real".
class DiscriminatorModel {
public:
  DiscriminatorModel(FeatureLayout layout, std::size_t hidden = kDiscriminatorHidden);

  const FeatureLayout &layout() const { return layout_; }
  std::size_t input_width() const;
  std::size_t hidden() const { return hidden_; }
  nn::ParamSet &params() { return params_; }
  const nn::ParamSet &params() const { return params_; }
  const nn::Dense &hidden_layer() const { return hidden_layer_; }
  const nn::Dense &output_layer() const { return output_layer_; }

  void initialize(Rng &rng, double scale = 0.1);

  std::vector<double> assemble_input(const ContextVector &x, const std::vector<int> &tokens) const;

  nlohmann::json to_json(const nlohmann::json &metadata = nlohmann::json::object()) const;
  static DiscriminatorModel from_json(const nlohmann::json &j);
  void save(const std::filesystem::path &path, const nlohmann::json &metadata = nlohmann::json::object()) const;
  static DiscriminatorModel load(const std::filesystem::path &path);

private:
  FeatureLayout layout_;
  std::size_t hidden_;
  nn::ParamSet params_;
  nn::Dense hidden_layer_;
  nn::Dense output_layer_;
};

inline constexpr std::size_t kRealClass = 1;
inline constexpr std::size_t kSimulatedClass = 0;

// Returns the pair (p_simulated, p_real).
std::vector<double> discriminator_probs(const DiscriminatorModel &d, const ContextVector &x,
                                        const std::vector<int> &tokens);
double discriminate(const DiscriminatorModel &d, const ContextVector &x, const std::vector<int> &tokens);

// Accumulates the cross-entropy gradient for one labelled example (scaled by
// `weight`) and returns (loss, p_real).
std::pair<double, double> discriminator_accumulate(DiscriminatorModel &d, const ContextVector &x,
                                                   const std::vector<int> &tokens, std::size_t label,
                                                   double weight = 1.0);

// Fraction of correct decisions at threshold 0.5.
double discriminator_accuracy(const std::vector<double> &p_real_on_real, const std::vector<double> &p_real_on_sim);

} // namespace simlab
