#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simlab/corpus.hpp"
#include "simlab/featurizer.hpp"
#include "simlab/ontology.hpp"
#include "simlab/usersim.hpp"

namespace simlab {

enum class TrainMethod { Mle, Gan };

std::string method_name(TrainMethod m);
TrainMethod method_from_name(const std::string &s);  // throws UsageError

struct TrainConfig {
  TrainMethod method = TrainMethod::Mle;
  double gen_lr = 1e-4;
  double gen_wd = 1e-3;
  double disc_lr = 5e-4;
  double disc_wd = 1e-5;
  int epochs = 20;              // MLE epochs
  int pretrain_epochs = 0;      // GAN: generator and discriminator pre-training
  int adversarial_epochs = 30;  // GAN
  std::size_t batch_size = 1;   // dialogues per MLE / pre-training update
  std::size_t adversarial_batch_size = 4;   // dialogues per adversarial and discriminator update
  double teacher_forcing_rate = 0.5;
  double baseline_decay = 0.95;
  double baseline_init = 0.5;
  double clip_norm = 5.0;       // generator gradient clipping in the adversarial phase
  std::size_t hidden = kDefaultHidden;
  std::size_t disc_hidden = kDiscriminatorHidden;
  double init_scale = 0.1;
  std::uint64_t seed = 0;

  void validate() const;  // throws UsageError
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json &j);
  static TrainConfig from_json(const nlohmann::json &j, TrainConfig base);
};

// One record per epoch. Wall-clock time is kept out of the log so reruns are
// byte-identical; see TrainResult::seconds.
struct EpochRecord {
  std::string phase;  // init | mle | pretrain | adversarial
  int epoch = 0;
  std::optional<double> train_nll;
  double dev_nll = 0.0;
  std::optional<double> dev_f;
  std::optional<double> disc_accuracy;
  std::optional<double> mean_reward;
  std::optional<double> mean_baseline;
  std::optional<double> mean_abs_advantage;
  std::optional<double> gen_grad_norm;
  std::size_t reinforce_turns = 0;
  std::size_t forced_turns = 0;

  nlohmann::json to_json() const;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  std::string to_jsonl() const;
  void write_jsonl(const std::filesystem::path &path) const;
};

struct TrainResult {
  GeneratorModel generator;
  std::optional<DiscriminatorModel> discriminator;
  TrainLog log;
  std::string selected_phase;
  int selected_epoch = 0;
  std::vector<double> seconds;  // per log record, not serialized with the log
};

// Optional instrumentation of the adversarial phase.
struct GanHooks {
  // Replaces the discriminator's p_real as the REINFORCE reward.
  std::function<double(const ContextVector &, const std::vector<int> &)> reward;
  bool freeze_discriminator = false;
};

TrainResult mle_train(const CorpusSplit &corpus, const Ontology &o, const TrainConfig &cfg);
TrainResult gan_train(const CorpusSplit &corpus, const Ontology &o, const TrainConfig &cfg, const GanHooks &hooks = {});
TrainResult train_simulator(const CorpusSplit &corpus, const Ontology &o, const TrainConfig &cfg);

FeatureLayout layout_for(const CorpusSplit &corpus, const Ontology &o);

// Teacher forcing: one fair-coin style draw per user turn.
std::vector<bool> teacher_forcing_flags(std::size_t turns, double rate, Rng &rng);

// Decoder pass for one turn. Forced: inputs and targets are the reference
// tokens. Free-running: tokens are sampled from the model and fed back.
struct TurnPass {
  DecoderTape tape;
  std::vector<int> tokens;  // emitted (or reference) content tokens
  bool forced = false;
};
TurnPass encode_with_teacher_forcing(const GeneratorModel &g, const nn::RecurrentState &s,
                                     const std::vector<int> &reference, bool forced, Rng &rng);

// Full BPTT for one dialogue: decoder tapes per turn (weights scale each
// turn's -log p sum; turns with weight 0 are skipped), then back through the
// encoder chain. Encoder caches come from the forward pass.
void backprop_dialogue(GeneratorModel &g, const std::vector<nn::LstmCache> &encoder_caches,
                       const std::vector<std::optional<DecoderTape>> &tapes, const std::vector<double> &weights);

} // namespace simlab
