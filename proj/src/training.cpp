#include "simlab/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "simlab/metrics.hpp"

namespace simlab {

std::string method_name(TrainMethod m) { return m == TrainMethod::Mle ? "mle" : "gan"; }

TrainMethod method_from_name(const std::string &s) {
  if (s == "mle") return TrainMethod::Mle;
  if (s == "gan") return TrainMethod::Gan;
  throw UsageError("unknown training method '" + s + "' (expected mle or gan)");
}

void TrainConfig::validate() const {
  if (!(gen_lr > 0.0) || !(disc_lr > 0.0)) throw UsageError("learning rates must be positive");
  if (gen_wd < 0.0 || disc_wd < 0.0) throw UsageError("weight decay must be non-negative");
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (pretrain_epochs < 0) throw UsageError("pretrain_epochs must be >= 0");
  if (adversarial_epochs < 0) throw UsageError("adversarial_epochs must be >= 0");
  if (batch_size == 0 || adversarial_batch_size == 0) throw UsageError("batch sizes must be >= 1");
  if (!(teacher_forcing_rate >= 0.0 && teacher_forcing_rate <= 1.0))
    throw UsageError("teacher_forcing_rate must lie in [0,1]");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) throw UsageError("baseline_decay must lie in [0,1)");
  if (!(clip_norm > 0.0)) throw UsageError("clip_norm must be positive");
  if (hidden == 0 || disc_hidden == 0) throw UsageError("hidden sizes must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"method", method_name(method)},
          {"gen_lr", gen_lr},
          {"gen_wd", gen_wd},
          {"disc_lr", disc_lr},
          {"disc_wd", disc_wd},
          {"epochs", epochs},
          {"pretrain_epochs", pretrain_epochs},
          {"adversarial_epochs", adversarial_epochs},
          {"batch_size", batch_size},
          {"adversarial_batch_size", adversarial_batch_size},
          {"teacher_forcing_rate", teacher_forcing_rate},
          {"baseline_decay", baseline_decay},
          {"baseline_init", baseline_init},
          {"clip_norm", clip_norm},
          {"hidden", hidden},
          {"disc_hidden", disc_hidden},
          {"init_scale", init_scale},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json &j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json &j, TrainConfig c) {
  if (!j.is_object()) throw UsageError("training config must be a JSON object");
  try {
    for (const auto &[key, v] : j.items()) {
      if (key == "method") c.method = method_from_name(v.get<std::string>());
      else if (key == "gen_lr") c.gen_lr = v.get<double>();
      else if (key == "gen_wd") c.gen_wd = v.get<double>();
      else if (key == "disc_lr") c.disc_lr = v.get<double>();
      else if (key == "disc_wd") c.disc_wd = v.get<double>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "pretrain_epochs") c.pretrain_epochs = v.get<int>();
      else if (key == "adversarial_epochs") c.adversarial_epochs = v.get<int>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "adversarial_batch_size") c.adversarial_batch_size = v.get<std::size_t>();
      else if (key == "teacher_forcing_rate") c.teacher_forcing_rate = v.get<double>();
      else if (key == "baseline_decay") c.baseline_decay = v.get<double>();
      else if (key == "baseline_init") c.baseline_init = v.get<double>();
      else if (key == "clip_norm") c.clip_norm = v.get<double>();
      else if (key == "hidden") c.hidden = v.get<std::size_t>();
      else if (key == "disc_hidden") c.disc_hidden = v.get<std::size_t>();
      else if (key == "init_scale") c.init_scale = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw UsageError("unknown training config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception &e) {
    throw UsageError(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j = {{"phase", phase}, {"epoch", epoch}, {"dev_nll", dev_nll}};
  auto put = [&](const char *k, const std::optional<double> &v) {
    if (v) j[k] = *v;
  };
  put("train_nll", train_nll);
  put("dev_f", dev_f);
  put("disc_accuracy", disc_accuracy);
  put("mean_reward", mean_reward);
  put("mean_baseline", mean_baseline);
  put("mean_abs_advantage", mean_abs_advantage);
  put("gen_grad_norm", gen_grad_norm);
  if (phase == "adversarial") {
    j["reinforce_turns"] = reinforce_turns;
    j["forced_turns"] = forced_turns;
  }
  return j;
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto &r : records) out += r.to_json().dump() + "\n";
  return out;
}

void TrainLog::write_jsonl(const std::filesystem::path &path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log '" + path.string() + "'");
  out << to_jsonl();
}

FeatureLayout layout_for(const CorpusSplit &corpus, const Ontology &o) {
  return FeatureLayout(corpus.vocab, corpus.sys_vocab, o.informable_slots());
}

std::vector<bool> teacher_forcing_flags(std::size_t turns, double rate, Rng &rng) {
  std::vector<bool> flags(turns);
  for (std::size_t i = 0; i < turns; ++i) flags[i] = rng.bernoulli(rate);
  return flags;
}

TurnPass encode_with_teacher_forcing(const GeneratorModel &g, const nn::RecurrentState &s,
                                     const std::vector<int> &reference, bool forced, Rng &rng) {
  TurnPass p;
  p.forced = forced;
  if (forced) {
    p.tape = teacher_forced_tape(g, s, reference);
    p.tokens = reference;
  } else {
    p.tokens = generate_response(g, s, DecodeMode::Sample, rng, &p.tape).tokens;
  }
  return p;
}

void backprop_dialogue(GeneratorModel &g, const std::vector<nn::LstmCache> &encoder_caches,
                       const std::vector<std::optional<DecoderTape>> &tapes, const std::vector<double> &weights) {
  const std::size_t H = g.hidden();
  std::vector<double> dh(H, 0.0), dc(H, 0.0);
  for (std::size_t t = encoder_caches.size(); t-- > 0;) {
    if (tapes[t] && weights[t] != 0.0) {
      const auto d0 = decoder_backward(g, *tapes[t], weights[t]);
      for (std::size_t i = 0; i < H; ++i) {
        dh[i] += d0.h[i];
        dc[i] += d0.c[i];
      }
    }
    nn::lstm_backward(g.params(), g.encoder(), encoder_caches[t], dh, dc, {});
  }
}

namespace {

using Clock = std::chrono::steady_clock;

struct ForwardPass {
  std::vector<nn::LstmCache> caches;
  std::vector<nn::RecurrentState> states;
};

ForwardPass encode_forward(const GeneratorModel &g, const EncodedDialogue &d) {
  ForwardPass f;
  f.caches.resize(d.turns.size());
  f.states.reserve(d.turns.size());
  nn::RecurrentState s = nn::RecurrentState::zeros(g.hidden());
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    s = encode_turn(g, s, d.turns[t].context, &f.caches[t]);
    f.states.push_back(s);
  }
  return f;
}

double tape_nll(const DecoderTape &tape) {
  double nll = 0.0;
  for (std::size_t k = 0; k < tape.chosen.size(); ++k)
    nll -= std::log(tape.probs[k][static_cast<std::size_t>(tape.chosen[k])]);
  return nll;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, Rng &rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
  return out;
}

std::size_t batch_turns(const std::vector<EncodedDialogue> &data, const std::vector<std::size_t> &batch) {
  std::size_t n = 0;
  for (std::size_t i : batch) n += data[i].turns.size();
  return n;
}

// One supervised epoch; returns mean per-turn training NLL.
double mle_epoch(GeneratorModel &g, const std::vector<EncodedDialogue> &train, const TrainConfig &cfg, Rng &rng) {
  double total = 0.0;
  std::size_t turns = 0;
  for (const auto &batch : make_batches(train.size(), cfg.batch_size, rng)) {
    const std::size_t n = batch_turns(train, batch);
    if (n == 0) continue;
    for (std::size_t idx : batch) {
      const auto &d = train[idx];
      auto fwd = encode_forward(g, d);
      std::vector<std::optional<DecoderTape>> tapes(d.turns.size());
      std::vector<double> weights(d.turns.size(), 1.0 / static_cast<double>(n));
      for (std::size_t t = 0; t < d.turns.size(); ++t) {
        tapes[t] = teacher_forced_tape(g, fwd.states[t], d.turns[t].target);
        total += tape_nll(*tapes[t]);
      }
      backprop_dialogue(g, fwd.caches, tapes, weights);
    }
    turns += n;
    nn::adam_step(g.params(), cfg.gen_lr, cfg.gen_wd);
  }
  return turns ? total / static_cast<double>(turns) : 0.0;
}

// Discriminator pre-training epoch on real vs. sampled responses; returns
// accuracy over the epoch.
double discriminator_epoch(DiscriminatorModel &d, const GeneratorModel &g, const std::vector<EncodedDialogue> &train,
                           const TrainConfig &cfg, Rng &rng) {
  std::vector<double> on_real, on_sim;
  for (const auto &batch : make_batches(train.size(), cfg.adversarial_batch_size, rng)) {
    const std::size_t n = batch_turns(train, batch);
    if (n == 0) continue;
    const double w = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t idx : batch) {
      const auto &dlg = train[idx];
      const auto states = encoder_states(g, dlg);
      for (std::size_t t = 0; t < dlg.turns.size(); ++t) {
        const auto &ctx = dlg.turns[t].context;
        const auto sampled = generate_response(g, states[t], DecodeMode::Sample, rng).tokens;
        on_real.push_back(discriminator_accumulate(d, ctx, dlg.turns[t].target, kRealClass, w).second);
        on_sim.push_back(discriminator_accumulate(d, ctx, sampled, kSimulatedClass, w).second);
      }
    }
    nn::adam_step(d.params(), cfg.disc_lr, cfg.disc_wd);
  }
  return discriminator_accuracy(on_real, on_sim);
}

struct Prepared {
  FeatureLayout layout;
  std::vector<EncodedDialogue> train, dev;
};

Prepared prepare(const CorpusSplit &corpus, const Ontology &o) {
  if (corpus.train.empty()) throw DataError("training split is empty");
  Prepared p{layout_for(corpus, o), {}, {}};
  p.train = encode_dialogues(corpus.train, p.layout);
  p.dev = encode_dialogues(corpus.dev.empty() ? corpus.train : corpus.dev, p.layout);
  if (count_turns(p.train) == 0) throw DataError("training split has no turns");
  return p;
}

} // namespace

TrainResult mle_train(const CorpusSplit &corpus, const Ontology &o, const TrainConfig &cfg) {
  cfg.validate();
  const Prepared data = prepare(corpus, o);
  Rng rng(cfg.seed);
  GeneratorModel g(data.layout, cfg.hidden);
  g.initialize(rng, cfg.init_scale);

  TrainResult res{g, std::nullopt, {}, "init", 0, {}};
  auto t0 = Clock::now();
  auto stamp = [&] { res.seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count()); };

  EpochRecord init;
  init.phase = "init";
  init.dev_nll = mean_nll(g, data.dev);
  res.log.records.push_back(init);
  stamp();

  double best = std::numeric_limits<double>::infinity();
  for (int e = 1; e <= cfg.epochs; ++e) {
    EpochRecord r;
    r.phase = "mle";
    r.epoch = e;
    r.train_nll = mle_epoch(g, data.train, cfg, rng);
    r.dev_nll = mean_nll(g, data.dev);
    if (!std::isfinite(r.dev_nll)) throw NumericalError("dev NLL is not finite at epoch " + std::to_string(e));
    if (r.dev_nll < best) {
      best = r.dev_nll;
      res.generator = g;
      res.selected_phase = "mle";
      res.selected_epoch = e;
    }
    res.log.records.push_back(r);
    stamp();
  }
  return res;
}

TrainResult gan_train(const CorpusSplit &corpus, const Ontology &o, const TrainConfig &cfg, const GanHooks &hooks) {
  cfg.validate();
  const Prepared data = prepare(corpus, o);
  Rng rng(cfg.seed);
  GeneratorModel g(data.layout, cfg.hidden);
  g.initialize(rng, cfg.init_scale);
  DiscriminatorModel d(data.layout, cfg.disc_hidden);
  d.initialize(rng, cfg.init_scale);

  TrainResult res{g, d, {}, "init", 0, {}};
  auto t0 = Clock::now();
  auto stamp = [&] { res.seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count()); };

  EpochRecord init;
  init.phase = "init";
  init.dev_nll = mean_nll(g, data.dev);
  res.log.records.push_back(init);
  stamp();

  // (1) generator pre-training, (2) discriminator pre-training
  for (int e = 1; e <= cfg.pretrain_epochs; ++e) {
    EpochRecord r;
    r.phase = "pretrain";
    r.epoch = e;
    r.train_nll = mle_epoch(g, data.train, cfg, rng);
    r.dev_nll = mean_nll(g, data.dev);
    res.log.records.push_back(r);
    stamp();
  }
  for (int e = 1; e <= cfg.pretrain_epochs; ++e) {
    EpochRecord r;
    r.phase = "pretrain-discriminator";
    r.epoch = e;
    r.disc_accuracy = discriminator_epoch(d, g, data.train, cfg, rng);
    r.dev_nll = mean_nll(g, data.dev);
    res.log.records.push_back(r);
    stamp();
  }
  res.generator = g;
  res.discriminator = d;
  res.selected_phase = cfg.pretrain_epochs > 0 ? "pretrain" : "init";
  res.selected_epoch = cfg.pretrain_epochs;

  // (3) adversarial phase
  double baseline = cfg.baseline_init;
  double best_f = -1.0;
  for (int e = 1; e <= cfg.adversarial_epochs; ++e) {
    EpochRecord r;
    r.phase = "adversarial";
    r.epoch = e;
    double nll_sum = 0.0, reward_sum = 0.0, baseline_sum = 0.0, adv_sum = 0.0, norm_sum = 0.0;
    std::size_t updates = 0;
    std::vector<double> on_real, on_sim;
    for (const auto &batch : make_batches(data.train.size(), cfg.adversarial_batch_size, rng)) {
      const std::size_t n = batch_turns(data.train, batch);
      if (n == 0) continue;
      const double w = 1.0 / static_cast<double>(n);
      for (std::size_t idx : batch) {
        const auto &dlg = data.train[idx];
        auto fwd = encode_forward(g, dlg);
        const auto forced = teacher_forcing_flags(dlg.turns.size(), cfg.teacher_forcing_rate, rng);
        std::vector<std::optional<DecoderTape>> tapes(dlg.turns.size());
        std::vector<double> weights(dlg.turns.size(), 0.0);
        for (std::size_t t = 0; t < dlg.turns.size(); ++t) {
          const auto &ctx = dlg.turns[t].context;
          auto pass = encode_with_teacher_forcing(g, fwd.states[t], dlg.turns[t].target, forced[t], rng);
          if (pass.forced) {
            ++r.forced_turns;
            nll_sum += tape_nll(pass.tape);
            weights[t] = w;
          } else {
            ++r.reinforce_turns;
            const double p_real = hooks.reward ? hooks.reward(ctx, pass.tokens) : discriminate(d, ctx, pass.tokens);
            const double advantage = p_real - baseline;
            reward_sum += p_real;
            baseline_sum += baseline;
            adv_sum += std::abs(advantage);
            baseline = cfg.baseline_decay * baseline + (1.0 - cfg.baseline_decay) * p_real;
            weights[t] = advantage * w;
            if (!hooks.freeze_discriminator) {
              const double dw = 1.0 / (2.0 * static_cast<double>(n));
              on_real.push_back(discriminator_accumulate(d, ctx, dlg.turns[t].target, kRealClass, dw).second);
              on_sim.push_back(discriminator_accumulate(d, ctx, pass.tokens, kSimulatedClass, dw).second);
            } else {
              on_real.push_back(discriminate(d, ctx, dlg.turns[t].target));
              on_sim.push_back(p_real);
            }
          }
          tapes[t] = std::move(pass.tape);
        }
        backprop_dialogue(g, fwd.caches, tapes, weights);
      }
      norm_sum += g.params().clip_grad_norm(cfg.clip_norm);
      ++updates;
      nn::adam_step(g.params(), cfg.gen_lr, cfg.gen_wd);
      if (!hooks.freeze_discriminator) nn::adam_step(d.params(), cfg.disc_lr, cfg.disc_wd);
    }
    if (r.forced_turns) r.train_nll = nll_sum / static_cast<double>(r.forced_turns);
    if (r.reinforce_turns) {
      const double k = static_cast<double>(r.reinforce_turns);
      r.mean_reward = reward_sum / k;
      r.mean_baseline = baseline_sum / k;
      r.mean_abs_advantage = adv_sum / k;
      r.disc_accuracy = discriminator_accuracy(on_real, on_sim);
    }
    if (updates) r.gen_grad_norm = norm_sum / static_cast<double>(updates);
    r.dev_nll = mean_nll(g, data.dev);
    r.dev_f = f_score(g, data.dev);
    if (!std::isfinite(r.dev_nll)) throw NumericalError("dev NLL is not finite at adversarial epoch " + std::to_string(e));
    if (*r.dev_f > best_f) {
      best_f = *r.dev_f;
      res.generator = g;
      res.discriminator = d;
      res.selected_phase = "adversarial";
      res.selected_epoch = e;
    }
    res.log.records.push_back(r);
    stamp();
  }
  return res;
}

TrainResult train_simulator(const CorpusSplit &corpus, const Ontology &o, const TrainConfig &cfg) {
  return cfg.method == TrainMethod::Mle ? mle_train(corpus, o, cfg) : gan_train(corpus, o, cfg);
}

} // namespace simlab
