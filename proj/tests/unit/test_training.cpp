#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "ref_model.hpp"
#include "simlab/metrics.hpp"
#include "simlab/training.hpp"

using namespace simlab;

namespace {

const CorpusSplit &small_corpus() {
  static const CorpusSplit c = make_split(synthesize_corpus(toy_ontology(), {60, 5, 30}), {});
  return c;
}

// Fixed pseudo-reward in [0, 1] for a token sequence.
double toy_reward(const std::vector<int> &seq) {
  double r = 0.1 * static_cast<double>(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) r += 0.07 * static_cast<double>((seq[i] * (i + 3)) % 5);
  return std::min(r, 1.0);
}

double norm(const std::vector<double> &v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

} // namespace

TEST_SUITE("sim-training") {
  TEST_CASE("REINFORCE estimator matches the enumerated policy gradient") {
    GeneratorModel g(testutil::tiny_layout(), 3);
    Rng init(21);
    g.params().init_uniform(init, 1.0);
    Rng rs(22);
    const nn::RecurrentState s{testutil::random_vector(rs, 3, 0.5), testutil::random_vector(rs, 3, 0.5)};

    // exact: grad of -E[R] = sum_y p(y) R(y) grad(-log p(y)); baseline b does not change it
    const auto seqs = testutil::all_sequences(g);
    double expected_r = 0.0;
    for (const auto &y : seqs) expected_r += std::exp(sequence_logprob(g, s, y)) * toy_reward(y);
    const double b = expected_r;
    g.params().zero_grad();
    for (const auto &y : seqs) {
      const double p = std::exp(sequence_logprob(g, s, y));
      decoder_backward(g, teacher_forced_tape(g, s, y), p * (toy_reward(y) - b));
    }
    const auto exact = testutil::flat_grads(g.params());

    // the enumeration itself agrees with finite differences of -E[R]
    auto neg_expected_reward = [&] {
      double e = 0.0;
      for (const auto &y : seqs) e += std::exp(sequence_logprob(g, s, y)) * toy_reward(y);
      return -e;
    };
    CHECK(testutil::max_param_rel_error(g.params(), neg_expected_reward, exact) < 1e-4);

    // Monte Carlo estimate with sampled rollouts, as used during adversarial training
    const int N = 100000;
    g.params().zero_grad();
    Rng rng(23);
    for (int i = 0; i < N; ++i) {
      DecoderTape tape;
      const auto r = generate_response(g, s, DecodeMode::Sample, rng, &tape);
      decoder_backward(g, tape, (toy_reward(r.tokens) - b) / N);
    }
    const auto mc = testutil::flat_grads(g.params());
    std::vector<double> diff(exact.size());
    for (std::size_t i = 0; i < exact.size(); ++i) diff[i] = mc[i] - exact[i];
    CHECK(norm(exact) > 1e-3);
    CHECK(norm(diff) / norm(exact) < 0.02);
  }

  TEST_CASE("full dialogue backprop matches finite differences") {
    Rng rng(31);
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
      GeneratorModel g(testutil::tiny_layout(), 1 + rng.below(3));
      g.params().init_uniform(rng, 0.8);
      const std::size_t T = 1 + rng.below(3);
      std::vector<ContextVector> ctx;
      std::vector<std::vector<int>> refs;
      std::vector<double> weights;
      for (std::size_t t = 0; t < T; ++t) {
        ctx.push_back(testutil::random_vector(rng, g.context_width()));
        std::vector<int> y;
        for (std::size_t k = 0, n = rng.below(4); k < n; ++k) y.push_back(3 + static_cast<int>(rng.below(3)));
        refs.push_back(y);
        weights.push_back(t == 1 ? 0.0 : rng.uniform(-1.5, 1.5));
      }
      std::vector<nn::LstmCache> caches(T);
      std::vector<std::optional<DecoderTape>> tapes(T);
      nn::RecurrentState st = nn::RecurrentState::zeros(g.hidden());
      for (std::size_t t = 0; t < T; ++t) {
        st = encode_turn(g, st, ctx[t], &caches[t]);
        tapes[t] = teacher_forced_tape(g, st, refs[t]);
      }
      g.params().zero_grad();
      backprop_dialogue(g, caches, tapes, weights);
      auto loss = [&] {
        double l = 0.0;
        nn::RecurrentState s = nn::RecurrentState::zeros(g.hidden());
        for (std::size_t t = 0; t < T; ++t) {
          s = encode_turn(g, s, ctx[t]);
          l -= weights[t] * sequence_logprob(g, s, refs[t]);
        }
        return l;
      };
      worst = std::max(worst, testutil::max_param_rel_error(g.params(), loss, testutil::flat_grads(g.params())));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("teacher forcing draws at the configured rate") {
    Rng rng(3);
    const auto f = teacher_forcing_flags(100000, 0.5, rng);
    const auto n = std::count(f.begin(), f.end(), true);
    CHECK(n > 49000);
    CHECK(n < 51000);
    const auto none = teacher_forcing_flags(100, 0.0, rng);
    CHECK(std::count(none.begin(), none.end(), true) == 0);
    const auto all = teacher_forcing_flags(100, 1.0, rng);
    CHECK(std::count(all.begin(), all.end(), true) == 100);
  }

  TEST_CASE("forced and free-running turn passes") {
    GeneratorModel g(testutil::tiny_layout(), 3);
    Rng rng(1);
    g.initialize(rng);
    const auto s = nn::RecurrentState::zeros(3);
    const auto forced = encode_with_teacher_forcing(g, s, {4, 5}, true, rng);
    CHECK(forced.forced);
    CHECK(forced.tokens == std::vector<int>{4, 5});
    CHECK(forced.tape.chosen == std::vector<int>{4, 5, kEos});
    const auto free = encode_with_teacher_forcing(g, s, {4, 5}, false, rng);
    CHECK_FALSE(free.forced);
    CHECK(free.tape.chosen.size() >= free.tokens.size());
  }

  TEST_CASE("config parsing") {
    const auto c = TrainConfig::from_json({{"method", "gan"}, {"gen_lr", 0.01}, {"seed", 4}});
    CHECK(c.method == TrainMethod::Gan);
    CHECK(c.gen_lr == 0.01);
    CHECK(c.seed == 4);
    CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
    CHECK_THROWS_AS(TrainConfig::from_json({{"learning_rate", 0.1}}), UsageError);
    CHECK_THROWS_AS(TrainConfig::from_json({{"gen_lr", -1.0}}), UsageError);
    CHECK_THROWS_AS(TrainConfig::from_json({{"gen_lr", "fast"}}), UsageError);
    CHECK_THROWS_AS(TrainConfig::from_json({{"method", "rl"}}), UsageError);
    CHECK_THROWS_AS(TrainConfig::from_json({{"teacher_forcing_rate", 1.5}}), UsageError);
  }

  TEST_CASE("MLE training lowers dev NLL") {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.gen_lr = 5e-3;
    cfg.hidden = 16;
    const auto r = mle_train(small_corpus(), toy_ontology(), cfg);
    const auto &log = r.log.records;
    REQUIRE(log.size() == 4);
    CHECK(log.front().phase == "init");
    CHECK(log.back().dev_nll < log.front().dev_nll);
    CHECK(log.back().train_nll.has_value());
    CHECK(r.seconds.size() == log.size());
  }

  TEST_CASE("training is deterministic per seed") {
    TrainConfig cfg;
    cfg.method = TrainMethod::Gan;
    cfg.pretrain_epochs = 1;
    cfg.adversarial_epochs = 2;
    cfg.hidden = 8;
    cfg.disc_hidden = 8;
    cfg.gen_lr = 1e-3;
    const auto a = train_simulator(small_corpus(), toy_ontology(), cfg);
    const auto b = train_simulator(small_corpus(), toy_ontology(), cfg);
    CHECK(a.log.to_jsonl() == b.log.to_jsonl());
    CHECK(a.generator.params().values_equal(b.generator.params()));
    CHECK(a.selected_phase == b.selected_phase);
    CHECK(a.selected_epoch == b.selected_epoch);
    REQUIRE(a.discriminator);
    cfg.seed = 1;
    const auto c = train_simulator(small_corpus(), toy_ontology(), cfg);
    CHECK_FALSE(c.generator.params().values_equal(a.generator.params()));
  }

  TEST_CASE("adversarial hooks: frozen discriminator and a custom reward") {
    TrainConfig cfg;
    cfg.method = TrainMethod::Gan;
    cfg.adversarial_epochs = 1;
    cfg.hidden = 8;
    cfg.disc_hidden = 8;
    GanHooks hooks;
    hooks.freeze_discriminator = true;
    hooks.reward = [](const ContextVector &, const std::vector<int> &) { return 1.0; };
    const auto r = gan_train(small_corpus(), toy_ontology(), cfg, hooks);
    // initial discriminator, re-created from the same seed
    Rng rng(cfg.seed);
    GeneratorModel g(layout_for(small_corpus(), toy_ontology()), cfg.hidden);
    g.initialize(rng, cfg.init_scale);
    DiscriminatorModel d(layout_for(small_corpus(), toy_ontology()), cfg.disc_hidden);
    d.initialize(rng, cfg.init_scale);
    REQUIRE(r.discriminator);
    CHECK(r.discriminator->params().values_equal(d.params()));
    const auto &adv = r.log.records.back();
    CHECK(adv.phase == "adversarial");
    REQUIRE(adv.mean_reward);
    CHECK(*adv.mean_reward == doctest::Approx(1.0));
    CHECK(adv.reinforce_turns + adv.forced_turns == count_turns(encode_dialogues(small_corpus().train,
                                                                                 layout_for(small_corpus(), toy_ontology()))));
  }
}
