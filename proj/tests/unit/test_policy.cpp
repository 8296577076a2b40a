#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "simlab/policy.hpp"

using namespace simlab;

namespace {

const Ontology &O() { return toy_ontology(); }

} // namespace

TEST_SUITE("policy-rl") {
  TEST_CASE("reward equals 100*success - length - 5*violations on every episode") {
    AgendaSimulator sim(O());
    const PolicyModel p(O());
    Rng rng(1);
    int with_violation = 0;
    for (int i = 0; i < 1000; ++i) {
      // high temperature: a near-uniform policy visits violations and the cap
      const auto rec = run_episode(p, sim, O(), {}, {}, 5.0, rng);
      const double expected = 100.0 * (rec.success ? 1 : 0) - rec.length - 5.0 * rec.violations;
      CHECK(rec.total_reward() == doctest::Approx(expected).epsilon(1e-12));
      CHECK(rec.length == static_cast<int>(rec.steps.size()));
      CHECK(rec.length <= kTurnCap);
      with_violation += rec.violations > 0 ? 1 : 0;
    }
    CHECK(with_violation > 0);
  }

  TEST_CASE("error channel corrupts acts at the configured rate") {
    Rng rng(2);
    ErrorChannelConfig cfg;
    std::size_t corrupted = 0, total = 0, changed = 0;
    const std::vector<DialogueAct> turn = {DialogueAct(ActType::Inform, std::string("food"), std::string("indian")),
                                           DialogueAct(ActType::Request, std::string("phone")),
                                           DialogueAct(ActType::Bye)};
    for (int i = 0; i < 40000; ++i) {
      std::size_t c = 0;
      const auto out = corrupt(turn, cfg, O(), rng, &c);
      corrupted += c;
      total += turn.size();
      if (out != turn) ++changed;
      CHECK_FALSE(out.empty());
    }
    const double rate = static_cast<double>(corrupted) / static_cast<double>(total);
    CHECK(rate >= 0.24);
    CHECK(rate <= 0.26);
    CHECK(changed > 0);
    ErrorChannelConfig off;
    off.rate = 0.0;
    CHECK(corrupt(turn, off, O(), rng) == turn);
  }

  TEST_CASE("fully deleted turns become null") {
    ErrorChannelConfig cfg;
    cfg.rate = 1.0;
    cfg.value_substitution = cfg.slot_substitution = cfg.act_type_substitution = 0.0;
    cfg.deletion = 1.0;
    Rng rng(3);
    const auto out = corrupt({DialogueAct(ActType::Bye)}, cfg, O(), rng);
    CHECK(out == std::vector<DialogueAct>{DialogueAct(ActType::Null)});
  }

  TEST_CASE("error channel validation") {
    ErrorChannelConfig c;
    c.deletion = 0.5;
    CHECK_THROWS_AS(c.validate(), UsageError);
    c = {};
    c.rate = 1.5;
    CHECK_THROWS_AS(c.validate(), UsageError);
  }

  TEST_CASE("greedy ties and Boltzmann probabilities") {
    CHECK(greedy_action({1.0, 3.0, 3.0, 2.0}) == 1);
    const auto p = boltzmann_probs({0.0, std::log(2.0)}, 1.0);
    CHECK(p[0] == doctest::Approx(1.0 / 3.0));
    CHECK(p[1] == doctest::Approx(2.0 / 3.0));
    const auto flat = boltzmann_probs({5.0, 5.0, 5.0, 5.0}, 0.1);
    for (double x : flat) CHECK(x == doctest::Approx(0.25));
    CHECK(boltzmann_probs({1.0, 2.0}, 0.0) == std::vector<double>{0.0, 1.0});
    // large q values do not overflow
    const auto big = boltzmann_probs({1000.0, 0.0}, 0.5);
    CHECK(big[0] == doctest::Approx(1.0));
  }

  TEST_CASE("feature space") {
    const FeatureSpace f(O());
    CHECK(f.width() == f.names().size());
    const auto phi = f.features(initial_state(O()));
    CHECK(phi.size() == f.width());
    // nothing known: only the match bucket for "5 or more" is set
    double total = 0;
    for (double x : phi) total += x;
    CHECK(total == 1.0);
    CHECK(phi[6 + 3] == 1.0);
  }

  TEST_CASE("policy save/load round trip and validation") {
    PolicyModel p(O());
    p.weights(2)[3] = 1.25;
    p.metadata = {"agenda", 7, 0.25, 100};
    const auto path = std::filesystem::temp_directory_path() / "simlab_test_policy.json";
    p.save(path);
    const auto q = PolicyModel::load(path, O());
    CHECK(q.weights(2)[3] == 1.25);
    CHECK(q.metadata.simulator == "agenda");
    CHECK(q.metadata.seed == 7);
    std::filesystem::remove(path);
    auto j = p.to_json();
    j["actions"][0] = "dance";
    CHECK_THROWS_AS(PolicyModel::from_json(j, O()), DataError);
    j = p.to_json();
    j["weights"][0].erase(0);
    CHECK_THROWS_AS(PolicyModel::from_json(j, O()), DataError);
    CHECK_THROWS_AS(PolicyModel::load("/nonexistent/policy.json", O()), DataError);
  }

  TEST_CASE("training is deterministic and learns against the agenda simulator") {
    AgendaSimulator sim(O());
    PolicyTrainConfig cfg;
    cfg.episodes = 1500;
    cfg.seed = 3;
    const auto a = train_policy(sim, O(), cfg);
    const auto b = train_policy(sim, O(), cfg);
    CHECK(a.model.to_json() == b.model.to_json());
    REQUIRE(a.curve.size() == 3);
    CHECK(a.curve.back().episode == 1500);
    CHECK(a.curve.front().tau == doctest::Approx(cfg.tau_start - (cfg.tau_start - cfg.tau_end) * 499.0 / 1499.0));
    const auto e1 = evaluate_policy(a.model, sim, O(), 300, cfg.error, 11);
    const auto e2 = evaluate_policy(a.model, sim, O(), 300, cfg.error, 11);
    CHECK(e1.to_json() == e2.to_json());
    const auto untrained = evaluate_policy(PolicyModel(O()), sim, O(), 300, cfg.error, 11);
    CHECK(e1.mean_reward > untrained.mean_reward);
    CHECK_THROWS_AS(evaluate_policy(a.model, sim, O(), 0, cfg.error, 1), UsageError);
  }
}
