#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "ref_model.hpp"
#include "simlab/metrics.hpp"

using namespace simlab;

namespace {

// Five dialogues over the tiny layout. Contexts repeat across dialogues so the
// KL grouping sees several occurrences with different encoder histories.
std::vector<EncodedDialogue> micro_corpus() {
  const std::size_t W = testutil::tiny_layout().width();
  auto ctx = [&](int k) {
    ContextVector x(W, 0.0);
    x[static_cast<std::size_t>(k) % W] = 1.0;
    x[(static_cast<std::size_t>(k) * 5 + 2) % W] = 1.0;
    return x;
  };
  auto turn = [&](int k, std::vector<int> y) { return EncodedTurn{ctx(k), std::move(y), false}; };
  return {
      {"d1", {turn(0, {4}), turn(1, {5, 4}), turn(2, {})}},
      {"d2", {turn(0, {4}), turn(1, {5})}},
      {"d3", {turn(0, {5}), turn(3, {4, 4, 5}), turn(1, {5, 4})}},
      {"d4", {turn(2, {})}},
      {"d5", {turn(0, {4}), turn(2, {3}), turn(3, {4})}},
  };
}

// Brute-force multiset overlap: try removing each predicted token from a copy
// of the reference list.
double oracle_f(const std::vector<std::vector<int>> &pred, const std::vector<std::vector<int>> &ref) {
  double m = 0, p = 0, r = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].empty() && ref[i].empty()) {
      m += 1, p += 1, r += 1;
      continue;
    }
    auto left = ref[i];
    for (int t : pred[i]) {
      for (std::size_t j = 0; j < left.size(); ++j)
        if (left[j] == t) {
          left.erase(left.begin() + static_cast<std::ptrdiff_t>(j));
          m += 1;
          break;
        }
    }
    p += static_cast<double>(pred[i].size());
    r += static_cast<double>(ref[i].size());
  }
  if (m == 0) return 0.0;
  const double P = m / p, R = m / r;
  return 2 * P * R / (P + R);
}

std::vector<int> ref_greedy(const GeneratorModel &g, testutil::RefState s) {
  std::vector<int> out;
  int input = kSos;
  while (out.size() < kMaxUserActs) {
    const auto p = testutil::ref_decoder_step(g, s, input);
    const auto best = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    if (best == kEos) break;
    out.push_back(best);
    input = best;
  }
  return out;
}

GeneratorModel random_model(std::uint64_t seed) {
  GeneratorModel g(testutil::tiny_layout(), 4);
  Rng rng(seed);
  g.params().init_uniform(rng, 1.0);
  return g;
}

} // namespace

TEST_SUITE("sim-metrics") {
  TEST_CASE("F on the worked example") {
    // predicted {inform(food), request(phone)} against reference {inform(food), inform(area)}
    CHECK(f_score_sequences({{4, 7}}, {{4, 8}}) == doctest::Approx(0.5));
    CHECK(f_score_sequences({{}}, {{}}) == doctest::Approx(1.0));
    CHECK(f_score_sequences({{4}}, {{}}) == 0.0);
    // duplicates are matched at most as often as they occur in the reference
    CHECK(f_score_sequences({{4, 4}}, {{4}}) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS(f_score_sequences({{4}}, {}));
  }

  TEST_CASE("F agrees with a brute-force oracle on random sequence lists") {
    Rng rng(8);
    for (int inst = 0; inst < 200; ++inst) {
      std::vector<std::vector<int>> a, b;
      for (std::size_t t = 0, n = 1 + rng.below(6); t < n; ++t) {
        std::vector<int> x, y;
        for (std::size_t k = 0, m = rng.below(4); k < m; ++k) x.push_back(3 + static_cast<int>(rng.below(4)));
        for (std::size_t k = 0, m = rng.below(4); k < m; ++k) y.push_back(3 + static_cast<int>(rng.below(4)));
        a.push_back(x);
        b.push_back(y);
      }
      CHECK(std::abs(f_score_sequences(a, b) - oracle_f(a, b)) <= 1e-12);
    }
  }

  TEST_CASE("model metrics match brute-force oracles on a micro corpus") {
    const auto data = micro_corpus();
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto g = random_model(seed);

      // per-turn encoder states from the naive forward pass
      std::vector<ContextVector> ctxs;
      std::vector<std::vector<int>> refs, preds;
      std::vector<testutil::RefState> states;
      for (const auto &d : data) {
        const auto st = testutil::ref_encoder_states(g, d);
        for (std::size_t t = 0; t < d.turns.size(); ++t) {
          ctxs.push_back(d.turns[t].context);
          refs.push_back(d.turns[t].target);
          states.push_back(st[t]);
          preds.push_back(ref_greedy(g, st[t]));
        }
      }
      const std::size_t n = refs.size();

      CHECK(std::abs(f_score(g, data) - oracle_f(preds, refs)) <= 1e-9);

      // KL: for each distinct context, the empirical reference distribution
      // against the model probability averaged over that context's occurrences
      std::vector<bool> done(n, false);
      double kl_sum = 0.0, kl_weighted = 0.0;
      std::size_t groups = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (done[i]) continue;
        std::vector<std::size_t> members;
        for (std::size_t j = i; j < n; ++j)
          if (ctxs[j] == ctxs[i]) {
            members.push_back(j);
            done[j] = true;
          }
        const double cnt = static_cast<double>(members.size());
        std::vector<bool> seen(n, false);
        double kl = 0.0;
        for (std::size_t a : members) {
          if (seen[a]) continue;
          double c = 0.0;
          for (std::size_t b : members)
            if (refs[b] == refs[a]) {
              c += 1.0;
              seen[b] = true;
            }
          const double p_real = c / cnt;
          double q = 0.0;
          for (std::size_t b : members) q += testutil::ref_sequence_prob(g, states[b], refs[a]);
          q /= cnt;
          kl += p_real * std::log(p_real / q);
        }
        kl_sum += kl;
        kl_weighted += cnt * kl;
        ++groups;
      }
      CHECK(groups == 4);
      CHECK(std::abs(kl_divergence(g, data) - kl_sum / static_cast<double>(groups)) <= 1e-9);
      CHECK(std::abs(kl_divergence(g, data, true) - kl_weighted / static_cast<double>(n)) <= 1e-9);

      // entropy over every teacher-forced decoding step
      double h_sum = 0.0;
      std::size_t steps = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (const auto &p : testutil::ref_forced_dists(g, states[i], refs[i])) {
          for (double x : p)
            if (x > 0) h_sum -= x * std::log(x);
          ++steps;
        }
      CHECK(std::abs(entropy(g, data) - h_sum / static_cast<double>(steps)) <= 1e-9);

      double nll = 0.0;
      for (std::size_t i = 0; i < n; ++i) nll -= std::log(testutil::ref_sequence_prob(g, states[i], refs[i]));
      CHECK(std::abs(mean_nll(g, data) - nll / static_cast<double>(n)) <= 1e-9);
    }
  }

  TEST_CASE("uniform model: entropy is log of the visible vocabulary") {
    GeneratorModel g(testutil::tiny_layout(), 3);
    CHECK(entropy(g, micro_corpus()) == doctest::Approx(std::log(4.0)));
  }

  TEST_CASE("KL is zero when the model reproduces a deterministic corpus") {
    // one context, always the empty turn; push EOS probability towards 1
    GeneratorModel g(testutil::tiny_layout(), 2);
    g.params()[g.projection().b].value.data[kEos] = 40.0;
    const ContextVector x(g.context_width(), 0.0);
    const std::vector<EncodedDialogue> data = {{"a", {{x, {}, false}}}, {"b", {{x, {}, false}}}};
    CHECK(kl_divergence(g, data) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(f_score(g, data) == doctest::Approx(1.0));
  }

  TEST_CASE("majority baseline") {
    const auto data = micro_corpus();
    // {4} occurs three times, more than any other sequence
    CHECK(majority_sequence(data) == std::vector<int>{4});
    std::vector<std::vector<int>> pred, ref;
    for (const auto &d : data)
      for (const auto &t : d.turns) {
        pred.push_back({4});
        ref.push_back(t.target);
      }
    CHECK(majority_baseline_f(data, data) == doctest::Approx(oracle_f(pred, ref)));
    // ties resolve to the lexicographically smallest sequence
    const ContextVector x(testutil::tiny_layout().width(), 0.0);
    CHECK(majority_sequence({{"t", {{x, {5}, false}, {x, {4, 5}, false}}}}) == std::vector<int>{4, 5});
    CHECK_THROWS_AS(majority_sequence({}), DataError);
  }

  TEST_CASE("empty evaluation data is a data error") {
    const auto g = random_model(1);
    CHECK_THROWS_AS(f_score(g, {}), DataError);
    CHECK_THROWS_AS(kl_divergence(g, {}), DataError);
  }

  TEST_CASE("direct evaluation report and table") {
    const auto g = random_model(2);
    const auto r = direct_eval(g, micro_corpus(), "MLE");
    CHECK(r.turns == 12);
    CHECK(r.contexts == 4);
    const auto back = DirectEvalReport::from_json(r.to_json());
    CHECK(back.f_score == r.f_score);
    CHECK(back.model == "MLE");
    const auto table = render_direct_table({r});
    CHECK(table.find("Model") == 0);
    CHECK(table.find("F-score") != std::string::npos);
    CHECK(table.find("MLE") != std::string::npos);
  }
}
