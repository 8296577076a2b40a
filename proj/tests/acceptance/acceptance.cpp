// Acceptance run: one PASS/FAIL line per criterion. The oracle-backed
// property checks are the unit test cases, executed here by name.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include "simlab/crosseval.hpp"
#include "simlab/metrics.hpp"
#include "simlab/policy.hpp"
#include "simlab/training.hpp"

using namespace simlab;

namespace {

struct CaseCounter : doctest::IReporter {
  static inline int ran = 0;
  static inline int failed = 0;
  explicit CaseCounter(const doctest::ContextOptions &) {}
  void report_query(const doctest::QueryData &) override {}
  void test_run_start() override {}
  void test_run_end(const doctest::TestRunStats &) override {}
  void test_case_start(const doctest::TestCaseData &) override {}
  void test_case_reenter(const doctest::TestCaseData &) override {}
  void test_case_end(const doctest::CurrentTestCaseStats &st) override {
    ++ran;
    if (st.failure_flags != 0 || st.numAssertsFailedCurrentTest > 0) ++failed;
  }
  void test_case_exception(const doctest::TestCaseException &) override {}
  void subcase_start(const doctest::SubcaseSignature &) override {}
  void subcase_end() override {}
  void log_assert(const doctest::AssertData &) override {}
  void log_message(const doctest::MessageData &) override {}
  void test_case_skipped(const doctest::TestCaseData &) override {}
};
REGISTER_LISTENER("case-counter", 1, CaseCounter);

struct CaseRun {
  int ran = 0;
  int failed = 0;
  double seconds = 0.0;
  bool ok(int expected) const { return ran == expected && failed == 0; }
};

CaseRun run_cases(const std::string &filter) {
  CaseCounter::ran = CaseCounter::failed = 0;
  doctest::Context ctx;
  ctx.setOption("test-case", filter.c_str());
  ctx.setOption("minimal", true);
  ctx.setOption("no-version", true);
  const auto t0 = std::chrono::steady_clock::now();
  ctx.run();
  CaseRun r;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.ran = CaseCounter::ran;
  r.failed = CaseCounter::failed;
  return r;
}

int failures = 0;

void report(bool pass, const std::string &name, const std::string &detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

std::string fmt(const char *f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// multiset token overlap, summed over turns, then P/R/F
double brute_f(const std::vector<std::vector<int>> &pred, const std::vector<std::vector<int>> &ref) {
  double m = 0, p = 0, r = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].empty() && ref[i].empty()) {
      m += 1, p += 1, r += 1;
      continue;
    }
    auto left = ref[i];
    for (int t : pred[i]) {
      auto it = std::find(left.begin(), left.end(), t);
      if (it != left.end()) left.erase(it), m += 1;
    }
    p += static_cast<double>(pred[i].size());
    r += static_cast<double>(ref[i].size());
  }
  if (m == 0) return 0.0;
  const double P = m / p, R = m / r;
  return 2 * P * R / (P + R);
}

double brute_majority_f(const std::vector<EncodedDialogue> &train, const std::vector<EncodedDialogue> &test) {
  std::map<std::vector<int>, int> counts;
  for (const auto &d : train)
    for (const auto &t : d.turns) ++counts[t.target];
  // std::map iterates lexicographically, so strict > keeps the smallest on ties
  std::vector<int> best;
  int n = -1;
  for (const auto &[seq, c] : counts)
    if (c > n) best = seq, n = c;
  std::vector<std::vector<int>> pred, ref;
  for (const auto &d : test)
    for (const auto &t : d.turns) pred.push_back(best), ref.push_back(t.target);
  return brute_f(pred, ref);
}

struct Fixture {
  CorpusSplit split;
  std::vector<EncodedDialogue> train, test;
};

const Fixture &fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.split = make_split(synthesize_corpus(toy_ontology(), {}), SplitSpec{});
    const auto layout = layout_for(x.split, toy_ontology());
    x.train = encode_dialogues(x.split.train, layout);
    x.test = encode_dialogues(x.split.test, layout);
    return x;
  }();
  return f;
}

TrainConfig mle_tuned(std::uint64_t seed) {
  TrainConfig c;
  c.method = TrainMethod::Mle;
  c.gen_lr = 1e-4;
  c.gen_wd = 1e-3;
  c.seed = seed;
  return c;
}

TrainConfig mle_default(std::uint64_t seed) {
  auto c = mle_tuned(seed);
  c.gen_lr = 1e-3;
  c.gen_wd = 0.0;
  return c;
}

TrainConfig gan(int pretrain, std::uint64_t seed) {
  auto c = mle_tuned(seed);
  c.method = TrainMethod::Gan;
  c.pretrain_epochs = pretrain;
  return c;
}

// ---------------------------------------------------------------------------

void gradient_correctness() {
  const auto r = run_cases(
      "lstm gradients match finite differences,dense gradients match finite differences,"
      "softmax cross-entropy gradient,REINFORCE estimator matches the enumerated policy gradient,"
      "full dialogue backprop matches finite differences");
  report(r.ok(5) && r.seconds < 60.0, "gradient correctness",
         std::to_string(r.ran - r.failed) + "/5 suites (100 instances each, rel err < 1e-4) in " +
             fmt("%.1f s", r.seconds));
}

void metric_oracles() {
  const auto r = run_cases(
      "F on the worked example,F agrees with a brute-force oracle on random sequence lists,"
      "model metrics match brute-force oracles on a micro corpus");
  report(r.ok(3), "metric oracle equivalence",
         std::to_string(r.ran - r.failed) + "/3 oracle checks within 1e-9 (5-dialogue micro corpus, lengths <= 3)");
}

void reward_accounting() {
  const auto r = run_cases("reward equals 100*success - length - 5*violations on every episode");
  report(r.ok(1), "reward accounting", "G0 identity on 1000 episodes: " + std::string(r.ok(1) ? "exact" : "broken"));
}

void mle_learning() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto &fx = fixture();
  const auto res = train_simulator(fx.split, toy_ontology(), mle_tuned(0));
  double init = 0, best = 1e300;
  for (const auto &rec : res.log.records) {
    if (rec.phase == "init") init = rec.dev_nll;
    else best = std::min(best, rec.dev_nll);
  }
  const double f = f_score(res.generator, fx.test);
  const double base = brute_majority_f(fx.train, fx.test);
  const double secs = seconds_since(t0);
  const bool pass = best < 0.7 * init && f >= base + 0.15 && secs < 600;
  report(pass, "MLE learning",
         "dev NLL " + fmt("%.3f", init) + " -> " + fmt("%.3f", best) + " (" + fmt("%.1f%%", 100 * best / init) +
             "), test F " + fmt("%.3f", f) + " vs majority " + fmt("%.3f", base) + ", " + fmt("%.0f s", secs));
}

struct Models {
  std::shared_ptr<const GeneratorModel> mle, gan;
};

Models simulator_comparison() {
  const auto &fx = fixture();
  const char *names[] = {"MLE-tuned", "MLE-default", "GAN-0", "GAN-1", "GAN-10", "GAN-30"};
  std::vector<DirectEvalReport> mean(6);
  Models keep;
  const int seeds = 3;
  for (int s = 0; s < seeds; ++s) {
    const std::vector<TrainConfig> cfgs = {mle_tuned(s), mle_default(s), gan(0, s), gan(1, s), gan(10, s), gan(30, s)};
    for (std::size_t m = 0; m < cfgs.size(); ++m) {
      auto res = train_simulator(fx.split, toy_ontology(), cfgs[m]);
      const auto rep = direct_eval(res.generator, fx.test, names[m]);
      mean[m].model = names[m];
      mean[m].f_score += rep.f_score / seeds;
      mean[m].kl_divergence += rep.kl_divergence / seeds;
      mean[m].entropy += rep.entropy / seeds;
      mean[m].turns = rep.turns;
      mean[m].contexts = rep.contexts;
      if (s == 0 && m == 0) keep.mle = std::make_shared<const GeneratorModel>(std::move(res.generator));
      if (s == 0 && m == 4) keep.gan = std::make_shared<const GeneratorModel>(std::move(res.generator));
    }
  }
  std::cout << render_direct_table(mean);
  const double mle_max_h = std::max(mean[0].entropy, mean[1].entropy);
  const double gan01_min_h = std::min(mean[2].entropy, mean[3].entropy);
  bool pass = gan01_min_h > mle_max_h;
  for (std::size_t m = 4; m < 6; ++m) {
    pass = pass && std::abs(mean[m].f_score - mean[0].f_score) <= 0.05;
    pass = pass && mean[m].entropy > mle_max_h && mean[m].entropy < gan01_min_h;
  }
  report(pass, "simulator comparison",
         "H(GAN-0/1) min " + fmt("%.3f", gan01_min_h) + " > H(MLE) max " + fmt("%.3f", mle_max_h) +
             "; GAN-10 F/H " + fmt("%.3f", mean[4].f_score) + "/" + fmt("%.3f", mean[4].entropy) + ", GAN-30 F/H " +
             fmt("%.3f", mean[5].f_score) + "/" + fmt("%.3f", mean[5].entropy) + " vs MLE-tuned F " +
             fmt("%.3f", mean[0].f_score) + " (3-seed means)");
  return keep;
}

void policy_training() {
  const auto t0 = std::chrono::steady_clock::now();
  AgendaSimulator sim(toy_ontology());
  double worst = 1.0, total = 0.0;
  std::string each;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    PolicyTrainConfig cfg;
    cfg.episodes = 5000;
    cfg.seed = seed;
    const auto res = train_policy(sim, toy_ontology(), cfg);
    const auto ev = evaluate_policy(res.model, sim, toy_ontology(), 1000, cfg.error, 1000 + seed);
    worst = std::min(worst, ev.success_rate);
    total += ev.success_rate;
    each += (each.empty() ? "" : " ") + fmt("%.1f", 100 * ev.success_rate);
  }
  const double secs = seconds_since(t0);
  report(worst >= 0.8 && secs < 900, "policy training",
         "greedy success per seed [" + each + "]%, mean " + fmt("%.1f%%", 20 * total) + ", " + fmt("%.0f s", secs));
}

void crosseval_structure(const Models &m) {
  const auto &o = toy_ontology();
  std::vector<SimulatorEntry> sims = {
      {"mle", true, [&] { return std::make_unique<NeuralSimulator>(m.mle, o, "mle"); }},
      {"gan", true, [&] { return std::make_unique<NeuralSimulator>(m.gan, o, "gan"); }},
      {"agenda", false, [&] { return std::make_unique<AgendaSimulator>(o); }},
  };
  CrossEvalConfig cfg;
  cfg.policies_per_sim = 2;
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = run_crosseval(sims, o, cfg);
  const auto &r = out.report;
  std::cout << render_report(r, "text");

  bool pass = r.matrix.size() == 3 && r.runs.size() == 3;
  std::vector<double> overall(3, 0.0);
  for (std::size_t i = 0; pass && i < 3; ++i) {
    pass = r.matrix[i].size() == 3 && r.runs[i].size() == 2;
    // first stage: mean over the K policies per cell; second: group means
    double neural = 0.0, agenda = 0.0;
    for (std::size_t j = 0; pass && j < 3; ++j) {
      pass = r.runs[i][0].size() == 3 && r.runs[i][1].size() == 3;
      const double cell = 0.5 * (r.runs[i][0][j].reward + r.runs[i][1][j].reward);
      pass = pass && std::abs(cell - r.matrix[i][j].reward) < 1e-9;
      (j == 2 ? agenda : neural) += j == 2 ? cell : cell / 2;
    }
    overall[i] = 0.5 * (neural + agenda);
    pass = pass && std::abs(overall[i] - r.overall[i].reward) < 1e-9;
  }
  if (pass) {
    std::vector<std::size_t> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return overall[a] > overall[b]; });
    pass = order == r.ranking;
  }
  report(pass, "cross-evaluation structure",
         "3x3 matrix, K=2, overall and ranking recomputed independently, " + fmt("%.0f s", seconds_since(t0)));
  if (r.overall.size() == 3)
    std::cout << "NOTE GAN row overall reward " << fmt("%.2f", r.overall[1].reward) << " vs MLE row "
              << fmt("%.2f", r.overall[0].reward)
              << (r.overall[1].reward >= r.overall[0].reward ? " (GAN >= MLE)" : " (GAN < MLE, not asserted)")
              << std::endl;
}

void determinism() {
  const auto &fx = fixture();
  const auto &o = toy_ontology();
  bool pass = true;

  auto cfg = gan(2, 5);
  cfg.adversarial_epochs = 2;
  const auto g1 = train_simulator(fx.split, o, cfg), g2 = train_simulator(fx.split, o, cfg);
  pass = pass && g1.generator.to_json().dump() == g2.generator.to_json().dump();
  pass = pass && g1.log.to_jsonl() == g2.log.to_jsonl();
  pass = pass && direct_eval(g1.generator, fx.test, "g").to_json().dump() ==
                     direct_eval(g2.generator, fx.test, "g").to_json().dump();

  AgendaSimulator sim(o);
  PolicyTrainConfig pc;
  pc.episodes = 600;
  pc.seed = 9;
  const auto p1 = train_policy(sim, o, pc), p2 = train_policy(sim, o, pc);
  pass = pass && p1.model.to_json().dump() == p2.model.to_json().dump();
  pass = pass && evaluate_policy(p1.model, sim, o, 200, pc.error, 4).to_json().dump() ==
                     evaluate_policy(p2.model, sim, o, 200, pc.error, 4).to_json().dump();

  auto model = std::make_shared<const GeneratorModel>(g1.generator);
  std::vector<SimulatorEntry> sims = {
      {"agenda", false, [&] { return std::make_unique<AgendaSimulator>(o); }},
      {"gan", true, [&] { return std::make_unique<NeuralSimulator>(model, o, "gan"); }},
  };
  CrossEvalConfig cc;
  cc.policies_per_sim = 1;
  cc.train_episodes = 300;
  cc.eval_dialogues = 100;
  pass = pass && render_report(run_crosseval(sims, o, cc).report, "json") ==
                     render_report(run_crosseval(sims, o, cc).report, "json");
  report(pass, "determinism", "simulator training, direct eval, policy training/eval and crosseval rerun byte-identical");
}

} // namespace

int main() {
  gradient_correctness();
  metric_oracles();
  reward_accounting();
  mle_learning();
  const auto models = simulator_comparison();
  policy_training();
  crosseval_structure(models);
  determinism();
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
