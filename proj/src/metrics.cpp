#include "simlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace simlab {

std::vector<nn::RecurrentState> encoder_states(const GeneratorModel &g, const EncodedDialogue &d) {
  std::vector<nn::RecurrentState> out;
  out.reserve(d.turns.size());
  nn::RecurrentState s = nn::RecurrentState::zeros(g.hidden());
  for (const auto &t : d.turns) {
    s = encode_turn(g, s, t.context);
    out.push_back(s);
  }
  return out;
}

void OverlapCounts::add(const std::vector<int> &pred, const std::vector<int> &ref) {
  if (pred.empty() && ref.empty()) {
    matched += 1.0;
    predicted += 1.0;
    reference += 1.0;
    return;
  }
  std::map<int, int> counts;
  for (int t : ref) ++counts[t];
  for (int t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      matched += 1.0;
    }
  }
  predicted += static_cast<double>(pred.size());
  reference += static_cast<double>(ref.size());
}

double OverlapCounts::f() const {
  if (matched == 0.0) return 0.0;
  const double p = matched / predicted;
  const double r = matched / reference;
  return 2.0 * p * r / (p + r);
}

double f_score_sequences(const std::vector<std::vector<int>> &predicted,
                         const std::vector<std::vector<int>> &reference) {
  if (predicted.size() != reference.size()) throw std::invalid_argument("f_score: unaligned turn lists");
  OverlapCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) c.add(predicted[i], reference[i]);
  return c.f();
}

std::size_t count_turns(const std::vector<EncodedDialogue> &data) {
  std::size_t n = 0;
  for (const auto &d : data) n += d.turns.size();
  return n;
}

namespace {

void require_nonempty(const std::vector<EncodedDialogue> &data, const char *what) {
  if (count_turns(data) == 0) throw DataError(std::string(what) + ": evaluation set has no turns");
}

} // namespace

double f_score(const GeneratorModel &g, const std::vector<EncodedDialogue> &test) {
  require_nonempty(test, "f_score");
  OverlapCounts c;
  Rng unused(0);
  for (const auto &d : test) {
    const auto states = encoder_states(g, d);
    for (std::size_t t = 0; t < d.turns.size(); ++t)
      c.add(generate_response(g, states[t], DecodeMode::Greedy, unused).tokens, d.turns[t].target);
  }
  return c.f();
}

double kl_divergence(const GeneratorModel &g, const std::vector<EncodedDialogue> &test, bool weighted) {
  require_nonempty(test, "kl_divergence");
  struct Group {
    std::vector<nn::RecurrentState> states;
    std::map<std::vector<int>, double> counts;
  };
  std::map<ContextVector, Group> groups;
  for (const auto &d : test) {
    const auto states = encoder_states(g, d);
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      auto &grp = groups[d.turns[t].context];
      grp.states.push_back(states[t]);
      grp.counts[d.turns[t].target] += 1.0;
    }
  }
  double total = 0.0, weight_sum = 0.0;
  for (const auto &[ctx, grp] : groups) {
    const double n = static_cast<double>(grp.states.size());
    double kl = 0.0;
    for (const auto &[seq, count] : grp.counts) {
      const double p_real = count / n;
      double p_model = 0.0;
      for (const auto &s : grp.states) p_model += std::exp(sequence_logprob(g, s, seq));
      p_model = std::max(p_model / n, 1e-12);
      kl += p_real * std::log(p_real / p_model);
    }
    const double w = weighted ? n : 1.0;
    total += w * kl;
    weight_sum += w;
  }
  return total / weight_sum;
}

double entropy(const GeneratorModel &g, const std::vector<EncodedDialogue> &test) {
  require_nonempty(test, "entropy");
  double sum = 0.0;
  std::size_t steps = 0;
  for (const auto &d : test) {
    const auto states = encoder_states(g, d);
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      const auto tape = teacher_forced_tape(g, states[t], d.turns[t].target);
      for (const auto &p : tape.probs) {
        double h = 0.0;
        for (double x : p)
          if (x > 0.0) h -= x * std::log(x);
        sum += h;
        ++steps;
      }
    }
  }
  return sum / static_cast<double>(steps);
}

double mean_nll(const GeneratorModel &g, const std::vector<EncodedDialogue> &data) {
  require_nonempty(data, "nll");
  double sum = 0.0;
  for (const auto &d : data) {
    const auto states = encoder_states(g, d);
    for (std::size_t t = 0; t < d.turns.size(); ++t) sum -= sequence_logprob(g, states[t], d.turns[t].target);
  }
  return sum / static_cast<double>(count_turns(data));
}

nlohmann::json DirectEvalReport::to_json() const {
  return {{"model", model},     {"f_score", f_score}, {"kl_divergence", kl_divergence}, {"entropy", entropy},
          {"turns", turns},     {"contexts", contexts}, {"weighted_kl", weighted_kl}};
}

DirectEvalReport DirectEvalReport::from_json(const nlohmann::json &j) {
  DirectEvalReport r;
  r.model = j.value("model", "");
  r.f_score = j.at("f_score").get<double>();
  r.kl_divergence = j.at("kl_divergence").get<double>();
  r.entropy = j.at("entropy").get<double>();
  r.turns = j.value("turns", std::size_t{0});
  r.contexts = j.value("contexts", std::size_t{0});
  r.weighted_kl = j.value("weighted_kl", false);
  return r;
}

DirectEvalReport direct_eval(const GeneratorModel &g, const std::vector<EncodedDialogue> &test,
                             const std::string &model_name, bool weighted_kl) {
  DirectEvalReport r;
  r.model = model_name;
  r.f_score = f_score(g, test);
  r.kl_divergence = kl_divergence(g, test, weighted_kl);
  r.entropy = entropy(g, test);
  r.turns = count_turns(test);
  std::map<ContextVector, int> ctx;
  for (const auto &d : test)
    for (const auto &t : d.turns) ctx[t.context] = 1;
  r.contexts = ctx.size();
  r.weighted_kl = weighted_kl;
  return r;
}

std::string render_direct_table(const std::vector<DirectEvalReport> &rows) {
  std::size_t width = 5;
  for (const auto &r : rows) width = std::max(width, r.model.size());
  std::ostringstream out;
  char buf[128];
  out << "Model" << std::string(width - 5, ' ') << "  F-score   KL-div  Entropy\n";
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof buf, "  %7.3f  %7.3f  %7.3f\n", r.f_score, r.kl_divergence, r.entropy);
    out << r.model << std::string(width - r.model.size(), ' ') << buf;
  }
  return out.str();
}

std::vector<int> majority_sequence(const std::vector<EncodedDialogue> &train) {
  std::map<std::vector<int>, std::size_t> counts;
  for (const auto &d : train)
    for (const auto &t : d.turns) ++counts[t.target];
  if (counts.empty()) throw DataError("majority baseline: empty training data");
  // std::map iterates in lexicographic order, so strict > keeps the smallest on ties
  const std::vector<int> *best = nullptr;
  std::size_t best_count = 0;
  for (const auto &[seq, c] : counts)
    if (c > best_count) {
      best = &seq;
      best_count = c;
    }
  return *best;
}

double majority_baseline_f(const std::vector<EncodedDialogue> &train, const std::vector<EncodedDialogue> &test) {
  const auto seq = majority_sequence(train);
  OverlapCounts c;
  for (const auto &d : test)
    for (const auto &t : d.turns) c.add(seq, t.target);
  return c.f();
}

} // namespace simlab
