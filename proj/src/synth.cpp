#include <cstdio>

#include "simlab/corpus.hpp"
#include "simlab/policy.hpp"

namespace simlab {

std::vector<Dialogue> synthesize_corpus(const Ontology &o, const SynthesisConfig &cfg) {
  const auto actions = summary_actions(o);
  AgendaSimulator sim(o);
  RewardConfig rc;
  rc.turn_cap = cfg.turn_cap;
  ErrorChannelConfig clean;
  clean.rate = 0.0;
  auto handcrafted = [&](const DialogueState &s, const std::vector<double> &, Rng &) -> std::size_t {
    const SummaryAction a = handcrafted_action(s, o);
    return static_cast<std::size_t>(std::find(actions.begin(), actions.end(), a) - actions.begin());
  };
  Rng master(cfg.seed);
  std::vector<Dialogue> out;
  out.reserve(cfg.dialogues);
  for (std::size_t i = 0; i < cfg.dialogues; ++i) {
    Rng rng = master.split();
    const UserGoal goal = sample_goal(o, rng);
    auto rec = run_dialogue(handcrafted, sim, goal, o, rc, clean, rng);
    char id[32];
    std::snprintf(id, sizeof id, "synth-%04zu", i);
    out.push_back({id, rec.goal, std::move(rec.turns)});
  }
  return out;
}

} // namespace simlab
