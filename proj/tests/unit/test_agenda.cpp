#include <doctest.h>

#include <algorithm>

#include "simlab/manager.hpp"
#include "simlab/policy.hpp"
#include "simlab/simulator.hpp"

using namespace simlab;

namespace {

const Ontology &O() { return toy_ontology(); }

UserGoal goal_of(Constraints c, std::set<std::string> r) { return UserGoal{std::move(c), std::move(r)}; }

std::size_t action_index(const SummaryAction &a) {
  const auto all = summary_actions(O());
  return static_cast<std::size_t>(std::find(all.begin(), all.end(), a) - all.begin());
}

ActionChooser handcrafted() {
  return [](const DialogueState &s, const std::vector<double> &, Rng &) { return action_index(handcrafted_action(s, O())); };
}

ActionChooser always(SummaryAction a) {
  return [a](const DialogueState &, const std::vector<double> &, Rng &) { return action_index(a); };
}

ErrorChannelConfig no_errors() {
  ErrorChannelConfig e;
  e.rate = 0.0;
  return e;
}

} // namespace

TEST_SUITE("agenda-sim") {
  TEST_CASE("initial stack order") {
    Rng rng(1);
    const auto g = goal_of({{"food", "indian"}, {"area", "north"}}, {"phone", "address"});
    const auto a = agenda_init(g, O(), rng);
    REQUIRE(a.stack.size() == 6);
    CHECK(a.stack.front().type() == ActType::Bye);
    CHECK(a.stack.back().type() == ActType::Hello);
    CHECK(a.stack[1].type() == ActType::Request);
    CHECK(a.stack[2].type() == ActType::Request);
    CHECK(a.stack[3].type() == ActType::Inform);
    CHECK(a.stack[4].type() == ActType::Inform);
  }

  TEST_CASE("acts per turn follow the capped geometric draw") {
    Rng rng(2);
    double total = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      auto a = agenda_init(goal_of({{"food", "indian"}, {"area", "north"}, {"pricerange", "cheap"}},
                                   {"phone", "address", "postcode"}),
                           O(), rng);
      total += static_cast<double>(agenda_respond(a, rng).size());
    }
    const double mean = total / n;
    CHECK(mean >= 1.5);
    CHECK(mean <= 1.9);
  }

  TEST_CASE("R1: requests and confirmations are answered from the goal") {
    Rng rng(3);
    auto a = agenda_init(goal_of({{"food", "indian"}}, {"phone"}), O(), rng);
    agenda_receive(a, {DialogueAct(ActType::Request, std::string("food"))}, rng);
    CHECK(a.stack.back() == DialogueAct(ActType::Inform, std::string("food"), std::string("indian")));
    agenda_receive(a, {DialogueAct(ActType::Request, std::string("area"))}, rng);
    CHECK(a.stack.back() == DialogueAct(ActType::Inform, std::string("area"), std::string("dontcare")));
    agenda_receive(a, {DialogueAct(ActType::Confirm, std::string("food"), std::string("indian"))}, rng);
    CHECK(a.stack.back().type() == ActType::Affirm);
    agenda_receive(a, {DialogueAct(ActType::Confirm, std::string("food"), std::string("thai"))}, rng);
    CHECK(a.stack.back().type() == ActType::Negate);
    CHECK(a.stack[a.stack.size() - 2] == DialogueAct(ActType::Inform, std::string("food"), std::string("indian")));
  }

  TEST_CASE("R2: a contradicting offer makes the user restate the constraint") {
    Rng rng(4);
    auto a = agenda_init(goal_of({{"food", "chinese"}}, {"phone"}), O(), rng);
    agenda_respond(a, rng);
    // golden curry serves indian food
    agenda_receive(a, {DialogueAct(ActType::Offer, std::string("name"), std::string("golden curry"))}, rng);
    const DialogueAct restate(ActType::Inform, std::string("food"), std::string("chinese"));
    CHECK(std::find(a.stack.begin(), a.stack.end(), restate) != a.stack.end());
    CHECK_FALSE(a.offered_entity);
  }

  TEST_CASE("R3/R4: requests stay pending until answered under a consistent offer") {
    Rng rng(5);
    auto a = agenda_init(goal_of({{"food", "indian"}}, {"phone", "address"}), O(), rng);
    a.stack.assign(1, DialogueAct(ActType::Bye));
    agenda_receive(a, {DialogueAct(ActType::Offer, std::string("name"), std::string("golden curry"))}, rng);
    const DialogueAct phone(ActType::Request, std::string("phone")), addr(ActType::Request, std::string("address"));
    CHECK(std::count(a.stack.begin(), a.stack.end(), phone) == 1);
    CHECK(std::count(a.stack.begin(), a.stack.end(), addr) == 1);
    agenda_receive(a, {DialogueAct(ActType::Inform, std::string("phone"), std::string("01223 300000"))}, rng);
    CHECK(std::count(a.stack.begin(), a.stack.end(), phone) == 0);
    CHECK(std::count(a.stack.begin(), a.stack.end(), addr) == 1);
  }

  TEST_CASE("the user keeps saying bye and flags ignored goodbyes") {
    Rng rng(6);
    auto a = agenda_init(goal_of({{"food", "indian"}}, {"phone"}), O(), rng);
    a.stack.assign(1, DialogueAct(ActType::Bye));
    CHECK(agenda_respond(a, rng) == std::vector<DialogueAct>{DialogueAct(ActType::Bye)});
    CHECK(a.user_said_bye);
    agenda_receive(a, {DialogueAct(ActType::Repeat)}, rng);
    CHECK(a.violation_flag);
    CHECK(agenda_respond(a, rng) == std::vector<DialogueAct>{DialogueAct(ActType::Bye)});
    agenda_receive(a, {DialogueAct(ActType::Bye)}, rng);
    CHECK_FALSE(a.violation_flag);
  }

  TEST_CASE("bye is never combined with other acts") {
    Rng rng(7);
    for (int i = 0; i < 2000; ++i) {
      auto a = agenda_init(sample_goal(O(), rng), O(), rng);
      for (int t = 0; t < 10 && !a.user_said_bye; ++t) {
        const auto out = agenda_respond(a, rng);
        CHECK(out.size() <= kMaxUserActs);
        if (contains_act(out, ActType::Bye)) CHECK(out.size() == 1);
      }
    }
  }

  TEST_CASE("repeat forever runs into the turn cap") {
    AgendaSimulator sim(O());
    Rng rng(8);
    const auto rec = run_dialogue(always({SummaryKind::Repeat, std::nullopt}), sim, sample_goal(O(), rng), O(), {},
                                  no_errors(), rng);
    CHECK(rec.hit_cap);
    CHECK(rec.length == kTurnCap);
    CHECK_FALSE(rec.success);
  }

  TEST_CASE("handcrafted policy against the agenda simulator") {
    AgendaSimulator sim(O());
    Rng rng(9);
    int ended = 0, success = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
      const auto rec = run_dialogue(handcrafted(), sim, sample_goal(O(), rng), O(), {}, no_errors(), rng);
      ended += rec.hit_cap ? 0 : 1;
      success += rec.success ? 1 : 0;
      CHECK(rec.violations == 0);
    }
    CHECK(ended >= 990);
    CHECK(success >= 900);
  }

  TEST_CASE("unsatisfiable goals succeed through canthelp") {
    // first constraint combination no entity satisfies
    Constraints c;
    bool found = false;
    for (const auto &f : O().values("food"))
      for (const auto &ar : O().values("area"))
        for (const auto &p : O().values("pricerange")) {
          if (found) continue;
          Constraints t{{"food", f}, {"area", ar}, {"pricerange", p}};
          if (matching_entities(O(), t).empty()) {
            c = t;
            found = true;
          }
        }
    REQUIRE(found);
    GoalMonitor m(goal_of(c, {"phone"}), O());
    CHECK_FALSE(m.goal_satisfiable());
    m.observe({DialogueAct(ActType::Canthelp)});
    CHECK(m.success());
  }
}
