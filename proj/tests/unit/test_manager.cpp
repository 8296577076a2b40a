#include <doctest.h>

#include "simlab/manager.hpp"

using namespace simlab;

namespace {

const Ontology &O() { return toy_ontology(); }

DialogueAct inform(const char *s, const char *v) { return DialogueAct(ActType::Inform, std::string(s), std::string(v)); }

} // namespace

TEST_SUITE("dialogue-manager") {
  TEST_CASE("initial state has one empty belief per informable slot") {
    const auto s = initial_state(O());
    CHECK(s.slots.size() == 3);
    for (const auto &[slot, b] : s.slots) CHECK(b == SlotBelief{});
    CHECK(state_constraints(s).empty());
  }

  TEST_CASE("focus tracking: latest inform wins, repeats ground") {
    auto s = track(initial_state(O()), {inform("food", "indian")});
    CHECK(s.slots["food"].value == "indian");
    CHECK_FALSE(s.slots["food"].grounded);
    s = track(s, {inform("food", "indian")});
    CHECK(s.slots["food"].grounded);
    s = track(s, {inform("food", "thai")});
    CHECK(s.slots["food"].value == "thai");
    CHECK_FALSE(s.slots["food"].grounded);
    CHECK(s.turn == 3);
    // unknown slots are ignored
    s = track(s, {inform("name", "x")});
    CHECK(s.slots.count("name") == 0);
  }

  TEST_CASE("affirm and negate act on the last confirmed slot") {
    auto s = track(initial_state(O()), {inform("area", "north")});
    observe_system(s, {DialogueAct(ActType::Confirm, std::string("area"), std::string("north"))});
    CHECK(s.last_confirmed_slot == "area");
    auto yes = track(s, {DialogueAct(ActType::Affirm)});
    CHECK(yes.slots["area"].grounded);
    auto no = track(s, {DialogueAct(ActType::Negate)});
    CHECK_FALSE(no.slots["area"].value);
    // without a pending confirmation affirm does nothing
    auto plain = track(initial_state(O()), {DialogueAct(ActType::Affirm)});
    CHECK(plain.slots["area"] == SlotBelief{});
  }

  TEST_CASE("deny clears a matching hypothesis only") {
    auto s = track(initial_state(O()), {inform("food", "indian")});
    CHECK(track(s, {DialogueAct(ActType::Deny, std::string("food"), std::string("thai"))}).slots["food"].value == "indian");
    CHECK_FALSE(track(s, {DialogueAct(ActType::Deny, std::string("food"), std::string("indian"))}).slots["food"].value);
  }

  TEST_CASE("requests, offers and reqalts") {
    auto s = track(initial_state(O()), {inform("food", "indian"), DialogueAct(ActType::Request, std::string("phone"))});
    CHECK(s.requested.count("phone"));
    observe_system(s, {DialogueAct(ActType::Offer, std::string("name"), std::string("golden curry"))});
    CHECK(s.offered_entity == "golden curry");
    observe_system(s, {DialogueAct(ActType::Inform, std::string("phone"), std::string("01223 300000"))});
    CHECK(s.requested.empty());
    s = track(s, {DialogueAct(ActType::Reqalts)});
    CHECK_FALSE(s.offered_entity);
    CHECK(s.rejected.count("golden curry"));
    // a changed constraint also drops the offer
    observe_system(s, {DialogueAct(ActType::Offer, std::string("name"), std::string("curry garden"))});
    s = track(s, {inform("area", "south")});
    CHECK_FALSE(s.offered_entity);
    CHECK(track(s, {DialogueAct(ActType::Bye)}).user_said_bye);
  }

  TEST_CASE("summary action inventory") {
    const auto a = summary_actions(O());
    CHECK(a.size() == 2 * 3 + 5);
    std::set<std::string> names;
    for (const auto &x : a) names.insert(summary_action_name(x));
    CHECK(names.size() == a.size());
    CHECK(names.count("offer"));
    CHECK(names.count("request(food)"));
  }

  TEST_CASE("action realization") {
    Rng rng(1);
    auto s = track(initial_state(O()),
                   {inform("food", "indian"), inform("area", "centre"), inform("pricerange", "expensive")});
    const auto offer = realize_action({SummaryKind::Offer, std::nullopt}, s, O(), rng);
    REQUIRE_FALSE(offer.empty());
    CHECK(offer[0] == DialogueAct(ActType::Offer, std::string("name"), std::string("golden curry")));
    CHECK(std::find(offer.begin(), offer.end(), inform("food", "indian")) != offer.end());
    observe_system(s, offer);
    s = track(s, {DialogueAct(ActType::Request, std::string("phone"))});
    CHECK(realize_action({SummaryKind::InformRequested, std::nullopt}, s, O(), rng) ==
          std::vector<DialogueAct>{inform("phone", "01223 300000")});
    CHECK(realize_action({SummaryKind::Confirm, "area"}, s, O(), rng) ==
          std::vector<DialogueAct>{DialogueAct(ActType::Confirm, std::string("area"), std::string("centre"))});
    // confirm without a hypothesis falls back to a request
    CHECK(realize_action({SummaryKind::Confirm, "food"}, initial_state(O()), O(), rng) ==
          std::vector<DialogueAct>{DialogueAct(ActType::Request, std::string("food"))});
    auto none = track(initial_state(O()), {inform("food", "thai"), inform("area", "north"), inform("pricerange", "cheap")});
    if (matching_entities(O(), state_constraints(none)).empty())
      CHECK(realize_action({SummaryKind::Offer, std::nullopt}, none, O(), rng) ==
            std::vector<DialogueAct>{DialogueAct(ActType::Canthelp)});
    CHECK(realize_action({SummaryKind::Bye, std::nullopt}, s, O(), rng) == std::vector<DialogueAct>{DialogueAct(ActType::Bye)});
  }

  TEST_CASE("handcrafted policy decisions") {
    auto s = initial_state(O());
    CHECK(handcrafted_action(s, O()).kind == SummaryKind::Request);
    s = track(s, {DialogueAct(ActType::Bye)});
    CHECK(handcrafted_action(s, O()).kind == SummaryKind::Bye);
  }

  TEST_CASE("templates") {
    const TemplateTable t;
    CHECK(t.realize(DialogueAct(ActType::Offer, std::string("name"), std::string("golden curry"))) ==
          "Golden curry is a nice restaurant.");
    CHECK(t.realize(DialogueAct(ActType::Request, std::string("food"))) == "What kind of food would you like?");
    CHECK(t.realize({inform("phone", "1"), DialogueAct(ActType::Null)}) == "The phone number is 1.");
    const TemplateTable custom(nlohmann::json{{"bye", "See you."}});
    CHECK(custom.realize(DialogueAct(ActType::Bye)) == "See you.");
    // missing templates fall back to the act notation
    CHECK(custom.realize(DialogueAct(ActType::Repeat)) == "repeat()");
    CHECK_THROWS_AS(TemplateTable(nlohmann::json::array()), DataError);
    CHECK_THROWS_AS(TemplateTable::load("/nonexistent/templates.json"), DataError);
  }
}
