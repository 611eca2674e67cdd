import sys

import pytest

from remake.actions import ActToken, START, chat, search
from remake.agent import (
    BaselinePolicy,
    BridgePolicy,
    DomainGoal,
    Goal,
    PlaybackPolicy,
    PolicyDecision,
    PolicyError,
    UserSimulator,
    extract_claims,
    find_contradictions,
    load_goals,
    policy_decide,
    read_interface,
    run_episode,
)
from remake.evaluation import act_and_search_accuracy
from remake.interface import apply_action, empty_state, render_state
from remake.replay import export_corpus, load_dialogues, replay_corpus

from .conftest import DIALOGUES_PATH, GOALS_PATH


@pytest.fixture(scope="module")
def goals():
    return load_goals(GOALS_PATH)


def _goal(domain="restaurant", constraints=None, booking=None, requested=()):
    return Goal({domain: DomainGoal(constraints or {}, booking or {}, tuple(requested))})


# --- policy contract -----------------------------------------------------------


def test_baseline_first_rule_is_search(kb):
    goal = _goal(constraints={"food": "indian"})
    markdown = render_state(empty_state())
    decision = BaselinePolicy(goal).decide(START, markdown)
    assert decision == PolicyDecision(ActToken.SEARCH, "[restaurant] [food] indian")


def test_baseline_announces_reference_after_success(kb):
    goal = _goal(
        constraints={"food": "indian", "pricerange": "expensive"},
        booking={"day": "saturday", "people": "6", "time": "19:30"},
    )
    state = apply_action(empty_state(), search("restaurant", [("food", "indian"), ("pricerange", "expensive")]), kb)
    policy = BaselinePolicy(goal)
    decision = policy.decide(START, render_state(state))
    assert decision.act is ActToken.BOOK
    _, action = policy_decide(policy, START, render_state(state))
    state = apply_action(state, action, kb)
    markdown = render_state(state)
    reference = state.booking_reference["restaurant"]
    decision = policy.decide(START, markdown)
    assert decision.act is ActToken.CHAT
    assert reference in decision.sequence


def test_policy_decide_rejects_mismatched_sequence():
    class Bad:
        def decide(self, prev, markdown):
            return PolicyDecision(ActToken.SEARCH, "[booking] [day] monday")

    with pytest.raises(PolicyError):
        policy_decide(Bad(), START, render_state(empty_state()))

    class Unparseable:
        def decide(self, prev, markdown):
            return PolicyDecision(ActToken.BOOK, "book it please")

    with pytest.raises(PolicyError):
        policy_decide(Unparseable(), START, render_state(empty_state()))


def test_read_interface_view(kb):
    state = apply_action(empty_state(), search("restaurant", [("food", "indian"), ("pricerange", "expensive")]), kb)
    view = read_interface(render_state(state))
    assert view.domain == "restaurant"
    assert view.constraints == {"food": "indian", "pricerange": "expensive"}
    assert view.results[0]["name"] == "curry garden"
    assert view.results[0]["phone"] == "01223302330"
    assert view.booking_status == "None"


# --- playback over exported fixtures --------------------------------------------


def test_playback_reproduces_gold_acts(kb):
    trajectories = [t for t in replay_corpus(load_dialogues(DIALOGUES_PATH), kb) if t.consistent]
    records = export_corpus(trajectories)
    policy = PlaybackPolicy(records)
    predictions = [policy.decide(START, "") for _ in records]
    gold = [(ActToken(r["act"]), r["target"]) for r in records]
    next_act, search_acc = act_and_search_accuracy(predictions, gold)
    assert next_act == 100.0
    assert search_acc == 100.0


# --- episodes --------------------------------------------------------------------


def test_baseline_succeeds_on_all_fixture_goals(kb, goals):
    for goal in goals:
        result = run_episode(UserSimulator(goal, seed=0), BaselinePolicy(goal), kb)
        assert result.success, result.failure_reasons
        assert result.contradictions == []


def test_episode_is_deterministic_under_seed(kb, goals):
    first = run_episode(UserSimulator(goals[0], seed=0), BaselinePolicy(goals[0]), kb)
    second = run_episode(UserSimulator(goals[0], seed=0), BaselinePolicy(goals[0]), kb)
    assert first.transcript == second.transcript
    assert [s.chosen_action for s in first.steps] == [s.chosen_action for s in second.steps]


def test_zero_turn_budget_fails(kb, goals):
    result = run_episode(UserSimulator(goals[0], seed=0), BaselinePolicy(goals[0]), kb, max_turns=0)
    assert not result.success
    assert result.turns == 0


def test_chat_never_mutates_constraints(kb):
    state = apply_action(empty_state(), search("restaurant", [("food", "indian")]), kb)
    after = apply_action(state, chat("we also have hotels in the north"), kb)
    assert after.constraints == state.constraints
    assert after.results == state.results


class FreeParkingPolicy(BaselinePolicy):
    """Adversarial wrapper: appends a parking claim to every chat."""

    def decide(self, prev_action, state_markdown):
        decision = super().decide(prev_action, state_markdown)
        if decision.act is ActToken.CHAT:
            return PolicyDecision(ActToken.CHAT, decision.sequence + " it has free parking .")
        return decision


def test_free_parking_policy_is_flagged_on_every_no_parking_hotel(kb):
    flagged = []
    for entity in kb.entities("hotel"):
        if entity.slots.get("parking") != "no":
            continue
        goal = _goal("hotel", constraints={"name": entity.id}, requested=["phone"])
        result = run_episode(UserSimulator(goal, seed=0), FreeParkingPolicy(goal), kb)
        parking_claims = [c for c in result.contradictions if c[0] == "parking"]
        assert parking_claims, f"no contradiction flagged for {entity.id}"
        assert parking_claims[0] == ("parking", "yes", "no")
        assert not result.success
        flagged.append(entity.id)
    assert flagged == ["cityroomz", "worth house"]


def test_free_parking_claim_is_consistent_on_parking_hotels(kb):
    goal = _goal("hotel", constraints={"name": "gonville hotel"}, requested=["phone"])
    result = run_episode(UserSimulator(goal, seed=0), FreeParkingPolicy(goal), kb)
    assert result.success
    assert result.contradictions == []


# --- contradiction extraction -----------------------------------------------------


def test_extract_claims_is_vocabulary_gated(kb):
    claims = extract_claims("it is a cheap place in the north with free parking", kb, "hotel")
    assert ("pricerange", "cheap") in claims
    assert ("area", "north") in claims
    assert ("parking", "yes") in claims
    assert extract_claims("totally unrelated words", kb, "hotel") == []
    assert extract_claims("anything", kb, None) == []


def test_find_contradictions_triples(kb):
    entity = {"name": "cityroomz", "parking": "no", "area": "centre", "pricerange": "moderate"}
    hits = find_contradictions("cityroomz is cheap and has free parking", entity, kb, "hotel")
    assert ("parking", "yes", "no") in hits
    assert ("pricerange", "cheap", "moderate") in hits
    assert find_contradictions("cityroomz is in the centre", entity, kb, "hotel") == []


def test_stars_claims(kb):
    entity = {"name": "cityroomz", "stars": "0"}
    hits = find_contradictions("it is a lovely 4 star hotel", entity, kb, "hotel")
    assert hits == [("stars", "4", "0")]


# --- bridge policy -----------------------------------------------------------------

_ECHO_POLICY = r"""
import json, sys
for line in sys.stdin:
    request = json.loads(line)
    if "Search: restaurant" in request["state"]:
        reply = {"act": "Chat", "sequence": "the interface shows restaurants ."}
    else:
        reply = {"act": "Search", "sequence": "[restaurant] [food] indian"}
    print(json.dumps(reply), flush=True)
"""


def test_bridge_policy_round_trip(kb):
    policy = BridgePolicy([sys.executable, "-c", _ECHO_POLICY])
    try:
        decision = policy.decide(START, render_state(empty_state()))
        assert decision == PolicyDecision(ActToken.SEARCH, "[restaurant] [food] indian")
        state = apply_action(empty_state(), search("restaurant", [("food", "indian")]), kb)
        decision = policy.decide(START, render_state(state))
        assert decision.act is ActToken.CHAT
    finally:
        policy.close()


def test_goal_requires_domains():
    with pytest.raises(ValueError):
        Goal({})
