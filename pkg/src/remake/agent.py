"""Two-step agent contract, scripted policies and the episode runner.

A policy sees only the previous action and the rendered interface text and
answers with an act token plus the sequence for that act. The runner routes
Chat to the chat window and Search/Book through the interface, measures goal
success against the grounded entity, and flags database contradictions in
the agent's chat output with a conservative, vocabulary-gated check.
"""

from __future__ import annotations

import json
import random
import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol

from . import doctree
from .actions import ActToken, Action, START, chat, parse_command, serialize_action
from .interface import (
    DEFAULT_CONFIG,
    InterfaceConfig,
    InterfaceState,
    StepRecord,
    apply_action,
    empty_state,
    render_state,
    user_turn,
)
from .kb import KnowledgeBase, id_slot, normalize_value


class PolicyError(Exception):
    """Policy produced a sequence that does not fit its act."""


@dataclass(frozen=True)
class PolicyDecision:
    act: ActToken
    sequence: str


class Policy(Protocol):
    def decide(self, prev_action: Action, state_markdown: str) -> PolicyDecision: ...


@dataclass(frozen=True)
class DomainGoal:
    constraints: dict[str, str] = field(default_factory=dict)
    booking: dict[str, str] = field(default_factory=dict)
    requested: tuple[str, ...] = ()


@dataclass(frozen=True)
class Goal:
    domains: dict[str, DomainGoal]

    def __post_init__(self):
        if not self.domains:
            raise ValueError("goal must cover at least one domain")


def parse_goal(obj: dict) -> Goal:
    domains = {}
    for domain, spec in obj.items():
        domains[domain] = DomainGoal(
            constraints={s: normalize_value(s, v) for s, v in spec.get("constraints", {}).items()},
            booking={s: normalize_value(s, v) for s, v in spec.get("booking", {}).items()},
            requested=tuple(spec.get("requested", ())),
        )
    return Goal(domains)


def load_goals(path: str | Path) -> list[Goal]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return [parse_goal(obj) for obj in raw]


def policy_decide(policy: Policy, prev_action: Action, state_markdown: str) -> tuple[PolicyDecision, Action]:
    """Ask the policy for a decision and realize it as an action.

    Raises :class:`PolicyError` when the sequence fails to parse for its act.
    """
    decision = policy.decide(prev_action, state_markdown)
    if decision.act is ActToken.CHAT:
        return decision, chat(decision.sequence)
    try:
        action = parse_command(decision.sequence)
    except Exception as exc:
        raise PolicyError(f"unparseable {decision.act.value} sequence {decision.sequence!r}: {exc}") from exc
    if action.variant is not decision.act:
        raise PolicyError(f"sequence {decision.sequence!r} parses as {action.variant.value}, not {decision.act.value}")
    return decision, action


# ---------------------------------------------------------------------------
# Reading the rendered interface (policies see only the text).


@dataclass
class InterfaceView:
    domain: str | None = None
    constraints: dict[str, str] = field(default_factory=dict)
    results: list[dict[str, str]] = field(default_factory=list)
    booking_status: str = "None"
    reference: str | None = None


def read_interface(state_markdown: str) -> InterfaceView:
    view = InterfaceView()
    root = doctree.parse_document(state_markdown)
    for node in root.children:
        if node.kind is not doctree.NodeKind.SECTION:
            continue
        if node.label.startswith("Search: "):
            view.domain = node.label[len("Search: ") :]
            for child in node.children:
                if child.kind is doctree.NodeKind.KEY_VALUE:
                    view.constraints[child.label] = child.value
                elif child.kind is doctree.NodeKind.ORDERED_LIST:
                    view.results = [_parse_entity_line(item.value, view.domain) for item in child.children]
        elif node.label == "Booking":
            for child in node.children:
                if child.kind is doctree.NodeKind.STATUS_LINE and child.label == "Status":
                    view.booking_status = child.value
                elif child.kind is doctree.NodeKind.STATUS_LINE and child.label == "Reference":
                    view.reference = child.value
    return view


def _parse_entity_line(line: str, domain: str) -> dict[str, str]:
    parts = line.split(" | ")
    slots = {id_slot(domain): parts[0]}
    for part in parts[1:]:
        if ": " in part:
            slot, value = part.split(": ", 1)
            slots[slot] = value
    return slots


# ---------------------------------------------------------------------------
# Policies


class BaselinePolicy:
    """Scripted goal-following policy: search all goal constraints, book,
    then announce requested values read off the displayed entity."""

    def __init__(self, goal: Goal):
        self.goal = goal
        self._announced: set[str] = set()

    def decide(self, prev_action: Action, state_markdown: str) -> PolicyDecision:
        view = read_interface(state_markdown)
        for domain, spec in self.goal.domains.items():
            if domain in self._announced:
                continue
            if view.domain != domain or any(
                view.constraints.get(s) != v for s, v in spec.constraints.items()
            ):
                slots = " ".join(f"[{s}] {v}" for s, v in sorted(spec.constraints.items()))
                command = f"[{domain}]" + (f" {slots}" if slots else "")
                return PolicyDecision(ActToken.SEARCH, command)
            if spec.booking and view.booking_status != "Success":
                slots = " ".join(f"[{s}] {v}" for s, v in sorted(spec.booking.items()))
                return PolicyDecision(ActToken.BOOK, f"[booking] {slots}")
            self._announced.add(domain)
            parts = []
            entity = view.results[0] if view.results else {}
            lead = entity.get(id_slot(domain))
            if lead:
                parts.append(f"i recommend {lead} .")
            for slot in spec.requested:
                if slot in entity:
                    parts.append(f"the {slot} is {entity[slot]} .")
            if spec.booking and view.reference:
                parts.append(f"your reference number is {view.reference} .")
            if parts:
                return PolicyDecision(ActToken.CHAT, " ".join(parts))
        return PolicyDecision(ActToken.CHAT, "you are welcome , goodbye .")


class PlaybackPolicy:
    """Replays exported training records in order."""

    def __init__(self, records: Iterable[dict]):
        self._queue = [(ActToken(r["act"]), r["target"]) for r in records]
        self._index = 0

    def decide(self, prev_action: Action, state_markdown: str) -> PolicyDecision:
        if self._index >= len(self._queue):
            return PolicyDecision(ActToken.CHAT, "goodbye .")
        act, target = self._queue[self._index]
        self._index += 1
        return PolicyDecision(act, target)


class BridgePolicy:
    """Line-delimited JSON bridge to an external policy process.

    Sends {"prev_action", "state"} per decision and expects
    {"act", "sequence"} back on one line.
    """

    def __init__(self, command: list[str]):
        self._proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def decide(self, prev_action: Action, state_markdown: str) -> PolicyDecision:
        payload = {"prev_action": serialize_action(prev_action), "state": state_markdown}
        self._proc.stdin.write(json.dumps(payload) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise PolicyError("bridge process closed its output")
        reply = json.loads(line)
        return PolicyDecision(ActToken(reply["act"]), reply["sequence"])

    def close(self):
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.wait(timeout=10)


# ---------------------------------------------------------------------------
# User simulator


_INFORM_TEMPLATES = (
    "i am looking for a {domain} . the {slot} should be {value} .",
    "i want a {domain} where the {slot} is {value} .",
    "find me a {domain} with {slot} {value} .",
)
_REQUEST_TEMPLATES = (
    "what is the {slot} ?",
    "can you tell me the {slot} ?",
)


class UserSimulator:
    """Template user: reveals one goal item per turn, then says goodbye."""

    def __init__(self, goal: Goal, seed: int = 0):
        self.goal = goal
        rng = random.Random(seed)
        queue: list[str] = []
        for domain, spec in goal.domains.items():
            for slot, value in spec.constraints.items():
                template = rng.choice(_INFORM_TEMPLATES)
                queue.append(template.format(domain=domain, slot=slot, value=value))
            if spec.booking:
                details = " , ".join(f"{s} {v}" for s, v in sorted(spec.booking.items()))
                queue.append(f"please book it for {details} .")
            for slot in spec.requested:
                queue.append(rng.choice(_REQUEST_TEMPLATES).format(slot=slot))
        queue.append("thank you , goodbye .")
        self._queue = queue
        self._index = 0

    @property
    def done(self) -> bool:
        return self._index >= len(self._queue)

    def next_utterance(self, state: InterfaceState) -> str:
        text = self._queue[self._index]
        self._index += 1
        return text


# ---------------------------------------------------------------------------
# Contradiction checking

# Phrases mapped onto vocabulary values; bare yes/no are too ambiguous.
_PHRASE_CLAIMS = {
    "free parking": ("parking", "yes"),
    "no parking": ("parking", "no"),
    "free wifi": ("internet", "yes"),
    "free internet": ("internet", "yes"),
    "no wifi": ("internet", "no"),
    "no internet": ("internet", "no"),
}
_VOCAB_SLOTS = ("food", "area", "pricerange")
_STARS_RE = re.compile(r"(?<![a-z0-9])(\d+) star", re.IGNORECASE)


def slot_value_vocabulary(kb: KnowledgeBase, domain: str) -> dict[str, set[str]]:
    vocab: dict[str, set[str]] = {}
    if domain not in kb.domains:
        return vocab
    for entity in kb.entities(domain):
        for slot in _VOCAB_SLOTS:
            if slot in entity.slots:
                vocab.setdefault(slot, set()).add(entity.slots[slot])
    return vocab


def extract_claims(text: str, kb: KnowledgeBase, domain: str | None) -> list[tuple[str, str]]:
    """Slot-value claims in an utterance, gated by the known vocabulary."""
    if not domain:
        return []
    hay = " ".join(text.lower().split())
    claims: list[tuple[str, str]] = []
    for phrase, claim in _PHRASE_CLAIMS.items():
        if re.search(r"(?<![a-z0-9])" + re.escape(phrase) + r"(?![a-z0-9])", hay):
            claims.append(claim)
    for slot, values in slot_value_vocabulary(kb, domain).items():
        for value in values:
            if re.search(r"(?<![a-z0-9])" + re.escape(value) + r"(?![a-z0-9])", hay):
                claims.append((slot, value))
    for match in _STARS_RE.finditer(hay):
        claims.append(("stars", match.group(1)))
    return claims


def find_contradictions(
    text: str, entity: Mapping[str, str], kb: KnowledgeBase, domain: str | None
) -> list[tuple[str, str, str]]:
    """(slot, claimed, actual) triples where a claim differs from the entity."""
    out = []
    for slot, claimed in extract_claims(text, kb, domain):
        actual = entity.get(slot)
        if actual is not None and actual != claimed:
            out.append((slot, claimed, actual))
    return out


# ---------------------------------------------------------------------------
# Episode runner


@dataclass
class EpisodeResult:
    success: bool
    contradictions: list[tuple[str, str, str]] = field(default_factory=list)
    turns: int = 0
    steps: list[StepRecord] = field(default_factory=list)
    failure_reasons: list[str] = field(default_factory=list)
    transcript: list[tuple[str, str]] = field(default_factory=list)


def run_episode(
    user: UserSimulator,
    policy: Policy,
    kb: KnowledgeBase,
    max_turns: int = 20,
    config: InterfaceConfig = DEFAULT_CONFIG,
    max_moves_per_turn: int = 8,
) -> EpisodeResult:
    """Alternate simulated user turns with policy decisions until the goal
    items run out or the turn budget is hit, then score the episode."""
    result = EpisodeResult(success=False)
    state = empty_state()
    prev = START
    # (active domain, grounded entity slots, utterance) per agent chat
    chats: list[tuple[str | None, dict[str, str], str]] = []

    for _ in range(max_turns):
        if user.done:
            break
        text = user.next_utterance(state)
        state = user_turn(state, text)
        result.transcript.append(("user", text))
        result.turns += 1
        for _ in range(max_moves_per_turn):
            markdown = render_state(state, config)
            try:
                _, action = policy_decide(policy, prev, markdown)
            except PolicyError as exc:
                result.failure_reasons.append(str(exc))
                return result
            result.steps.append(StepRecord(prev, markdown, action))
            try:
                state = apply_action(state, action, kb, config=config)
            except Exception as exc:
                result.failure_reasons.append(f"action {serialize_action(action)!r} failed: {exc}")
                return result
            prev = action
            if action.variant is ActToken.CHAT:
                grounded = _grounded_entity(state)
                chats.append((state.active_domain, grounded, action.text))
                result.transcript.append(("agent", action.text))
                break
        else:
            result.failure_reasons.append("policy never chatted within the move budget")
            return result

    if not user.done:
        result.failure_reasons.append("turn budget exhausted before the goal was satisfied")

    for domain, entity, text in chats:
        result.contradictions.extend(find_contradictions(text, entity, kb, domain))

    all_text = " ".join(text for _, _, text in chats).lower()
    for domain, spec in user.goal.domains.items():
        delivered = {
            slot
            for d, entity, text in chats
            if d == domain
            for slot in spec.requested
            if slot in entity and entity[slot] in text.lower()
        }
        missing = set(spec.requested) - delivered
        if missing:
            result.failure_reasons.append(f"{domain}: requested slots never delivered: {sorted(missing)}")
        if spec.booking:
            reference = state.booking_reference.get(domain)
            if not reference:
                result.failure_reasons.append(f"{domain}: booking never completed")
            elif reference.lower() not in all_text:
                result.failure_reasons.append(f"{domain}: booking reference never delivered")

    if result.contradictions:
        result.failure_reasons.append(f"{len(result.contradictions)} database contradictions")
    result.success = not result.failure_reasons
    return result


def _grounded_entity(state: InterfaceState) -> dict[str, str]:
    if not state.results:
        return {}
    if state.selected:
        for entity in state.results:
            if entity.id == state.selected:
                return dict(entity.slots)
    return dict(state.results[0].slots)
