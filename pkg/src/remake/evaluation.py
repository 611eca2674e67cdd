"""Evaluation: lexicalization, sentence BLEU, Inform/Success and accuracies.

Inform/Success here follows the belief-plus-placeholder recipe used by the
standard corpus scripts: beliefs drive the venue match and placeholders in
the delexicalized responses drive the rest. That structure is what makes the
fixed-response audit possible: a response that always emits every requestable
placeholder satisfies the response-side conditions unconditionally.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .actions import ActToken
from .agent import Goal, PolicyDecision, parse_goal
from .kb import BookingOutcome, Entity, InsufficientConstraints, Constraints, KBError, KnowledgeBase
from .replay import DOMAIN_ORDER

FIXED_RESPONSE = "[value_name] [value_phone] [value_address] [value_postcode] [value_reference] [value_id]"

_PLACEHOLDER_RE = re.compile(r"\[value_([a-z0-9_]+)\]")

# Placeholder keys that do not match a slot name directly.
_PLACEHOLDER_ALIASES = {"entrancefee": "entrance fee"}


class AlignmentError(ValueError):
    pass


def placeholder_for(slot: str) -> str:
    return f"[value_{slot.replace(' ', '')}]"


# ---------------------------------------------------------------------------
# Lexicalization


@dataclass(frozen=True)
class LexicalizedResponse:
    text: str
    unresolved: tuple[str, ...] = ()


def lexicalize(
    response: str,
    entity: Entity | None,
    booking: BookingOutcome | None = None,
) -> LexicalizedResponse:
    """Fill ``[value_slot]`` placeholders from the entity and booking.

    Unresolvable placeholders are left verbatim and tallied, never raised.
    """
    unresolved: list[str] = []

    def fill(match: re.Match) -> str:
        key = match.group(1)
        value = _resolve(key, entity, booking)
        if value is None:
            unresolved.append(match.group(0))
            return match.group(0)
        return value

    return LexicalizedResponse(_PLACEHOLDER_RE.sub(fill, response), tuple(unresolved))


def _resolve(key: str, entity: Entity | None, booking: BookingOutcome | None) -> str | None:
    if key == "reference":
        return booking.reference if booking else None
    if entity is None:
        return None
    if key == "name":
        return entity.slots.get("name", entity.id)
    if key == "id":
        return entity.slots.get("trainid", entity.id)
    slot = _PLACEHOLDER_ALIASES.get(key, key)
    return entity.slots.get(slot)


# ---------------------------------------------------------------------------
# Sentence BLEU


def bleu_tokenize(text: str) -> list[str]:
    """Lowercase, split punctuation from words, collapse whitespace."""
    lowered = text.lower()
    spaced = re.sub(r"([^\w\s])", r" \1 ", lowered)
    return spaced.split()


def sentence_bleu(hypothesis: str, reference: str) -> float:
    """BLEU-4 in [0, 100] with exponential smoothing for zero n-gram counts
    and brevity penalty exp(1 - r/h) when the hypothesis is shorter."""
    hyp = bleu_tokenize(hypothesis)
    ref = bleu_tokenize(reference)
    if not hyp:
        return 0.0
    log_sum = 0.0
    orders = 0
    smooth = 1.0
    for n in range(1, 5):
        total = len(hyp) - n + 1
        if total < 1:
            break
        hyp_counts = Counter(tuple(hyp[i : i + n]) for i in range(total))
        ref_counts = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
        matches = sum((hyp_counts & ref_counts).values())
        if matches == 0:
            smooth *= 2.0
            precision = 1.0 / (smooth * total)
        else:
            precision = matches / total
        log_sum += math.log(precision)
        orders += 1
    score = math.exp(log_sum / orders)
    if len(hyp) < len(ref):
        score *= math.exp(1.0 - len(ref) / len(hyp))
    return 100.0 * score


def corpus_bleu(pairs: Iterable[tuple[str, str]]) -> float:
    """Mean of sentence scores."""
    scores = [sentence_bleu(h, r) for h, r in pairs]
    return sum(scores) / len(scores) if scores else 0.0


# ---------------------------------------------------------------------------
# Inform / Success


@dataclass
class EvalTurn:
    belief: dict[str, dict[str, str]]
    delex_response: str
    entity_id: str | None = None
    booking: dict | None = None


@dataclass
class EvalDialogue:
    id: str
    goal: Goal
    turns: list[EvalTurn]


def load_eval_corpus(path: str | Path) -> list[EvalDialogue]:
    """JSON Lines, one dialogue per line."""
    dialogues = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            turns = [
                EvalTurn(
                    belief=t.get("belief", {}),
                    delex_response=t.get("delex_response", ""),
                    entity_id=t.get("entity_id"),
                    booking=t.get("booking"),
                )
                for t in obj["turns"]
            ]
            dialogues.append(EvalDialogue(id=obj["id"], goal=parse_goal(obj["goal"]), turns=turns))
    return dialogues


@dataclass
class InformSuccessReport:
    inform: float
    success: float
    details: list[dict] = field(default_factory=list)


def _is_booking_slot(slot: str) -> bool:
    return slot.startswith("book") and len(slot) > len("book")


def _active_domains(turns: Sequence[EvalTurn]) -> list[str | None]:
    """Attribute each system turn to the domain whose belief changed."""
    active = None
    prev: dict[str, dict[str, str]] = {}
    out = []
    for turn in turns:
        changed = [d for d in DOMAIN_ORDER if turn.belief.get(d, {}) != prev.get(d, {})]
        if changed:
            active = changed[0]
        out.append(active)
        prev = turn.belief
    return out


def _venue_ids(kb: KnowledgeBase, domain: str, slots: dict[str, str]) -> set[str] | None:
    """Ids matching the constraint slots; None when the domain has no venue
    semantics (taxi or an unloaded lookup domain)."""
    if domain not in kb.domains:
        return None
    constraints = {s: v for s, v in slots.items() if not _is_booking_slot(s)}
    try:
        found = kb.query(Constraints(domain, constraints))
    except KBError:
        return set()
    if isinstance(found, InsufficientConstraints):
        return set()
    return {e.id for e in found}


def inform_success(corpus: Iterable[EvalDialogue], kb: KnowledgeBase) -> InformSuccessReport:
    """Inform: per goal domain, the final belief's venue set intersects the
    goal's satisfying set and a naming placeholder was produced in a turn
    attributed to that domain. Success additionally needs every requested
    slot's placeholder somewhere and a reference placeholder when the goal
    books. Percentages are over dialogues."""
    details = []
    informed = succeeded = total = 0
    for dialogue in corpus:
        total += 1
        turns = dialogue.turns
        active = _active_domains(turns)
        final_belief = turns[-1].belief if turns else {}
        all_text = " ".join(t.delex_response for t in turns)
        flags: list[str] = []
        inform_ok = True
        for domain, spec in dialogue.goal.domains.items():
            if domain not in final_belief:
                flags.append(f"{domain}: no belief recorded for goal domain")
                inform_ok = False
                continue
            goal_ids = _venue_ids(kb, domain, spec.constraints)
            belief_ids = _venue_ids(kb, domain, final_belief[domain])
            if goal_ids is not None and not (goal_ids & belief_ids):
                flags.append(f"{domain}: belief venues do not satisfy the goal")
                inform_ok = False
            named = any(
                a == domain and ("[value_name]" in t.delex_response or "[value_id]" in t.delex_response)
                for a, t in zip(active, turns)
            )
            if not named:
                flags.append(f"{domain}: no naming placeholder offered")
                inform_ok = False
        requested_ok = True
        for spec in dialogue.goal.domains.values():
            for slot in spec.requested:
                if placeholder_for(slot) not in all_text:
                    flags.append(f"requested slot {slot!r} never emitted")
                    requested_ok = False
        books = any(spec.booking for spec in dialogue.goal.domains.values())
        reference_ok = not books or "[value_reference]" in all_text
        if not reference_ok:
            flags.append("booking goal but no reference placeholder")
        success_ok = inform_ok and requested_ok and reference_ok
        informed += inform_ok
        succeeded += success_ok
        details.append({"id": dialogue.id, "inform": inform_ok, "success": success_ok, "flags": flags})
    if total == 0:
        return InformSuccessReport(0.0, 0.0, [])
    return InformSuccessReport(100.0 * informed / total, 100.0 * succeeded / total, details)


def fixed_response_audit(corpus: Iterable[EvalDialogue], kb: KnowledgeBase) -> dict:
    """Re-score the corpus with every system response replaced by the fixed
    all-placeholder string, and report both score pairs plus the exploit
    verdict (fixed-response Success at least matches the original)."""
    corpus = list(corpus)
    original = inform_success(corpus, kb)
    fixed_corpus = [
        EvalDialogue(
            id=d.id,
            goal=d.goal,
            turns=[EvalTurn(t.belief, FIXED_RESPONSE, t.entity_id, t.booking) for t in d.turns],
        )
        for d in corpus
    ]
    fixed = inform_success(fixed_corpus, kb)
    return {
        "original": {"inform": original.inform, "success": original.success},
        "fixed_response": {"inform": fixed.inform, "success": fixed.success},
        "exploit": fixed.success >= original.success,
        "fixed_details": fixed.details,
        "original_details": original.details,
    }


# ---------------------------------------------------------------------------
# Next-act and search accuracy


def act_and_search_accuracy(
    predictions: Sequence[PolicyDecision],
    gold: Sequence[tuple[ActToken, str]],
) -> tuple[float, float]:
    """Exact act-token match rate, and exact serialized-command match rate
    over the gold Search steps."""
    if len(predictions) != len(gold):
        raise AlignmentError(f"{len(predictions)} predictions vs {len(gold)} gold steps")
    if not gold:
        return 0.0, 0.0
    act_hits = sum(1 for p, (act, _) in zip(predictions, gold) if p.act is act)
    search_total = search_hits = 0
    for prediction, (act, target) in zip(predictions, gold):
        if act is not ActToken.SEARCH:
            continue
        search_total += 1
        if prediction.act is not ActToken.SEARCH:
            continue
        if _canonical_command(prediction.sequence) == target:
            search_hits += 1
    next_act_acc = 100.0 * act_hits / len(gold)
    search_acc = 100.0 * search_hits / search_total if search_total else 100.0
    return next_act_acc, search_acc


def _canonical_command(sequence: str) -> str | None:
    from .actions import parse_command, serialize_action

    try:
        return serialize_action(parse_command(sequence))
    except Exception:
        return None
