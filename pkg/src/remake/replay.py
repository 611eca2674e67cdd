"""Re-process annotated dialogues into interface trajectories.

Each annotated turn carries the cumulative belief state; the per-turn diff
becomes the Search action(s), booking annotations become Book actions with
the recorded outcome, and the agent utterance becomes a Chat action. Replay
verifies that everything the agent said was actually inferable from the
interface: dialogues that mention unseen entities or book misaligned
entities are flagged inconsistent and excluded from training export.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .actions import ActToken, Action, START, book, chat, parse_command, search, serialize_action
from .interface import (
    DEFAULT_CONFIG,
    EntityNotInResults,
    InterfaceConfig,
    ProtocolError,
    StepRecord,
    apply_action,
    empty_state,
    pin_mentions,
    render_state,
    user_turn,
)
from .kb import BookingStatus, KBError, KnowledgeBase, normalize_value

# Canonical domain order for splitting multi-domain turns.
DOMAIN_ORDER = ("restaurant", "hotel", "attraction", "train", "taxi", "hospital", "police")

# Belief slots named book<slot> carry booking info rather than constraints.
_BOOK_PREFIX = "book"
_BOOKABLE = ("restaurant", "hotel", "train")

# Inconsistency reason tags.
ENTITY_NOT_IN_RESULTS = "EntityNotInResults"
BOOKING_MISALIGNMENT = "BookingMisalignment"
UNRESOLVABLE_REFERENCE = "UnresolvableReference"
INVALID_ACTION = "InvalidAction"

RECORD_SEPARATOR = "\n"


class IngestError(ValueError):
    pass


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotatedTurn:
    user_text: str
    agent_text: str
    belief: dict[str, dict[str, str]]
    booking_refs: tuple[tuple[str, str], ...] = ()
    booking_outcomes: tuple[tuple[str, BookingStatus], ...] = ()


@dataclass(frozen=True)
class AnnotatedDialogue:
    id: str
    turns: tuple[AnnotatedTurn, ...]

    @property
    def domains(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for turn in self.turns:
            for domain in turn.belief:
                seen.setdefault(domain, None)
        return tuple(seen)


@dataclass
class Trajectory:
    dialogue_id: str
    steps: list[StepRecord] = field(default_factory=list)
    consistent: bool = True
    inconsistency_reasons: list[str] = field(default_factory=list)
    domains: tuple[str, ...] = ()
    turn_count: int = 0


def _clean_text(text: str) -> str:
    return " ".join(str(text).split())


def load_dialogues(path: str | Path) -> list[AnnotatedDialogue]:
    """Load the native annotated-dialogue JSON format."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise IngestError(f"{path}: expected a JSON array of dialogues")
    return [ingest_dialogue(obj, source=str(path)) for obj in raw]


def ingest_dialogue(obj: dict, source: str = "<memory>") -> AnnotatedDialogue:
    try:
        dialogue_id = obj["id"]
        turns = []
        for turn in obj["turns"]:
            belief = {
                domain: {slot: normalize_value(slot, value) for slot, value in slots.items()}
                for domain, slots in turn.get("belief", {}).items()
            }
            refs = tuple((d, r) for d, r in turn.get("booking_refs", []))
            outcomes = tuple((d, BookingStatus(s)) for d, s in turn.get("booking_outcomes", []))
            turns.append(
                AnnotatedTurn(
                    user_text=_clean_text(turn.get("user_text", "")),
                    agent_text=_clean_text(turn.get("agent_text", "")),
                    belief=belief,
                    booking_refs=refs,
                    booking_outcomes=outcomes,
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestError(f"{source}: malformed dialogue object: {exc}") from exc
    return AnnotatedDialogue(id=dialogue_id, turns=tuple(turns))


# ---------------------------------------------------------------------------
# Belief diffs and action splitting


def diff_belief(prev: dict[str, dict[str, str]], curr: dict[str, dict[str, str]]) -> dict[str, dict[str, str]]:
    """Per-domain slots that are new or changed in ``curr``; slots dropped
    from ``prev`` map to ``none``."""
    out: dict[str, dict[str, str]] = {}
    for domain in set(prev) | set(curr):
        before = prev.get(domain, {})
        after = curr.get(domain, {})
        delta = {slot: value for slot, value in after.items() if before.get(slot) != value}
        delta.update({slot: "none" for slot in before if slot not in after})
        if delta:
            out[domain] = delta
    return out


def _is_booking_slot(slot: str) -> bool:
    return slot.startswith(_BOOK_PREFIX) and len(slot) > len(_BOOK_PREFIX)


def split_multidomain(diff: dict[str, dict[str, str]], curr_active: str | None = None) -> list[Action]:
    """One Search action per domain with a non-empty constraint diff.

    The previously active domain comes first, then the canonical domain
    order. Booking slots never enter Search actions. Slot order within an
    action is alphabetical so replays and accuracy checks are stable.
    """
    ordered = [d for d in DOMAIN_ORDER if d in diff]
    ordered += [d for d in diff if d not in DOMAIN_ORDER]
    if curr_active in diff:
        ordered.remove(curr_active)
        ordered.insert(0, curr_active)
    actions = []
    for domain in ordered:
        slots = {s: v for s, v in diff[domain].items() if not _is_booking_slot(s)}
        if slots:
            actions.append(search(domain, sorted(slots.items())))
    return actions


# ---------------------------------------------------------------------------
# Entity mention detection


def detect_mentions(text: str, kb: KnowledgeBase, domain: str | None) -> list[str]:
    """Exact, longest-match, case-insensitive entity id mentions in ``text``."""
    if not domain or domain == "taxi" or domain not in kb.domains:
        return []
    hay = " ".join(text.lower().split())
    candidates = sorted((e.id for e in kb.entities(domain)), key=len, reverse=True)
    claimed: list[tuple[int, int]] = []
    found: list[tuple[int, str]] = []
    for name in candidates:
        pattern = r"(?<![a-z0-9])" + re.escape(name) + r"(?![a-z0-9])"
        for m in re.finditer(pattern, hay):
            span = (m.start(), m.end())
            if any(s < span[1] and span[0] < e for s, e in claimed):
                continue
            claimed.append(span)
            found.append((span[0], name))
            break  # first occurrence per entity is enough
    found.sort()
    return [name for _, name in dict.fromkeys(found)]


# ---------------------------------------------------------------------------
# Replay


def replay_dialogue(
    dialogue: AnnotatedDialogue,
    kb: KnowledgeBase,
    config: InterfaceConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """Replay one dialogue on the interface, yielding steps and a verdict."""
    trajectory = Trajectory(
        dialogue_id=dialogue.id,
        domains=dialogue.domains,
        turn_count=len(dialogue.turns),
    )
    state = empty_state()
    prev = START
    prev_belief: dict[str, dict[str, str]] = {}
    last_mentioned: dict[str, str] = {}

    def flag(reason: str, detail: str) -> None:
        trajectory.inconsistency_reasons.append(f"{reason}: {detail}")

    def take(action: Action, override: BookingStatus | None = None) -> None:
        nonlocal state, prev
        trajectory.steps.append(StepRecord(prev, render_state(state, config), action))
        try:
            state = apply_action(state, action, kb, booking_override=override, config=config)
        except (ProtocolError, KBError) as exc:
            tag = BOOKING_MISALIGNMENT if action.variant is ActToken.BOOK else INVALID_ACTION
            flag(tag, f"{serialize_action(action)!r}: {exc}")
        except EntityNotInResults as exc:
            flag(ENTITY_NOT_IN_RESULTS, f"{serialize_action(action)!r}: {exc}")
        prev = action

    for turn in dialogue.turns:
        state = user_turn(state, turn.user_text)
        diff = diff_belief(prev_belief, turn.belief)
        for action in split_multidomain(diff, curr_active=state.active_domain):
            take(action)

        mentioned = detect_mentions(turn.agent_text, kb, state.active_domain)
        if mentioned:
            try:
                state = pin_mentions(state, mentioned, kb, config, select_first=True)
            except EntityNotInResults as exc:
                flag(ENTITY_NOT_IN_RESULTS, f"agent mentioned {', '.join(exc.missing)}")
            else:
                last_mentioned[state.active_domain] = mentioned[0]

        for domain, outcome, new_info in _booking_events(turn, diff):
            if domain not in _BOOKABLE:
                flag(UNRESOLVABLE_REFERENCE, f"booking recorded for unbookable domain {domain!r}")
                continue
            if domain not in turn.belief and domain not in state.constraints:
                flag(UNRESOLVABLE_REFERENCE, f"booking recorded for unseen domain {domain!r}")
                continue
            if state.active_domain != domain:
                take(search(domain, []))
            target = state.selected or (state.results[0].id if state.results else None)
            take(book(sorted(new_info.items())), override=outcome)
            _check_alignment(trajectory, state, domain, outcome, target, last_mentioned, flag)

        take(chat(turn.agent_text))
        prev_belief = turn.belief

    trajectory.consistent = not trajectory.inconsistency_reasons
    return trajectory


def _booking_events(turn: AnnotatedTurn, diff: dict[str, dict[str, str]]):
    """Booking signals for this turn: (domain, recorded outcome or None,
    newly provided booking slots). Outcome priority: recorded outcome, then
    reference span, then new booking slots alone."""
    outcomes = {d: s for d, s in turn.booking_outcomes}
    refs = {d for d, _ in turn.booking_refs}
    new_info: dict[str, dict[str, str]] = {}
    for domain, slots in diff.items():
        booked = {
            s[len(_BOOK_PREFIX) :]: v for s, v in slots.items() if _is_booking_slot(s) and v != "none"
        }
        if booked:
            new_info[domain] = booked
    domains = list(dict.fromkeys([*outcomes, *sorted(refs), *sorted(new_info)]))
    events = []
    for domain in domains:
        outcome = outcomes.get(domain)
        if outcome is None and domain in refs:
            outcome = BookingStatus.SUCCESS
        events.append((domain, outcome, new_info.get(domain, {})))
    return events


def _check_alignment(trajectory, state, domain, outcome, target, last_mentioned, flag) -> None:
    status = state.status_of(domain)
    if outcome is BookingStatus.FAILURE:
        if status is not BookingStatus.FAILURE:
            flag(BOOKING_MISALIGNMENT, f"recorded failure but replayed status is {status.value}")
        return
    if outcome is BookingStatus.SUCCESS and status is not BookingStatus.SUCCESS:
        flag(BOOKING_MISALIGNMENT, f"recorded success but replayed status is {status.value}")
        return
    expected = last_mentioned.get(domain)
    if expected and target and expected != target:
        flag(
            BOOKING_MISALIGNMENT,
            f"booked entity {target!r} does not match mentioned entity {expected!r}",
        )


def replay_corpus(
    dialogues: Iterable[AnnotatedDialogue],
    kb: KnowledgeBase,
    config: InterfaceConfig = DEFAULT_CONFIG,
) -> list[Trajectory]:
    """Replay many dialogues; output ordered by dialogue id."""
    return [replay_dialogue(d, kb, config) for d in sorted(dialogues, key=lambda d: d.id)]


# ---------------------------------------------------------------------------
# Training export


def export_training(trajectory: Trajectory, separator: str = RECORD_SEPARATOR) -> list[dict]:
    """One training record per step. Refuses inconsistent trajectories."""
    if not trajectory.consistent:
        raise ExportError(
            f"{trajectory.dialogue_id}: inconsistent trajectory is excluded from export "
            f"({'; '.join(trajectory.inconsistency_reasons)})"
        )
    records = []
    for index, step in enumerate(trajectory.steps):
        act = step.chosen_action.variant
        target = (
            step.chosen_action.text if act is ActToken.CHAT else serialize_action(step.chosen_action)
        )
        records.append(
            {
                "dialogue_id": trajectory.dialogue_id,
                "turn": index,
                "context": serialize_action(step.prev_action) + separator + step.state_markdown,
                "act": act.value,
                "target": target,
            }
        )
    return records


def export_corpus(trajectories: Iterable[Trajectory], separator: str = RECORD_SEPARATOR) -> list[dict]:
    records = []
    for trajectory in trajectories:
        if trajectory.consistent:
            records.extend(export_training(trajectory, separator))
    return records


def records_to_steps(records: Iterable[dict], separator: str = RECORD_SEPARATOR) -> list[StepRecord]:
    """Rebuild step records from exported training records."""
    steps = []
    for record in records:
        prev_text, state_markdown = record["context"].split(separator, 1)
        act = ActToken(record["act"])
        chosen = chat(record["target"]) if act is ActToken.CHAT else parse_command(record["target"])
        if chosen.variant is not act:
            raise IngestError(f"record act {act.value} does not match target {record['target']!r}")
        prev = chat(prev_text) if not prev_text.startswith("[") else parse_command(prev_text)
        steps.append(StepRecord(prev, state_markdown, chosen))
    return steps


def write_jsonl(records: Iterable[dict], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    return count


# ---------------------------------------------------------------------------
# Consistency reporting

_TURN_BUCKETS = ((1, 3), (4, 6), (7, 9), (10, None))


def _bucket_label(n: int) -> str:
    for low, high in _TURN_BUCKETS:
        if high is None and n >= low:
            return f"{low}+"
        if high is not None and low <= n <= high:
            return f"{low}-{high}"
    return "0"


def _rate_block(items: list[Trajectory]) -> dict:
    total = len(items)
    consistent = sum(1 for t in items if t.consistent)
    return {
        "total": total,
        "consistent": consistent,
        "rate": round(consistent / total, 4) if total else None,
    }


def consistency_report(trajectories: Iterable[Trajectory]) -> dict:
    """Counts and consistency rates, split single- vs multi-domain and by
    dialogue length."""
    items = list(trajectories)
    single = [t for t in items if len(t.domains) <= 1]
    multi = [t for t in items if len(t.domains) > 1]
    buckets: dict[str, list[Trajectory]] = {}
    for t in items:
        buckets.setdefault(_bucket_label(t.turn_count), []).append(t)
    reasons: dict[str, int] = {}
    for t in items:
        for reason in t.inconsistency_reasons:
            tag = reason.split(":", 1)[0]
            reasons[tag] = reasons.get(tag, 0) + 1
    return {
        "overall": _rate_block(items),
        "single_domain": _rate_block(single),
        "multi_domain": _rate_block(multi),
        "by_turns": {label: _rate_block(buckets[label]) for label in sorted(buckets)},
        "reasons": dict(sorted(reasons.items())),
    }


def format_report(report: dict) -> str:
    lines = [f"{'group':<16}{'total':>8}{'consistent':>12}{'rate':>8}"]

    def row(label, block):
        rate = "-" if block["rate"] is None else f"{100 * block['rate']:.1f}%"
        lines.append(f"{label:<16}{block['total']:>8}{block['consistent']:>12}{rate:>8}")

    row("overall", report["overall"])
    row("single-domain", report["single_domain"])
    row("multi-domain", report["multi_domain"])
    for label, block in report["by_turns"].items():
        row(f"turns {label}", block)
    if report["reasons"]:
        lines.append("reasons: " + ", ".join(f"{k}={v}" for k, v in report["reasons"].items()))
    return "\n".join(lines)
