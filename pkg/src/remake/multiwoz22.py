"""Adapter mapping the MultiWOZ 2.2 release layout onto annotated dialogues.

Kept separate from the replay pipeline so other datasets can be adapted the
same way. Expects a directory of ``dialogues_*.json`` files (searched
recursively) and an optional ``dialog_acts.json`` for booking reference spans
and outcomes.
"""

from __future__ import annotations

import json
from pathlib import Path

from .kb import BookingStatus, normalize_value
from .replay import AnnotatedDialogue, AnnotatedTurn, DOMAIN_ORDER, IngestError


def load_multiwoz22(data_dir: str | Path, acts_path: str | Path | None = None) -> list[AnnotatedDialogue]:
    """Load every dialogue under ``data_dir``; ordered by dialogue id."""
    root = Path(data_dir)
    files = sorted(root.rglob("dialogues_*.json"))
    if not files:
        raise IngestError(f"no dialogues_*.json files under {root}")
    if acts_path is None:
        candidate = root / "dialog_acts.json"
        acts_path = candidate if candidate.exists() else None
    acts = {}
    if acts_path is not None:
        with open(acts_path, encoding="utf-8") as fh:
            acts = json.load(fh)
    dialogues = []
    for file in files:
        with open(file, encoding="utf-8") as fh:
            payload = json.load(fh)
        if not isinstance(payload, list):
            raise IngestError(f"{file}: expected a JSON array of dialogues")
        for obj in payload:
            dialogues.append(_adapt_dialogue(obj, acts.get(obj.get("dialogue_id", ""), {})))
    return sorted(dialogues, key=lambda d: d.id)


def _adapt_dialogue(obj: dict, dialogue_acts: dict) -> AnnotatedDialogue:
    try:
        dialogue_id = obj["dialogue_id"]
        raw_turns = obj["turns"]
    except (KeyError, TypeError) as exc:
        raise IngestError(f"malformed dialogue object: {exc}") from exc

    turns: list[AnnotatedTurn] = []
    belief: dict[str, dict[str, str]] = {}
    prev_belief: dict[str, dict[str, str]] = {}
    active: str | None = None
    pending_user: str | None = None

    for raw in raw_turns:
        speaker = raw.get("speaker", "").upper()
        utterance = " ".join(str(raw.get("utterance", "")).split())
        if speaker == "USER":
            pending_user = utterance
            belief = _belief_from_frames(raw.get("frames", []))
            changed = [d for d in DOMAIN_ORDER if belief.get(d, {}) != prev_belief.get(d, {})]
            if changed:
                active = changed[0]
            continue
        if speaker != "SYSTEM":
            continue
        refs, outcomes = _booking_acts(dialogue_acts.get(str(raw.get("turn_id", "")), {}), active)
        turns.append(
            AnnotatedTurn(
                user_text=pending_user or "",
                agent_text=utterance,
                belief={d: dict(s) for d, s in belief.items()},
                booking_refs=tuple(refs),
                booking_outcomes=tuple(outcomes),
            )
        )
        prev_belief = {d: dict(s) for d, s in belief.items()}
        pending_user = None
    return AnnotatedDialogue(id=dialogue_id, turns=tuple(turns))


def _belief_from_frames(frames: list[dict]) -> dict[str, dict[str, str]]:
    belief: dict[str, dict[str, str]] = {}
    for frame in frames:
        domain = frame.get("service", "")
        values = frame.get("state", {}).get("slot_values", {})
        if not values:
            continue
        slots = belief.setdefault(domain, {})
        for name, candidates in values.items():
            if not candidates:
                continue
            slot = name.split("-", 1)[1] if "-" in name else name
            slot = slot.replace(" ", "")
            slots[slot] = normalize_value(slot, str(candidates[0]))
        if not slots:
            belief.pop(domain, None)
    return belief


def _booking_acts(turn_acts: dict, active: str | None):
    """Booking reference spans and outcomes from a system turn's acts."""
    refs: list[tuple[str, str]] = []
    outcomes: list[tuple[str, BookingStatus]] = []
    for act_name, triples in turn_acts.get("dialog_act", {}).items():
        head, _, intent = act_name.partition("-")
        domain = head.lower()
        if domain not in DOMAIN_ORDER:
            domain = active or ""
        if intent in ("Book", "OfferBooked"):
            if domain:
                outcomes.append((domain, BookingStatus.SUCCESS))
                for slot, value in triples:
                    if slot.lower() == "ref" and value not in ("none", "?"):
                        refs.append((domain, value))
        elif intent == "NoBook" and domain:
            outcomes.append((domain, BookingStatus.FAILURE))
    # de-duplicate, first signal wins
    seen: set[str] = set()
    unique_outcomes = []
    for domain, status in outcomes:
        if domain not in seen:
            seen.add(domain)
            unique_outcomes.append((domain, status))
    return refs, unique_outcomes
