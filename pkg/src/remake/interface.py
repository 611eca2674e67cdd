"""Shared interface state machine.

A single :class:`InterfaceState` value carries everything a dialogue session
knows: cumulative per-domain constraints, booking info and status, the
current result list and the chat log. Actions produce new states; the full
state renders to canonical Markdown through the document tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from . import doctree
from .actions import ActToken, Action
from .doctree import DocNode
from .kb import (
    BookingStatus,
    Constraints,
    Entity,
    InsufficientConstraints,
    KnowledgeBase,
    REQUIRED_BOOKING_SLOTS,
    id_slot,
    normalize_value,
)


class ProtocolError(Exception):
    """Action is inapplicable in the current state."""


class EntityNotInResults(Exception):
    """A pinned or mentioned entity is absent from the current results."""

    def __init__(self, missing: Iterable[str]):
        self.missing = tuple(missing)
        super().__init__(f"entities not in current results: {', '.join(self.missing)}")


@dataclass(frozen=True)
class InterfaceConfig:
    display_k: int = 3
    chat_turns: int = 6
    include_chat: bool = True
    title: str = "MultiWOZ Interface"


DEFAULT_CONFIG = InterfaceConfig()

# Slots shown per displayed entity, in display order. The id slot leads.
DISPLAY_SLOTS = {
    "restaurant": ("name", "food", "area", "pricerange", "phone", "address", "postcode"),
    "hotel": ("name", "area", "pricerange", "stars", "parking", "internet", "type", "phone", "address", "postcode"),
    "attraction": ("name", "type", "area", "entrance fee", "phone", "address", "postcode"),
    "train": ("trainid", "departure", "destination", "day", "leaveat", "arriveby", "price", "duration"),
    "taxi": ("type", "color", "phone"),
    "hospital": ("department", "phone"),
    "police": ("name", "address", "phone"),
}

SELECT_SLOT = "select"


@dataclass(frozen=True)
class InterfaceState:
    active_domain: str | None = None
    constraints: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    booking_info: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    booking_status: Mapping[str, BookingStatus] = field(default_factory=dict)
    booking_reference: Mapping[str, str] = field(default_factory=dict)
    results: tuple[Entity, ...] = ()
    result_count: int = 0
    insufficient: tuple[str, ...] = ()
    selected: str | None = None
    chat_log: tuple[tuple[str, str], ...] = ()

    def domain_constraints(self, domain: str) -> dict[str, str]:
        return dict(self.constraints.get(domain, {}))

    def status_of(self, domain: str) -> BookingStatus:
        return self.booking_status.get(domain, BookingStatus.NONE)


@dataclass(frozen=True)
class StepRecord:
    """One agent decision: the action taken in a rendered state."""

    prev_action: Action
    state_markdown: str
    chosen_action: Action


def empty_state() -> InterfaceState:
    return InterfaceState()


def user_turn(state: InterfaceState, text: str) -> InterfaceState:
    return replace(state, chat_log=state.chat_log + (("user", text),))


def apply_action(
    state: InterfaceState,
    action: Action,
    kb: KnowledgeBase,
    booking_override: BookingStatus | None = None,
    config: InterfaceConfig = DEFAULT_CONFIG,
) -> InterfaceState:
    """Apply one agent action, returning the successor state.

    Search merges slots into the domain's cumulative constraints (``none``
    deletes a slot), switches the active domain and re-queries. Book merges
    into the active domain's booking info and runs the booking once all
    required slots are present. Chat appends to the chat log.
    """
    if action.variant is ActToken.CHAT:
        return replace(state, chat_log=state.chat_log + (("agent", action.text),))
    if action.variant is ActToken.SEARCH:
        return _apply_search(state, action, kb, config)
    return _apply_book(state, action, kb, booking_override, config)


def _apply_search(state, action, kb, config) -> InterfaceState:
    domain = action.domain
    merged = state.domain_constraints(domain)
    for slot, value in action.slots:
        if value == "none":
            merged.pop(slot, None)
        else:
            merged[slot] = normalize_value(slot, value)
    constraints = {**state.constraints, domain: merged}
    found = kb.query(Constraints(domain, merged))
    if isinstance(found, InsufficientConstraints):
        return replace(
            state,
            active_domain=domain,
            constraints=constraints,
            results=(),
            result_count=0,
            insufficient=found.missing,
            selected=None,
        )
    selected = state.selected if state.selected in {e.id for e in found} else None
    displayed = rearrange_results(found, [selected] if selected else [], config.display_k)
    return replace(
        state,
        active_domain=domain,
        constraints=constraints,
        results=tuple(displayed),
        result_count=len(found),
        insufficient=(),
        selected=selected,
    )


def _apply_book(state, action, kb, booking_override, config) -> InterfaceState:
    domain = state.active_domain
    if domain is None:
        raise ProtocolError("Book requires an active domain")
    if not state.results:
        raise ProtocolError("Book requires search results to select from")
    if domain not in REQUIRED_BOOKING_SLOTS:
        raise ProtocolError(f"domain {domain!r} does not take bookings")

    selected = state.selected
    info = dict(state.booking_info.get(domain, {}))
    for slot, value in action.slots:
        if slot == SELECT_SLOT:
            full = _full_results(state, kb)
            if value not in {e.id for e in full}:
                raise EntityNotInResults([value])
            selected = value
        elif value == "none":
            info.pop(slot, None)
        else:
            info[slot] = normalize_value(slot, value)

    displayed = state.results
    if selected and selected != state.selected:
        full = _full_results(state, kb)
        displayed = tuple(rearrange_results(full, [selected], config.display_k))

    booking_info = {**state.booking_info, domain: info}
    status = dict(state.booking_status)
    references = dict(state.booking_reference)
    required = REQUIRED_BOOKING_SLOTS[domain]
    if all(slot in info for slot in required):
        target = selected or displayed[0].id
        outcome = kb.check_booking(domain, target, info, override=booking_override)
        status[domain] = outcome.status
        if outcome.status is BookingStatus.SUCCESS:
            references[domain] = outcome.reference
        else:
            references.pop(domain, None)
    return replace(
        state,
        booking_info=booking_info,
        booking_status=status,
        booking_reference=references,
        results=displayed,
        selected=selected,
    )


def _full_results(state: InterfaceState, kb: KnowledgeBase) -> list[Entity]:
    found = kb.query(Constraints(state.active_domain, state.domain_constraints(state.active_domain)))
    if isinstance(found, InsufficientConstraints):
        return []
    return found


def rearrange_results(results: Iterable[Entity], mentioned: Iterable[str], k: int) -> list[Entity]:
    """Mentioned entities first (in mention order), the rest ascending by id,
    truncated to ``k``. Unknown mentioned ids raise EntityNotInResults."""
    pool = list(results)
    by_id = {e.id: e for e in pool}
    mentioned = [m for m in mentioned if m]
    missing = [m for m in mentioned if m not in by_id]
    if missing:
        raise EntityNotInResults(missing)
    head = [by_id[m] for m in dict.fromkeys(mentioned)]
    head_ids = {e.id for e in head}
    tail = sorted((e for e in pool if e.id not in head_ids), key=lambda e: e.id)
    return (head + tail)[:k]


def pin_mentions(
    state: InterfaceState,
    mentioned: Iterable[str],
    kb: KnowledgeBase,
    config: InterfaceConfig = DEFAULT_CONFIG,
    select_first: bool = False,
) -> InterfaceState:
    """Re-arrange the displayed results so the mentioned entities are shown."""
    mentioned = list(mentioned)
    if not mentioned or state.active_domain is None:
        return state
    full = _full_results(state, kb)
    displayed = rearrange_results(full, mentioned, config.display_k)
    selected = mentioned[0] if select_first else state.selected
    return replace(state, results=tuple(displayed), selected=selected)


# ---------------------------------------------------------------------------
# Rendering


def build_state_tree(state: InterfaceState, config: InterfaceConfig = DEFAULT_CONFIG) -> DocNode:
    children: list[DocNode] = []
    if config.include_chat:
        turns = state.chat_log[-config.chat_turns :]
        children.append(doctree.section("Chat", [doctree.key_value(s, t) for s, t in turns]))
    domain = state.active_domain
    if domain:
        search_children: list[DocNode] = []
        for slot in sorted(state.domain_constraints(domain)):
            search_children.append(doctree.key_value(slot, state.constraints[domain][slot]))
        if state.insufficient:
            search_children.append(
                doctree.status_line("Results", "insufficient constraints (need " + ", ".join(state.insufficient) + ")")
            )
        else:
            search_children.append(
                doctree.status_line("Results", f"{state.result_count} found (showing {len(state.results)})")
            )
            items = [doctree.text(_entity_line(e)) for e in state.results]
            if items:
                search_children.append(doctree.ordered_list(items))
        children.append(doctree.section(f"Search: {domain}", search_children))
        if domain in REQUIRED_BOOKING_SLOTS:
            info = state.booking_info.get(domain, {})
            booking_children = [doctree.key_value(slot, info[slot]) for slot in sorted(info)]
            status = state.status_of(domain)
            booking_children.append(doctree.status_line("Status", status.value))
            if status is BookingStatus.SUCCESS:
                booking_children.append(doctree.status_line("Reference", state.booking_reference[domain]))
            children.append(doctree.section("Booking", booking_children))
    return doctree.section(config.title, children)


def _entity_line(entity: Entity) -> str:
    lead = id_slot(entity.domain)
    parts = [entity.slots.get(lead, entity.id)]
    for slot in DISPLAY_SLOTS.get(entity.domain, ()):
        if slot == lead:
            continue
        if slot in entity.slots:
            parts.append(f"{slot}: {entity.slots[slot]}")
    return " | ".join(parts)


def render_state(state: InterfaceState, config: InterfaceConfig = DEFAULT_CONFIG) -> str:
    """Render the full interface state to canonical Markdown."""
    return doctree.render_markdown(build_state_tree(state, config), depth=1)


def state_to_json(state: InterfaceState) -> dict:
    """JSON-serializable view with field names matching the state type."""
    return {
        "active_domain": state.active_domain,
        "constraints": {d: dict(s) for d, s in state.constraints.items()},
        "booking_info": {d: dict(s) for d, s in state.booking_info.items()},
        "booking_status": {d: s.value for d, s in state.booking_status.items()},
        "booking_reference": dict(state.booking_reference),
        "results": [{"domain": e.domain, "id": e.id, "slots": dict(e.slots)} for e in state.results],
        "result_count": state.result_count,
        "insufficient": list(state.insufficient),
        "selected": state.selected,
        "chat_log": [[speaker, text] for speaker, text in state.chat_log],
    }
