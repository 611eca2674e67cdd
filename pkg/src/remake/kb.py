"""Knowledge base: per-domain entity stores, constraint queries and bookings.

Databases load from MultiWOZ-style ``<domain>_db.json`` files (one JSON array
of flat records per domain). Queries are in-memory filters with cumulative
constraints; bookings are deterministic, returning an 8-character reference
derived from a keyed hash so replays are byte-stable.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .actions import DOMAINS

DEFAULT_HASH_KEY = "remake-default-key"
HASH_KEY_ENV = "REMAKE_HASH_KEY"

# Domains backed by a *_db.json file. Taxi entities are synthesized.
DB_DOMAINS = ("restaurant", "hotel", "attraction", "train", "hospital", "police")

ID_SLOTS = {"train": "trainid", "hospital": "department"}

REQUIRED_BOOKING_SLOTS = {
    "restaurant": ("day", "time", "people"),
    "hotel": ("day", "stay", "people"),
    "train": ("people",),
}

TRAIN_GATING_SLOTS = ("departure", "destination", "day")

TAXI_COLORS = ("black", "white", "red", "yellow", "blue", "grey")
TAXI_TYPES = ("toyota", "skoda", "bmw", "honda", "ford", "audi", "lexus", "volvo", "volkswagen", "tesla")
TAXI_SLOTS = ("departure", "destination", "leaveat", "arriveby")


class KBError(Exception):
    pass


class KBLoadError(KBError):
    pass


class QueryError(KBError):
    pass


class BookingError(KBError):
    pass


class MissingSlotError(BookingError):
    def __init__(self, domain: str, missing: Iterable[str]):
        self.missing = tuple(missing)
        super().__init__(f"{domain} booking is missing required slots: {', '.join(self.missing)}")


_SYNONYMS = {
    "center": "centre",
    "moderately priced": "moderate",
    "cheaply": "cheap",
}
_FREE_SLOTS = ("parking", "internet")
_TIME_RE = re.compile(r"^(\d{1,2}):(\d{2})$")


def normalize_value(slot: str, raw: str) -> str:
    """Lowercase, trim, collapse whitespace, apply synonyms, zero-pad times.

    Total and idempotent; all stored and queried values pass through here.
    """
    value = " ".join(str(raw).strip().lower().split())
    value = _SYNONYMS.get(value, value)
    if slot in _FREE_SLOTS and value == "free":
        value = "yes"
    m = _TIME_RE.match(value)
    if m:
        value = f"{int(m.group(1)):02d}:{m.group(2)}"
    return value


def _time_to_minutes(value: str) -> int | None:
    m = _TIME_RE.match(value)
    if not m:
        return None
    return int(m.group(1)) * 60 + int(m.group(2))


@dataclass(frozen=True)
class Entity:
    """One knowledge-base record with normalized slot values."""

    domain: str
    id: str
    slots: Mapping[str, str]


@dataclass(frozen=True)
class Constraints:
    """Cumulative slot constraints for one domain. ``dontcare`` is a wildcard."""

    domain: str
    slots: Mapping[str, str] = field(default_factory=dict)


class BookingStatus(str, Enum):
    NONE = "None"
    SUCCESS = "Success"
    FAILURE = "Failure"


@dataclass(frozen=True)
class BookingOutcome:
    status: BookingStatus
    reference: str | None = None
    reason: str | None = None

    def __post_init__(self):
        if (self.status is BookingStatus.SUCCESS) != (self.reference is not None):
            raise ValueError("reference present iff status is Success")


@dataclass(frozen=True)
class InsufficientConstraints:
    """Returned by train queries until departure, destination and day are set."""

    missing: tuple[str, ...]


def id_slot(domain: str) -> str:
    return ID_SLOTS.get(domain, "name")


class KnowledgeBase:
    """Immutable after load; safe for concurrent readers."""

    def __init__(self, entities_by_domain: dict[str, list[Entity]], hash_key: str):
        self._by_domain: dict[str, dict[str, Entity]] = {}
        self._known_slots: dict[str, set[str]] = {}
        for domain, entities in entities_by_domain.items():
            index: dict[str, Entity] = {}
            slots: set[str] = set()
            for ent in entities:
                if ent.id in index:
                    raise KBLoadError(f"duplicate id {ent.id!r} in domain {domain!r}")
                index[ent.id] = ent
                slots.update(ent.slots)
            self._by_domain[domain] = index
            self._known_slots[domain] = slots
        self._hash_key = hash_key.encode("utf-8")

    @property
    def domains(self) -> tuple[str, ...]:
        return tuple(self._by_domain)

    @property
    def counts(self) -> dict[str, int]:
        return {d: len(idx) for d, idx in self._by_domain.items()}

    def entities(self, domain: str) -> list[Entity]:
        if domain == "taxi":
            return []
        if domain not in self._by_domain:
            raise QueryError(f"domain {domain!r} is not loaded")
        return sorted(self._by_domain[domain].values(), key=lambda e: e.id)

    def get(self, domain: str, entity_id: str) -> Entity | None:
        return self._by_domain.get(domain, {}).get(entity_id)

    # -- querying ----------------------------------------------------------

    def query(self, constraints: Constraints) -> list[Entity] | InsufficientConstraints:
        """Entities matching every constrained slot, ascending by id.

        Train queries need departure, destination and day before returning
        rows; ``leaveat`` matches trains leaving at or after the given time
        and ``arriveby`` trains arriving at or before it. All other slots are
        equality matches after normalization.
        """
        domain = constraints.domain
        if domain == "taxi":
            return [self._synthesize_taxi(constraints)]
        if domain not in self._by_domain:
            raise QueryError(f"domain {domain!r} is not loaded")
        known = self._known_slots[domain]
        for slot in constraints.slots:
            if slot not in known:
                raise QueryError(f"unknown slot {slot!r} for domain {domain!r}")
        if domain == "train":
            missing = tuple(s for s in TRAIN_GATING_SLOTS if s not in constraints.slots)
            if missing:
                return InsufficientConstraints(missing)
        out = [e for e in self.entities(domain) if _matches(e, constraints)]
        return out

    def _synthesize_taxi(self, constraints: Constraints) -> Entity:
        for slot in constraints.slots:
            if slot not in TAXI_SLOTS:
                raise QueryError(f"unknown slot {slot!r} for domain 'taxi'")
        payload = "|".join(f"{k}={v}" for k, v in sorted(constraints.slots.items()))
        digest = self._digest("taxi", payload)
        color = TAXI_COLORS[digest[0] % len(TAXI_COLORS)]
        car = TAXI_TYPES[digest[1] % len(TAXI_TYPES)]
        phone = "07" + "".join(str(b % 10) for b in digest[2:11])
        return Entity(
            domain="taxi",
            id=f"{color} {car}",
            slots={"color": color, "type": car, "phone": phone},
        )

    # -- booking -----------------------------------------------------------

    def check_booking(
        self,
        domain: str,
        entity_id: str,
        booking: Mapping[str, str],
        override: BookingStatus | None = None,
    ) -> BookingOutcome:
        """Book an entity. Live mode always succeeds; replay passes the
        recorded outcome as ``override``. The reference is deterministic for
        identical inputs under one hash key."""
        if domain not in REQUIRED_BOOKING_SLOTS:
            raise BookingError(f"domain {domain!r} does not take bookings")
        if self.get(domain, entity_id) is None:
            raise BookingError(f"unknown entity {entity_id!r} in domain {domain!r}")
        missing = [s for s in REQUIRED_BOOKING_SLOTS[domain] if s not in booking]
        if missing:
            raise MissingSlotError(domain, missing)
        if override is BookingStatus.FAILURE:
            return BookingOutcome(BookingStatus.FAILURE, reason="recorded outcome: failure")
        payload = f"{entity_id}|" + "|".join(f"{k}={v}" for k, v in sorted(booking.items()))
        reference = self._digest(domain, payload).hex().upper()[:8]
        return BookingOutcome(BookingStatus.SUCCESS, reference=reference)

    def _digest(self, domain: str, payload: str) -> bytes:
        return hmac.new(self._hash_key, f"{domain}|{payload}".encode("utf-8"), hashlib.sha256).digest()


def _matches(entity: Entity, constraints: Constraints) -> bool:
    for slot, value in constraints.slots.items():
        if value == "dontcare":
            continue
        actual = entity.slots.get(slot)
        if actual is None:
            return False
        if constraints.domain == "train" and slot in ("leaveat", "arriveby"):
            want = _time_to_minutes(value)
            have = _time_to_minutes(actual)
            if want is None or have is None:
                if actual != value:
                    return False
            elif slot == "leaveat" and have < want:
                return False
            elif slot == "arriveby" and have > want:
                return False
        elif actual != value:
            return False
    return True


def resolve_hash_key(explicit: str | None = None) -> str:
    return explicit or os.environ.get(HASH_KEY_ENV) or DEFAULT_HASH_KEY


def load_database(
    path: str | Path,
    domains: Iterable[str] | None = None,
    hash_key: str | None = None,
    strict: bool = True,
) -> KnowledgeBase:
    """Load ``<domain>_db.json`` files from a directory.

    With an explicit ``domains`` list a missing file is an error; by default
    every present database file is loaded. ``strict=False`` drops non-scalar
    record fields instead of rejecting the record (the published MultiWOZ
    hotel file carries nested price tables).
    """
    root = Path(path)
    if not root.is_dir():
        raise KBLoadError(f"database directory not found: {root}")
    if domains is None:
        wanted = [d for d in DB_DOMAINS if (root / f"{d}_db.json").exists()]
        if not wanted:
            raise KBLoadError(f"no *_db.json files found under {root}")
    else:
        wanted = [d for d in domains if d != "taxi"]
        for d in wanted:
            if d not in DB_DOMAINS:
                raise KBLoadError(f"unknown database domain {d!r}")

    entities_by_domain: dict[str, list[Entity]] = {}
    for domain in wanted:
        file = root / f"{domain}_db.json"
        if not file.exists():
            raise KBLoadError(f"missing database file for domain {domain!r}: {file}")
        with open(file, encoding="utf-8") as fh:
            try:
                records = json.load(fh)
            except json.JSONDecodeError as exc:
                raise KBLoadError(f"{file}: invalid JSON: {exc}") from exc
        if not isinstance(records, list):
            raise KBLoadError(f"{file}: expected a JSON array of records")
        entities_by_domain[domain] = [
            _build_entity(domain, record, index, file, strict) for index, record in enumerate(records)
        ]
    return KnowledgeBase(entities_by_domain, hash_key=resolve_hash_key(hash_key))


def _build_entity(domain: str, record, index: int, file: Path, strict: bool) -> Entity:
    if not isinstance(record, dict):
        raise KBLoadError(f"{file}: record {index} is not an object")
    slots: dict[str, str] = {}
    for key, value in record.items():
        if not isinstance(value, (str, int, float)):
            if strict:
                raise KBLoadError(f"{file}: record {index} field {key!r} is not flat")
            continue
        slot = key.lower()
        slots[slot] = normalize_value(slot, str(value))
    key_slot = id_slot(domain)
    if key_slot not in slots:
        raise KBLoadError(f"{file}: record {index} is missing its {key_slot!r} key")
    return Entity(domain=domain, id=slots[key_slot], slots=slots)
