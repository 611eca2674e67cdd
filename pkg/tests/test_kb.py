import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from remake.kb import (
    BookingOutcome,
    BookingStatus,
    Constraints,
    InsufficientConstraints,
    KBLoadError,
    MissingSlotError,
    QueryError,
    BookingError,
    load_database,
    normalize_value,
)

from .conftest import DB_DIR, REAL_DB_DIR


# --- independent oracle ------------------------------------------------------
# A deliberately naive linear scan over the raw JSON files, kept free of the
# KnowledgeBase machinery. Time inequality handling mirrors the stated rule.


def _oracle_records(domain):
    with open(DB_DIR / f"{domain}_db.json", encoding="utf-8") as fh:
        raw = json.load(fh)
    out = []
    for rec in raw:
        out.append({k.lower(): normalize_value(k.lower(), str(v)) for k, v in rec.items()})
    return out


def _oracle_minutes(v):
    h, m = v.split(":")
    return int(h) * 60 + int(m)


def _oracle_filter(domain, records, constraints):
    kept = []
    for rec in records:
        ok = True
        for slot, want in constraints.items():
            if want == "dontcare":
                continue
            have = rec.get(slot)
            if have is None:
                ok = False
            elif domain == "train" and slot == "leaveat":
                ok = _oracle_minutes(have) >= _oracle_minutes(want)
            elif domain == "train" and slot == "arriveby":
                ok = _oracle_minutes(have) <= _oracle_minutes(want)
            else:
                ok = have == want
            if not ok:
                break
        if ok:
            kept.append(rec)
    id_key = {"train": "trainid", "hospital": "department"}.get(domain, "name")
    return sorted(r[id_key] for r in kept)


# --- loading -----------------------------------------------------------------


def test_load_counts(kb):
    assert kb.counts == {
        "restaurant": 10,
        "hotel": 8,
        "attraction": 4,
        "train": 8,
        "hospital": 3,
        "police": 1,
    }


def test_missing_configured_domain(tmp_path):
    with pytest.raises(KBLoadError, match="missing database file"):
        load_database(DB_DIR.parent, domains=["restaurant"])


def test_record_missing_name_key(tmp_path):
    db = tmp_path
    (db / "restaurant_db.json").write_text(json.dumps([{"food": "indian"}]))
    with pytest.raises(KBLoadError, match="record 0 is missing its 'name' key"):
        load_database(db)


def test_duplicate_id_rejected(tmp_path):
    records = [{"name": "twin"}, {"name": "twin"}]
    (tmp_path / "restaurant_db.json").write_text(json.dumps(records))
    with pytest.raises(KBLoadError, match="duplicate id"):
        load_database(tmp_path)


def test_non_flat_record_rejected_when_strict(tmp_path):
    records = [{"name": "deep", "price": {"double": "140"}}]
    (tmp_path / "hotel_db.json").write_text(json.dumps(records))
    with pytest.raises(KBLoadError, match="not flat"):
        load_database(tmp_path)
    kb = load_database(tmp_path, strict=False)
    assert "price" not in kb.get("hotel", "deep").slots


def test_real_multiwoz_restaurant_count():
    if not (REAL_DB_DIR / "restaurant_db.json").exists():
        pytest.skip("real MultiWOZ database not supplied")
    with open(REAL_DB_DIR / "restaurant_db.json", encoding="utf-8") as fh:
        expected = len(json.load(fh))
    kb = load_database(REAL_DB_DIR, strict=False)
    assert kb.counts["restaurant"] == expected == 110


# --- normalization -----------------------------------------------------------


def test_normalize_examples():
    assert normalize_value("area", " Centre ") == "centre"
    assert normalize_value("area", "center") == "centre"
    assert normalize_value("time", "9:30") == "09:30"
    assert normalize_value("pricerange", "moderately priced") == "moderate"
    assert normalize_value("pricerange", "cheaply") == "cheap"
    assert normalize_value("parking", "free") == "yes"
    assert normalize_value("food", "Modern   European") == "modern european"


@given(st.text(max_size=30))
@settings(max_examples=300)
def test_normalize_idempotent(raw):
    for slot in ("area", "time", "parking"):
        once = normalize_value(slot, raw)
        assert normalize_value(slot, once) == once


def test_all_fixture_db_values_are_fixed_points(kb):
    for domain in kb.domains:
        for entity in kb.entities(domain):
            for slot, value in entity.slots.items():
                assert normalize_value(slot, value) == value


# --- querying ----------------------------------------------------------------


def test_empty_constraints_return_all_sorted(kb):
    result = kb.query(Constraints("restaurant"))
    assert [e.id for e in result] == _oracle_filter("restaurant", _oracle_records("restaurant"), {})
    assert len(result) == 10


def test_indian_expensive_matches_oracle(kb):
    constraints = {"food": "indian", "pricerange": "expensive"}
    result = kb.query(Constraints("restaurant", constraints))
    expected = _oracle_filter("restaurant", _oracle_records("restaurant"), constraints)
    assert [e.id for e in result] == expected
    assert expected == ["curry garden", "saffron brasserie", "tandoori palace"]


def test_real_multiwoz_indian_expensive():
    if not (REAL_DB_DIR / "restaurant_db.json").exists():
        pytest.skip("real MultiWOZ database not supplied")
    kb = load_database(REAL_DB_DIR, strict=False)
    got = [e.id for e in kb.query(Constraints("restaurant", {"food": "indian", "pricerange": "expensive"}))]
    with open(REAL_DB_DIR / "restaurant_db.json", encoding="utf-8") as fh:
        raw = json.load(fh)
    records = [{k.lower(): normalize_value(k.lower(), str(v)) for k, v in r.items() if isinstance(v, (str, int, float))} for r in raw]
    expected = sorted(r["name"] for r in records if r.get("food") == "indian" and r.get("pricerange") == "expensive")
    assert got == expected
    assert len(got) == 14


def test_dontcare_is_wildcard(kb):
    everything = kb.query(Constraints("restaurant"))
    wild = kb.query(Constraints("restaurant", {"food": "dontcare"}))
    assert wild == everything


def test_unknown_slot_rejected(kb):
    with pytest.raises(QueryError, match="unknown slot"):
        kb.query(Constraints("restaurant", {"stars": "4"}))


def test_unloaded_domain_rejected(tmp_path):
    (tmp_path / "restaurant_db.json").write_text("[]")
    small = load_database(tmp_path)
    with pytest.raises(QueryError, match="not loaded"):
        small.query(Constraints("hotel"))


def test_train_gating(kb):
    result = kb.query(Constraints("train", {"departure": "cambridge"}))
    assert isinstance(result, InsufficientConstraints)
    assert set(result.missing) == {"destination", "day"}


def test_train_time_inequalities(kb):
    base = {"departure": "cambridge", "destination": "london kings cross", "day": "monday"}
    rows = kb.query(Constraints("train", base))
    assert [e.id for e in rows] == ["tr0123", "tr1234"]
    after = kb.query(Constraints("train", {**base, "leaveat": "06:00"}))
    assert [e.id for e in after] == ["tr1234"]
    before = kb.query(Constraints("train", {**base, "arriveby": "06:00"}))
    assert [e.id for e in before] == ["tr0123"]


def test_train_dontcare_gates_pass(kb):
    rows = kb.query(Constraints("train", {"departure": "cambridge", "destination": "ely", "day": "dontcare"}))
    assert [e.id for e in rows] == ["tr5678", "tr7890"]


_DOMAIN_SLOT_POOLS = {
    "restaurant": {"food": ["indian", "chinese", "italian"], "pricerange": ["cheap", "expensive", "dontcare"],
                   "area": ["centre", "north"], "name": ["curry garden", "kohinoor"]},
    "hotel": {"pricerange": ["cheap", "moderate"], "area": ["centre", "north"],
              "parking": ["yes", "no"], "stars": ["4", "0"]},
    "attraction": {"type": ["museum", "park", "architecture"], "area": ["centre"],
                   "entrance fee": ["free", "4 pounds"], "name": ["castle galleries"]},
    "train": {"departure": ["cambridge", "ely"], "destination": ["london kings cross", "cambridge", "ely"],
              "day": ["monday", "saturday"], "leaveat": ["07:00", "05:30"]},
}


def test_query_equals_oracle_for_all_constraint_subsets(kb):
    """Exhaustive oracle equivalence over all subsets of up to 4 slots."""
    checked = 0
    for domain, pool in _DOMAIN_SLOT_POOLS.items():
        records = _oracle_records(domain)
        slots = sorted(pool)
        for r in range(len(slots) + 1):
            for subset in itertools.combinations(slots, r):
                for values in itertools.product(*(pool[s] for s in subset)):
                    constraints = dict(zip(subset, values))
                    if domain == "train":
                        constraints.setdefault("departure", "cambridge")
                        constraints.setdefault("destination", "dontcare")
                        constraints.setdefault("day", "dontcare")
                    got = kb.query(Constraints(domain, constraints))
                    expected = _oracle_filter(domain, records, constraints)
                    assert [e.id for e in got] == expected, (domain, constraints)
                    checked += 1
    assert checked > 200


def test_adding_constraints_never_grows_results(kb):
    base = kb.query(Constraints("restaurant", {"food": "indian"}))
    narrowed = kb.query(Constraints("restaurant", {"food": "indian", "area": "centre"}))
    widened = kb.query(Constraints("restaurant", {"food": "indian", "area": "dontcare"}))
    assert len(narrowed) <= len(base)
    assert widened == base


def test_taxi_is_synthesized(kb):
    a = kb.query(Constraints("taxi", {"departure": "cambridge", "destination": "ely"}))
    b = kb.query(Constraints("taxi", {"departure": "cambridge", "destination": "ely"}))
    assert a == b and len(a) == 1
    entity = a[0]
    assert set(entity.slots) == {"color", "type", "phone"}
    assert entity.slots["phone"].startswith("07") and len(entity.slots["phone"]) == 11
    other = kb.query(Constraints("taxi", {"departure": "cambridge", "destination": "london kings cross"}))
    assert other != a


# --- booking -----------------------------------------------------------------

_BOOKING = {"day": "saturday", "people": "6", "time": "19:30"}


def test_booking_reference_deterministic(kb):
    first = kb.check_booking("restaurant", "curry garden", _BOOKING)
    second = kb.check_booking("restaurant", "curry garden", _BOOKING)
    assert first == second
    assert first.status is BookingStatus.SUCCESS
    assert first.reference and len(first.reference) == 8
    assert first.reference.isalnum() and first.reference == first.reference.upper()


def test_booking_reference_varies_with_inputs(kb):
    a = kb.check_booking("restaurant", "curry garden", _BOOKING)
    b = kb.check_booking("restaurant", "saffron brasserie", _BOOKING)
    c = kb.check_booking("restaurant", "curry garden", {**_BOOKING, "people": "2"})
    assert len({a.reference, b.reference, c.reference}) == 3


def test_booking_override_failure(kb):
    outcome = kb.check_booking("restaurant", "curry garden", _BOOKING, override=BookingStatus.FAILURE)
    assert outcome.status is BookingStatus.FAILURE
    assert outcome.reference is None
    assert outcome.reason


def test_hotel_booking_missing_stay(kb):
    with pytest.raises(MissingSlotError) as exc:
        kb.check_booking("hotel", "cityroomz", {"day": "monday", "people": "2"})
    assert exc.value.missing == ("stay",)


def test_booking_unknown_entity(kb):
    with pytest.raises(BookingError, match="unknown entity"):
        kb.check_booking("restaurant", "no such place", _BOOKING)


def test_booking_unbookable_domain(kb):
    with pytest.raises(BookingError, match="does not take bookings"):
        kb.check_booking("attraction", "castle galleries", {})


def test_outcome_invariant():
    with pytest.raises(ValueError):
        BookingOutcome(BookingStatus.SUCCESS)
    with pytest.raises(ValueError):
        BookingOutcome(BookingStatus.FAILURE, reference="ABCD1234")
