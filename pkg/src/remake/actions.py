"""Agent action algebra and the bracket command grammar.

Agents drive the interface with three actions: Chat carries an utterance,
Search carries a domain plus slot constraints, Book carries booking slots for
the active domain. Search and Book travel as bracket commands like
``[restaurant] [food] indian [pricerange] expensive`` and
``[booking] [day] saturday [people] 6 [time] 19:30``; this module parses and
serializes that wire format.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

DOMAINS = ("restaurant", "hotel", "attraction", "train", "taxi", "hospital", "police")

BOOKING_TOKEN = "booking"


class ActToken(str, Enum):
    CHAT = "Chat"
    SEARCH = "Search"
    BOOK = "Book"


class CommandParseError(ValueError):
    """Malformed command. ``position`` is a 0-based offset into the text."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.message = message
        self.position = position


class NotACommand(CommandParseError):
    """Text does not start with '['; callers should route it as Chat."""


@dataclass(frozen=True)
class Action:
    variant: ActToken
    domain: str | None = None
    slots: tuple[tuple[str, str], ...] = ()
    text: str = ""

    def __post_init__(self):
        if self.variant is ActToken.SEARCH and self.domain not in DOMAINS:
            raise ValueError(f"Search action requires a valid domain, got {self.domain!r}")
        if self.variant is ActToken.BOOK and self.domain is not None:
            raise ValueError("Book action carries no domain")
        if self.variant is ActToken.CHAT and (self.domain or self.slots):
            raise ValueError("Chat action carries only text")


def chat(text: str) -> Action:
    return Action(ActToken.CHAT, text=text)


def search(domain: str, slots=()) -> Action:
    return Action(ActToken.SEARCH, domain=domain, slots=tuple(tuple(p) for p in slots))


def book(slots=()) -> Action:
    return Action(ActToken.BOOK, slots=tuple(tuple(p) for p in slots))


# Distinguished previous-action for the first step of a dialogue.
START = chat("<start>")


def normalize_text(value: str) -> str:
    """Lowercase, trim and collapse internal whitespace."""
    return " ".join(value.lower().split())


def parse_command(text: str) -> Action:
    """Parse a bracket command into a Search or Book action.

    A leading ``[domain]`` opens a Search, ``[booking]`` a Book. Each
    following ``[slot]`` binds the words up to the next ``[`` as its value,
    trimmed, lowercased and whitespace-collapsed. A bare ``[domain]`` is a
    pure domain switch. Raises :class:`NotACommand` when the text does not
    start with ``[`` and :class:`CommandParseError` on malformed commands.
    """
    if not text or not text.strip():
        raise NotACommand("empty text", 0)
    stripped = text.lstrip()
    offset = len(text) - len(stripped)
    if not stripped.startswith("["):
        raise NotACommand("command must start with '['", offset)

    head, pos = _read_bracket_token(text, offset)
    if head == BOOKING_TOKEN:
        variant, domain = ActToken.BOOK, None
    elif head in DOMAINS:
        variant, domain = ActToken.SEARCH, head
    else:
        raise CommandParseError(f"unknown domain token {head!r}", offset + 1)

    slots: list[tuple[str, str]] = []
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        if text[pos] != "[":
            raise CommandParseError("expected '[slot]' token", pos)
        slot_start = pos
        slot, pos = _read_bracket_token(text, pos)
        value_start = pos
        next_bracket = text.find("[", pos)
        raw_value = text[pos:next_bracket] if next_bracket != -1 else text[pos:]
        if "]" in raw_value:
            raise CommandParseError("unbalanced brackets", pos + raw_value.index("]"))
        value = normalize_text(raw_value)
        if not value:
            raise CommandParseError(f"empty value after slot {slot!r}", slot_start)
        slots.append((slot, value))
        pos = next_bracket if next_bracket != -1 else n

    if variant is ActToken.BOOK:
        return book(slots)
    return search(domain, slots)


def _read_bracket_token(text: str, pos: int) -> tuple[str, int]:
    """Read ``[token]`` starting at pos; returns (normalized token, next pos)."""
    assert text[pos] == "["
    end = text.find("]", pos)
    if end == -1:
        raise CommandParseError("unbalanced brackets", pos)
    inner = text[pos + 1 : end]
    if "[" in inner:
        raise CommandParseError("unbalanced brackets", pos + 1 + inner.index("["))
    token = normalize_text(inner)
    if not token:
        raise CommandParseError("empty bracket token", pos)
    return token, end + 1


def serialize_action(action: Action) -> str:
    """Canonical text form; inverse of :func:`parse_command` for Search/Book.

    Slots are serialized in input order. Chat serializes to its raw text.
    """
    if action.variant is ActToken.CHAT:
        return action.text
    head = BOOKING_TOKEN if action.variant is ActToken.BOOK else action.domain
    parts = [f"[{head}]"]
    for slot, value in action.slots:
        parts.append(f"[{slot}] {value}")
    return " ".join(parts)


def route_text(text: str) -> Action:
    """Parse bracket commands; anything else becomes a Chat action."""
    try:
        return parse_command(text)
    except NotACommand:
        return chat(text)
