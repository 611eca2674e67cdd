"""Virtual document tree with deterministic Markdown rendering.

The tree is the single structured form of the interface; everything shown to
an agent or a human is produced by :func:`render_markdown`. The layout is
canonical and byte-exact so that rendered states can be compared, replayed and
frozen as golden files.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum


class TreeError(ValueError):
    """Structurally invalid document tree."""


class AmbiguousSectionError(LookupError):
    """Zero or multiple sections matched where exactly one was required."""

    def __init__(self, label: str, count: int):
        super().__init__(f"expected exactly one section labeled {label!r}, found {count}")
        self.label = label
        self.count = count


class NodeKind(str, Enum):
    SECTION = "section"
    KEY_VALUE = "key_value"
    ORDERED_LIST = "ordered_list"
    BULLET = "bullet"
    TEXT = "text"
    STATUS_LINE = "status_line"


# Kinds that may carry children. All others are leaves.
_BRANCH_KINDS = (NodeKind.SECTION, NodeKind.ORDERED_LIST)
_LABELED_KINDS = (NodeKind.SECTION, NodeKind.KEY_VALUE)


@dataclass(frozen=True)
class DocNode:
    """One node of the virtual document tree.

    Child order is significant and preserved under all edits; edits build new
    trees instead of mutating in place.
    """

    kind: NodeKind
    label: str = ""
    value: str = ""
    children: tuple["DocNode", ...] = ()

    def __post_init__(self):
        if self.children and self.kind not in _BRANCH_KINDS:
            raise TreeError(f"{self.kind.value} node cannot have children")
        if self.kind in _LABELED_KINDS and not self.label:
            raise TreeError(f"{self.kind.value} node requires a non-empty label")

    def count_nodes(self) -> int:
        return 1 + sum(c.count_nodes() for c in self.children)


def section(label: str, children=()) -> DocNode:
    return DocNode(NodeKind.SECTION, label=label, children=tuple(children))


def key_value(label: str, value: str) -> DocNode:
    return DocNode(NodeKind.KEY_VALUE, label=label, value=value)


def ordered_list(items) -> DocNode:
    return DocNode(NodeKind.ORDERED_LIST, children=tuple(items))


def bullet(value: str) -> DocNode:
    return DocNode(NodeKind.BULLET, value=value)


def text(value: str) -> DocNode:
    return DocNode(NodeKind.TEXT, value=value)


def status_line(label: str, value: str) -> DocNode:
    return DocNode(NodeKind.STATUS_LINE, label=label, value=value)


def render_markdown(root: DocNode, depth: int = 1) -> str:
    """Render a tree to canonical Markdown.

    Rules (byte-exact): a section at depth d renders as d ``#`` characters, a
    space, the label and a newline, then its children at depth d+1; key-value
    renders ``- label: value``; bullet ``- value``; the i-th ordered-list item
    ``i. value`` (1-based); text is the raw line; status line ``label: value``.
    Exactly one blank line separates sibling sections; the output ends with
    exactly one newline.
    """
    if depth < 1:
        raise TreeError("depth must be >= 1")
    out: list[str] = []
    _render_node(root, depth, out)
    return "".join(out)


def _render_node(node: DocNode, depth: int, out: list[str]) -> None:
    if node.kind is NodeKind.SECTION:
        out.append("#" * depth + " " + node.label + "\n")
        _render_children(node.children, depth + 1, out)
    elif node.kind is NodeKind.KEY_VALUE:
        out.append(f"- {node.label}: {node.value}\n")
    elif node.kind is NodeKind.BULLET:
        out.append(f"- {node.value}\n")
    elif node.kind is NodeKind.ORDERED_LIST:
        for i, item in enumerate(node.children, start=1):
            out.append(f"{i}. {item.value}\n")
    elif node.kind is NodeKind.TEXT:
        out.append(node.value + "\n")
    elif node.kind is NodeKind.STATUS_LINE:
        out.append(f"{node.label}: {node.value}\n")
    else:  # pragma: no cover - enum is closed
        raise TreeError(f"unknown node kind {node.kind!r}")


def _render_children(children: tuple[DocNode, ...], depth: int, out: list[str]) -> None:
    prev_was_section = False
    for child in children:
        is_section = child.kind is NodeKind.SECTION
        if is_section and prev_was_section:
            out.append("\n")
        _render_node(child, depth, out)
        prev_was_section = is_section


def replace_section(root: DocNode, label: str, replacement: DocNode) -> DocNode:
    """Return a tree identical to ``root`` except the one section labeled
    ``label`` is swapped for ``replacement``. Zero or multiple matches raise
    :class:`AmbiguousSectionError`."""
    count = _count_sections(root, label)
    if count != 1:
        raise AmbiguousSectionError(label, count)
    return _replace(root, label, replacement)


def _count_sections(node: DocNode, label: str) -> int:
    n = 1 if (node.kind is NodeKind.SECTION and node.label == label) else 0
    return n + sum(_count_sections(c, label) for c in node.children)


def _replace(node: DocNode, label: str, replacement: DocNode) -> DocNode:
    if node.kind is NodeKind.SECTION and node.label == label:
        return replacement
    if not node.children:
        return node
    return replace(node, children=tuple(_replace(c, label, replacement) for c in node.children))


# ---------------------------------------------------------------------------
# Restricted layout parser.
#
# Inverts render_markdown over the layout rules above. It is not a general
# Markdown parser: it recovers exactly the constructs the renderer can emit
# and is used by tests and by scripted policies that read the interface text.

_HEADING_RE = re.compile(r"^(#+) (.*)$")
_ORDERED_RE = re.compile(r"^(\d+)\. (.*)$")


class LayoutParseError(ValueError):
    pass


def parse_layout(markdown: str) -> list[DocNode]:
    """Parse canonical Markdown back into a list of top-level nodes."""
    lines = markdown.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    nodes, stop = _parse_block(lines, 0, parent_depth=0)
    if stop != len(lines):
        raise LayoutParseError(f"unparsed trailing lines at {stop}: {lines[stop]!r}")
    return nodes


def parse_document(markdown: str) -> DocNode:
    """Parse Markdown that holds exactly one root section."""
    nodes = parse_layout(markdown)
    if len(nodes) != 1 or nodes[0].kind is not NodeKind.SECTION:
        raise LayoutParseError("expected a single root section")
    return nodes[0]


def _parse_block(lines: list[str], start: int, parent_depth: int):
    """Parse lines[start:] until a heading at or above parent_depth appears.

    Returns (nodes, index of the first unconsumed line).
    """
    nodes: list[DocNode] = []
    pending_items: list[DocNode] = []

    def flush_items():
        if pending_items:
            nodes.append(ordered_list(list(pending_items)))
            pending_items.clear()

    i = start
    while i < len(lines):
        line = lines[i]
        if line == "":
            # Blank lines only separate sibling sections; skip.
            flush_items()
            i += 1
            continue
        m = _HEADING_RE.match(line)
        if m:
            depth = len(m.group(1))
            if depth <= parent_depth:
                break  # belongs to an ancestor
            flush_items()
            children, i = _parse_block(lines, i + 1, depth)
            nodes.append(section(m.group(2), children))
            continue
        m = _ORDERED_RE.match(line)
        if m:
            pending_items.append(text(m.group(2)))
            i += 1
            continue
        flush_items()
        if line.startswith("- "):
            body = line[2:]
            if ": " in body:
                label, value = body.split(": ", 1)
                nodes.append(key_value(label, value))
            else:
                nodes.append(bullet(body))
        elif ": " in line:
            label, value = line.split(": ", 1)
            nodes.append(status_line(label, value))
        else:
            nodes.append(text(line))
        i += 1
    flush_items()
    return nodes, i
