"""Triple-file parsing and an indexed in-memory knowledge graph.

Two input formats are supported: 3-column TSV (``subject<TAB>relation<TAB>object``)
and an N-Triples subset (``<s> <r> <o> .`` with IRIs or quoted literals).
Gzip-compressed files are accepted by extension. Entity equality is exact
string identity; the only normalization is whitespace trimming plus escaping
of embedded tab/newline characters on ingest.
"""

from __future__ import annotations

import gzip
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import IO, Iterable, Iterator, Mapping

logger = logging.getLogger(__name__)

_CONTROL_ESCAPES = {"\t": "\\t", "\n": "\\n", "\r": "\\r"}


class MalformedLine(ValueError):
    """A record that does not parse as a well-formed triple."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EncodingError(ValueError):
    """Input bytes do not decode as UTF-8."""


def _clean_field(value: str) -> str:
    value = value.strip()
    for raw, escaped in _CONTROL_ESCAPES.items():
        if raw in value:
            value = value.replace(raw, escaped)
    return value


@dataclass(frozen=True, order=True)
class Triplet:
    """One (subject, relation, object) fact.

    Fields are trimmed on construction and embedded tab/newline characters
    are escaped; empty fields raise ValueError.
    """

    subject: str
    relation: str
    object: str

    def __post_init__(self):
        for name in ("subject", "relation", "object"):
            cleaned = _clean_field(getattr(self, name))
            if not cleaned:
                raise ValueError(f"triplet {name} is empty after trimming")
            object.__setattr__(self, name, cleaned)

    def as_dict(self) -> dict[str, str]:
        return {"subject": self.subject, "relation": self.relation, "object": self.object}


@dataclass(frozen=True)
class GraphStats:
    triplet_count: int
    entity_count: int
    relation_count: int
    duplicates_dropped: int
    malformed_skipped: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "triplet_count": self.triplet_count,
            "entity_count": self.entity_count,
            "relation_count": self.relation_count,
            "duplicates_dropped": self.duplicates_dropped,
            "malformed_skipped": self.malformed_skipped,
        }


class KnowledgeGraph:
    """Immutable, indexed collection of deduplicated triplets.

    Safe for concurrent reads once constructed. ``sr_index`` maps
    (subject, relation) to the frozenset of true objects and is kept exactly
    consistent with ``triplets``.
    """

    __slots__ = ("triplets", "entity_set", "relation_set", "duplicates_dropped", "_sr_index")

    def __init__(self, triplets: Iterable[Triplet]):
        seen: dict[Triplet, None] = {}
        duplicates = 0
        for t in triplets:
            if t in seen:
                duplicates += 1
            else:
                seen[t] = None
        ordered = tuple(seen)
        index: dict[tuple[str, str], set[str]] = {}
        entities: set[str] = set()
        relations: set[str] = set()
        for t in ordered:
            entities.add(t.subject)
            entities.add(t.object)
            relations.add(t.relation)
            index.setdefault((t.subject, t.relation), set()).add(t.object)
        self.triplets = ordered
        self.entity_set = frozenset(entities)
        self.relation_set = frozenset(relations)
        self.duplicates_dropped = duplicates
        self._sr_index = MappingProxyType(
            {key: frozenset(objs) for key, objs in index.items()}
        )

    @property
    def sr_index(self) -> Mapping[tuple[str, str], frozenset[str]]:
        return self._sr_index

    def contains(self, subject: str, relation: str, obj: str) -> bool:
        """True iff the exact triplet (subject, relation, obj) was ingested."""
        return obj in self._sr_index.get((subject, relation), frozenset())

    def objects_of(self, subject: str, relation: str) -> frozenset[str]:
        """All objects o with (subject, relation, o) in the graph; empty when none."""
        return self._sr_index.get((subject, relation), frozenset())

    def stats(self, malformed_skipped: int = 0) -> GraphStats:
        return GraphStats(
            triplet_count=len(self.triplets),
            entity_count=len(self.entity_set),
            relation_count=len(self.relation_set),
            duplicates_dropped=self.duplicates_dropped,
            malformed_skipped=malformed_skipped,
        )

    def __len__(self) -> int:
        return len(self.triplets)

    def __iter__(self) -> Iterator[Triplet]:
        return iter(self.triplets)


def parse_tsv_line(line: str, line_no: int) -> Triplet:
    """Parse one ``subject<TAB>relation<TAB>object`` record."""
    fields = line.rstrip("\n").rstrip("\r").split("\t")
    if len(fields) != 3:
        raise MalformedLine(line_no, f"expected 3 tab-separated fields, got {len(fields)}")
    try:
        return Triplet(*fields)
    except ValueError as exc:
        raise MalformedLine(line_no, str(exc)) from exc


def _unescape_literal(raw: str, line_no: int) -> str:
    out: list[str] = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= len(raw):
            raise MalformedLine(line_no, "dangling escape in literal")
        code = raw[i + 1]
        simple = {"t": "\t", "n": "\n", "r": "\r", '"': '"', "\\": "\\"}
        if code in simple:
            out.append(simple[code])
            i += 2
        elif code in ("u", "U"):
            width = 4 if code == "u" else 8
            hexpart = raw[i + 2 : i + 2 + width]
            if len(hexpart) != width:
                raise MalformedLine(line_no, "truncated unicode escape in literal")
            try:
                out.append(chr(int(hexpart, 16)))
            except ValueError as exc:
                raise MalformedLine(line_no, "invalid unicode escape in literal") from exc
            i += 2 + width
        else:
            raise MalformedLine(line_no, f"unsupported escape \\{code} in literal")
    return "".join(out)


def _read_nt_term(text: str, pos: int, line_no: int) -> tuple[str, int]:
    """Read one IRI or quoted literal starting at pos; returns (value, next_pos)."""
    while pos < len(text) and text[pos] in " \t":
        pos += 1
    if pos >= len(text):
        raise MalformedLine(line_no, "unexpected end of record")
    if text[pos] == "<":
        end = text.find(">", pos + 1)
        if end < 0:
            raise MalformedLine(line_no, "unterminated IRI")
        return text[pos + 1 : end], end + 1
    if text[pos] == '"':
        i = pos + 1
        while i < len(text):
            if text[i] == "\\":
                i += 2
                continue
            if text[i] == '"':
                break
            i += 1
        else:
            raise MalformedLine(line_no, "unterminated literal")
        value = _unescape_literal(text[pos + 1 : i], line_no)
        i += 1
        # Skip an optional language tag or datatype annotation.
        if i < len(text) and text[i] == "@":
            while i < len(text) and text[i] not in " \t":
                i += 1
        elif text.startswith("^^<", i):
            end = text.find(">", i + 3)
            if end < 0:
                raise MalformedLine(line_no, "unterminated datatype IRI")
            i = end + 1
        return value, i
    raise MalformedLine(line_no, f"expected IRI or literal, found {text[pos]!r}")


def parse_ntriples_line(line: str, line_no: int) -> Triplet | None:
    """Parse one N-Triples-subset statement; returns None for blank/comment lines."""
    text = line.strip()
    if not text or text.startswith("#"):
        return None
    if not text.endswith("."):
        raise MalformedLine(line_no, "statement does not end with '.'")
    body = text[:-1]
    subject, pos = _read_nt_term(body, 0, line_no)
    relation, pos = _read_nt_term(body, pos, line_no)
    obj, pos = _read_nt_term(body, pos, line_no)
    if body[pos:].strip():
        raise MalformedLine(line_no, "trailing content after object term")
    try:
        return Triplet(subject, relation, obj)
    except ValueError as exc:
        raise MalformedLine(line_no, str(exc)) from exc


def _infer_format(path: Path) -> str:
    name = path.name.lower()
    if name.endswith(".gz"):
        name = name[: -len(".gz")]
    if name.endswith((".nt", ".ntriples")):
        return "ntriples"
    return "tsv"


def _open_text(source: str | Path | IO[bytes]) -> io.TextIOWrapper:
    if isinstance(source, (str, Path)):
        path = Path(source)
        raw: IO[bytes] = gzip.open(path, "rb") if path.name.endswith(".gz") else open(path, "rb")
    else:
        raw = source
    return io.TextIOWrapper(raw, encoding="utf-8")


def load_graph(
    source: str | Path | IO[bytes],
    format: str = "auto",
    strict: bool = True,
) -> tuple[KnowledgeGraph, GraphStats]:
    """Load a triple file into an indexed graph.

    ``format`` is "tsv", "ntriples", or "auto" (inferred from the file
    extension; defaults to tsv). In strict mode a malformed record raises
    MalformedLine; in lenient mode it is skipped with a warning and counted
    in the returned stats.
    """
    if format == "auto":
        format = _infer_format(Path(source)) if isinstance(source, (str, Path)) else "tsv"
    if format not in ("tsv", "ntriples"):
        raise ValueError(f"unknown format {format!r}")

    triplets: list[Triplet] = []
    skipped = 0
    stream = _open_text(source)
    try:
        for line_no, line in enumerate(stream, start=1):
            if format == "tsv":
                if not line.strip():
                    continue
                try:
                    triplets.append(parse_tsv_line(line, line_no))
                except MalformedLine as exc:
                    if strict:
                        raise
                    skipped += 1
                    logger.warning("skipping malformed line: %s", exc)
            else:
                try:
                    parsed = parse_ntriples_line(line, line_no)
                except MalformedLine as exc:
                    if strict:
                        raise
                    skipped += 1
                    logger.warning("skipping malformed line: %s", exc)
                    continue
                if parsed is not None:
                    triplets.append(parsed)
    except UnicodeDecodeError as exc:
        raise EncodingError(f"input is not valid UTF-8: {exc}") from exc
    finally:
        if isinstance(source, (str, Path)):
            stream.close()
        else:
            stream.detach()  # leave caller-owned streams open

    graph = KnowledgeGraph(triplets)
    return graph, graph.stats(malformed_skipped=skipped)
