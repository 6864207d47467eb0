"""Per-cluster question templates: construction, instantiation, serialization.

Every rule-built template has the surface form
``{prefix} the {relation phrase} of <SUBJECT>?`` where the prefix comes from
the cluster's dominant object type and the relation phrase from verbalizing
the relation identifier. Grammatical awkwardness at this stage is tolerated;
the refinement stage exists to repair it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

PLACEHOLDER = "<SUBJECT>"

RULE_BUILT = "rule_built"
LLM_REFINED = "llm_refined"
_PROVENANCES = (RULE_BUILT, LLM_REFINED)


class PlaceholderMissing(ValueError):
    """Template text does not contain the subject placeholder exactly once."""


@dataclass(frozen=True)
class Template:
    """A question string with exactly one subject placeholder."""

    relation: str
    text: str
    prefix: str
    dominant_type: str
    provenance: str = RULE_BUILT

    def __post_init__(self):
        if self.text.count(PLACEHOLDER) != 1:
            raise PlaceholderMissing(
                f"template for {self.relation!r} must contain {PLACEHOLDER} exactly once: {self.text!r}"
            )
        if not self.text.endswith("?"):
            raise ValueError(f"template text must end with '?': {self.text!r}")
        if self.provenance not in _PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def as_dict(self) -> dict[str, str]:
        return {
            "relation": self.relation,
            "text": self.text,
            "prefix": self.prefix,
            "dominant_type": self.dominant_type,
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class PrefixMap:
    """Maps an entity type to the interrogative opening of its questions."""

    entries: Mapping[str, str]
    default: str = "What is"


# Person is the only type that flips the interrogative out of the box;
# override via config for domain-specific phrasing.
DEFAULT_PREFIX_MAP = PrefixMap(entries={"Person": "Who is"})


def verbalize_relation(relation: str, singularize: bool = False) -> str:
    """Human-readable phrase for a relation identifier.

    Drops everything up to and including the last '/', keeps the final
    '.'-separated segment, replaces underscores with spaces, and lowercases.
    With ``singularize`` a trailing plural 's' is stripped (off by default).
    """
    tail = relation.rsplit("/", 1)[-1]
    segment = tail.rsplit(".", 1)[-1]
    phrase = segment.replace("_", " ").lower().strip()
    if singularize and phrase.endswith("s") and not phrase.endswith("ss") and len(phrase) > 1:
        phrase = phrase[:-1]
    return phrase


def prefix_for_type(entity_type: str, prefix_map: PrefixMap = DEFAULT_PREFIX_MAP) -> str:
    return prefix_map.entries.get(entity_type, prefix_map.default)


def build_template(cluster, prefix_map: PrefixMap = DEFAULT_PREFIX_MAP, singularize: bool = False) -> Template:
    """Build the rule-based template for a cluster with an assigned dominant type."""
    if cluster.dominant_type is None:
        raise ValueError(f"cluster {cluster.relation!r} has no dominant type assigned")
    prefix = prefix_for_type(cluster.dominant_type, prefix_map)
    phrase = verbalize_relation(cluster.relation, singularize=singularize)
    return Template(
        relation=cluster.relation,
        text=f"{prefix} the {phrase} of {PLACEHOLDER}?",
        prefix=prefix,
        dominant_type=cluster.dominant_type,
        provenance=RULE_BUILT,
    )


def instantiate(template: Template, subject: str) -> str:
    """Replace the placeholder with the subject verbatim."""
    if not subject:
        raise ValueError("subject must be non-empty")
    if template.text.count(PLACEHOLDER) != 1:
        raise PlaceholderMissing(f"corrupt template: {template.text!r}")
    return template.text.replace(PLACEHOLDER, subject)


def write_templates(path: str | Path, templates: Iterable[Template]) -> None:
    """Serialize templates to JSON lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in templates:
            fh.write(json.dumps(t.as_dict(), ensure_ascii=False) + "\n")


def read_templates(path: str | Path) -> list[Template]:
    """Read a template JSONL file; extra per-record fields are ignored."""
    templates = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            templates.append(
                Template(
                    relation=record["relation"],
                    text=record["text"],
                    prefix=record["prefix"],
                    dominant_type=record["dominant_type"],
                    provenance=record.get("provenance", RULE_BUILT),
                )
            )
    return templates
