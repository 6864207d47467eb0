"""Heuristic entity typing: regex rules, gazetteers, and a default type.

A deterministic typer stands in for statistical NER: the assigned type only
selects a question prefix, so a misclassification degrades phrasing but never
factual content. Rule order is significant; the first matching regex rule
wins, then gazetteer lookup (exact surface before token match), then the
default type.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

from kgquest.clustering import Cluster

logger = logging.getLogger(__name__)

PERSON = "Person"
LOCATION = "Location"
ORGANIZATION = "Organization"
DATE = "Date"
NUMBER = "Number"
WORK = "Work"
OTHER = "Other"

# Also the fixed tie-break precedence for dominant-type selection.
DEFAULT_TYPE_ORDER = (PERSON, LOCATION, ORGANIZATION, DATE, NUMBER, WORK, OTHER)

_MANIFEST_NAME = "typer.json"


@dataclass(frozen=True)
class TyperConfig:
    gazetteers: Mapping[str, frozenset[str]]
    regex_rules: tuple[tuple[re.Pattern, str], ...]
    default_type: str = OTHER
    type_order: tuple[str, ...] = DEFAULT_TYPE_ORDER
    relation_hints: tuple[tuple[re.Pattern, str], ...] = ()

    def __post_init__(self):
        known = set(self.type_order)
        if self.default_type not in known:
            raise ValueError(f"default type {self.default_type!r} missing from type order")
        for tag in self.gazetteers:
            if tag not in known:
                raise ValueError(f"gazetteer type {tag!r} missing from type order")
        for _, tag in tuple(self.regex_rules) + tuple(self.relation_hints):
            if tag not in known:
                raise ValueError(f"rule type {tag!r} missing from type order")


def default_typer_config() -> TyperConfig:
    """Built-in defaults: date/number regexes only; everything else Other."""
    return TyperConfig(
        gazetteers={},
        regex_rules=(
            (re.compile(r"^\d{3,4}$"), DATE),
            (re.compile(r"^\d{4}-\d{2}-\d{2}$"), DATE),
            (re.compile(r"^[+-]?\d+([.,]\d+)?$"), NUMBER),
        ),
    )


def type_of_entity(surface: str, cfg: TyperConfig) -> str:
    """Type an entity surface. Total: any string maps to some type."""
    for pattern, tag in cfg.regex_rules:
        if pattern.search(surface):
            return tag
    for tag in cfg.type_order:
        entries = cfg.gazetteers.get(tag)
        if entries and surface in entries:
            return tag
    tokens = surface.split()
    if len(tokens) > 1:
        for tag in cfg.type_order:
            entries = cfg.gazetteers.get(tag)
            if entries and any(tok in entries for tok in tokens):
                return tag
    return cfg.default_type


def _order_index(tag: str, cfg: TyperConfig) -> int:
    try:
        return cfg.type_order.index(tag)
    except ValueError:
        return len(cfg.type_order)


def dominant_object_type(cluster: Cluster, cfg: TyperConfig) -> str:
    """Modal type over the cluster's member objects.

    Ties break by position in the configured type order. A matching relation
    hint (when configured) overrides the histogram entirely.
    """
    for pattern, tag in cfg.relation_hints:
        if pattern.search(cluster.relation):
            logger.debug("relation hint %r forces type %s for %s", pattern.pattern, tag, cluster.relation)
            return tag
    histogram = Counter(type_of_entity(t.object, cfg) for t in cluster.members)
    logger.debug("type histogram for %s: %s", cluster.relation, dict(histogram))
    best = max(histogram.items(), key=lambda kv: (kv[1], -_order_index(kv[0], cfg)))
    return best[0]


def assign_dominant_types(clusters: Iterable[Cluster], cfg: TyperConfig) -> list[Cluster]:
    return [replace(c, dominant_type=dominant_object_type(c, cfg)) for c in clusters]


def _read_list_file(path: Path) -> list[str]:
    entries = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.append(line)
    return entries


def _read_rules_file(path: Path) -> list[tuple[re.Pattern, str]]:
    rules = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.rstrip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{line_no}: expected 'pattern<TAB>TYPE'")
        pattern, tag = parts
        try:
            rules.append((re.compile(pattern), tag))
        except re.error as exc:
            raise ValueError(f"{path}:{line_no}: bad pattern {pattern!r}: {exc}") from exc
    return rules


def load_typer_config(directory: str | Path) -> TyperConfig:
    """Load a typer config directory.

    With a ``typer.json`` manifest the listed files are read; without one the
    convention is ``rules.tsv`` plus ``gazetteer_<Type>.txt`` files. Gazetteer
    files hold one surface per line with ``#`` comments; the rules file holds
    one ``pattern<TAB>TYPE`` line each.
    """
    directory = Path(directory)
    manifest_path = directory / _MANIFEST_NAME
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        type_order = tuple(manifest.get("type_order", DEFAULT_TYPE_ORDER))
        default_type = manifest.get("default_type", OTHER)
        rules_file = manifest.get("rules")
        gazetteer_files = manifest.get("gazetteers", {})
        hints_file = manifest.get("relation_hints")
    else:
        type_order = DEFAULT_TYPE_ORDER
        default_type = OTHER
        rules_file = "rules.tsv" if (directory / "rules.tsv").exists() else None
        gazetteer_files = {
            p.stem.removeprefix("gazetteer_"): p.name
            for p in sorted(directory.glob("gazetteer_*.txt"))
        }
        hints_file = None

    regex_rules = tuple(_read_rules_file(directory / rules_file)) if rules_file else ()
    relation_hints = tuple(_read_rules_file(directory / hints_file)) if hints_file else ()
    gazetteers = {
        tag: frozenset(_read_list_file(directory / fname))
        for tag, fname in gazetteer_files.items()
    }
    return TyperConfig(
        gazetteers=gazetteers,
        regex_rules=regex_rules,
        default_type=default_type,
        type_order=type_order,
        relation_hints=relation_hints,
    )


def save_typer_config(cfg: TyperConfig, directory: str | Path) -> None:
    """Write a config directory that load_typer_config reads back identically."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    gazetteer_files = {}
    for tag, entries in cfg.gazetteers.items():
        fname = f"gazetteer_{tag}.txt"
        (directory / fname).write_text(
            "\n".join(sorted(entries)) + ("\n" if entries else ""), encoding="utf-8"
        )
        gazetteer_files[tag] = fname
    manifest = {
        "default_type": cfg.default_type,
        "type_order": list(cfg.type_order),
        "gazetteers": gazetteer_files,
        "rules": None,
        "relation_hints": None,
    }
    if cfg.regex_rules:
        (directory / "rules.tsv").write_text(
            "".join(f"{p.pattern}\t{tag}\n" for p, tag in cfg.regex_rules), encoding="utf-8"
        )
        manifest["rules"] = "rules.tsv"
    if cfg.relation_hints:
        (directory / "relation_hints.tsv").write_text(
            "".join(f"{p.pattern}\t{tag}\n" for p, tag in cfg.relation_hints), encoding="utf-8"
        )
        manifest["relation_hints"] = "relation_hints.tsv"
    (directory / _MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
