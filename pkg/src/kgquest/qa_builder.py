"""Multiple-choice item construction: one question per triplet, the object as
the correct answer, and N-1 distractors that are provably wrong against the
graph.

Distractors come from the same cluster's object pool minus every true object
of the item's (subject, relation) pair, so an option other than the correct
answer can never form a true triple. Per-item seeding derives from
(seed, subject, relation, object), which makes items reproducible
independently of generation order.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from kgquest.clustering import Cluster, cluster_objects
from kgquest.entity_typing import TyperConfig, type_of_entity
from kgquest.kg_store import KnowledgeGraph, Triplet
from kgquest.seeding import rng_for
from kgquest.template_engine import Template, instantiate

logger = logging.getLogger(__name__)

FALLBACK_SKIP = "skip"
FALLBACK_GLOBAL_SAME_TYPE = "global_same_type"


class InsufficientDistractors(ValueError):
    """The distractor pool is smaller than the number of options needed."""


class TemplateCoverageError(ValueError):
    """The graph has relations with no corresponding template."""


@dataclass(frozen=True)
class GenerationConfig:
    n_options: int = 4
    seed: int = 0
    distractor_fallback: str = FALLBACK_SKIP
    use_refined: bool = True

    def __post_init__(self):
        if self.n_options < 2:
            raise ValueError("n_options must be >= 2")
        if self.distractor_fallback not in (FALLBACK_SKIP, FALLBACK_GLOBAL_SAME_TYPE):
            raise ValueError(f"unknown distractor fallback {self.distractor_fallback!r}")


@dataclass(frozen=True)
class QAItem:
    id: str
    question: str
    options: tuple[str, ...]
    answer_index: int
    relation: str
    template_provenance: str
    source: Triplet | None = None

    def __post_init__(self):
        if not 0 <= self.answer_index < len(self.options):
            raise ValueError("answer_index out of range")
        if len(set(self.options)) != len(self.options):
            raise ValueError("options must be distinct")
        if self.source is not None and self.options[self.answer_index] != self.source.object:
            raise ValueError("correct option does not match the source object")

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "options": list(self.options),
            "answer_index": self.answer_index,
            "relation": self.relation,
            "template_provenance": self.template_provenance,
        }


@dataclass
class GenerationReport:
    emitted: dict[str, int] = field(default_factory=dict)
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def total_emitted(self) -> int:
        return sum(self.emitted.values())

    @property
    def total_skipped(self) -> int:
        return sum(self.skipped.values())

    def as_dict(self) -> dict:
        return {
            "emitted_per_relation": dict(sorted(self.emitted.items())),
            "skipped_per_relation": dict(sorted(self.skipped.items())),
            "total_emitted": self.total_emitted,
            "total_skipped": self.total_skipped,
        }


def item_id(triplet: Triplet, seed: int) -> str:
    key = "\x1f".join((str(seed), triplet.subject, triplet.relation, triplet.object))
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def select_distractors(
    graph: KnowledgeGraph,
    cluster: Cluster,
    triplet: Triplet,
    n_minus_1: int,
    seed: int,
    extra_pool: Sequence[str] = (),
) -> list[str]:
    """Seeded-uniform draw of n_minus_1 distinct wrong answers.

    The pool is the cluster's distinct objects minus every true object of
    (triplet.subject, cluster.relation); ``extra_pool`` widens it (already
    deduplicated candidates, same filtering applied). Raises
    InsufficientDistractors when the filtered pool is too small.
    """
    true_objects = graph.objects_of(triplet.subject, cluster.relation)
    pool = [o for o in cluster_objects(cluster) if o not in true_objects]
    if len(pool) < n_minus_1 and extra_pool:
        seen = set(pool)
        for candidate in extra_pool:
            if candidate not in seen and candidate not in true_objects:
                pool.append(candidate)
                seen.add(candidate)
    if len(pool) < n_minus_1:
        raise InsufficientDistractors(
            f"need {n_minus_1} distractors for {triplet.subject!r} / {cluster.relation!r}, "
            f"pool has {len(pool)}"
        )
    rng = rng_for(seed, "distractors", triplet.subject, triplet.relation, triplet.object)
    return rng.sample(pool, n_minus_1)


def assemble_item(
    question: str,
    triplet: Triplet,
    distractors: Sequence[str],
    seed: int,
    provenance: str,
) -> QAItem:
    """Combine a question with the correct object and distractors into an item.

    Options are shuffled with a per-item seeded RNG so the answer position
    leaks nothing and reruns are byte-identical.
    """
    options = [triplet.object, *distractors]
    rng = rng_for(seed, "options", triplet.subject, triplet.relation, triplet.object)
    rng.shuffle(options)
    return QAItem(
        id=item_id(triplet, seed),
        question=question,
        options=tuple(options),
        answer_index=options.index(triplet.object),
        relation=triplet.relation,
        template_provenance=provenance,
        source=triplet,
    )


def build_qa(
    template: Template,
    triplet: Triplet,
    distractors: Sequence[str],
    seed: int,
) -> QAItem:
    """Assemble one item: instantiated question plus seeded-shuffled options."""
    return assemble_item(
        instantiate(template, triplet.subject), triplet, distractors, seed, template.provenance
    )


def _global_pool_by_type(
    graph: KnowledgeGraph, entity_type: str, typer_cfg: TyperConfig
) -> list[str]:
    return [e for e in sorted(graph.entity_set) if type_of_entity(e, typer_cfg) == entity_type]


def generate_dataset(
    graph: KnowledgeGraph,
    clusters: Sequence[Cluster],
    templates: Sequence[Template],
    cfg: GenerationConfig,
    typer_cfg: TyperConfig | None = None,
) -> tuple[list[QAItem], GenerationReport]:
    """Emit one item per triplet in triplet-sorted order.

    Triplets whose distractor pool is too small under the configured fallback
    policy are skipped and counted. Every relation in the graph must have a
    template.
    """
    by_relation = {t.relation: t for t in templates}
    missing = sorted(graph.relation_set - set(by_relation))
    if missing:
        raise TemplateCoverageError(f"no template for relations: {missing}")
    cluster_by_relation = {c.relation: c for c in clusters}

    extra_pools: dict[str, list[str]] = {}
    if cfg.distractor_fallback == FALLBACK_GLOBAL_SAME_TYPE:
        if typer_cfg is None:
            raise ValueError("global_same_type fallback requires a typer config")
        for cluster in clusters:
            if cluster.dominant_type is not None:
                extra_pools[cluster.relation] = _global_pool_by_type(
                    graph, cluster.dominant_type, typer_cfg
                )

    report = GenerationReport()
    items: list[QAItem] = []
    for triplet in sorted(graph.triplets):
        cluster = cluster_by_relation[triplet.relation]
        template = by_relation[triplet.relation]
        try:
            distractors = select_distractors(
                graph,
                cluster,
                triplet,
                cfg.n_options - 1,
                cfg.seed,
                extra_pool=extra_pools.get(triplet.relation, ()),
            )
        except InsufficientDistractors as exc:
            logger.debug("skipping item: %s", exc)
            report.skipped[triplet.relation] = report.skipped.get(triplet.relation, 0) + 1
            continue
        items.append(build_qa(template, triplet, distractors, cfg.seed))
        report.emitted[triplet.relation] = report.emitted.get(triplet.relation, 0) + 1
    return items, report


def write_dataset(path, items: Iterable[QAItem]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(json.dumps(item.as_dict(), ensure_ascii=False) + "\n")


def read_dataset(path) -> list[QAItem]:
    """Read items back from JSONL; the source triplet is not serialized."""
    items = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            items.append(
                QAItem(
                    id=record["id"],
                    question=record["question"],
                    options=tuple(record["options"]),
                    answer_index=record["answer_index"],
                    relation=record["relation"],
                    template_provenance=record["template_provenance"],
                )
            )
    return items
