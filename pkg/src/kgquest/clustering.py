"""Partition graph triplets into relation-keyed clusters."""

from __future__ import annotations

from dataclasses import dataclass, field

from kgquest.kg_store import KnowledgeGraph, Triplet


@dataclass(frozen=True)
class Cluster:
    """All triplets sharing one relation.

    Members are sorted by (subject, object) so downstream seeded sampling is
    reproducible regardless of ingest order. ``dominant_type`` is filled in
    by the entity typer; it is None until then.
    """

    relation: str
    members: tuple[Triplet, ...]
    dominant_type: str | None = field(default=None)

    def __post_init__(self):
        if not self.members:
            raise ValueError(f"cluster {self.relation!r} has no members")
        for t in self.members:
            if t.relation != self.relation:
                raise ValueError(
                    f"member relation {t.relation!r} does not match cluster {self.relation!r}"
                )

    def __len__(self) -> int:
        return len(self.members)


def cluster_by_relation(graph: KnowledgeGraph) -> list[Cluster]:
    """Group the graph's triplets by relation, sorted by relation identifier."""
    groups: dict[str, list[Triplet]] = {}
    for t in graph.triplets:
        groups.setdefault(t.relation, []).append(t)
    return [
        Cluster(relation=rel, members=tuple(sorted(groups[rel], key=lambda t: (t.subject, t.object))))
        for rel in sorted(groups)
    ]


def cluster_objects(cluster: Cluster) -> list[str]:
    """Distinct member objects in first-occurrence order (stable under the
    cluster's fixed member order); the distractor candidate pool."""
    seen: dict[str, None] = {}
    for t in cluster.members:
        seen.setdefault(t.object)
    return list(seen)
