"""One-call-per-template LLM refinement and re-generalization.

Each rule-built template is instantiated with one representative triplet,
sent to the model once, and the improved question is turned back into a
template by replacing the subject mention with the placeholder. Any failure
(client error, lost subject, malformed output, leaked entity surfaces)
degrades to the original template: the template count never shrinks and the
pipeline never aborts here.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from kgquest import prompts
from kgquest.clustering import Cluster
from kgquest.entity_typing import TyperConfig, type_of_entity
from kgquest.kg_store import Triplet
from kgquest.llm_client import ChatRequest, LLMError
from kgquest.seeding import rng_for
from kgquest.template_engine import LLM_REFINED, PLACEHOLDER, Template, instantiate

logger = logging.getLogger(__name__)

REFINED = "refined"
FALLBACK_KEPT_ORIGINAL = "fallback_kept_original"


class SubjectNotFound(ValueError):
    """The refined question no longer contains the subject mention."""


@dataclass(frozen=True)
class RefinementRecord:
    relation: str
    representative: Triplet
    raw_question: str
    refined_question: str
    refined_template: Template
    status: str

    def as_dict(self) -> dict:
        record = self.refined_template.as_dict()
        record.update(
            {
                "status": self.status,
                "representative": self.representative.as_dict(),
                "raw_question": self.raw_question,
                "refined_question": self.refined_question,
            }
        )
        return record


def select_representative(cluster: Cluster, cfg: TyperConfig, seed: int) -> Triplet:
    """Seeded-uniform member choice, constrained to objects matching the
    cluster's dominant type; falls back to any member when none match."""
    candidates = [t for t in cluster.members if type_of_entity(t.object, cfg) == cluster.dominant_type]
    if not candidates:
        logger.warning(
            "cluster %s has no member with object type %s; sampling any member",
            cluster.relation,
            cluster.dominant_type,
        )
        candidates = list(cluster.members)
    return rng_for(seed, "representative", cluster.relation).choice(candidates)


def regeneralize(refined_question: str, subject: str) -> str:
    """Replace the subject mention in a refined question with the placeholder.

    Match cascade: exact substring, then case-insensitive, then a
    punctuation-stripped token-sequence match. Only the first occurrence is
    replaced. Raises SubjectNotFound when all three passes fail.
    """
    if not refined_question:
        raise ValueError("refined question must be non-empty")
    idx = refined_question.find(subject)
    if idx >= 0:
        return refined_question[:idx] + PLACEHOLDER + refined_question[idx + len(subject):]
    match = re.search(re.escape(subject), refined_question, re.IGNORECASE)
    if match:
        return refined_question[: match.start()] + PLACEHOLDER + refined_question[match.end():]
    subject_tokens = [m.group().casefold() for m in re.finditer(r"\w+", subject)]
    question_tokens = [(m.group().casefold(), m.start(), m.end()) for m in re.finditer(r"\w+", refined_question)]
    if subject_tokens:
        width = len(subject_tokens)
        for i in range(len(question_tokens) - width + 1):
            if [tok for tok, _, _ in question_tokens[i : i + width]] == subject_tokens:
                start = question_tokens[i][1]
                end = question_tokens[i + width - 1][2]
                return refined_question[:start] + PLACEHOLDER + refined_question[end:]
    raise SubjectNotFound(f"subject {subject!r} not found in {refined_question!r}")


def _leaked_entities(text: str, entities: Iterable[str], subject: str) -> list[str]:
    leaked = []
    for entity in entities:
        if entity == subject or entity not in text:
            continue
        if re.search(rf"(?<!\w){re.escape(entity)}(?!\w)", text):
            leaked.append(entity)
    return leaked


def refine_template(
    template: Template,
    representative: Triplet,
    client,
    model: str,
    entity_set: frozenset[str] = frozenset(),
    temperature: float = 0.0,
    max_tokens: int = 128,
) -> RefinementRecord:
    """Refine one rule-built template with exactly one completion call."""
    if template.provenance != "rule_built":
        raise ValueError(f"template for {template.relation!r} is already {template.provenance}")
    raw_question = instantiate(template, representative.subject)

    def fallback(reason: str, refined_question: str = "") -> RefinementRecord:
        logger.warning("keeping original template for %s: %s", template.relation, reason)
        return RefinementRecord(
            relation=template.relation,
            representative=representative,
            raw_question=raw_question,
            refined_question=refined_question,
            refined_template=template,
            status=FALLBACK_KEPT_ORIGINAL,
        )

    request = ChatRequest(
        model=model,
        system=prompts.REFINE_SYSTEM,
        user=prompts.refine_user(raw_question),
        temperature=temperature,
        max_tokens=max_tokens,
    )
    try:
        response = client.complete(request, "refine")
    except LLMError as exc:
        return fallback(f"client error: {exc}")

    refined = response.text.strip()
    if len(refined) >= 2 and refined[0] == '"' and refined[-1] == '"':
        refined = refined[1:-1]
    if "\n" in refined:
        return fallback("completion spans multiple lines", refined)
    try:
        new_text = regeneralize(refined, representative.subject)
    except SubjectNotFound as exc:
        return fallback(str(exc), refined)
    try:
        refined_template = Template(
            relation=template.relation,
            text=new_text,
            prefix=template.prefix,
            dominant_type=template.dominant_type,
            provenance=LLM_REFINED,
        )
    except ValueError as exc:
        return fallback(f"regeneralized text is not a valid template: {exc}", refined)
    leaked = _leaked_entities(new_text, entity_set, representative.subject)
    if leaked:
        return fallback(f"refined text leaks graph entities: {leaked[:3]}", refined)
    return RefinementRecord(
        relation=template.relation,
        representative=representative,
        raw_question=raw_question,
        refined_question=refined,
        refined_template=refined_template,
        status=REFINED,
    )


def refine_all(
    templates: Sequence[Template],
    clusters: Sequence[Cluster],
    typer_cfg: TyperConfig,
    client,
    model: str,
    seed: int,
    entity_set: frozenset[str] = frozenset(),
    workers: int = 1,
    temperature: float = 0.0,
    max_tokens: int = 128,
) -> list[RefinementRecord]:
    """Refine every template; records come back in relation-sorted order."""
    by_relation = {c.relation: c for c in clusters}
    jobs = []
    for template in sorted(templates, key=lambda t: t.relation):
        cluster = by_relation.get(template.relation)
        if cluster is None:
            raise ValueError(f"no cluster for template relation {template.relation!r}")
        rep = select_representative(cluster, typer_cfg, seed)
        jobs.append((template, rep))

    def run(job) -> RefinementRecord:
        template, rep = job
        return refine_template(
            template,
            rep,
            client,
            model,
            entity_set=entity_set,
            temperature=temperature,
            max_tokens=max_tokens,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run, jobs))
    else:
        records = [run(job) for job in jobs]
    return sorted(records, key=lambda r: r.relation)


def write_refinement_records(path, records: Iterable[RefinementRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record.as_dict(), ensure_ascii=False) + "\n")
