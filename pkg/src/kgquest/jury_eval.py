"""LLM-as-judge harness: three judges label sampled questions, majority vote
decides, and the report tabulates the error-type distribution.

One question is sampled per cluster, wording-level quality is judged on the
rendered item (question plus lettered options), and a three-way vote split is
resolved toward the most severe error so questionable items get flagged
rather than passed.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from kgquest import prompts
from kgquest.clustering import Cluster
from kgquest.llm_client import ChatRequest
from kgquest.qa_builder import QAItem
from kgquest.seeding import rng_for

logger = logging.getLogger(__name__)


class JudgeLabel(str, Enum):
    CORRECT = "correct"
    GRAMMAR_ERROR = "grammar_error"
    FORMATTING_ERROR = "formatting_error"
    SYNTAX_ERROR = "syntax_error"


# Most severe first; used only to resolve 1/1/1 splits.
SEVERITY_ORDER = (
    JudgeLabel.SYNTAX_ERROR,
    JudgeLabel.GRAMMAR_ERROR,
    JudgeLabel.FORMATTING_ERROR,
    JudgeLabel.CORRECT,
)

UNANIMOUS = "unanimous"
MAJORITY = "majority"
TIE_BROKEN = "tie_broken"


class UnparseableVerdict(ValueError):
    """The judge completion carried no recognizable label, even on reprompt."""


@dataclass(frozen=True)
class Verdict:
    question_id: str
    labels: tuple[tuple[str, JudgeLabel], ...]
    final: JudgeLabel
    consensus: str

    def as_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "labels": [{"judge": judge, "label": label.value} for judge, label in self.labels],
            "final": self.final.value,
            "consensus": self.consensus,
        }


@dataclass(frozen=True)
class EvalReport:
    label_counts: dict[str, int]
    per_judge: dict[str, dict[str, int]]
    sample_size: int
    seed: int
    reprompts: int = 0
    unparseable_items: int = 0

    def as_dict(self) -> dict:
        return {
            "label_counts": self.label_counts,
            "per_judge": self.per_judge,
            "sample_size": self.sample_size,
            "seed": self.seed,
            "reprompts": self.reprompts,
            "unparseable_items": self.unparseable_items,
        }


def check_judge_separation(judge_models: Sequence[str], refine_model: str | None) -> None:
    """Judges must be disjoint from the refinement model to avoid circularity."""
    if refine_model and refine_model in set(judge_models):
        raise ValueError(
            f"judge models must differ from the refinement model ({refine_model!r})"
        )


def majority_vote(labels: Sequence[JudgeLabel]) -> tuple[JudgeLabel, str]:
    """Strict majority wins; a three-way split resolves to the most severe label."""
    if len(labels) != 3:
        raise ValueError(f"expected exactly 3 labels, got {len(labels)}")
    counts = Counter(labels)
    label, top = counts.most_common(1)[0]
    if top == 3:
        return label, UNANIMOUS
    if top == 2:
        return label, MAJORITY
    for severe in SEVERITY_ORDER:
        if severe in counts:
            return severe, TIE_BROKEN
    raise AssertionError("unreachable")


def sample_for_jury(clusters: Sequence[Cluster], items: Sequence[QAItem], seed: int) -> list[QAItem]:
    """One seeded-uniform item per cluster that emitted at least one item."""
    by_relation: dict[str, list[QAItem]] = {}
    for item in items:
        by_relation.setdefault(item.relation, []).append(item)
    sampled = []
    for cluster in sorted(clusters, key=lambda c: c.relation):
        group = sorted(by_relation.get(cluster.relation, []), key=lambda i: i.id)
        if group:
            sampled.append(rng_for(seed, "jury", cluster.relation).choice(group))
    return sampled


def _option_label(index: int) -> str:
    label = ""
    index += 1
    while index:
        index, rem = divmod(index - 1, 26)
        label = chr(65 + rem) + label
    return label


def render_item(item: QAItem) -> str:
    """Question plus lettered answer choices, as shown to the judges."""
    lines = [item.question]
    lines.extend(f"{_option_label(i)}. {opt}" for i, opt in enumerate(item.options))
    return "\n".join(lines)


_LABEL_PATTERN = re.compile(r"grammar error|formatting error|syntax error|\bcorrect\b")

_KEYWORD_TO_LABEL = {
    "grammar error": JudgeLabel.GRAMMAR_ERROR,
    "formatting error": JudgeLabel.FORMATTING_ERROR,
    "syntax error": JudgeLabel.SYNTAX_ERROR,
    "correct": JudgeLabel.CORRECT,
}


def parse_judge_label(text: str) -> JudgeLabel | None:
    """Keyword parse of a judge completion; earliest matching label wins."""
    match = _LABEL_PATTERN.search(text.lower())
    return _KEYWORD_TO_LABEL[match.group()] if match else None


def judge_question(
    item: QAItem,
    judge_model: str,
    client,
    temperature: float = 0.0,
    max_tokens: int = 64,
) -> tuple[JudgeLabel, int]:
    """Label one item with one judge; returns (label, reprompts_used).

    An unparseable completion triggers exactly one reprompt with a stricter
    format reminder; a second failure raises UnparseableVerdict.
    """
    user = prompts.judge_user(category=item.relation, question=render_item(item))
    request = ChatRequest(
        model=judge_model,
        system=prompts.JUDGE_SYSTEM,
        user=user,
        temperature=temperature,
        max_tokens=max_tokens,
    )
    response = client.complete(request, "judge")
    label = parse_judge_label(response.text)
    if label is not None:
        return label, 0
    logger.warning("judge %s returned no label, reprompting", judge_model)
    retry = ChatRequest(
        model=judge_model,
        system=prompts.JUDGE_SYSTEM,
        user=user + "\n\n" + prompts.JUDGE_FORMAT_REMINDER,
        temperature=temperature,
        max_tokens=max_tokens,
    )
    response = client.complete(retry, "judge")
    label = parse_judge_label(response.text)
    if label is None:
        raise UnparseableVerdict(
            f"judge {judge_model!r} produced no recognizable label for item {item.id}"
        )
    return label, 1


def evaluate_items(
    items: Sequence[QAItem],
    judge_models: Sequence[str],
    client,
    seed: int,
    temperature: float = 0.0,
    max_tokens: int = 64,
) -> tuple[list[Verdict], EvalReport]:
    """Run the three-judge jury over the sampled items.

    Items for which any judge stays unparseable after its reprompt are dropped
    from the verdicts and counted separately in the report.
    """
    if len(judge_models) != 3:
        raise ValueError(f"expected exactly 3 judge models, got {len(judge_models)}")
    verdicts: list[Verdict] = []
    reprompts = 0
    unparseable_items = 0
    per_judge: dict[str, Counter] = {judge: Counter() for judge in judge_models}
    for item in items:
        labels: list[tuple[str, JudgeLabel]] = []
        try:
            for judge in judge_models:
                label, used = judge_question(
                    item, judge, client, temperature=temperature, max_tokens=max_tokens
                )
                reprompts += used
                labels.append((judge, label))
        except UnparseableVerdict as exc:
            logger.warning("dropping item from report: %s", exc)
            unparseable_items += 1
            continue
        final, consensus = majority_vote([label for _, label in labels])
        for judge, label in labels:
            per_judge[judge][label.value] += 1
        verdicts.append(
            Verdict(question_id=item.id, labels=tuple(labels), final=final, consensus=consensus)
        )
    label_counts = Counter(v.final.value for v in verdicts)
    report = EvalReport(
        label_counts={label.value: label_counts.get(label.value, 0) for label in JudgeLabel},
        per_judge={
            judge: {label.value: counts.get(label.value, 0) for label in JudgeLabel}
            for judge, counts in per_judge.items()
        },
        sample_size=len(verdicts),
        seed=seed,
        reprompts=reprompts,
        unparseable_items=unparseable_items,
    )
    return verdicts, report


def write_verdicts(path, verdicts: Iterable[Verdict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for verdict in verdicts:
            fh.write(json.dumps(verdict.as_dict(), ensure_ascii=False) + "\n")


def format_report_table(report: EvalReport) -> str:
    """Plain-text error-type distribution, final vote plus per-judge columns."""
    judges = list(report.per_judge)
    header = ["label", "final"] + judges
    rows = [header]
    for label in JudgeLabel:
        rows.append(
            [label.value, str(report.label_counts.get(label.value, 0))]
            + [str(report.per_judge[j].get(label.value, 0)) for j in judges]
        )
    rows.append(["total", str(report.sample_size)] + [str(report.sample_size)] * len(judges))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
    return "\n".join(lines)
