"""Prompt catalog for the three LLM purposes: refine, direct-generate, judge.

Prompts are versioned by content hash; the hashes go into run metadata so a
silently edited prompt shows up as a different dataset fingerprint.
"""

from __future__ import annotations

import hashlib

REFINE_SYSTEM = (
    "You improve the phrasing of quiz questions. Produce directly an improved "
    "version of the given question while omitting other details: no explanation, "
    "no answer, no commentary."
)

REFINE_USER_TEMPLATE = (
    "Rewrite the question below so it reads as fluent, grammatical English. "
    "Keep the subject exactly as written, keep the original meaning, and do not "
    "add any facts or names that are not already in the question.\n"
    'Question: "{question}"\n'
    "Reply with the improved question only, on one line, ending with a question mark."
)

DIRECT_GENERATE_SYSTEM = ""

DIRECT_GENERATE_USER_TEMPLATE = (
    "You are given one RDF-style triple formatted as: subject → relation → object\n"
    "\n"
    "TRIPLE: {triple}\n"
    "\n"
    "TASK: Write ONE natural-language question that:\n"
    "- Mentions the SUBJECT and encodes the RELATION;\n"
    "- Is answerable ONLY by the OBJECT;\n"
    "- Adds NO extra facts, qualifiers, dates, or names not present in the triple;\n"
    "- Keeps entities verbatim (do not rename, abbreviate, or translate them).\n"
    "\n"
    "FORMATTING:\n"
    "- Output ONLY the question text on one line ending with a question mark.\n"
    "- Do NOT include the answer, labels, or any extra text."
)

JUDGE_SYSTEM = (
    "You are an impartial judge responsible for evaluating the correctness of "
    "multiple-choice questions in terms of grammar, syntax, and formatting. Each "
    "question is generated from a structured triple consisting of three elements: "
    "subject, relationship, and object. Your task is to ensure that the question "
    "correctly incorporates the subject and the relationship while excluding the "
    "object, as the object should only appear among the answer choices.\n"
    "\n"
    "Important Constraints: (A) The subject must appear exactly as it is "
    "represented in the triple; (B) The relationship must be correctly integrated "
    "into the question; (C) The object must not appear in the question.\n"
    "\n"
    "Evaluation Criteria:\n"
    "1. Grammar: Ensure proper grammatical rules.\n"
    "2. Syntax: Verify sentence structure.\n"
    "3. Formatting: Check answer choices for distinctness and correctness.\n"
    "\n"
    "Answer with exactly one of the following labels and nothing else: "
    "correct, grammar error, formatting error, syntax error."
)

JUDGE_USER_TEMPLATE = (
    "The following question has been generated from the triple of given template "
    "category: {category}\n"
    "\n"
    "Question: {question}\n"
    "\n"
    "Is this question correctly formulated?"
)

JUDGE_FORMAT_REMINDER = (
    "Reply with exactly one label: correct, grammar error, formatting error, or "
    "syntax error. Do not include any other words."
)


def refine_user(question: str) -> str:
    return REFINE_USER_TEMPLATE.format(question=question)


def direct_generate_user(subject: str, relation: str, obj: str) -> str:
    triple = f"{subject} → {relation} → {obj}"
    return DIRECT_GENERATE_USER_TEMPLATE.format(triple=triple)


def judge_user(category: str, question: str) -> str:
    return JUDGE_USER_TEMPLATE.format(category=category, question=question)


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def catalog_hashes() -> dict[str, str]:
    return {
        "refine_system": _sha256(REFINE_SYSTEM),
        "refine_user_template": _sha256(REFINE_USER_TEMPLATE),
        "direct_generate_user_template": _sha256(DIRECT_GENERATE_USER_TEMPLATE),
        "judge_system": _sha256(JUDGE_SYSTEM),
        "judge_user_template": _sha256(JUDGE_USER_TEMPLATE),
        "judge_format_reminder": _sha256(JUDGE_FORMAT_REMINDER),
    }
