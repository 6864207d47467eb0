"""Command-line pipeline: stats, build-templates, refine, generate,
direct-baseline, evaluate.

Stages communicate through files in the output directory, so the single
network-dependent stage (refine) can be re-run or cached independently.
Every stage writes a ``<stage>.meta.json`` with the config hash, seed, and
prompt hashes needed to reproduce the run.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 endpoint
exhaustion.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from kgquest import __version__, prompts
from kgquest.clustering import cluster_by_relation
from kgquest.entity_typing import (
    TyperConfig,
    assign_dominant_types,
    default_typer_config,
    load_typer_config,
)
from kgquest.jury_eval import (
    check_judge_separation,
    evaluate_items,
    format_report_table,
    sample_for_jury,
    write_verdicts,
)
from kgquest.kg_store import EncodingError, MalformedLine, load_graph
from kgquest.llm_client import (
    CallLedger,
    EmptyCompletion,
    HttpChatClient,
    HttpError,
    MalformedCompletion,
    MockChatClient,
    RateLimited,
    Timeout,
    direct_generate_question,
)
from kgquest.qa_builder import (
    GenerationConfig,
    InsufficientDistractors,
    TemplateCoverageError,
    assemble_item,
    generate_dataset,
    select_distractors,
    write_dataset,
    read_dataset,
)
from kgquest.refinement import refine_all, write_refinement_records
from kgquest.template_engine import (
    PlaceholderMissing,
    PrefixMap,
    build_template,
    read_templates,
    write_templates,
)

logger = logging.getLogger(__name__)

TEMPLATES_FILE = "templates.jsonl"
REFINED_FILE = "templates_refined.jsonl"
DATASET_FILE = "dataset.jsonl"
DIRECT_DATASET_FILE = "dataset_direct.jsonl"
VERDICTS_FILE = "verdicts.jsonl"
EVAL_REPORT_FILE = "eval_report.json"
EVAL_TABLE_FILE = "eval_report.txt"

DIRECT_PROVENANCE = "direct_llm"

_SAMPLING_STAGES = ("refine", "generate", "direct-baseline", "evaluate")

DEFAULT_LLM = {
    "mode": "mock",
    "temperature": 0.0,
    "max_tokens": 128,
    "refine_workers": 1,
    "models": {
        "refine": "mock-refiner",
        "direct": "mock-direct",
        "judges": ["mock-judge-a", "mock-judge-b", "mock-judge-c"],
    },
    "mock": {
        "default": {"mode": "identity"},
        "direct_generate": {"mode": "scripted", "script": ["What is the linked value?"], "cycle": True},
        "judge": {"mode": "scripted", "script": ["correct"], "cycle": True},
    },
    "endpoint": {
        "base_url": "http://localhost:8000/v1",
        "api_key_env": "KGQUEST_API_KEY",
        "timeout": 30.0,
        "max_attempts": 5,
        "backoff_base": 0.5,
        "concurrency": 4,
    },
}


class ConfigError(Exception):
    """Bad usage or configuration; maps to exit code 1."""


@dataclass
class RunConfig:
    input: str | None = None
    format: str = "auto"
    output_dir: str = "out"
    seed: int | None = None
    n_options: int = 4
    parse_mode: str = "strict"
    use_refined: bool = True
    distractor_fallback: str = "skip"
    singularize_relations: bool = False
    typer_dir: str | None = None
    prefix_entries: dict = field(default_factory=lambda: {"Person": "Who is"})
    prefix_default: str = "What is"
    llm: dict = field(default_factory=lambda: _merge(DEFAULT_LLM, {}))

    def as_dict(self) -> dict:
        return {
            "input": self.input,
            "format": self.format,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "n_options": self.n_options,
            "parse_mode": self.parse_mode,
            "use_refined": self.use_refined,
            "distractor_fallback": self.distractor_fallback,
            "singularize_relations": self.singularize_relations,
            "typer_dir": self.typer_dir,
            "prefix_map": {"entries": self.prefix_entries, "default": self.prefix_default},
            "llm": self.llm,
        }

    @property
    def strict(self) -> bool:
        return self.parse_mode == "strict"

    def prefix_map(self) -> PrefixMap:
        return PrefixMap(entries=dict(self.prefix_entries), default=self.prefix_default)

    def typer_config(self) -> TyperConfig:
        return load_typer_config(self.typer_dir) if self.typer_dir else default_typer_config()

    def out_path(self, name: str) -> Path:
        return Path(self.output_dir) / name


def _merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(config_path: str | None, overrides: dict) -> RunConfig:
    data: dict = {}
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")

    prefix_map = data.get("prefix_map", {})
    cfg = RunConfig(
        input=data.get("input"),
        format=data.get("format", "auto"),
        output_dir=data.get("output_dir", "out"),
        seed=data.get("seed"),
        n_options=data.get("n_options", 4),
        parse_mode=data.get("parse_mode", "strict"),
        use_refined=data.get("use_refined", True),
        distractor_fallback=data.get("distractor_fallback", "skip"),
        singularize_relations=data.get("singularize_relations", False),
        typer_dir=data.get("typer_dir"),
        prefix_entries=_merge({"Person": "Who is"}, prefix_map.get("entries", {})),
        prefix_default=prefix_map.get("default", "What is"),
        llm=_merge(DEFAULT_LLM, data.get("llm", {})),
    )
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def validate_config(cfg: RunConfig, stage: str) -> None:
    if not cfg.input:
        raise ConfigError("an input triple file is required (config 'input' or --input)")
    if not Path(cfg.input).exists():
        raise ConfigError(f"input file not found: {cfg.input}")
    if cfg.typer_dir and not Path(cfg.typer_dir).is_dir():
        raise ConfigError(f"typer config directory not found: {cfg.typer_dir}")
    if cfg.format not in ("auto", "tsv", "ntriples"):
        raise ConfigError(f"unknown format {cfg.format!r}")
    if cfg.parse_mode not in ("strict", "lenient"):
        raise ConfigError(f"unknown parse mode {cfg.parse_mode!r}")
    if cfg.n_options < 2:
        raise ConfigError("n_options must be >= 2")
    if cfg.distractor_fallback not in ("skip", "global_same_type"):
        raise ConfigError(f"unknown distractor fallback {cfg.distractor_fallback!r}")
    if stage in _SAMPLING_STAGES and cfg.seed is None:
        raise ConfigError(f"a seed is required for the {stage} stage")
    if cfg.llm.get("mode") not in ("mock", "http"):
        raise ConfigError(f"unknown llm mode {cfg.llm.get('mode')!r}")


def _mock_spec(llm_cfg: dict, purpose: str) -> dict:
    mock_cfg = llm_cfg.get("mock", {})
    return mock_cfg.get(purpose) or mock_cfg.get("default") or {"mode": "identity"}


def build_client(cfg: RunConfig, purpose: str):
    """Construct the configured client for one purpose with a fresh ledger."""
    llm_cfg = cfg.llm
    ledger = CallLedger()
    if llm_cfg["mode"] == "mock":
        spec = _mock_spec(llm_cfg, purpose)
        return MockChatClient(
            mode=spec.get("mode", "identity"),
            canned=spec.get("canned"),
            script=spec.get("script"),
            cycle=spec.get("cycle", False),
            ledger=ledger,
        )
    endpoint = llm_cfg["endpoint"]
    api_key = os.environ.get(endpoint.get("api_key_env", "KGQUEST_API_KEY"))
    return HttpChatClient(
        base_url=endpoint["base_url"],
        api_key=api_key,
        timeout=endpoint.get("timeout", 30.0),
        max_attempts=endpoint.get("max_attempts", 5),
        backoff_base=endpoint.get("backoff_base", 0.5),
        concurrency=endpoint.get("concurrency", 4),
        ledger=ledger,
    )


def _sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(
        json.dumps(cfg.as_dict(), sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()


def write_stage_metadata(cfg: RunConfig, stage: str, extra: dict | None = None) -> Path:
    meta = {
        "stage": stage,
        "package_version": __version__,
        "python_version": sys.version.split()[0],
        "config": cfg.as_dict(),
        "config_sha256": _config_hash(cfg),
        "seed": cfg.seed,
        "prompt_hashes": prompts.catalog_hashes(),
        "input": {"path": cfg.input, "sha256": _sha256_file(cfg.input) if cfg.input else None},
    }
    if extra:
        meta.update(extra)
    path = cfg.out_path(f"{stage}.meta.json")
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def _load_graph_and_clusters(cfg: RunConfig):
    graph, stats = load_graph(cfg.input, format=cfg.format, strict=cfg.strict)
    typer_cfg = cfg.typer_config()
    clusters = assign_dominant_types(cluster_by_relation(graph), typer_cfg)
    return graph, stats, clusters, typer_cfg


def cmd_stats(cfg: RunConfig) -> int:
    graph, stats, clusters, _ = _load_graph_and_clusters(cfg)
    print(f"triplets:           {stats.triplet_count}")
    print(f"entities:           {stats.entity_count}")
    print(f"relations:          {stats.relation_count}")
    print(f"duplicates dropped: {stats.duplicates_dropped}")
    print(f"malformed skipped:  {stats.malformed_skipped}")
    print()
    width = max([len("relation")] + [len(c.relation) for c in clusters])
    print(f"{'relation'.ljust(width)}  size")
    for cluster in clusters:
        print(f"{cluster.relation.ljust(width)}  {len(cluster)}")
    write_stage_metadata(cfg, "stats", {"stats": stats.as_dict()})
    return 0


def _build_templates(cfg: RunConfig, clusters):
    prefix_map = cfg.prefix_map()
    return [
        build_template(c, prefix_map, singularize=cfg.singularize_relations) for c in clusters
    ]


def cmd_build_templates(cfg: RunConfig) -> int:
    _, _, clusters, _ = _load_graph_and_clusters(cfg)
    templates = _build_templates(cfg, clusters)
    out = cfg.out_path(TEMPLATES_FILE)
    write_templates(out, templates)
    write_stage_metadata(cfg, "build_templates", {"template_count": len(templates)})
    print(f"wrote {len(templates)} templates to {out}")
    return 0


def cmd_refine(cfg: RunConfig) -> int:
    graph, _, clusters, typer_cfg = _load_graph_and_clusters(cfg)
    template_path = cfg.out_path(TEMPLATES_FILE)
    if not template_path.exists():
        raise ConfigError(f"template file not found: {template_path} (run build-templates first)")
    templates = read_templates(template_path)
    client = build_client(cfg, "refine")
    records = refine_all(
        templates,
        clusters,
        typer_cfg,
        client,
        model=cfg.llm["models"]["refine"],
        seed=cfg.seed if cfg.seed is not None else 0,
        entity_set=graph.entity_set,
        workers=cfg.llm.get("refine_workers", 1),
        temperature=cfg.llm.get("temperature", 0.0),
        max_tokens=cfg.llm.get("max_tokens", 128),
    )
    out = cfg.out_path(REFINED_FILE)
    write_refinement_records(out, records)
    client.ledger.dump(cfg.out_path("refine_ledger.json"))
    statuses = {}
    for record in records:
        statuses[record.status] = statuses.get(record.status, 0) + 1
    write_stage_metadata(
        cfg,
        "refine",
        {"ledger": client.ledger.snapshot(), "statuses": statuses, "template_count": len(records)},
    )
    print(f"refined {len(records)} templates ({statuses}) -> {out}")
    print(f"refine completions: {client.ledger.count('refine')}")
    return 0


def cmd_generate(cfg: RunConfig) -> int:
    graph, _, clusters, typer_cfg = _load_graph_and_clusters(cfg)
    source = cfg.out_path(REFINED_FILE if cfg.use_refined else TEMPLATES_FILE)
    if not source.exists():
        hint = "refine" if cfg.use_refined else "build-templates"
        raise ConfigError(f"template file not found: {source} (run {hint} first)")
    templates = read_templates(source)
    generation_cfg = GenerationConfig(
        n_options=cfg.n_options,
        seed=cfg.seed,
        distractor_fallback=cfg.distractor_fallback,
        use_refined=cfg.use_refined,
    )
    items, report = generate_dataset(graph, clusters, templates, generation_cfg, typer_cfg)
    out = cfg.out_path(DATASET_FILE)
    write_dataset(out, items)
    refine_ledger_path = cfg.out_path("refine_ledger.json")
    refine_ledger = (
        json.loads(refine_ledger_path.read_text(encoding="utf-8"))
        if refine_ledger_path.exists()
        else None
    )
    write_stage_metadata(
        cfg,
        "generate",
        {
            "report": report.as_dict(),
            "templates_file": str(source),
            "templates_sha256": _sha256_file(source),
            "refine_ledger": refine_ledger,
        },
    )
    print(f"emitted {report.total_emitted} items, skipped {report.total_skipped} -> {out}")
    return 0


def cmd_direct_baseline(cfg: RunConfig) -> int:
    graph, _, clusters, _ = _load_graph_and_clusters(cfg)
    cluster_by_rel = {c.relation: c for c in clusters}
    client = build_client(cfg, "direct_generate")
    model = cfg.llm["models"]["direct"]
    items = []
    malformed = 0
    starved = 0
    for triplet in sorted(graph.triplets):
        try:
            question = direct_generate_question(
                triplet,
                client,
                model=model,
                temperature=cfg.llm.get("temperature", 0.0),
                max_tokens=cfg.llm.get("max_tokens", 128),
            )
        except (MalformedCompletion, EmptyCompletion) as exc:
            logger.warning("skipping %s: %s", triplet, exc)
            malformed += 1
            continue
        try:
            distractors = select_distractors(
                graph, cluster_by_rel[triplet.relation], triplet, cfg.n_options - 1, cfg.seed
            )
        except InsufficientDistractors:
            starved += 1
            continue
        items.append(assemble_item(question, triplet, distractors, cfg.seed, DIRECT_PROVENANCE))
    out = cfg.out_path(DIRECT_DATASET_FILE)
    write_dataset(out, items)
    client.ledger.dump(cfg.out_path("direct_ledger.json"))
    write_stage_metadata(
        cfg,
        "direct_baseline",
        {
            "ledger": client.ledger.snapshot(),
            "emitted": len(items),
            "malformed_completions": malformed,
            "insufficient_distractors": starved,
        },
    )
    print(f"emitted {len(items)} items -> {out}")
    print(f"direct completions: {client.ledger.count('direct_generate')}")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    _, _, clusters, _ = _load_graph_and_clusters(cfg)
    dataset_path = cfg.out_path(DATASET_FILE)
    if not dataset_path.exists():
        raise ConfigError(f"dataset not found: {dataset_path} (run generate first)")
    items = read_dataset(dataset_path)
    judges = list(cfg.llm["models"]["judges"])
    try:
        check_judge_separation(judges, cfg.llm["models"].get("refine"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sampled = sample_for_jury(clusters, items, cfg.seed)
    client = build_client(cfg, "judge")
    verdicts, report = evaluate_items(
        sampled,
        judges,
        client,
        seed=cfg.seed,
        temperature=cfg.llm.get("temperature", 0.0),
        max_tokens=cfg.llm.get("max_tokens", 128),
    )
    write_verdicts(cfg.out_path(VERDICTS_FILE), verdicts)
    cfg.out_path(EVAL_REPORT_FILE).write_text(
        json.dumps(report.as_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    table = format_report_table(report)
    cfg.out_path(EVAL_TABLE_FILE).write_text(table + "\n", encoding="utf-8")
    client.ledger.dump(cfg.out_path("judge_ledger.json"))
    write_stage_metadata(
        cfg, "evaluate", {"ledger": client.ledger.snapshot(), "report": report.as_dict()}
    )
    print(table)
    return 0


_COMMANDS = {
    "stats": cmd_stats,
    "build-templates": cmd_build_templates,
    "refine": cmd_refine,
    "generate": cmd_generate,
    "direct-baseline": cmd_direct_baseline,
    "evaluate": cmd_evaluate,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--input", help="triple file (TSV or N-Triples subset; .gz accepted)")
    common.add_argument("--format", choices=["auto", "tsv", "ntriples"], default=None)
    common.add_argument("--output-dir", dest="output_dir", help="directory for stage outputs")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--n-options", dest="n_options", type=int, default=None)
    common.add_argument(
        "--lenient", action="store_const", const="lenient", dest="parse_mode", default=None,
        help="skip malformed lines instead of failing",
    )
    common.add_argument(
        "--use-refined", dest="use_refined", action=argparse.BooleanOptionalAction, default=None,
        help="generate from refined templates (default) or rule-built ones",
    )
    common.add_argument(
        "--fallback", dest="distractor_fallback", choices=["skip", "global_same_type"], default=None,
    )
    common.add_argument("--typer-dir", dest="typer_dir", help="entity typer config directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="kgquest", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        overrides = {
            key: getattr(args, key)
            for key in (
                "input",
                "format",
                "output_dir",
                "seed",
                "n_options",
                "parse_mode",
                "use_refined",
                "distractor_fallback",
                "typer_dir",
            )
        }
        cfg = load_run_config(args.config, overrides)
        validate_config(cfg, args.command)
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MalformedLine, EncodingError, TemplateCoverageError, PlaceholderMissing) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (Timeout, RateLimited, HttpError, EmptyCompletion, MalformedCompletion) as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
