import json
import random
from pathlib import Path

import pytest

from kgquest.clustering import cluster_by_relation
from kgquest.entity_typing import assign_dominant_types, load_typer_config
from kgquest.kg_store import KnowledgeGraph, Triplet, load_graph
from kgquest.template_engine import build_template

DATA_DIR = Path(__file__).parent / "data"
FIXTURE_TSV = DATA_DIR / "fixture_60.tsv"
FIXTURE_NT = DATA_DIR / "fixture_6.nt"
TYPER_DIR = DATA_DIR / "typer"


@pytest.fixture(scope="session")
def fixture_rows():
    """Raw (subject, relation, object) rows read by a plain line scan,
    independent of the loader under test."""
    rows = []
    for line in FIXTURE_TSV.read_text(encoding="utf-8").splitlines():
        if line.strip():
            subject, relation, obj = line.split("\t")
            rows.append((subject, relation, obj))
    return rows


@pytest.fixture(scope="session")
def fixture_graph():
    graph, _ = load_graph(FIXTURE_TSV, format="tsv")
    return graph


@pytest.fixture(scope="session")
def typer_cfg():
    return load_typer_config(TYPER_DIR)


@pytest.fixture(scope="session")
def typed_clusters(fixture_graph, typer_cfg):
    return assign_dominant_types(cluster_by_relation(fixture_graph), typer_cfg)


@pytest.fixture(scope="session")
def fixture_templates(typed_clusters):
    return [build_template(c) for c in typed_clusters]


def build_random_triplets(seed, n_relations=20, per_relation=50, n_objects=25):
    """Synthetic graph rows: per relation, a pool of distinct objects and a few
    repeated subjects so multi-object (s, r) pairs occur."""
    rng = random.Random(seed)
    triplets = []
    for r in range(n_relations):
        relation = f"ns/domain.group_{r:02d}.value"
        objects = [f"object-{r:02d}-{o:03d}" for o in range(n_objects)]
        subjects = [f"subject-{r:02d}-{s:03d}" for s in range(per_relation - 5)]
        rows = set()
        while len(rows) < per_relation:
            if len(rows) >= per_relation - 5 and subjects:
                subject = rng.choice(subjects)  # repeat: multi-object pair
            else:
                subject = subjects[len(rows) % len(subjects)]
            rows.add((subject, relation, rng.choice(objects)))
        triplets.extend(Triplet(s, rel, o) for s, rel, o in sorted(rows))
    return triplets


@pytest.fixture(scope="session")
def random_graph_1000():
    return KnowledgeGraph(build_random_triplets(seed=99, n_relations=20, per_relation=50))


@pytest.fixture
def write_config(tmp_path):
    def _write(**overrides):
        cfg = {
            "input": str(FIXTURE_TSV),
            "format": "tsv",
            "output_dir": str(tmp_path / "out"),
            "seed": 7,
            "n_options": 4,
            "typer_dir": str(TYPER_DIR),
        }
        cfg.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg), encoding="utf-8")
        return path

    return _write
