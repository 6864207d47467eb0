"""kgquest: build multiple-choice QA datasets from knowledge-graph triples.

The pipeline clusters triples by relation, builds one question template per
cluster from deterministic rules, optionally refines each template with a
single LLM call, instantiates one question per triple with graph-sound
distractors, and can evaluate a sample of the output with a three-judge
LLM jury.
"""

__version__ = "0.1.0"

from kgquest.kg_store import KnowledgeGraph, Triplet, load_graph
from kgquest.clustering import Cluster, cluster_by_relation, cluster_objects
from kgquest.template_engine import Template, PrefixMap, build_template, instantiate

__all__ = [
    "__version__",
    "KnowledgeGraph",
    "Triplet",
    "load_graph",
    "Cluster",
    "cluster_by_relation",
    "cluster_objects",
    "Template",
    "PrefixMap",
    "build_template",
    "instantiate",
]
