"""kgic: two-stage instance completion for knowledge graphs.

Stage one proposes relevant (head, relation) pairs via property prediction,
stage two fills in tails via embedding ranking or constrained generative
decoding.  See README.md for the CLI walkthrough.
"""

from kgic.graph import EntityMeta, KnowledgeGraph, SplitSet, Triple, Vocab, build_graph

__version__ = "0.1.0"

__all__ = [
    "EntityMeta",
    "KnowledgeGraph",
    "SplitSet",
    "Triple",
    "Vocab",
    "build_graph",
    "__version__",
]
