"""Small fixtures shared across test modules."""

from ontoembed.ontology import KINDS, OntologyDag

D, P, M = KINDS


def chain(kind=D, names=("a", "b", "c")):
    return OntologyDag.from_edges(kind, list(zip(names[:-1], names[1:])))


def star(kind=D):
    return OntologyDag.from_edges(kind, [("a", "b"), ("a", "c")])


def heap_tree(kind, n_nodes, fan, prefix="n"):
    """``n_nodes``-node tree where node ``i`` hangs under ``(i - 1) // fan``."""
    edges = [(f"{prefix}{(i - 1) // fan}", f"{prefix}{i}") for i in range(1, n_nodes)]
    return OntologyDag.from_edges(kind, edges)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path
