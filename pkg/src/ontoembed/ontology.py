"""Single-parent ontologies as rooted DAGs, plus the relations derived from them.

Files are plain edge lists, one ``child<TAB>parent`` per line. Lines starting
with ``#`` and blank lines are ignored.
"""

from __future__ import annotations

import enum
import itertools
import os
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import CycleError, MultiParentError, OrphanError, ParseError, UnknownNode


class OntologyKind(str, enum.Enum):
    DIAGNOSIS = "diagnosis"
    PROCEDURE = "procedure"
    MEDICATION = "medication"

    @classmethod
    def parse(cls, value) -> "OntologyKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown ontology kind {value!r}") from None

    @property
    def short(self) -> str:
        return {"diagnosis": "diag", "procedure": "proc", "medication": "med"}[self.value]


KINDS = (OntologyKind.DIAGNOSIS, OntologyKind.PROCEDURE, OntologyKind.MEDICATION)


class OntologyDag:
    """Immutable rooted tree of opaque node ids.

    ``edges`` holds ``(parent, child)`` pairs. Node order is the order of first
    appearance in the source, root first, and fixes the row order of any
    embedding table built on top of the DAG.
    """

    __slots__ = ("kind", "nodes", "edges", "root", "index", "parent_of", "children_of")

    def __init__(self, kind, nodes, edges, root, parent_of, children_of):
        self.kind = OntologyKind.parse(kind)
        self.nodes: tuple[str, ...] = tuple(nodes)
        self.edges: frozenset[tuple[str, str]] = frozenset(edges)
        self.root: str = root
        self.index: Mapping[str, int] = MappingProxyType({n: i for i, n in enumerate(self.nodes)})
        self.parent_of: Mapping[str, str] = MappingProxyType(dict(parent_of))
        self.children_of: Mapping[str, tuple[str, ...]] = MappingProxyType(
            {k: tuple(v) for k, v in children_of.items()}
        )

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, node):
        return node in self.index

    def __repr__(self):
        return f"OntologyDag(kind={self.kind.value}, nodes={len(self.nodes)}, root={self.root!r})"

    def __eq__(self, other):
        if not isinstance(other, OntologyDag):
            return NotImplemented
        return (self.kind, self.nodes, self.edges, self.root) == (
            other.kind, other.nodes, other.edges, other.root)

    def __hash__(self):
        return hash((self.kind, self.nodes, self.root))

    def children(self, node: str) -> tuple[str, ...]:
        self._require(node)
        return self.children_of.get(node, ())

    def parent(self, node: str) -> str | None:
        self._require(node)
        return self.parent_of.get(node)

    def ancestors(self, node: str) -> list[str]:
        """All proper ancestors, nearest first."""
        self._require(node)
        out = []
        cur = self.parent_of.get(node)
        while cur is not None:
            out.append(cur)
            cur = self.parent_of.get(cur)
        return out

    def descendants(self, node: str) -> list[str]:
        self._require(node)
        out = []
        stack = list(self.children_of.get(node, ()))
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(self.children_of.get(n, ()))
        return out

    def siblings(self, node: str) -> tuple[str, ...]:
        self._require(node)
        p = self.parent_of.get(node)
        if p is None:
            return ()
        return tuple(c for c in self.children_of[p] if c != node)

    def leaves(self) -> list[str]:
        return [n for n in self.nodes if not self.children_of.get(n)]

    def max_depth(self) -> int:
        depth = {self.root: 0}
        best = 0
        for n in self._topological():
            if n != self.root:
                depth[n] = depth[self.parent_of[n]] + 1
                best = max(best, depth[n])
        return best

    def _topological(self):
        stack = [self.root]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(reversed(self.children_of.get(n, ())))

    def _require(self, node):
        if node not in self.index:
            raise UnknownNode(f"unknown node {node!r} in {self.kind.value} ontology")

    @classmethod
    def from_edges(cls, kind, edges: Iterable[tuple[str, str]], source=None) -> "OntologyDag":
        """Build and validate from ``(parent, child)`` pairs."""
        order: dict[str, None] = {}
        parent_of: dict[str, str] = {}
        children_of: dict[str, list[str]] = {}
        edge_set = set()
        for parent, child in edges:
            if parent == child:
                raise CycleError(f"self loop on {child!r}")
            order.setdefault(child, None)
            order.setdefault(parent, None)
            if (parent, child) in edge_set:
                continue
            prev = parent_of.get(child)
            if prev is not None:
                raise MultiParentError(
                    f"node {child!r} has more than one parent ({prev!r}, {parent!r})")
            parent_of[child] = parent
            children_of.setdefault(parent, []).append(child)
            edge_set.add((parent, child))

        roots = [n for n in order if n not in parent_of]
        if not order:
            raise OrphanError(f"empty ontology{' in ' + str(source) if source else ''}")
        if not roots:
            raise CycleError("no root: every node has a parent, so the graph has a cycle")
        if len(roots) > 1:
            shown = ", ".join(repr(r) for r in roots[:5])
            raise OrphanError(f"expected a single root, found {len(roots)}: {shown}")
        root = roots[0]

        seen = {root}
        stack = [root]
        while stack:
            for c in children_of.get(stack.pop(), ()):
                seen.add(c)
                stack.append(c)
        if len(seen) != len(order):
            # with one parent each and a unique root, unreachable nodes sit on a cycle
            stuck = sorted(n for n in order if n not in seen)
            raise CycleError(f"cycle among nodes {stuck[:5]}")

        nodes = [root] + [n for n in order if n != root]
        return cls(kind, nodes, edge_set, root, parent_of, children_of)


def load_ontology(path, kind) -> OntologyDag:
    path = os.fspath(path)
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(f"expected 'child<TAB>parent', got {line!r}", path, lineno)
            child, parent = parts
            edges.append((parent, child))
    if not edges:
        raise ParseError("no edges found", path)
    return OntologyDag.from_edges(kind, edges, source=path)


def save_ontology(dag: OntologyDag, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {dag.kind.value} ontology, child<TAB>parent\n")
        for n in dag.nodes:
            p = dag.parent_of.get(n)
            if p is not None:
                fh.write(f"{n}\t{p}\n")


def depth_of(dag: OntologyDag, node: str) -> int:
    return len(dag.ancestors(node))


@dataclass(frozen=True)
class RelationTriples:
    """Parent, (multi-hop) ancestor and sibling relations.

    ``parent_pairs`` and ``ancestor_pairs`` are ordered ``(upper, lower)``;
    ``sibling_pairs`` holds unordered pairs as frozensets.
    """

    parent_pairs: frozenset
    ancestor_pairs: frozenset
    sibling_pairs: frozenset

    def restrict(self, keep) -> "RelationTriples":
        keep = set(keep)
        return RelationTriples(
            frozenset(p for p in self.parent_pairs if p[0] in keep and p[1] in keep),
            frozenset(p for p in self.ancestor_pairs if p[0] in keep and p[1] in keep),
            frozenset(p for p in self.sibling_pairs if p <= keep),
        )


def derive_relations(dag: OntologyDag, max_depth: int | None = None) -> RelationTriples:
    """Derive relation sets; ``max_depth`` bounds ancestor hops (None = unbounded)."""
    if max_depth is not None and max_depth < 1:
        raise ValueError("max_depth must be positive or None")
    parents = frozenset(dag.edges)
    ancestors = set()
    for node in dag.nodes:
        p = dag.parent_of.get(node)
        if p is None:
            continue
        hops = 2
        cur = dag.parent_of.get(p)
        while cur is not None and (max_depth is None or hops <= max_depth):
            ancestors.add((cur, node))
            cur = dag.parent_of.get(cur)
            hops += 1
    siblings = set()
    for kids in dag.children_of.values():
        for a, b in itertools.combinations(kids, 2):
            siblings.add(frozenset((a, b)))
    return RelationTriples(parents, frozenset(ancestors), frozenset(siblings))
