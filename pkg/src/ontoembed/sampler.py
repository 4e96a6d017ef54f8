"""Axiom-oriented batch sampling.

A batch starts from uniformly drawn seed nodes and adds every seed's ancestors
(parent included) and siblings. Quantified variables then range over the batch
only, so materialised variables cost ``n_vars * |batch| * d`` scalars instead of
``n_vars * |ontology| * d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .ontology import OntologyDag, RelationTriples


@dataclass(frozen=True)
class AxiomBatch:
    nodes: tuple  # ordered by ontology index
    positive_edges: tuple  # (parent, child)
    negative_pairs: tuple  # ordered (u, v), no edge u -> v, u != v
    triples: RelationTriples
    seeds: tuple = ()

    def __len__(self):
        return len(self.nodes)

    @cached_property
    def node_set(self):
        return frozenset(self.nodes)

    @cached_property
    def memo(self) -> dict:
        """Scratch space for values derived from the batch (quantifier domains)."""
        return {}


def _closure(dag: OntologyDag, seeds):
    keep = set()
    for s in seeds:
        keep.add(s)
        keep.update(dag.ancestors(s))
        keep.update(dag.siblings(s))
    return keep


def batch_relations(dag: OntologyDag, keep, relations: RelationTriples | None = None) -> RelationTriples:
    """Relations of the full ontology restricted to ``keep``, computed locally.

    When ``relations`` is given its (possibly depth-bounded) ancestor set is
    honoured.
    """
    keep = set(keep)
    parents, ancestors, siblings = set(), set(), set()
    by_parent: dict = {}
    for n in keep:
        p = dag.parent_of.get(n)
        if p is None:
            continue
        if p in keep:
            parents.add((p, n))
        by_parent.setdefault(p, []).append(n)
        cur = dag.parent_of.get(p)
        while cur is not None:
            if cur in keep and (relations is None or (cur, n) in relations.ancestor_pairs):
                ancestors.add((cur, n))
            cur = dag.parent_of.get(cur)
    for kids in by_parent.values():
        for i, a in enumerate(kids):
            for b in kids[i + 1:]:
                siblings.add(frozenset((a, b)))
    return RelationTriples(frozenset(parents), frozenset(ancestors), frozenset(siblings))


def _sample_negatives(rows, edge_codes, k, cap, rng):
    """Draw ``cap`` distinct off-diagonal, non-edge ordered pairs of batch positions."""
    total = k * (k - 1) - len(edge_codes)
    if total <= 0 or cap <= 0:
        return np.zeros(0, dtype=np.int64)
    if cap >= total or k <= 2048:
        codes = np.arange(k * k, dtype=np.int64)
        mask = (codes // k) != (codes % k)
        if edge_codes:
            mask[np.fromiter(edge_codes, dtype=np.int64)] = False
        candidates = codes[mask]
        if cap >= total:
            return candidates
        return np.sort(rng.choice(candidates, size=cap, replace=False))
    picked: dict = {}
    while len(picked) < cap:
        draw = rng.integers(0, k * k, size=2 * (cap - len(picked)))
        for c in draw.tolist():
            if c // k != c % k and c not in edge_codes and c not in picked:
                picked[c] = None
                if len(picked) == cap:
                    break
    return np.sort(np.fromiter(picked, dtype=np.int64))


def sample_batch(dag: OntologyDag, relations: RelationTriples | None, seed_count: int,
                 rng_seed, neg_cap: float | None = None) -> AxiomBatch:
    """Sample one training batch.

    ``neg_cap`` bounds the number of negative pairs; None means four times the
    number of positive edges, ``math.inf`` keeps every non-edge pair.
    """
    if not 1 <= seed_count <= len(dag):
        raise ValueError(f"seed_count must be in [1, {len(dag)}], got {seed_count}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    seed_idx = np.sort(rng.choice(len(dag), size=seed_count, replace=False))
    seeds = tuple(dag.nodes[i] for i in seed_idx)
    keep = _closure(dag, seeds)
    nodes = tuple(sorted(keep, key=dag.index.__getitem__))
    pos = {n: i for i, n in enumerate(nodes)}
    k = len(nodes)

    positives = tuple((dag.parent_of[n], n) for n in nodes
                      if n in dag.parent_of and dag.parent_of[n] in keep)
    edge_codes = {pos[p] * k + pos[c] for p, c in positives}
    if neg_cap is None:
        cap = 4 * len(positives)
    elif math.isinf(neg_cap):
        cap = k * k
    else:
        cap = int(neg_cap)
    codes = _sample_negatives(nodes, edge_codes, k, cap, rng)
    negatives = tuple((nodes[c // k], nodes[c % k]) for c in codes.tolist())
    return AxiomBatch(nodes, positives, negatives, batch_relations(dag, keep, relations), seeds)


def full_batch(dag: OntologyDag, relations: RelationTriples | None = None, neg_cap=math.inf) -> AxiomBatch:
    """Batch covering the whole ontology (useful for small ontologies and tests)."""
    return sample_batch(dag, relations, len(dag), 0, neg_cap)


def batch_footprint(batch: AxiomBatch | None, n_vars: int, dim: int) -> int:
    if batch is None:
        return 0
    return n_vars * len(batch.nodes) * dim
