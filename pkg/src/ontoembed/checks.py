"""Brute-force oracles and the validation suites behind ``ontoembed check``.

The oracles deliberately avoid the data structures they check: relations are
rebuilt from the raw edge set by depth-first search and pair scans, metrics
from Python sets.
"""

from __future__ import annotations

import itertools
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .axioms import OraclePredicates, eval_ontology_axioms
from .downstream.metrics import ddi_score, jaccard, precision_recall_f1
from .ontology import KINDS, OntologyKind, derive_relations
from .sampler import full_batch, sample_batch
from .synth import random_tree, toy_ontologies
from .trainer import (TrainConfig, TrainState, alignment_grad_check, grad_check,
                      ontology_step)

GRAD_TOL = 1e-4
METRIC_TOL = 1e-12


# ---------------------------------------------------------------- oracles

def dfs_relations(edges):
    """``(parents, ancestors, siblings)`` from a raw edge set.

    Ancestors are pairs joined by a downward path of two or more edges;
    siblings are unordered pairs sharing a parent, found by scanning all pairs.
    """
    edges = set(edges)
    kids: dict = {}
    for p, c in edges:
        kids.setdefault(p, []).append(c)
    ancestors = set()
    for top in list(kids):
        stack = [(c, 1) for c in kids[top]]
        while stack:
            node, depth = stack.pop()
            if depth >= 2:
                ancestors.add((top, node))
            stack.extend((c, depth + 1) for c in kids.get(node, ()))
    nodes = sorted({n for e in edges for n in e})
    parent = {c: p for p, c in edges}
    siblings = {frozenset((a, b)) for a, b in itertools.combinations(nodes, 2)
                if a in parent and parent.get(b) == parent[a]}
    return set(edges), ancestors, siblings


def brute_batch_nodes(edges, seeds):
    """Seeds plus their ancestors and siblings, by walking the raw edges."""
    parent = {c: p for p, c in edges}
    keep = set(seeds)
    for s in seeds:
        cur = parent.get(s)
        while cur is not None:
            keep.add(cur)
            cur = parent.get(cur)
        if s in parent:
            keep.update(c for p, c in edges if p == parent[s] and c != s)
    return keep


def brute_batch_edges(edges, nodes):
    """P_b by scanning every ordered pair of batch nodes."""
    edges = set(edges)
    return {(u, v) for u in nodes for v in nodes if (u, v) in edges}


def set_jaccard(truth_sets, pred_sets, patients):
    per = {}
    for t, p, pid in zip(truth_sets, pred_sets, patients):
        per.setdefault(pid, []).append(len(t & p) / len(t | p))
    return sum(sum(v) / len(v) for v in per.values()) / len(per)


def set_prf(truth_sets, pred_sets, patients):
    per = {}
    for t, p, pid in zip(truth_sets, pred_sets, patients):
        prec = len(t & p) / len(p) if p else 0.0
        rec = len(t & p) / len(t) if t else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        per.setdefault(pid, []).append((prec, rec, f1))
    means = [tuple(sum(x[i] for x in v) / len(v) for i in range(3)) for v in per.values()]
    return tuple(sum(m[i] for m in means) / len(means) for i in range(3))


def set_ddi(pred_sets, interacting):
    hits = total = 0
    for p in pred_sets:
        for a, b in itertools.combinations(sorted(p), 2):
            total += 1
            hits += frozenset((a, b)) in interacting
    return hits / total


def random_dags(n, max_nodes, rng, min_nodes=2):
    for i in range(n):
        size = int(rng.integers(min_nodes, max_nodes + 1))
        yield random_tree(KINDS[i % 3], size, rng)


# ---------------------------------------------------------------- suites

@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def suite_grad_check(seed: int = 0) -> str:
    """Backprop vs central differences on toy batches: every table and predicate entry."""
    dags = toy_ontologies()
    worst = []
    state = TrainState(dags, TrainConfig(dim=4, rng_seed=seed), indications=[])
    for kind in KINDS:
        batch = sample_batch(dags[kind], None, 6, seed)
        worst.append((f"{kind.value}@d4", grad_check(state, batch, kind)))
    big = TrainState({OntologyKind.PROCEDURE: dags[OntologyKind.PROCEDURE]},
                     TrainConfig(dim=8, rng_seed=seed))
    batch = sample_batch(dags[OntologyKind.PROCEDURE], None, 6, seed)
    worst.append(("procedure@d8", grad_check(big, batch, OntologyKind.PROCEDURE)))
    med, diag = dags[OntologyKind.MEDICATION], dags[OntologyKind.DIAGNOSIS]
    pairs = [(m, d) for m, d in zip(med.leaves()[:6], diag.leaves()[:6])]
    neg = [(m, d) for m, d in zip(med.leaves()[:6], diag.leaves()[-6:])]
    align = TrainState({k: dags[k] for k in (OntologyKind.MEDICATION, OntologyKind.DIAGNOSIS)},
                       TrainConfig(dim=4, rng_seed=seed), indications=pairs)
    worst.append(("indication@d4", alignment_grad_check(align, pairs, neg)))
    bad = [f"{name}={err:.2e}" for name, err in worst if not err < GRAD_TOL]
    summary = ", ".join(f"{name}={err:.1e}" for name, err in worst)
    if bad:
        raise AssertionError(f"relative error >= {GRAD_TOL}: {', '.join(bad)}")
    return summary


def suite_closure(n_dags: int = 100, max_nodes: int = 200, seed: int = 0) -> str:
    """Relation sets and batch edges equal the brute-force oracles."""
    rng = np.random.default_rng(seed)
    for dag in random_dags(n_dags, max_nodes, rng):
        rel = derive_relations(dag)
        parents, ancestors, siblings = dfs_relations(dag.edges)
        if (set(rel.parent_pairs), set(rel.ancestor_pairs), set(rel.sibling_pairs)) != \
                (parents, ancestors, siblings):
            raise AssertionError(f"relations differ from DFS oracle on {len(dag)}-node DAG")
        b = sample_batch(dag, rel, int(rng.integers(1, len(dag) + 1)), rng)
        if set(b.nodes) != brute_batch_nodes(dag.edges, b.seeds):
            raise AssertionError("batch node closure differs from oracle")
        if set(b.positive_edges) != brute_batch_edges(dag.edges, b.nodes):
            raise AssertionError("batch positive edges differ from pair-scan oracle")
        if set(b.triples.ancestor_pairs) != {p for p in ancestors if set(p) <= b.node_set}:
            raise AssertionError("batch ancestor pairs differ from oracle")
    return f"{n_dags} random DAGs"


def suite_locality(seed: int = 0) -> str:
    """Embedding gradients vanish outside the batch."""
    dags = toy_ontologies()
    state = TrainState(dags, TrainConfig(dim=8, rng_seed=seed, lr=0.0))
    for kind in KINDS:
        batch = sample_batch(dags[kind], None, 3, seed)
        ontology_step(state, kind, batch)
        table = state.tables[kind]
        outside = [i for i, n in enumerate(table.nodes) if n not in batch.node_set]
        if outside and np.any(table.grad[outside] != 0):
            raise AssertionError(f"{kind.value}: nonzero gradient outside the batch")
        for other in KINDS:
            if other != kind and np.any(state.tables[other].grad != 0):
                raise AssertionError(f"{kind.value} step touched {other.value} embeddings")
    return "3 ontologies"


def suite_crisp(n_dags: int = 100, max_nodes: int = 200, seed: int = 0) -> str:
    """Oracle predicates satisfy every instantiable axiom exactly."""
    rng = np.random.default_rng(seed)
    checked = 0
    for i, dag in enumerate(random_dags(n_dags, max_nodes, rng)):
        oracle = OraclePredicates(derive_relations(dag))
        batches = [(full_batch(dag, neg_cap=4 * len(dag)), False)]
        if len(dag) <= 20:
            batches.append((full_batch(dag), True))
        for batch, literal in batches:
            report = eval_ontology_axioms(batch, oracle, literal=literal)
            bad = {k: v for k, v in report.axioms.items() if v != 1.0}
            if bad or report.aggregated != 1.0:
                raise AssertionError(f"DAG {i} ({len(dag)} nodes, literal={literal}): {bad}")
            checked += len(report.axioms)
    return f"{n_dags} random DAGs, {checked} axiom evaluations"


def suite_metrics(n_cases: int = 1000, seed: int = 0) -> str:
    """Vectorised metrics agree with set-based oracles."""
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        n_rows, n_meds = int(rng.integers(1, 8)), int(rng.integers(2, 12))
        truth = rng.random((n_rows, n_meds)) < rng.uniform(0.1, 0.7)
        pred = rng.random((n_rows, n_meds)) < rng.uniform(0.1, 0.7)
        truth[np.arange(n_rows), rng.integers(0, n_meds, n_rows)] = True
        patients = rng.integers(0, max(1, n_rows // 2) + 1, n_rows)
        ts = [set(np.flatnonzero(r)) for r in truth]
        ps = [set(np.flatnonzero(r)) for r in pred]
        if abs(jaccard(truth, pred, patients) - set_jaccard(ts, ps, patients)) > METRIC_TOL:
            raise AssertionError("jaccard disagrees with oracle")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            got = tuple(precision_recall_f1(truth, pred, patients))
        if max(abs(a - b) for a, b in zip(got, set_prf(ts, ps, patients))) > METRIC_TOL:
            raise AssertionError("precision/recall/F1 disagree with oracle")
        upper = np.triu(rng.random((n_meds, n_meds)) < 0.3, 1)
        d = (upper | upper.T).astype(float)
        interacting = {frozenset((a, b)) for a, b in zip(*np.nonzero(upper))}
        if any(len(p) >= 2 for p in ps):
            if abs(ddi_score(pred, d) - set_ddi(ps, interacting)) > METRIC_TOL:
                raise AssertionError("DDI disagrees with oracle")
    return f"{n_cases} random cases"


SUITES = {
    "grad_check": suite_grad_check,
    "closure": suite_closure,
    "locality": suite_locality,
    "crisp": suite_crisp,
    "metrics": suite_metrics,
}


def run_suites(names=None) -> list:
    out = []
    for name in names or SUITES:
        start = time.perf_counter()
        try:
            detail, ok = SUITES[name](), True
        except AssertionError as exc:
            detail, ok = str(exc), False
        out.append(SuiteResult(name, ok, detail, time.perf_counter() - start))
    return out
