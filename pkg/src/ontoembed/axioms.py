"""Ontology and indication axioms evaluated over sampled batches.

Each schema is a named, universally quantified formula over batch positions.
By default a quantifier only ranges over instances whose antecedent can hold
in the ontology (edges, ancestor pairs, sibling pairs and their joins);
``literal=True`` quantifies over the full ``N_b^k`` product instead.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyDomain, EmptyKnowledgeBase, ParseError, UnknownNode
from .grounding import EmbeddingTable, PredicateNet, score_pairs
from .logic import DEFAULT_AGG, AggregationConfig, forall, fz_and, fz_implies, fz_not, kb_loss, sat_agg
from .ontology import OntologyDag, RelationTriples
from .sampler import AxiomBatch
from .tape import Var, take

ONTOLOGY_AXIOMS = (
    "parent_not_reflexive",
    "parent_asymmetric",
    "ancestor_not_reflexive",
    "ancestor_asymmetric",
    "sibling_definition",
    "sibling_not_reflexive",
    "sibling_symmetric",
    "ancestor_from_parents",
    "ancestor_from_ancestor",
    "positive_edges",
    "negative_edges",
)

INDICATION_AXIOMS = ("indication_positive", "indication_negative")


@dataclass
class SatReport:
    axioms: dict  # name -> satisfaction in [0, 1]
    aggregated: float
    skipped: list = field(default_factory=list)
    loss_var: Var | None = field(default=None, repr=False)

    @property
    def loss(self) -> float:
        return 1.0 - self.aggregated


# ---------------------------------------------------------------- predicates

class NetPredicates:
    """Binds ``{"P", "S", "A"}`` predicate nets to one embedding table."""

    def __init__(self, table: EmbeddingTable, nets: dict):
        self.table = table
        self.nets = nets

    def bind(self, nodes):
        rows = self.table.rows(nodes)

        def score(rel, i, j):
            return score_pairs(self.nets[rel], self.table, rows[i], self.table, rows[j])

        return score


class OraclePredicates:
    """Crisp 0/1 predicates read off the true relations."""

    def __init__(self, relations: RelationTriples):
        self.sets = {
            "P": relations.parent_pairs,
            "A": relations.ancestor_pairs,
            "S": {tuple(s) for s in relations.sibling_pairs}
            | {tuple(reversed(tuple(s))) for s in relations.sibling_pairs},
        }

    def bind(self, nodes):
        def score(rel, i, j):
            s = self.sets[rel]
            return Var(np.array([float((nodes[a], nodes[b]) in s) for a, b in zip(i, j)]))

        return score


class ConstantPredicates:
    def __init__(self, value: float):
        self.value = float(value)

    def bind(self, nodes):
        return lambda rel, i, j: Var(np.full(len(i), self.value))


# ---------------------------------------------------------------- domains

def _batch_indices(batch: AxiomBatch):
    pos = {n: k for k, n in enumerate(batch.nodes)}

    def arr(pairs):
        if not pairs:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted((pos[a], pos[b]) for a, b in pairs), dtype=np.int64)

    sib = [tuple(sorted(s, key=pos.__getitem__)) for s in batch.triples.sibling_pairs]
    sib = sib + [(b, a) for a, b in sib]
    return {
        "P": arr(batch.triples.parent_pairs),
        "A": arr(batch.triples.ancestor_pairs),
        "S": arr(sib),
        "pos": arr(batch.positive_edges),
        "neg": np.array([(pos[a], pos[b]) for a, b in batch.negative_pairs], dtype=np.int64).reshape(-1, 2),
    }


def _join(left, right):
    """Rows (x, y, z) with (x, y) in ``left`` and (y, z) in ``right``."""
    if len(left) == 0 or len(right) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    by_first: dict = {}
    for y, z in right.tolist():
        by_first.setdefault(y, []).append(z)
    out = [(x, y, z) for x, y in left.tolist() for z in by_first.get(y, ())]
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def _shared_parent(parent_pairs):
    """Rows (x, y, z) with (x, y), (x, z) edges and y != z."""
    by_parent: dict = {}
    for x, y in parent_pairs.tolist():
        by_parent.setdefault(x, []).append(y)
    out = [(x, y, z) for x, kids in by_parent.items() for y in kids for z in kids if y != z]
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def _domains(batch: AxiomBatch, literal: bool):
    key = ("domains", bool(literal))
    if key not in batch.memo:
        batch.memo[key] = _build_domains(batch, literal)
    return batch.memo[key]


def _build_domains(batch: AxiomBatch, literal: bool):
    k = len(batch.nodes)
    idx = _batch_indices(batch)
    singles = np.arange(k, dtype=np.int64)
    if literal:
        g = np.indices((k, k)).reshape(2, -1).T
        t = np.indices((k, k, k)).reshape(3, -1).T
        pairs_all = g
        return {
            "parent_not_reflexive": singles,
            "parent_asymmetric": pairs_all,
            "ancestor_not_reflexive": singles,
            "ancestor_asymmetric": pairs_all,
            "sibling_definition": t[t[:, 1] != t[:, 2]],
            "sibling_not_reflexive": singles,
            "sibling_symmetric": pairs_all,
            "ancestor_from_parents": t,
            "ancestor_from_ancestor": t,
            "positive_edges": idx["pos"],
            "negative_edges": idx["neg"],
        }
    return {
        "parent_not_reflexive": singles,
        "parent_asymmetric": idx["P"],
        "ancestor_not_reflexive": singles,
        "ancestor_asymmetric": idx["A"],
        "sibling_definition": _shared_parent(idx["P"]),
        "sibling_not_reflexive": singles,
        "sibling_symmetric": idx["S"],
        "ancestor_from_parents": _join(idx["P"], idx["P"]),
        "ancestor_from_ancestor": _join(idx["P"], idx["A"]),
        "positive_edges": idx["pos"],
        "negative_edges": idx["neg"],
    }


class _Requests:
    """Collects predicate calls so each predicate runs once per batch."""

    def __init__(self):
        self.calls = {}

    def ask(self, rel, i, j):
        lst = self.calls.setdefault(rel, [])
        lst.append((np.asarray(i, dtype=np.int64), np.asarray(j, dtype=np.int64)))
        return rel, len(lst) - 1

    def run(self, score):
        self.results = {}
        for rel, lst in self.calls.items():
            i = np.concatenate([a for a, _ in lst])
            j = np.concatenate([b for _, b in lst])
            full = score(rel, i, j)
            start = 0
            for n, (a, _) in enumerate(lst):
                self.results[rel, n] = take(full, start, start + len(a))
                start += len(a)

    def __getitem__(self, key):
        return self.results[key]


def _instances(name, d, req):
    """Register predicate calls for one schema; return a builder of its instance values."""
    if name in ("parent_not_reflexive", "ancestor_not_reflexive", "sibling_not_reflexive"):
        key = req.ask(name[0].upper(), d, d)
        return lambda: fz_not(req[key])
    if name in ("parent_asymmetric", "ancestor_asymmetric"):
        rel = name[0].upper()
        a = req.ask(rel, d[:, 0], d[:, 1])
        b = req.ask(rel, d[:, 1], d[:, 0])
        return lambda: fz_implies(req[a], fz_not(req[b]))
    if name == "sibling_symmetric":
        a = req.ask("S", d[:, 0], d[:, 1])
        b = req.ask("S", d[:, 1], d[:, 0])
        return lambda: fz_implies(req[a], req[b])
    if name == "sibling_definition":
        a = req.ask("P", d[:, 0], d[:, 1])
        b = req.ask("P", d[:, 0], d[:, 2])
        c = req.ask("S", d[:, 1], d[:, 2])
        return lambda: fz_implies(fz_and(req[a], req[b]), req[c])
    if name in ("ancestor_from_parents", "ancestor_from_ancestor"):
        second = "P" if name == "ancestor_from_parents" else "A"
        a = req.ask("P", d[:, 0], d[:, 1])
        b = req.ask(second, d[:, 1], d[:, 2])
        c = req.ask("A", d[:, 0], d[:, 2])
        return lambda: fz_implies(fz_and(req[a], req[b]), req[c])
    if name == "positive_edges":
        a = req.ask("P", d[:, 0], d[:, 1])
        return lambda: req[a]
    if name == "negative_edges":
        a = req.ask("P", d[:, 0], d[:, 1])
        return lambda: fz_not(req[a])
    raise KeyError(name)


def _report(values: dict, skipped, cfg) -> SatReport:
    if not values:
        raise EmptyKnowledgeBase("every axiom had an empty domain in this batch")
    names = list(values)
    agg = sat_agg([values[n] for n in names], cfg)
    return SatReport({n: float(values[n].value) for n in names}, float(agg.value), skipped, kb_loss(agg))


def eval_ontology_axioms(batch: AxiomBatch, predicates, cfg: AggregationConfig = DEFAULT_AGG,
                         literal: bool = False, axioms=ONTOLOGY_AXIOMS) -> SatReport:
    """Satisfaction of the ontology schemata on ``batch``.

    ``predicates`` is :class:`NetPredicates` (or any object with the same
    ``bind`` method). Schemata with empty domains are listed in ``skipped``.
    """
    if not batch.nodes:
        raise EmptyDomain("empty batch")
    domains = _domains(batch, literal)
    req = _Requests()
    builders, skipped = {}, []
    for name in axioms:
        d = domains[name]
        if len(d) == 0:
            skipped.append(name)
            continue
        builders[name] = _instances(name, d, req)
    req.run(predicates.bind(batch.nodes))
    values = {name: forall(build(), cfg) for name, build in builders.items()}
    return _report(values, skipped, cfg)


# ---------------------------------------------------------------- indications

def load_indications(path) -> list:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not all(parts):
                raise ParseError(f"expected 'med<TAB>diag', got {line!r}", os.fspath(path), lineno)
            pairs.append((parts[0], parts[1]))
    return pairs


def save_indications(pairs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# medication<TAB>diagnosis\n")
        for m, d in pairs:
            fh.write(f"{m}\t{d}\n")


def expand_indications(pairs, diag_dag: OntologyDag) -> list:
    """Add ``(m, c)`` for every descendant ``c`` of an indicated diagnosis."""
    out = dict.fromkeys((m, d) for m, d in pairs)
    for m, d in list(out):
        if d not in diag_dag:
            raise UnknownNode(f"indication references unknown diagnosis {d!r}")
        for c in diag_dag.descendants(d):
            out.setdefault((m, c), None)
    return list(out)


def sample_indication_negatives(positives, med_nodes, diag_nodes, count, rng, exclude=None) -> list:
    """Uniform (med, diag) pairs outside ``exclude`` (defaults to ``positives``)."""
    exclude = set(positives if exclude is None else exclude)
    capacity = len(med_nodes) * len(diag_nodes) - len(exclude)
    count = min(count, max(capacity, 0))
    out: dict = {}
    while len(out) < count:
        mi = rng.integers(0, len(med_nodes), size=2 * (count - len(out)))
        di = rng.integers(0, len(diag_nodes), size=mi.size)
        for a, b in zip(mi.tolist(), di.tolist()):
            pair = (med_nodes[a], diag_nodes[b])
            if pair not in exclude and pair not in out:
                out[pair] = None
                if len(out) == count:
                    break
    return list(out)


def eval_indication_axioms(pairs, neg_pairs, med_emb: EmbeddingTable, diag_emb: EmbeddingTable,
                           net_I, cfg: AggregationConfig = DEFAULT_AGG) -> SatReport:
    """Positive ``I(m, d)`` over ``pairs`` and negative ``not I(m, d)`` over ``neg_pairs``.

    ``net_I`` may also be a plain callable ``f(meds, diags) -> truth array``
    (no gradients), which is how oracle predicates are plugged in.
    """
    if not pairs:
        raise EmptyDomain("no indication pairs")
    if med_emb.dim != diag_emb.dim:
        raise DimensionMismatch(f"medication dim {med_emb.dim} != diagnosis dim {diag_emb.dim}")

    def score(ps):
        meds = [m for m, _ in ps]
        diags = [d for _, d in ps]
        if isinstance(net_I, PredicateNet):
            return score_pairs(net_I, med_emb, med_emb.rows(meds), diag_emb, diag_emb.rows(diags))
        return Var(np.asarray(net_I(meds, diags), dtype=np.float64))

    values, skipped = {"indication_positive": forall(score(pairs), cfg)}, []
    if neg_pairs:
        values["indication_negative"] = forall(fz_not(score(neg_pairs)), cfg)
    else:
        skipped.append("indication_negative")
    return _report(values, skipped, cfg)
