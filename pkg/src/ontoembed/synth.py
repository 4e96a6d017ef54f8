"""Synthetic stand-ins for the external datasets: ontologies, indications, DDIs, EHRs.

Everything here is seeded and deterministic. The synthetic world mirrors the
structure the pretraining relies on: medication groups are indicated for
matching diagnosis groups, and prescriptions follow a Zipf law so a tail of
rare medications exists.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .ontology import KINDS, OntologyDag, OntologyKind


def make_tree(kind, branching, prefix=None) -> OntologyDag:
    """Balanced tree; ``branching[i]`` children per node at depth ``i``.

    Node ids are hierarchical codes such as ``D``, ``D1``, ``D1.2``, ``D1.2.3``.
    """
    kind = OntologyKind.parse(kind)
    prefix = prefix or kind.value[0].upper()
    edges = []
    level = [prefix]
    for depth, fan in enumerate(branching):
        nxt = []
        for parent in level:
            for c in range(1, fan + 1):
                child = f"{parent}{c}" if depth == 0 else f"{parent}.{c}"
                edges.append((parent, child))
                nxt.append(child)
        level = nxt
    return OntologyDag.from_edges(kind, edges)


def random_tree(kind, n_nodes, rng, max_children=None, prefix=None) -> OntologyDag:
    """Random recursive tree on ``n_nodes`` nodes (each new node picks a uniform parent)."""
    kind = OntologyKind.parse(kind)
    prefix = prefix or kind.value[0].upper()
    names = [f"{prefix}{i}" for i in range(n_nodes)]
    edges = []
    counts = np.zeros(n_nodes, dtype=int)
    for i in range(1, n_nodes):
        while True:
            p = int(rng.integers(0, i))
            if max_children is None or counts[p] < max_children:
                break
        counts[p] += 1
        edges.append((names[p], names[i]))
    if not edges:
        raise ValueError("need at least two nodes")
    return OntologyDag.from_edges(kind, edges)


TOY_BRANCHING = {
    OntologyKind.DIAGNOSIS: (2, 3, 4),
    OntologyKind.PROCEDURE: (3, 3, 2),
    OntologyKind.MEDICATION: (2, 2, 3, 2),
}


def toy_ontologies() -> dict:
    """Three small trees (33, 31 and 43 nodes, depth 3-4)."""
    return {k: make_tree(k, TOY_BRANCHING[k]) for k in KINDS}


def indication_fixture(branching=(3, 3, 3), level: int = 2):
    """Mirror-image ontologies with block-structured indications.

    The three ontologies share the shape ``branching``. Every medication in the
    subtree of the ``i``-th node at depth ``level`` is indicated for every
    diagnosis in the subtree of the ``i``-th diagnosis node at that depth.
    Returns ``(dags, pairs)`` with ``pairs`` sorted.
    """
    dags = {k: make_tree(k, branching) for k in KINDS}
    ddag, mdag = dags[OntologyKind.DIAGNOSIS], dags[OntologyKind.MEDICATION]

    def blocks(dag):
        nodes = [dag.root]
        for _ in range(level):
            nodes = [c for n in nodes for c in dag.children(n)]
        return nodes

    pairs = []
    for mb, db in zip(blocks(mdag), blocks(ddag)):
        meds = [mb, *mdag.descendants(mb)]
        diags = [db, *ddag.descendants(db)]
        pairs.extend((m, d) for m in meds for d in diags)
    return dags, sorted(pairs)


@dataclass
class World:
    """Synthetic ontologies plus the relations tying them together."""

    dags: dict
    indications: list  # (medication, diagnosis) before descendant expansion
    drivers: dict  # medication -> diagnoses that prompt its prescription
    proc_links: dict  # diagnosis -> procedures performed alongside it
    ddi_pairs: list


def make_world(rng_seed: int = 0, groups: int = 6, subgroups: int = 4, meds_per_subgroup: int = 5,
               leaves_per_category: int = 3, procs_per_subgroup: int = 4,
               ddi_rate: float = 0.05) -> World:
    """Mirror-image medication and diagnosis trees.

    Medications: root / group / subgroup / leaf. Diagnoses: root / group /
    chapter / category / leaf, where chapter ``s`` of group ``g`` matches
    medication subgroup ``s`` of group ``g`` and every leaf medication has its
    own category (a random pairing within the chapter). A leaf medication is
    indicated for its category, a subgroup for its chapter, and a medication
    is prescribed when one of its category's leaves is diagnosed.
    """
    rng = np.random.default_rng(rng_seed)
    D, P, M = KINDS
    dags = {
        D: make_tree(D, (groups, subgroups, meds_per_subgroup, leaves_per_category)),
        P: make_tree(P, (groups, subgroups, procs_per_subgroup)),
        M: make_tree(M, (groups, subgroups, meds_per_subgroup)),
    }
    indications, drivers, proc_links = [], {}, {}
    for dgroup, pgroup, mgroup in zip(*(dags[k].children(dags[k].root) for k in KINDS)):
        psubs = dags[P].children(pgroup)
        for chapter, psub, msub in zip(dags[D].children(dgroup), psubs, dags[M].children(mgroup)):
            indications.append((msub, chapter))
            for cat in dags[D].children(chapter):
                for leaf in dags[D].children(cat):
                    proc_links[leaf] = list(dags[P].children(psub))
            cats = dags[D].children(chapter)
            order = rng.permutation(len(cats))
            for i, med in enumerate(dags[M].children(msub)):
                cat = cats[order[i]]
                indications.append((med, cat))
                drivers[med] = list(dags[D].children(cat))
    meds = sorted(drivers)
    ddi = [(a, b) for i, a in enumerate(meds) for b in meds[i + 1:] if rng.random() < ddi_rate]
    return World(dags, indications, drivers, proc_links, ddi)


def zipf_weights(n: int, s: float) -> np.ndarray:
    """Normalised Zipf weights for ranks 1..n."""
    w = np.arange(1, n + 1, dtype=float) ** -s
    return w / w.sum()


def gen_synthetic_ehr(dags: dict, n_patients: int, zipf_s: float, rng_seed: int, out_path,
                      drivers: dict | None = None, proc_links: dict | None = None,
                      popularity=None, meds_per_admission: float = 8.0, driver_keep: float = 0.9,
                      noise_diagnoses: float = 1.0, cohesion: float = 0.0) -> dict:
    """Write a synthetic EHR file and a ``<out_path>.manifest.json``; return the manifest.

    Medications in an admission are drawn without replacement from Zipf
    weights over ``popularity`` (most popular first; a random order when not
    given); each one brings in one of its driver diagnoses (with probability
    ``driver_keep``), and each diagnosis brings in a linked procedure.

    With ``cohesion > 0`` every admission first picks one or two therapeutic
    themes (medication parents, weighted by their total popularity) and each
    medication comes from a theme with probability ``cohesion``.
    """
    from .downstream.ehr import Admission, PatientRecord, save_ehr

    rng = np.random.default_rng(rng_seed)
    ddag, pdag, mdag = (dags[OntologyKind.parse(k)] for k in KINDS)
    meds = sorted(drivers) if drivers else sorted(mdag.leaves())
    dleaves = sorted(ddag.leaves())
    pleaves = sorted(pdag.leaves())
    if drivers is None:
        drivers = {m: [dleaves[int(rng.integers(0, len(dleaves)))]] for m in meds}
    if popularity is None:
        popularity = [meds[i] for i in rng.permutation(len(meds))]
    if sorted(popularity) != meds:
        raise ValueError("popularity must list every medication exactly once")
    meds = list(popularity)
    weights = zipf_weights(len(meds), zipf_s)
    groups: dict = {}
    for i, m in enumerate(meds):
        groups.setdefault(mdag.parent(m), []).append(i)
    group_list = [np.array(v) for v in groups.values()]
    group_w = np.array([weights[g].sum() for g in group_list])
    group_w /= group_w.sum()
    records = []
    counts = dict.fromkeys(meds, 0)
    n_adm = 0
    for n in range(n_patients):
        adms = []
        for _ in range(int(rng.geometric(0.6))):
            k = int(np.clip(1 + rng.poisson(max(meds_per_admission - 1, 0)), 1, len(meds)))
            if cohesion > 0:
                themes = rng.choice(len(group_list), size=min(1 + int(rng.random() < 0.5), len(group_list)),
                                    replace=False, p=group_w)
                local = np.zeros(len(meds))
                for t in themes:
                    local[group_list[t]] = weights[group_list[t]]
                mix = cohesion * local / local.sum() + (1.0 - cohesion) * weights
                k = min(k, int(np.count_nonzero(mix)))
                picked = rng.choice(len(meds), size=k, replace=False, p=mix / mix.sum())
            else:
                picked = rng.choice(len(meds), size=k, replace=False, p=weights)
            chosen = [meds[i] for i in np.sort(picked)]
            diags = set()
            for m in chosen:
                counts[m] += 1
                if rng.random() < driver_keep:
                    opts = drivers[m]
                    diags.add(opts[int(rng.integers(0, len(opts)))])
            for _ in range(int(rng.poisson(noise_diagnoses))):
                diags.add(dleaves[int(rng.integers(0, len(dleaves)))])
            if not diags:
                diags.add(dleaves[int(rng.integers(0, len(dleaves)))])
            procs = set()
            for d in sorted(diags):
                opts = (proc_links or {}).get(d)
                if opts and rng.random() < 0.7:
                    procs.add(opts[int(rng.integers(0, len(opts)))])
            if not procs:
                procs.add(pleaves[int(rng.integers(0, len(pleaves)))])
            adms.append(Admission(frozenset(diags), frozenset(procs), frozenset(chosen)))
            n_adm += 1
        records.append(PatientRecord(f"p{n:05d}", tuple(adms)))
    save_ehr(records, out_path)
    with open(out_path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    manifest = {
        "n_patients": n_patients,
        "n_admissions": n_adm,
        "n_prescriptions": int(sum(counts.values())),
        "medication_counts": counts,
        "zipf_s": zipf_s,
        "rng_seed": rng_seed,
        "sha256": digest,
    }
    tmp = f"{os.fspath(out_path)}.manifest.json.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, f"{os.fspath(out_path)}.manifest.json")
    return manifest
