"""Bootstrap evaluation of a recommender on the full and few-shot test sets."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..ontology import OntologyKind
from .ehr import DdiMatrix
from .metrics import ddi_pair_counts, jaccard, precision_recall_f1

METRICS = ("jaccard", "f1", "ddi", "avg_drugs")
REPORT_HEADER = "model\tinit\tjaccard\tf1\tddi\tavg_drugs"


@dataclass
class MetricSummary:
    point: dict  # metric -> value on the set itself
    mean: dict
    std: dict
    n_admissions: int
    flags: list = field(default_factory=list)


def _rows(records, wanted):
    """Admissions (and their patient ids) for ``wanted``: patient ids or (pid, t) pairs."""
    adms, groups = [], []
    by_id = {r.patient_id: r for r in records}
    for key in wanted:
        if isinstance(key, tuple):
            pid, t = key
            adms.append(by_id[pid].admissions[t])
            groups.append(pid)
        else:
            for adm in by_id[key].admissions:
                if adm.medications:
                    adms.append(adm)
                    groups.append(key)
    return adms, np.array(groups, dtype=object)


def _metrics(truth, pred, groups, ddi, flags):
    out = {"jaccard": jaccard(truth, pred, groups)}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prf = precision_recall_f1(truth, pred, groups)
    if prf.empty_predictions and "empty_prediction" not in flags:
        flags.append("empty_prediction")
    out["f1"] = prf.f1
    hits, total = ddi_pair_counts(pred, ddi)
    if total == 0:
        if "ddi_undefined" not in flags:
            flags.append("ddi_undefined")
        out["ddi"] = 0.0
    else:
        out["ddi"] = hits / total
    out["avg_drugs"] = float(np.asarray(pred).sum(axis=1).mean())
    return out


def evaluate_set(model, records, wanted, ddi: DdiMatrix, rounds=10, rng_seed=0) -> MetricSummary:
    adms, groups = _rows(records, wanted)
    if not adms:
        nan = {m: float("nan") for m in METRICS}
        return MetricSummary(nan, dict(nan), dict(nan), 0, ["empty_set"])
    truth = model.targets(adms)
    pred = model.predict(adms)
    d = reorder_ddi(ddi, model.vocab[OntologyKind.MEDICATION])
    flags: list = []
    point = _metrics(truth, pred, groups, d, flags)
    # resample patients with replacement; each draw becomes its own group
    patients = np.unique(groups)
    rows_of = {p: np.nonzero(groups == p)[0] for p in patients}
    rng = np.random.default_rng(rng_seed)
    draws = []
    for _ in range(rounds):
        pick = rng.choice(len(patients), size=len(patients), replace=True)
        idx = np.concatenate([rows_of[patients[i]] for i in pick])
        g = np.concatenate([np.full(len(rows_of[patients[i]]), n) for n, i in enumerate(pick)])
        draws.append(_metrics(truth[idx], pred[idx], g, d, flags))
    mean = {m: float(np.mean([r[m] for r in draws])) for m in METRICS}
    std = {m: float(np.std([r[m] for r in draws])) for m in METRICS}
    return MetricSummary(point, mean, std, len(adms), flags)


def reorder_ddi(ddi: DdiMatrix, vocab) -> np.ndarray:
    idx = [ddi.index.get(m) for m in vocab]
    out = np.zeros((len(vocab), len(vocab)))
    known = [i for i, j in enumerate(idx) if j is not None]
    src = [idx[i] for i in known]
    out[np.ix_(known, known)] = ddi.matrix[np.ix_(src, src)]
    return out


def evaluate(model, split, records, ddi: DdiMatrix, rounds=10, rng_seed=0) -> dict:
    """Metrics on the full test partition and on the few-shot admissions."""
    return {
        "full": evaluate_set(model, records, split.test, ddi, rounds, rng_seed),
        "few_shot": evaluate_set(model, records, split.few_shot, ddi, rounds, rng_seed),
    }


def format_row(model_name, init, summary: MetricSummary) -> str:
    cells = [f"{summary.mean[m]:.4f}±{summary.std[m]:.4f}" for m in METRICS]
    return "\t".join([model_name, init] + cells)


def format_report(rows) -> str:
    """``rows``: iterable of ``(model_name, init, MetricSummary)``."""
    return "\n".join([REPORT_HEADER] + [format_row(*r) for r in rows]) + "\n"
