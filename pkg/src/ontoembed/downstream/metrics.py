"""Set-prediction metrics over multi-hot admission matrices.

Rows are admissions, columns medications. Per-admission values are averaged
per patient first (``patients`` gives each row's patient), then across
patients. Without ``patients`` every row counts as its own patient.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import UndefinedMetric


def _as_bool(a):
    a = np.asarray(a)
    return a.astype(bool) if a.ndim == 2 else a.reshape(1, -1).astype(bool)


def _patient_mean(per_row, patients):
    if patients is None:
        return float(per_row.mean())
    _, inv = np.unique(np.asarray(patients), return_inverse=True)
    sums = np.bincount(inv, weights=per_row)
    counts = np.bincount(inv)
    return float((sums / counts).mean())


def jaccard(truth, pred, patients=None) -> float:
    t, p = _as_bool(truth), _as_bool(pred)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {p.shape}")
    inter = (t & p).sum(axis=1)
    union = (t | p).sum(axis=1)
    if np.any(union == 0):
        raise UndefinedMetric("Jaccard undefined: an admission has empty truth and prediction")
    return _patient_mean(inter / union, patients)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    empty_predictions: int = 0

    def __iter__(self):
        return iter((self.precision, self.recall, self.f1))


def precision_recall_f1(truth, pred, patients=None) -> PRF:
    """Averaged precision, recall and F1.

    Empty predictions score precision 0 and are counted in
    ``empty_predictions`` (a warning is emitted); F1 is 0 when p + r = 0.
    """
    t, p = _as_bool(truth), _as_bool(pred)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {p.shape}")
    inter = (t & p).sum(axis=1).astype(float)
    npred = p.sum(axis=1)
    ntrue = t.sum(axis=1)
    prec = np.divide(inter, npred, out=np.zeros_like(inter), where=npred > 0)
    rec = np.divide(inter, ntrue, out=np.zeros_like(inter), where=ntrue > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros_like(inter), where=denom > 0)
    empty = int((npred == 0).sum())
    if empty:
        warnings.warn(f"{empty} admission(s) with empty prediction scored precision 0", stacklevel=2)
    return PRF(_patient_mean(prec, patients), _patient_mean(rec, patients),
               _patient_mean(f1, patients), empty)


def ddi_pair_counts(pred, ddi) -> tuple[float, float]:
    """(interacting unordered pairs, all unordered pairs) summed over admissions."""
    p = _as_bool(pred).astype(float)
    d = np.asarray(ddi, dtype=float)
    n = p.sum(axis=1)
    total = float((n * (n - 1) / 2).sum())
    hits = float(np.einsum("ij,jk,ik->", p, d, p)) / 2.0
    return hits, total


def ddi_score(pred, ddi) -> float:
    """Fraction of predicted medication pairs that interact. ``ddi`` must be symmetric, zero-diagonal."""
    hits, total = ddi_pair_counts(pred, ddi)
    if total == 0:
        raise UndefinedMetric("DDI undefined: no admission has two or more predicted medications")
    return hits / total
