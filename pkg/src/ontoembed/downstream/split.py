"""Patient-level train/test/validation split and few-shot test-set construction."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SplitSpec:
    train: tuple  # patient ids
    test: tuple
    validation: tuple
    few_shot: tuple  # (patient_id, admission_index) from the test partition
    few_shot_meds: frozenset
    tail_percentage: float
    min_few_shot: int = 2


def medication_frequency(records) -> Counter:
    """Number of admissions prescribing each medication."""
    freq = Counter()
    for rec in records:
        for adm in rec.admissions:
            freq.update(adm.medications)
    return freq


def tail_medications(records, tail_percentage: float) -> frozenset:
    """Lowest ``tail_percentage`` of medications by frequency; ties broken by code."""
    if not 0 <= tail_percentage <= 1:
        raise ValueError(f"tail_percentage must be a fraction in [0, 1], got {tail_percentage}")
    freq = medication_frequency(records)
    ranked = sorted(freq, key=lambda m: (freq[m], m))
    # guard against 0.3 * 10 evaluating to 2.9999999999999996
    n_tail = math.floor(tail_percentage * len(ranked) + 1e-9)
    return frozenset(ranked[:n_tail])


def few_shot_admissions(records, test_ids, tail_meds, min_few_shot=2) -> tuple:
    test_ids = set(test_ids)
    out = []
    for rec in records:
        if rec.patient_id not in test_ids:
            continue
        for t, adm in enumerate(rec.admissions):
            if len(adm.medications & tail_meds) >= min_few_shot:
                out.append((rec.patient_id, t))
    return tuple(out)


def split_dataset(records, ratio=(4, 1, 1), tail_percentage: float = 0.3, rng_seed: int = 0,
                  min_few_shot: int = 2) -> SplitSpec:
    """Shuffle patients and split them train:test:validation by ``ratio``.

    Few-shot medications come from frequencies over the whole dataset; test
    admissions holding at least ``min_few_shot`` of them form the few-shot set.
    """
    if not records:
        raise ValueError("no records to split")
    ids = sorted(rec.patient_id for rec in records)
    order = np.random.default_rng(rng_seed).permutation(len(ids))
    ids = [ids[i] for i in order]
    total = sum(ratio)
    n_test = round(len(ids) * ratio[1] / total)
    n_val = round(len(ids) * ratio[2] / total)
    test, val, train = ids[:n_test], ids[n_test:n_test + n_val], ids[n_test + n_val:]
    tail = tail_medications(records, tail_percentage)
    return SplitSpec(tuple(train), tuple(test), tuple(val),
                     few_shot_admissions(records, test, tail, min_few_shot),
                     tail, tail_percentage, min_few_shot)


def with_tail(split: SplitSpec, records, tail_percentage: float) -> SplitSpec:
    """Same partitions, few-shot set recomputed at another tail percentage."""
    tail = tail_medications(records, tail_percentage)
    return SplitSpec(split.train, split.test, split.validation,
                     few_shot_admissions(records, split.test, tail, split.min_few_shot),
                     tail, tail_percentage, split.min_few_shot)
