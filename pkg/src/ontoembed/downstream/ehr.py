"""EHR records and DDI pairs in the package's text formats.

EHR file, one patient per line::

    patient_id | adm1: D=d1,d2 P=p1 M=m1,m2 | adm2: D=... P=... M=...

DDI file: ``med_id<TAB>med_id`` per interacting pair.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..errors import ParseError, UnknownCode
from ..ontology import OntologyKind

FIELDS = {"D": OntologyKind.DIAGNOSIS, "P": OntologyKind.PROCEDURE, "M": OntologyKind.MEDICATION}


@dataclass(frozen=True)
class Admission:
    diagnoses: frozenset
    procedures: frozenset
    medications: frozenset

    def codes(self, kind) -> frozenset:
        kind = OntologyKind.parse(kind)
        return {OntologyKind.DIAGNOSIS: self.diagnoses, OntologyKind.PROCEDURE: self.procedures,
                OntologyKind.MEDICATION: self.medications}[kind]


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    admissions: tuple  # chronological


def _codes(text):
    return frozenset(c for c in text.split(",") if c) if text else frozenset()


def parse_record(line: str, path=None, lineno=None) -> PatientRecord:
    parts = [p.strip() for p in line.split("|")]
    pid = parts[0]
    if not pid or len(parts) < 2:
        raise ParseError("expected 'patient_id | adm: D=.. P=.. M=..'", path, lineno)
    admissions = []
    for part in parts[1:]:
        label, sep, body = part.partition(":")
        if not sep:
            raise ParseError(f"admission {part!r} lacks a 'label:' prefix", path, lineno)
        got = {}
        for token in body.split():
            key, eq, val = token.partition("=")
            if not eq or key not in FIELDS or key in got:
                raise ParseError(f"bad field {token!r} in admission {label.strip()!r}", path, lineno)
            got[key] = _codes(val)
        admissions.append(Admission(got.get("D", frozenset()), got.get("P", frozenset()),
                                    got.get("M", frozenset())))
    return PatientRecord(pid, tuple(admissions))


def format_record(rec: PatientRecord) -> str:
    out = [rec.patient_id]
    for t, adm in enumerate(rec.admissions, 1):
        out.append(f"adm{t}: D={','.join(sorted(adm.diagnoses))} "
                   f"P={','.join(sorted(adm.procedures))} M={','.join(sorted(adm.medications))}")
    return " | ".join(out)


def load_ehr(path, dags: dict | None = None) -> list:
    """Parse an EHR file; with ``dags`` every code must exist in its ontology."""
    path = os.fspath(path)
    records, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            rec = parse_record(line, path, lineno)
            if rec.patient_id in seen:
                raise ParseError(f"duplicate patient id {rec.patient_id!r}", path, lineno)
            seen.add(rec.patient_id)
            if dags is not None:
                _check_codes(rec, dags, path, lineno)
            records.append(rec)
    return records


def _check_codes(rec, dags, path, lineno):
    for adm in rec.admissions:
        for kind in FIELDS.values():
            dag = dags.get(kind)
            if dag is None:
                continue
            for code in adm.codes(kind):
                if code not in dag:
                    raise UnknownCode(f"{path}:{lineno}: {kind.value} code {code!r} "
                                      f"(patient {rec.patient_id}) is not in the ontology")


def save_ehr(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(format_record(rec) + "\n")


class DdiMatrix:
    """Symmetric 0/1 interaction matrix with zero diagonal over a medication vocabulary."""

    def __init__(self, vocab, pairs=()):
        self.vocab = tuple(vocab)
        self.index = {m: i for i, m in enumerate(self.vocab)}
        self.matrix = np.zeros((len(self.vocab), len(self.vocab)))
        for a, b in pairs:
            if a == b:
                continue
            if a in self.index and b in self.index:
                i, j = self.index[a], self.index[b]
                self.matrix[i, j] = self.matrix[j, i] = 1.0

    def pairs(self):
        i, j = np.nonzero(np.triu(self.matrix, 1))
        return [(self.vocab[a], self.vocab[b]) for a, b in zip(i.tolist(), j.tolist())]


def load_ddi_pairs(path) -> list:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not all(parts):
                raise ParseError(f"expected 'med<TAB>med', got {line!r}", os.fspath(path), lineno)
            pairs.append((parts[0], parts[1]))
    return pairs


def save_ddi_pairs(pairs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in pairs:
            fh.write(f"{a}\t{b}\n")
