"""Trainable groundings: node embedding tables and pairwise predicate MLPs.

A predicate maps a pair of d-vectors to a truth value through
``[x; y] -> 2d (ELU) -> d (ELU) -> 1 (sigmoid)``, with the output clamped away
from 0 and 1. Gradients are written out by hand; ``score_pairs`` wires a
predicate into the logic tape.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, ParseError, UnknownNode
from .logic import CLAMP_EPS
from .ontology import KINDS, OntologyDag, OntologyKind
from .tape import Var

PREDICATE_NAMES = tuple(
    f"{rel}_{kind.short}" for kind in KINDS for rel in ("P", "S", "A")
) + ("I",)

PARAM_KEYS = ("W1", "b1", "W2", "b2", "w3", "b3")


class EmbeddingTable:
    """One row per ontology node; ``grad`` is the accumulation buffer."""

    def __init__(self, kind, nodes, vectors):
        self.kind = OntologyKind.parse(kind)
        self.nodes = tuple(nodes)
        self.vectors = np.array(vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.nodes):
            raise DimensionMismatch(
                f"expected {len(self.nodes)} rows, got array of shape {self.vectors.shape}")
        self.index = {n: i for i, n in enumerate(self.nodes)}
        self.grad = np.zeros_like(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.nodes)

    def rows(self, nodes) -> np.ndarray:
        try:
            return np.fromiter((self.index[n] for n in nodes), dtype=np.int64)
        except KeyError as exc:
            raise UnknownNode(f"node {exc.args[0]!r} has no {self.kind.value} embedding") from None

    def vector(self, node) -> np.ndarray:
        return self.vectors[self.rows([node])[0]]

    def zero_grad(self):
        self.grad[...] = 0.0

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.kind, self.nodes, self.vectors.copy())


def init_embeddings(dag: OntologyDag, dim: int, seed: int) -> EmbeddingTable:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim)
    return EmbeddingTable(dag.kind, dag.nodes, rng.uniform(-bound, bound, size=(len(dag), dim)))


def _elu(a):
    return np.where(a > 0, a, np.expm1(np.minimum(a, 0.0)))


def _elu_grad(a):
    return np.where(a > 0, 1.0, np.exp(np.minimum(a, 0.0)))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class PredicateNet:
    def __init__(self, name: str, dim: int, params: dict | None = None, seed: int | None = None):
        self.name = name
        self.dim = int(dim)
        if params is None:
            params = self._glorot(np.random.default_rng(seed))
        self.params = {k: np.array(params[k], dtype=np.float64) for k in PARAM_KEYS}
        expected = self.shapes(self.dim)
        for k in PARAM_KEYS:
            if self.params[k].shape != expected[k]:
                raise DimensionMismatch(f"{name}.{k}: expected {expected[k]}, got {self.params[k].shape}")
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    @staticmethod
    def shapes(d):
        return {"W1": (2 * d, 2 * d), "b1": (2 * d,), "W2": (2 * d, d), "b2": (d,), "w3": (d,), "b3": (1,)}

    def _glorot(self, rng):
        d = self.dim

        def uni(fan_in, fan_out, shape):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=shape)

        return {
            "W1": uni(2 * d, 2 * d, (2 * d, 2 * d)),
            "b1": np.zeros(2 * d),
            "W2": uni(2 * d, d, (2 * d, d)),
            "b2": np.zeros(d),
            "w3": uni(d, 1, (d,)),
            "b3": np.zeros(1),
        }

    @classmethod
    def zeros(cls, name, dim):
        return cls(name, dim, {k: np.zeros(s) for k, s in cls.shapes(dim).items()})

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0

    def copy(self) -> "PredicateNet":
        return PredicateNet(self.name, self.dim, {k: v.copy() for k, v in self.params.items()})

    def forward(self, x, y):
        """Batched forward on ``(n, d)`` inputs; returns ``(truth, cache)``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        if x.shape[1] != self.dim or y.shape[1] != self.dim:
            raise DimensionMismatch(
                f"{self.name} expects {self.dim}-dim inputs, got {x.shape[1]} and {y.shape[1]}")
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{self.name}: {x.shape[0]} left inputs vs {y.shape[0]} right")
        p = self.params
        h0 = np.concatenate([x, y], axis=1)
        a1 = h0 @ p["W1"] + p["b1"]
        h1 = _elu(a1)
        a2 = h1 @ p["W2"] + p["b2"]
        h2 = _elu(a2)
        s = _sigmoid(h2 @ p["w3"] + p["b3"][0])
        out = np.clip(s, CLAMP_EPS, 1.0 - CLAMP_EPS)
        return out, (h0, a1, h1, a2, h2, s)

    def backward(self, cache, upstream):
        """Gradients of ``sum(upstream * forward(x, y))``: ``(param_grads, dx, dy)``."""
        h0, a1, h1, a2, h2, s = cache
        p = self.params
        upstream = np.broadcast_to(np.asarray(upstream, dtype=np.float64), s.shape)
        inside = (s >= CLAMP_EPS) & (s <= 1.0 - CLAMP_EPS)
        dz = upstream * inside * s * (1.0 - s)
        grads = {"w3": h2.T @ dz, "b3": np.array([dz.sum()])}
        da2 = np.outer(dz, p["w3"]) * _elu_grad(a2)
        grads["W2"] = h1.T @ da2
        grads["b2"] = da2.sum(axis=0)
        da1 = (da2 @ p["W2"].T) * _elu_grad(a1)
        grads["W1"] = h0.T @ da1
        grads["b1"] = da1.sum(axis=0)
        dh0 = da1 @ p["W1"].T
        return grads, dh0[:, : self.dim], dh0[:, self.dim:]


def predicate_forward(net: PredicateNet, x, y):
    """Truth value(s) of ``net`` on one pair of vectors or on row-aligned batches."""
    single = np.ndim(x) == 1 and np.ndim(y) == 1
    out, _ = net.forward(x, y)
    return float(out[0]) if single else out


def predicate_backward(net: PredicateNet, x, y, upstream_grad):
    single = np.ndim(x) == 1 and np.ndim(y) == 1
    _, cache = net.forward(x, y)
    grads, dx, dy = net.backward(cache, upstream_grad)
    if single:
        return grads, dx[0], dy[0]
    return grads, dx, dy


def score_pairs(net: PredicateNet, left: EmbeddingTable, li, right: EmbeddingTable, ri) -> Var:
    """Tape node: truth values of ``net`` on row pairs ``(left[li], right[ri])``.

    Backward accumulates into ``net.grads``, ``left.grad`` and ``right.grad``.
    """
    li = np.asarray(li, dtype=np.int64)
    ri = np.asarray(ri, dtype=np.int64)
    if li.size == 0:
        return Var(np.zeros(0))
    if left.dim != net.dim or right.dim != net.dim:
        raise DimensionMismatch(f"{net.name} has dim {net.dim}, tables have {left.dim}/{right.dim}")
    out, cache = net.forward(left.vectors[li], right.vectors[ri])

    def backward(g):
        grads, dx, dy = net.backward(cache, g)
        for k, v in grads.items():
            net.grads[k] += v
        np.add.at(left.grad, li, dx)
        np.add.at(right.grad, ri, dy)
        return ()

    return Var(out, (), backward)


@dataclass
class ModelCheckpoint:
    tables: dict  # OntologyKind -> EmbeddingTable
    nets: dict  # name -> PredicateNet
    epoch: int = 0
    sat_scores: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def dim(self):
        dims = {t.dim for t in self.tables.values()}
        if len(dims) != 1:
            raise DimensionMismatch(f"embedding tables disagree on dim: {sorted(dims)}")
        return dims.pop()


CHECKPOINT_MAGIC = b"ONTOEMB\x00"
CHECKPOINT_VERSION = 1


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    header = {
        "epoch": int(ckpt.epoch),
        "sat_scores": ckpt.sat_scores,
        "config": ckpt.config,
        "extra": ckpt.extra,
        "tables": [],
        "nets": [],
    }
    blobs = []
    for kind in KINDS:
        if kind not in ckpt.tables:
            continue
        t = ckpt.tables[kind]
        header["tables"].append({"kind": kind.value, "nodes": list(t.nodes), "dim": t.dim})
        blobs.append(t.vectors)
    for name in sorted(ckpt.nets):
        net = ckpt.nets[name]
        header["nets"].append({"name": name, "dim": net.dim})
        blobs.extend(net.params[k] for k in PARAM_KEYS)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(head)))
        fh.write(head)
        for b in blobs:
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ParseError("not a checkpoint file (bad magic)", path)
    version, head_len = struct.unpack_from("<IQ", data, 8)
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", path)
    offset = 8 + struct.calcsize("<IQ")
    header = json.loads(data[offset: offset + head_len].decode("utf-8"))
    offset += head_len

    def read(shape):
        nonlocal offset
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=offset).astype(np.float64).reshape(shape)
        offset += 8 * n
        return arr

    tables = {}
    for t in header["tables"]:
        kind = OntologyKind(t["kind"])
        tables[kind] = EmbeddingTable(kind, t["nodes"], read((len(t["nodes"]), t["dim"])))
    nets = {}
    for n in header["nets"]:
        shapes = PredicateNet.shapes(n["dim"])
        nets[n["name"]] = PredicateNet(n["name"], n["dim"], {k: read(shapes[k]) for k in PARAM_KEYS})
    if offset != len(data):
        raise ParseError("trailing bytes after checkpoint payload", path)
    return ModelCheckpoint(tables, nets, header["epoch"], header["sat_scores"],
                           header["config"], header.get("extra", {}))


def export_embeddings(ckpt: ModelCheckpoint, path) -> None:
    dim = ckpt.dim
    lines = [f"dim={dim}\n"]
    for kind in KINDS:
        t = ckpt.tables.get(kind)
        if t is None:
            continue
        for node, row in zip(t.nodes, t.vectors):
            lines.append(f"{kind.value}\t{node}\t{' '.join('%.17g' % v for v in row)}\n")
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.writelines(lines)
    os.replace(tmp, path)


def load_embeddings(path) -> dict:
    """Read an embedding export back into ``{OntologyKind: EmbeddingTable}``."""
    rows: dict = {}
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("dim="):
            raise ParseError("missing 'dim=<d>' header", path, 1)
        try:
            dim = int(first[4:])
        except ValueError:
            raise ParseError(f"bad dim header {first!r}", path, 1) from None
        for lineno, raw in enumerate(fh, 2):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("expected 'kind<TAB>node<TAB>values'", path, lineno)
            try:
                kind = OntologyKind(parts[0])
                vec = [float(v) for v in parts[2].split(" ")]
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
            if len(vec) != dim:
                raise ParseError(f"expected {dim} values, got {len(vec)}", path, lineno)
            nodes, vecs = rows.setdefault(kind, ([], []))
            nodes.append(parts[1])
            vecs.append(vec)
    return {k: EmbeddingTable(k, n, np.array(v).reshape(len(n), dim)) for k, (n, v) in rows.items()}
