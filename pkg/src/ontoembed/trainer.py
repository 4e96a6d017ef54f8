"""Pretraining loop: three ontology encoders in turn, then indication alignment."""

from __future__ import annotations

import dataclasses
import logging
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .axioms import (NetPredicates, eval_indication_axioms, eval_ontology_axioms,
                     sample_indication_negatives)
from .errors import ConfigError, DivergenceError
from .grounding import ModelCheckpoint, PredicateNet, init_embeddings
from .logic import AggregationConfig
from .ontology import KINDS, OntologyKind, derive_relations
from .sampler import AxiomBatch, sample_batch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    dim: int = 64
    epochs: int = 100
    steps_per_epoch: int | None = None  # None: ceil(|nodes| / seed_count) per ontology
    seed_count: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    p_forall: float = 2.0
    p_sat: float = 2.0
    neg_cap: float | None = None
    rng_seed: int = 0
    literal_quantifier: bool = False
    freeze_embeddings_on_align: bool = False
    align_batch: int | None = None  # None: same as seed_count

    def validate(self) -> "TrainConfig":
        positive = {"dim": self.dim, "epochs": self.epochs, "seed_count": self.seed_count,
                    "p_forall": self.p_forall, "p_sat": self.p_sat}
        for name, value in positive.items():
            if not value or value <= 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if self.lr < 0:
            raise ConfigError(f"lr must be non-negative, got {self.lr}")
        if self.p_forall < 1 or self.p_sat < 1:
            raise ConfigError("p_forall and p_sat must be >= 1")
        for name in ("steps_per_epoch", "neg_cap", "align_batch"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigError("invalid optimizer hyperparameters")
        return self

    @property
    def agg(self) -> AggregationConfig:
        return AggregationConfig(self.p_forall, self.p_sat)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["neg_cap"] is not None and math.isinf(d["neg_cap"]):
            d["neg_cap"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("neg_cap") == "inf":
            d["neg_cap"] = math.inf
        return cls(**d)


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> dict:
    """One bias-corrected Adam update, applied in place; returns ``params``."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for k, p in params.items():
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        if lr:
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


# ---------------------------------------------------------------- state

def subseed(base: int, tag: str) -> int:
    return int(np.random.SeedSequence([int(base), zlib.crc32(tag.encode())]).generate_state(1)[0])


def predicate_name(rel: str, kind: OntologyKind) -> str:
    return f"{rel}_{kind.short}"


class TrainState:
    """Everything the optimisation loop mutates."""

    def __init__(self, dags: dict, cfg: TrainConfig, indications=None, tables=None, nets=None):
        cfg.validate()
        self.cfg = cfg
        self.dags = {OntologyKind.parse(k): v for k, v in dags.items()}
        self.relations = {k: derive_relations(d) for k, d in self.dags.items()}
        self.tables = tables or {k: init_embeddings(d, cfg.dim, subseed(cfg.rng_seed, "emb:" + k.value))
                                 for k, d in self.dags.items()}
        if nets is None:
            nets = {}
            for k in self.dags:
                for rel in "PSA":
                    name = predicate_name(rel, k)
                    nets[name] = PredicateNet(name, cfg.dim, seed=subseed(cfg.rng_seed, name))
            if indications:
                nets["I"] = PredicateNet("I", cfg.dim, seed=subseed(cfg.rng_seed, "I"))
        self.nets = nets
        self.indications = list(indications or [])
        self._ind_set = set(self.indications)
        self.rng = np.random.default_rng(subseed(cfg.rng_seed, "batches"))
        self.optimizers: dict = {}
        self.epoch = 0
        self.logs: list = []

    def ontology_nets(self, kind) -> dict:
        return {rel: self.nets[predicate_name(rel, kind)] for rel in "PSA"}

    def group(self, name: str):
        """``(params, grads)`` dicts of one optimiser group, sharing storage with the model."""
        params, grads = {}, {}

        def add_table(kind):
            t = self.tables[kind]
            params[f"emb:{kind.value}"] = t.vectors
            grads[f"emb:{kind.value}"] = t.grad

        def add_net(net):
            for k in net.params:
                params[f"{net.name}.{k}"] = net.params[k]
                grads[f"{net.name}.{k}"] = net.grads[k]

        if name == "alignment":
            if not self.cfg.freeze_embeddings_on_align:
                add_table(OntologyKind.MEDICATION)
                add_table(OntologyKind.DIAGNOSIS)
            add_net(self.nets["I"])
        else:
            kind = OntologyKind(name)
            add_table(kind)
            for net in self.ontology_nets(kind).values():
                add_net(net)
        return params, grads

    def zero_grad(self):
        for t in self.tables.values():
            t.zero_grad()
        for n in self.nets.values():
            n.zero_grad()

    def optimizer(self, name) -> AdamState:
        if name not in self.optimizers:
            self.optimizers[name] = AdamState(self.cfg.beta1, self.cfg.beta2, self.cfg.eps)
        return self.optimizers[name]

    def snapshot(self) -> ModelCheckpoint:
        return ModelCheckpoint({k: t.copy() for k, t in self.tables.items()},
                               {k: n.copy() for k, n in self.nets.items()},
                               epoch=self.epoch, config=self.cfg.to_dict())


def _apply(state: TrainState, group: str, loss: float):
    if not np.isfinite(loss):
        raise DivergenceError(f"loss became {loss} in the {group} phase at epoch {state.epoch + 1}")
    params, grads = state.group(group)
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {k} at epoch {state.epoch + 1}")
    adam_step(params, grads, state.optimizer(group), state.cfg.lr)


def ontology_step(state: TrainState, kind: OntologyKind, batch: AxiomBatch):
    state.zero_grad()
    report = eval_ontology_axioms(batch, NetPredicates(state.tables[kind], state.ontology_nets(kind)),
                                  state.cfg.agg, literal=state.cfg.literal_quantifier)
    report.loss_var.backward()
    _apply(state, kind.value, report.loss)
    return report


def alignment_pass(state: TrainState):
    """One shuffled pass over the indication pairs; returns the step reports."""
    cfg = state.cfg
    med = state.tables[OntologyKind.MEDICATION]
    diag = state.tables[OntologyKind.DIAGNOSIS]
    size = cfg.align_batch or cfg.seed_count
    order = state.rng.permutation(len(state.indications))
    reports = []
    for start in range(0, len(order), size):
        pos = [state.indications[i] for i in order[start:start + size]]
        neg = sample_indication_negatives(pos, med.nodes, diag.nodes, len(pos), state.rng,
                                          exclude=state._ind_set)
        state.zero_grad()
        report = eval_indication_axioms(pos, neg, med, diag, state.nets["I"], cfg.agg)
        report.loss_var.backward()
        _apply(state, "alignment", report.loss)
        reports.append(report)
    return reports


def train_epoch(state: TrainState) -> dict:
    """Run one epoch and append its log entry (also returned)."""
    cfg = state.cfg
    entry = {"epoch": state.epoch + 1, "sat": {}, "indication_sat": None, "loss": {}}
    for kind in KINDS:
        if kind not in state.dags:
            continue
        dag = state.dags[kind]
        b = min(cfg.seed_count, len(dag))
        steps = cfg.steps_per_epoch or math.ceil(len(dag) / b)
        sats, losses = [], []
        for _ in range(steps):
            batch = sample_batch(dag, None, b, state.rng, cfg.neg_cap)
            report = ontology_step(state, kind, batch)
            sats.append(report.aggregated)
            losses.append(report.loss)
        entry["sat"][kind.value] = float(np.mean(sats))
        entry["loss"][kind.value] = losses
    if state.indications and "I" in state.nets:
        reports = alignment_pass(state)
        entry["indication_sat"] = float(np.mean([r.aggregated for r in reports]))
        entry["loss"]["indication"] = [r.loss for r in reports]
    state.epoch += 1
    state.logs.append(entry)
    return entry


# ---------------------------------------------------------------- checkpoints

def _argmax_epoch(logs, key):
    best_epoch, best = None, -math.inf
    for entry in logs:
        value = key(entry)
        if value is not None and value > best:
            best_epoch, best = entry["epoch"], value
    return best_epoch


def select_epochs(logs) -> dict:
    """Epoch chosen for each part of the exported model; ties go to the earliest epoch.

    Procedure tables follow procedure-ontology satisfaction; medication and
    diagnosis tables follow indication satisfaction (or their own ontology
    satisfaction when no alignment ran).
    """
    if not logs:
        raise ValueError("no epochs logged")
    proc = _argmax_epoch(logs, lambda e: e["sat"].get("procedure"))
    ind = _argmax_epoch(logs, lambda e: e.get("indication_sat"))
    if ind is not None:
        return {"procedure": proc, "diagnosis": ind, "medication": ind, "indication": ind}
    return {"procedure": proc,
            "diagnosis": _argmax_epoch(logs, lambda e: e["sat"].get("diagnosis")),
            "medication": _argmax_epoch(logs, lambda e: e["sat"].get("medication")),
            "indication": None}


def select_checkpoints(logs, states: dict) -> ModelCheckpoint:
    """Compose a checkpoint from per-epoch snapshots (``states[epoch]``)."""
    chosen = select_epochs(logs)
    tables, nets = {}, {}
    for kind in KINDS:
        epoch = chosen[kind.value]
        if epoch is None:
            continue
        snap = states[epoch]
        tables[kind] = snap.tables[kind].copy()
        for rel in "PSA":
            name = predicate_name(rel, kind)
            if name in snap.nets:
                nets[name] = snap.nets[name].copy()
    if chosen["indication"] is not None and "I" in states[chosen["indication"]].nets:
        nets["I"] = states[chosen["indication"]].nets["I"].copy()
    by_epoch = {e["epoch"]: e for e in logs}
    sat_scores = {k: by_epoch[e]["sat"].get(k) for k, e in chosen.items()
                  if e is not None and k != "indication"}
    if chosen["indication"] is not None:
        sat_scores["indication"] = by_epoch[chosen["indication"]]["indication_sat"]
    main = chosen["indication"] or max(e for e in chosen.values() if e is not None)
    return ModelCheckpoint(tables, nets, epoch=main, sat_scores=sat_scores,
                           extra={"selected_epochs": chosen})


def train(state: TrainState, epochs: int | None = None, on_epoch=None) -> ModelCheckpoint:
    """Train for ``epochs`` (default ``cfg.epochs``) and return the selected checkpoint.

    Only snapshots that can still win the selection are kept in memory.
    """
    epochs = state.cfg.epochs if epochs is None else epochs
    history: dict = {}
    for _ in range(epochs):
        entry = train_epoch(state)
        history[entry["epoch"]] = state.snapshot()
        keep = {e for e in select_epochs(state.logs).values() if e is not None}
        history = {e: s for e, s in history.items() if e in keep}
        log.info("epoch %d sat=%s indication=%s", entry["epoch"],
                 {k: round(v, 4) for k, v in entry["sat"].items()}, entry["indication_sat"])
        if on_epoch is not None:
            on_epoch(entry)
    ckpt = select_checkpoints(state.logs, history)
    ckpt.config = state.cfg.to_dict()
    return ckpt


def train_alignment(state: TrainState, epochs: int | None = None, on_epoch=None) -> ModelCheckpoint:
    """Alignment passes only, starting from the state's current tables.

    The returned checkpoint takes the medication and diagnosis tables and the
    indication predicate from the epoch with the best indication
    satisfaction; everything else is left as it was.
    """
    if not state.indications:
        raise ValueError("alignment needs indication pairs")
    if "I" not in state.nets:
        state.nets["I"] = PredicateNet("I", state.cfg.dim, seed=subseed(state.cfg.rng_seed, "I"))
    epochs = state.cfg.epochs if epochs is None else epochs
    best, best_sat = None, -math.inf
    for _ in range(epochs):
        reports = alignment_pass(state)
        state.epoch += 1
        entry = {"epoch": state.epoch, "sat": {}, "loss": {"indication": [r.loss for r in reports]},
                 "indication_sat": float(np.mean([r.aggregated for r in reports]))}
        state.logs.append(entry)
        if entry["indication_sat"] > best_sat:
            best, best_sat = state.snapshot(), entry["indication_sat"]
        if on_epoch is not None:
            on_epoch(entry)
    if best is None:
        best = state.snapshot()
    best.sat_scores = {"indication": best_sat} if epochs else {}
    best.extra = {"selected_epochs": {"indication": best.epoch}}
    return best


# ---------------------------------------------------------------- gradient check

def _loss_for(state, kind, batch):
    preds = NetPredicates(state.tables[kind], state.ontology_nets(kind))
    return eval_ontology_axioms(batch, preds, state.cfg.agg, literal=state.cfg.literal_quantifier)


def relative_error(analytic, numeric, floor=1e-7):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def _fd_check(state: TrainState, loss_fn, h: float, details: bool):
    state.zero_grad()
    loss_fn().loss_var.backward()
    arrays = {}
    for k, t in state.tables.items():
        arrays[f"emb:{k.value}"] = (t.vectors, t.grad.copy())
    for name, net in state.nets.items():
        for key, p in net.params.items():
            arrays[f"{name}.{key}"] = (p, net.grads[key].copy())
    worst = {}
    for name, (param, analytic) in arrays.items():
        numeric = np.zeros_like(param)
        flat, nflat = param.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().loss
            flat[i] = orig - h
            down = loss_fn().loss
            flat[i] = orig
            nflat[i] = (up - down) / (2 * h)
        worst[name] = float(relative_error(analytic, numeric).max()) if param.size else 0.0
    state.zero_grad()
    return worst if details else max(worst.values())


def grad_check(state: TrainState, batch: AxiomBatch, kind=OntologyKind.DIAGNOSIS,
               h: float = 1e-5, details: bool = False):
    """Max relative error between backprop and central differences, over every
    entry of every embedding table and every predicate parameter.

    Tables and predicates the loss does not depend on contribute exactly zero.
    """
    kind = OntologyKind.parse(kind)
    return _fd_check(state, lambda: _loss_for(state, kind, batch), h, details)


def alignment_grad_check(state: TrainState, pairs, neg_pairs, h: float = 1e-5, details: bool = False):
    """:func:`grad_check` for the indication loss on ``pairs`` / ``neg_pairs``."""
    med, diag = state.tables[OntologyKind.MEDICATION], state.tables[OntologyKind.DIAGNOSIS]

    def loss():
        return eval_indication_axioms(pairs, neg_pairs, med, diag, state.nets["I"], state.cfg.agg)

    return _fd_check(state, loss, h, details)
