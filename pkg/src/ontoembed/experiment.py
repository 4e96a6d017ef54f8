"""End-to-end experiments on the synthetic world.

``alignment_signal`` checks that the indication predicate generalises to
held-out medication/diagnosis pairs. ``few_shot_comparison`` fine-tunes the
reference recommender from random and from pretrained embeddings and scores
both on the few-shot test sets at several tail percentages.
"""

from __future__ import annotations

import os
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .axioms import expand_indications
from .downstream.ehr import load_ehr
from .downstream.evaluate import _rows
from .downstream.metrics import jaccard
from .downstream.recommender import train_reference_model
from .downstream.split import split_dataset, with_tail
from .grounding import predicate_forward
from .ontology import OntologyKind
from .synth import gen_synthetic_ehr, indication_fixture, make_world
from .trainer import TrainConfig, TrainState, subseed, train, train_epoch

D, M = OntologyKind.DIAGNOSIS, OntologyKind.MEDICATION


# ---------------------------------------------------------------- alignment

@dataclass
class AlignmentResult:
    seed: int
    held_out: float  # mean I(m, d) over held-out true pairs
    random: float  # mean I(m, d) over uniform random pairs
    seconds: float

    @property
    def gap(self):
        return self.held_out - self.random


def alignment_signal(seed: int, epochs: int = 60, dim: int = 16, lr: float = 1e-2,
                     holdout: float = 0.2, n_random: int = 2000, branching=(3, 3, 3),
                     level: int = 2) -> AlignmentResult:
    """Pretrain on the block indication fixture with a fraction of its pairs held out."""
    start = time.perf_counter()
    dags, pairs = indication_fixture(branching, level)
    rng = np.random.default_rng(subseed(seed, "holdout"))
    perm = rng.permutation(len(pairs))
    n_held = max(1, int(len(pairs) * holdout))
    held = [pairs[i] for i in sorted(perm[:n_held])]
    kept = [pairs[i] for i in sorted(perm[n_held:])]
    cfg = TrainConfig(dim=dim, epochs=epochs, seed_count=16, lr=lr, rng_seed=seed)
    state = TrainState(dags, cfg, kept)
    for _ in range(epochs):
        train_epoch(state)
    meds, diags = dags[M].nodes, dags[D].nodes
    rand = [(meds[i], diags[j]) for i, j in zip(rng.integers(0, len(meds), n_random),
                                                  rng.integers(0, len(diags), n_random))]

    def mean_i(ps):
        mt, dt = state.tables[M], state.tables[D]
        x = mt.vectors[mt.rows([m for m, _ in ps])]
        y = dt.vectors[dt.rows([d for _, d in ps])]
        return float(np.mean(predicate_forward(state.nets["I"], x, y)))

    return AlignmentResult(seed, mean_i(held), mean_i(rand), time.perf_counter() - start)


# ---------------------------------------------------------------- few-shot

@dataclass
class FewShotConfig:
    n_patients: int = 3000
    zipf_s: float = 0.8
    cohesion: float = 0.95
    noise_diagnoses: float = 0.3
    meds_per_admission: float = 8.0
    dim: int = 32
    pretrain_epochs: int = 30
    pretrain_lr: float = 3e-3
    seed_count: int = 32
    finetune_epochs: int = 300
    finetune_lr: float = 1e-2
    tails: tuple = (0.3, 0.2)
    world: dict = field(default_factory=dict)


@dataclass
class FewShotResult:
    seed: int
    random: dict  # tail -> few-shot Jaccard; "full" -> full test Jaccard
    pretrained: dict
    sizes: dict  # tail -> number of few-shot admissions
    seconds: float

    def gap(self, tail):
        return self.pretrained[tail] - self.random[tail]

    def to_dict(self):
        return asdict(self)


def _jaccard_on(model, records, wanted):
    adms, groups = _rows(records, wanted)
    return jaccard(model.targets(adms), model.predict(adms), groups), len(adms)


def few_shot_comparison(seed: int, cfg: FewShotConfig | None = None, workdir=None) -> FewShotResult:
    """One A/B run: random vs pretrained initialisation of the reference recommender."""
    cfg = cfg or FewShotConfig()
    start = time.perf_counter()
    w = make_world(seed, **cfg.world)
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        path = os.path.join(tmp, "ehr.txt")
        gen_synthetic_ehr(w.dags, cfg.n_patients, cfg.zipf_s, seed, path, drivers=w.drivers,
                          proc_links=w.proc_links, meds_per_admission=cfg.meds_per_admission,
                          noise_diagnoses=cfg.noise_diagnoses, cohesion=cfg.cohesion)
        records = load_ehr(path, w.dags)
    pairs = expand_indications(w.indications, w.dags[D])
    tcfg = TrainConfig(dim=cfg.dim, epochs=cfg.pretrain_epochs, seed_count=cfg.seed_count,
                       lr=cfg.pretrain_lr, rng_seed=seed)
    ckpt = train(TrainState(w.dags, tcfg, pairs))

    base = split_dataset(records, tail_percentage=cfg.tails[0], rng_seed=seed)
    kw = dict(epochs=cfg.finetune_epochs, rng_seed=seed, lr=cfg.finetune_lr)
    models = {"random": train_reference_model(records, base, None, dim=cfg.dim, **kw),
              "pretrained": train_reference_model(records, base, ckpt.tables, **kw)}
    scores = {name: {} for name in models}
    sizes = {}
    for tail in cfg.tails:
        split = base if tail == cfg.tails[0] else with_tail(base, records, tail)
        for name, model in models.items():
            scores[name][tail], sizes[tail] = _jaccard_on(model, records, split.few_shot)
    for name, model in models.items():
        scores[name]["full"], sizes["full"] = _jaccard_on(model, records, base.test)
    return FewShotResult(seed, scores["random"], scores["pretrained"], sizes,
                         time.perf_counter() - start)
