"""Instance-based reference recommender used to compare embedding initialisations.

For an admission with mean diagnosis embedding ``ed`` and mean procedure
embedding ``ep`` the score of medication ``m`` is::

    sigmoid(w_d . ed + w_p . ep + e_m^T M ed + b[m])

with one weight vector ``w = [w_d; w_p]`` shared by all medications, so
medication-specific scores come only from the bilinear term and the bias.
``shared_weights=False`` gives every medication its own ``w`` instead.
All three embedding tables are fine-tuned together with ``w, M, b`` under
mean binary cross-entropy.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch, UnknownCode
from ..ontology import OntologyKind
from ..trainer import AdamState, adam_step
from .metrics import jaccard

D, P, M = OntologyKind.DIAGNOSIS, OntologyKind.PROCEDURE, OntologyKind.MEDICATION


def build_vocab(records) -> dict:
    codes = {D: set(), P: set(), M: set()}
    for rec in records:
        for adm in rec.admissions:
            for kind in codes:
                codes[kind] |= adm.codes(kind)
    return {k: tuple(sorted(v)) for k, v in codes.items()}


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class ReferenceRecommender:
    def __init__(self, vocab: dict, emb: dict, threshold: float = 0.5, shared_weights: bool = True):
        self.vocab = {k: tuple(v) for k, v in vocab.items()}
        self.index = {k: {c: i for i, c in enumerate(v)} for k, v in self.vocab.items()}
        dims = {e.shape[1] for e in emb.values()}
        if len(dims) != 1:
            raise DimensionMismatch(f"embedding dims disagree: {sorted(dims)}")
        d = dims.pop()
        nm = len(self.vocab[M])
        self.dim = d
        self.threshold = threshold
        self.shared_weights = shared_weights
        nw = 1 if shared_weights else nm
        self.params = {
            "E_d": np.array(emb[D], dtype=np.float64),
            "E_p": np.array(emb[P], dtype=np.float64),
            "E_m": np.array(emb[M], dtype=np.float64),
            "W_d": np.zeros((nw, d)),
            "W_p": np.zeros((nw, d)),
            "M": np.zeros((d, d)),
            "b": np.zeros(nm),
        }
        for kind, key in ((D, "E_d"), (P, "E_p"), (M, "E_m")):
            if self.params[key].shape[0] != len(self.vocab[kind]):
                raise DimensionMismatch(f"{key} has {self.params[key].shape[0]} rows for "
                                        f"{len(self.vocab[kind])} codes")

    @classmethod
    def from_tables(cls, vocab, tables: dict, **kw):
        """Initialise code embeddings from pretrained tables (``{kind: EmbeddingTable}``)."""
        emb = {}
        for kind in (D, P, M):
            table = tables.get(kind)
            if table is None:
                raise UnknownCode(f"no {kind.value} embeddings supplied")
            missing = [c for c in vocab[kind] if c not in table.index]
            if missing:
                raise UnknownCode(f"{len(missing)} {kind.value} code(s) lack embeddings, "
                                  f"e.g. {missing[0]!r}")
            emb[kind] = table.vectors[table.rows(vocab[kind])]
        return cls(vocab, emb, **kw)

    @classmethod
    def random(cls, vocab, dim: int, seed: int, **kw):
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(dim)
        emb = {k: rng.uniform(-bound, bound, size=(len(vocab[k]), dim)) for k in (D, P, M)}
        return cls(vocab, emb, **kw)

    def copy(self):
        other = object.__new__(type(self))
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    # ------------------------------------------------------------ encoding

    def _mean_matrix(self, admissions, kind):
        idx = self.index[kind]
        out = np.zeros((len(admissions), len(idx)))
        for r, adm in enumerate(admissions):
            cols = [idx[c] for c in adm.codes(kind) if c in idx]
            if cols:
                out[r, cols] = 1.0 / len(cols)
        return out

    def encode(self, admissions):
        return self._mean_matrix(admissions, D), self._mean_matrix(admissions, P)

    def targets(self, admissions):
        idx = self.index[M]
        y = np.zeros((len(admissions), len(idx)))
        for r, adm in enumerate(admissions):
            y[r, [idx[c] for c in adm.medications if c in idx]] = 1.0
        return y

    # ------------------------------------------------------------ model

    def logits(self, ad, ap):
        p = self.params
        xd = ad @ p["E_d"]
        xp = ap @ p["E_p"]
        return xd @ p["W_d"].T + xp @ p["W_p"].T + xd @ p["M"].T @ p["E_m"].T + p["b"]

    def predict_proba(self, admissions):
        return _sigmoid(self.logits(*self.encode(admissions)))

    def predict(self, admissions):
        return (self.predict_proba(admissions) >= self.threshold).astype(np.int8)

    def loss_and_grads(self, ad, ap, y):
        p = self.params
        xd = ad @ p["E_d"]
        xp = ap @ p["E_p"]
        z = xd @ p["W_d"].T + xp @ p["W_p"].T + xd @ p["M"].T @ p["E_m"].T + p["b"]
        # log(1 + e^z) - y z, stable
        loss = float((np.logaddexp(0.0, z) - y * z).mean())
        g = (_sigmoid(z) - y) / y.size
        grads = {
            "W_d": g.T @ xd,
            "W_p": g.T @ xp,
            "b": g.sum(axis=0),
            "E_m": g.T @ xd @ p["M"].T,
            "M": p["E_m"].T @ g.T @ xd,
        }
        if self.shared_weights:
            grads["W_d"] = grads["W_d"].sum(axis=0, keepdims=True)
            grads["W_p"] = grads["W_p"].sum(axis=0, keepdims=True)
            gw = g.sum(axis=1, keepdims=True)
            dxd = gw @ p["W_d"] + g @ p["E_m"] @ p["M"]
            dxp = gw @ p["W_p"]
        else:
            dxd = g @ p["W_d"] + g @ p["E_m"] @ p["M"]
            dxp = g @ p["W_p"]
        grads["E_d"] = ad.T @ dxd
        grads["E_p"] = ap.T @ dxp
        return loss, grads


def _admissions(records, ids):
    ids = set(ids)
    adms, groups = [], []
    for rec in records:
        if rec.patient_id in ids:
            for adm in rec.admissions:
                if adm.medications:
                    adms.append(adm)
                    groups.append(rec.patient_id)
    return adms, groups


def train_reference_model(records, split, init, epochs: int = 300, rng_seed: int = 0,
                          lr: float = 0.01, dim: int | None = None, eval_every: int = 10,
                          shared_weights: bool = True):
    """Fit on the training partition, keeping the parameters with the best
    validation Jaccard (checked every ``eval_every`` epochs).

    ``init`` is ``{kind: EmbeddingTable}`` for pretrained initialisation or
    ``None`` for random embeddings of size ``dim``.
    """
    vocab = build_vocab(records)
    if init is None:
        if dim is None:
            raise ValueError("dim is required for random initialisation")
        model = ReferenceRecommender.random(vocab, dim, rng_seed, shared_weights=shared_weights)
    else:
        model = ReferenceRecommender.from_tables(vocab, init, shared_weights=shared_weights)
        if dim is not None and model.dim != dim:
            raise DimensionMismatch(f"pretrained dim {model.dim} != requested {dim}")
    if epochs <= 0:
        return model
    train_adms, _ = _admissions(records, split.train)
    val_adms, val_groups = _admissions(records, split.validation)
    ad, ap = model.encode(train_adms)
    y = model.targets(train_adms)
    if val_adms:
        vd, vp = model.encode(val_adms)
        vy = model.targets(val_adms)
    opt = AdamState()
    best, best_score = None, -np.inf
    for epoch in range(1, epochs + 1):
        _, grads = model.loss_and_grads(ad, ap, y)
        adam_step(model.params, grads, opt, lr)
        if val_adms and (epoch % eval_every == 0 or epoch == epochs):
            pred = (_sigmoid(model.logits(vd, vp)) >= model.threshold)
            score = jaccard(vy, pred, val_groups)
            if score > best_score:
                best, best_score = model.copy(), score
    return best if best is not None else model
