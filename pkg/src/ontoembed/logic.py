"""Product real logic on top of :mod:`ontoembed.tape`.

Negation is ``1 - a``, conjunction the product t-norm, implication
Reichenbach's ``1 - a + a*b``. Universal quantification and the knowledge-base
aggregate both use the p-mean-error ``1 - mean((1 - v)**p) ** (1/p)``.

Every operator accepts plain floats/arrays or :class:`Var` and returns a
``Var``; call ``.backward()`` on the final node to get gradients.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDomain, EmptyKnowledgeBase
from .tape import Var, as_var, concat

CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class AggregationConfig:
    p_forall: float = 2.0
    p_sat: float = 2.0

    def __post_init__(self):
        if not (self.p_forall >= 1 and self.p_sat >= 1):
            raise ValueError("aggregation exponents must be >= 1")


DEFAULT_AGG = AggregationConfig()


def fz_not(a) -> Var:
    a = as_var(a)
    return Var(1.0 - a.value, (a,), lambda g: (-g,))


def fz_and(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return Var(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def fz_implies(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    value = 1.0 - a.value + a.value * b.value
    return Var(value, (a, b), lambda g: (g * (b.value - 1.0), g * a.value))


def clamp(a, lo=CLAMP_EPS, hi=1.0 - CLAMP_EPS) -> Var:
    a = as_var(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return Var(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


def _pmean_error(v: Var, p: float) -> Var:
    err = 1.0 - v.value
    n = err.size
    powered = err ** p
    m = powered.mean()
    root = m ** (1.0 / p)
    value = 1.0 - root

    def backward(g):
        if m <= 0.0:
            # every instance fully satisfied; take the zero subgradient
            return (np.zeros_like(v.value),)
        coef = m ** (1.0 / p - 1.0) / n
        return (g * coef * err ** (p - 1.0),)

    return Var(value, (v,), backward)


def forall(values, cfg: AggregationConfig = DEFAULT_AGG) -> Var:
    """Aggregate instance truth values of a universally quantified formula."""
    if isinstance(values, (list, tuple)):
        values = concat(values) if values else Var(np.zeros(0))
    values = as_var(values)
    if values.value.size == 0:
        raise EmptyDomain("universal quantifier over an empty domain")
    return _pmean_error(values, cfg.p_forall)


def sat_agg(axiom_sats, cfg: AggregationConfig = DEFAULT_AGG) -> Var:
    """Aggregate per-axiom satisfaction into one knowledge-base truth value."""
    if isinstance(axiom_sats, (list, tuple)):
        if not axiom_sats:
            raise EmptyKnowledgeBase("no axioms to aggregate")
        axiom_sats = concat(axiom_sats)
    axiom_sats = as_var(axiom_sats)
    if axiom_sats.value.size == 0:
        raise EmptyKnowledgeBase("no axioms to aggregate")
    return _pmean_error(axiom_sats, cfg.p_sat)


def kb_loss(sat: Var) -> Var:
    return fz_not(sat)
