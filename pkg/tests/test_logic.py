import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontoembed.errors import EmptyDomain, EmptyKnowledgeBase
from ontoembed.logic import (AggregationConfig, clamp, forall, fz_and, fz_implies, fz_not, kb_loss,
                             sat_agg)
from ontoembed.tape import Var

unit = st.floats(0.0, 1.0, allow_nan=False)


def scalar_pmean_error(values, p):
    """Reference aggregator written with plain floats."""
    total = 0.0
    for v in values:
        total += (1.0 - v) ** p
    return 1.0 - (total / len(values)) ** (1.0 / p)


def grad_of(fn, *args):
    vs = [Var(np.array(a, dtype=float)) for a in args]
    out = fn(*vs)
    out.backward()
    return [v.grad for v in vs]


class TestConnectives:
    def test_not(self):
        assert float(fz_not(0.0).value) == 1.0
        assert float(fz_not(1.0).value) == 0.0
        assert float(fz_not(0.2).value) == pytest.approx(0.8, abs=1e-15)

    def test_and(self):
        assert float(fz_and(1.0, 0.37).value) == 0.37
        assert float(fz_and(0.0, 0.37).value) == 0.0
        assert float(fz_and(0.6, 0.5).value) == pytest.approx(0.3, abs=1e-15)

    def test_implies(self):
        assert float(fz_implies(1.0, 0.0).value) == 0.0
        assert float(fz_implies(0.0, 0.42).value) == 1.0
        assert float(fz_implies(0.5, 0.5).value) == 0.75

    def test_gradients_by_hand(self):
        assert grad_of(fz_not, 0.3)[0] == -1.0
        ga, gb = grad_of(fz_and, 0.6, 0.5)
        assert (ga, gb) == (0.5, 0.6)
        ga, gb = grad_of(fz_implies, 0.6, 0.5)
        assert ga == pytest.approx(-0.5) and gb == pytest.approx(0.6)

    @settings(max_examples=200)
    @given(unit, unit)
    def test_bounds(self, a, b):
        for v in (fz_not(a), fz_and(a, b), fz_implies(a, b)):
            assert 0.0 <= float(v.value) <= 1.0

    @settings(max_examples=200)
    @given(unit, unit, unit)
    def test_monotone(self, a, b, c):
        lo, hi = min(b, c), max(b, c)
        assert float(fz_and(a, lo).value) <= float(fz_and(a, hi).value)
        assert float(fz_not(lo).value) >= float(fz_not(hi).value)
        assert float(fz_implies(a, lo).value) <= float(fz_implies(a, hi).value) + 1e-15
        assert float(fz_implies(lo, a).value) >= float(fz_implies(hi, a).value) - 1e-15

    def test_clamp_masks_gradient(self):
        v = Var(np.array([0.0, 0.5, 1.0]))
        out = clamp(v)
        assert out.value[0] == 1e-7 and out.value[2] == 1 - 1e-7
        out.backward(np.ones(3))
        np.testing.assert_array_equal(v.grad, [0.0, 1.0, 0.0])


class TestAggregators:
    def test_forall_examples(self):
        assert float(forall([1.0, 1.0, 1.0]).value) == 1.0
        assert float(forall(np.array([0.0, 0.0])).value) == 0.0
        got = float(forall(np.array([0.6, 0.8])).value)
        assert got == pytest.approx(0.68377, abs=5e-6)
        assert got == pytest.approx(scalar_pmean_error([0.6, 0.8], 2), abs=1e-15)
        assert got == pytest.approx(1 - math.sqrt((0.16 + 0.04) / 2), abs=1e-15)

    def test_sat_agg_examples(self):
        one = sat_agg([Var(np.array([1.0])), Var(np.array([1.0]))])
        assert float(one.value) == 1.0 and float(kb_loss(one).value) == 0.0
        zero = sat_agg(np.array([0.0, 0.0, 0.0]))
        assert float(zero.value) == 0.0 and float(kb_loss(zero).value) == 1.0
        got = float(sat_agg(np.array([0.9, 0.7])).value)
        assert got == pytest.approx(0.77639, abs=5e-6)
        assert got == pytest.approx(scalar_pmean_error([0.9, 0.7], 2), abs=1e-15)

    def test_empty(self):
        with pytest.raises(EmptyDomain):
            forall([])
        with pytest.raises(EmptyDomain):
            forall(np.zeros(0))
        with pytest.raises(EmptyKnowledgeBase):
            sat_agg([])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AggregationConfig(p_forall=0.5)

    @settings(max_examples=200)
    @given(unit, st.integers(1, 20), st.sampled_from([1.0, 2.0, 3.5]))
    def test_all_equal(self, v, n, p):
        cfg = AggregationConfig(p, p)
        assert float(forall(np.full(n, v), cfg).value) == pytest.approx(v, abs=1e-12)
        assert float(sat_agg(np.full(n, v), cfg).value) == pytest.approx(v, abs=1e-12)

    @settings(max_examples=200)
    @given(st.lists(unit, min_size=1, max_size=12), st.sampled_from([1.0, 2.0, 4.0]))
    def test_matches_scalar_oracle(self, vals, p):
        cfg = AggregationConfig(p, p)
        want = scalar_pmean_error(vals, p)
        assert float(forall(np.array(vals), cfg).value) == pytest.approx(want, abs=1e-12)
        assert 0.0 <= want <= 1.0

    @settings(max_examples=200)
    @given(st.lists(unit, min_size=1, max_size=8), st.integers(0, 7), unit)
    def test_monotone(self, vals, i, bump):
        i %= len(vals)
        up = list(vals)
        up[i] = max(up[i], bump)
        assert float(forall(np.array(vals)).value) <= float(forall(np.array(up)).value) + 1e-12
        assert float(sat_agg(np.array(vals)).value) <= float(sat_agg(np.array(up)).value) + 1e-12

    def test_zero_subgradient_at_full_satisfaction(self):
        v = Var(np.ones(4))
        forall(v).backward()
        np.testing.assert_array_equal(v.grad, np.zeros(4))


def central(fn, x, h=1e-5):
    out = np.zeros_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up.flat[i] += h
        down.flat[i] -= h
        out.flat[i] = (fn(up) - fn(down)) / (2 * h)
    return out


def rel_err(a, n):
    return np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-7))


class TestFiniteDifferences:
    """Analytic gradients vs central differences (h = 1e-5) on 1000 random inputs each."""

    def test_connectives(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0.01, 0.99, 1000)
        b = rng.uniform(0.01, 0.99, 1000)
        for fn in (fz_and, fz_implies):
            ga, gb = grad_of(lambda x, y: fn(x, y), a, b)
            # elementwise maps: one perturbation of the whole vector probes every entry
            na = (fn(a + 1e-5, b).value - fn(a - 1e-5, b).value) / 2e-5
            nb = (fn(a, b + 1e-5).value - fn(a, b - 1e-5).value) / 2e-5
            assert rel_err(ga, na) < 1e-4 and rel_err(gb, nb) < 1e-4
        (g,) = grad_of(fz_not, a)
        assert rel_err(g, (fz_not(a + 1e-5).value - fz_not(a - 1e-5).value) / 2e-5) < 1e-4

    @pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
    def test_aggregators(self, p):
        rng = np.random.default_rng(int(p))
        cfg = AggregationConfig(p, p)
        worst = 0.0
        for _ in range(1000):
            x = rng.uniform(0.0, 0.98, int(rng.integers(1, 6)))
            for agg in (forall, sat_agg):
                (g,) = grad_of(lambda v: agg(v, cfg), x)
                n = central(lambda v: float(agg(v, cfg).value), x)
                worst = max(worst, rel_err(g, n))
        assert worst < 1e-4
