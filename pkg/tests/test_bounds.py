import math

import numpy as np
import pytest

from projcond import bounds
from projcond.errors import (
    GrowthConditionViolatedError,
    InvalidDimensionError,
)
from projcond.moments import MomentConditionConstants

CONS = MomentConditionConstants(epsilon=0.5, xi=0.5, D=1.0)


def test_generic_bound_examples():
    assert bounds.generic_bound(1, 2, 0.5, 1, 1, 1, 100, 0.5, 0.0) == 0.0
    v1 = bounds.generic_bound(1, 2, 0.5, 1.0, 1.0, 1.0, 1e4, 0.5, 1.0)
    direct = math.e * (2 * math.sqrt(math.pi * math.e)) ** 2 * 1e-2
    assert v1 == pytest.approx(direct, rel=1e-12)
    v2 = bounds.generic_bound(1, 2, 0.5, 1.0, 1.0, 1.0, 2e4, 0.5, 1.0)
    assert v2 / v1 == pytest.approx(2.0 ** -0.5, rel=1e-12)
    with pytest.raises(InvalidDimensionError):
        bounds.generic_bound(1, 2, 0.5, 1, 1, 1, 1, 0.5, 1.0)


def test_generic_bound_random_tuples_vs_direct(rng_factory):
    rng = rng_factory("gen-vs-direct")
    for _ in range(20):
        p = int(rng.integers(1, 6))
        k = int(rng.integers(1, 5))
        eps = float(rng.uniform(0, 0.5))
        g = float(rng.uniform(0.5, 2.0))
        m = float(rng.uniform(1.0, 2.5))
        dd = float(rng.uniform(1.0, 2.0))
        d = float(rng.uniform(10, 1e7))
        xi = float(rng.uniform(0.05, 0.5))
        kap = float(rng.uniform(0.5, 3.0))
        val = bounds.generic_bound(p, k, eps, g, m, dd, d, xi, kap)
        ref = (kap * p ** (2 * k + 1 + eps) * math.exp(g * m * m)
               * (2 * dd * math.sqrt(math.pi * math.e)) ** (p * k)
               * d ** (-min(xi, eps / 2 + 0.25, 0.5)))
        assert val == pytest.approx(ref, rel=1e-12)


def test_theorem_bound_worked_example():
    inp = bounds.TheoremBoundInputs(d=1e6, p=2, t=1.0, tau=0.5, constants=CONS, part="A")
    res = bounds.theorem_bound(inp)
    assert res.xi_eff == pytest.approx(1.0 / 6.0)
    assert res.gamma == pytest.approx(6 + 2 * math.log(2 * math.sqrt(math.pi * math.e)), rel=1e-12)
    first = 10.0**-0.5
    second = res.gamma / 0.5 * 2.0 / (0.5 * math.log(1e6))
    assert res.deviation_bound == pytest.approx(first + second, rel=1e-12)
    assert res.deviation_vacuous  # ~5.8 at desk scale
    res_b = bounds.theorem_bound(bounds.TheoremBoundInputs(
        d=1e6, p=2, t=1.0, tau=0.5, constants=CONS, part="B"))
    assert res_b.xi_eff == pytest.approx(0.6 * res.xi_eff, rel=1e-15)


def test_theorem_bound_t_limit():
    res = bounds.theorem_bound(bounds.TheoremBoundInputs(
        d=1e6, p=2, t=1e15, tau=0.5, constants=CONS, part="A"))
    tail = res.gamma / 0.5 * 2 / (3 * res.xi_eff * math.log(1e6))
    assert res.deviation_bound == pytest.approx(tail, rel=1e-9)


def test_theorem_bound_part_b_doubles_nu():
    kw = dict(d=1e6, p=1, t=1.0, tau=0.5, constants=CONS, kappa=1.0, g=1.0)
    res_a = bounds.theorem_bound(bounds.TheoremBoundInputs(part="A", **kw))
    # with matching exponents, part B carries the extra factor of two
    log_nu_b_at_a_exponent = res_a.log_nu_gc_bound + math.log(2.0)
    res_b = bounds.theorem_bound(bounds.TheoremBoundInputs(part="B", **kw))
    assert res_b.log_nu_gc_bound != res_a.log_nu_gc_bound
    assert log_nu_b_at_a_exponent > res_a.log_nu_gc_bound


def test_theorem_bound_monotonicity(rng_factory):
    rng = rng_factory("mono")
    for _ in range(20):
        d = float(rng.uniform(1e5, 1e9))
        tau = float(rng.uniform(0.2, 0.8))
        t = float(rng.uniform(0.5, 2.0))
        base = bounds.theorem_bound(bounds.TheoremBoundInputs(
            d=d, p=2, t=t, tau=tau, constants=CONS, part="A"))
        bigger_t = bounds.theorem_bound(bounds.TheoremBoundInputs(
            d=d, p=2, t=2 * t, tau=tau, constants=CONS, part="A"))
        assert bigger_t.deviation_bound < base.deviation_bound
        bigger_d = bounds.theorem_bound(bounds.TheoremBoundInputs(
            d=10 * d, p=2, t=t, tau=tau, constants=CONS, part="A"))
        assert bigger_d.deviation_bound < base.deviation_bound
        bigger_p = bounds.theorem_bound(bounds.TheoremBoundInputs(
            d=d, p=3, t=t, tau=tau, constants=CONS, part="A"))
        assert bigger_p.deviation_bound > base.deviation_bound


def test_theorem_input_validation():
    with pytest.raises(InvalidDimensionError):
        bounds.TheoremBoundInputs(d=10, p=12, t=1.0, tau=0.5, constants=CONS)
    with pytest.raises(InvalidDimensionError):
        bounds.TheoremBoundInputs(d=10, p=1, t=1.0, tau=1.5, constants=CONS)
    with pytest.raises(InvalidDimensionError):
        bounds.TheoremBoundInputs(d=10, p=1, t=-1.0, tau=0.5, constants=CONS)
    with pytest.raises(InvalidDimensionError):
        bounds.TheoremBoundInputs(d=10, p=1, t=1.0, tau=0.5, constants=CONS, part="C")


def test_applicability_thresholds():
    ok, m = bounds.applicability_thresholds(200, 1, 2, 1.0)
    assert ok and m["required"] == 196.0
    ok4, m4 = bounds.applicability_thresholds(1300, 1, 4, 1.0)
    assert ok4 and m4["required"] == 1288.0
    assert not bounds.applicability_thresholds(196, 1, 2, 1.0)[0]  # strict
    assert not bounds.applicability_thresholds(9, 3, 1, 1.0)[0]


def test_scan_constant_p_decreases_to_zero():
    rows = bounds.asymptotic_scan(CONS, lambda ld: 2, [1e6, 1e12, 1e24, 1e48, 1e96],
                                  tau=0.5, part="B")
    for a, b in zip(rows, rows[1:]):
        assert b.log_deviation_bound < a.log_deviation_bound
        assert b.log_nu_gc_bound < a.log_nu_gc_bound
    assert rows[-1].deviation_bound < 1e-6


def test_scan_growth_violations():
    with pytest.raises(GrowthConditionViolatedError):
        bounds.asymptotic_scan(CONS, lambda ld: max(1, int(ld)), [1e3, 1e4, 1e5], part="A")
    rows = bounds.asymptotic_scan(CONS, lambda ld: max(1, int(math.sqrt(ld))),
                                  [1e3, 1e4, 1e5, 1e6], part="B")
    assert rows[-1].log_deviation_bound < rows[0].log_deviation_bound


def test_scan_grid_validation():
    with pytest.raises(InvalidDimensionError):
        bounds.asymptotic_scan(CONS, lambda ld: 1, [1e4], part="A")
    with pytest.raises(InvalidDimensionError):
        bounds.asymptotic_scan(CONS, lambda ld: 1, [1e4, 1e3], part="A")


def test_gamma_constant_parts():
    ld = math.log(2 * math.sqrt(math.pi * math.e))
    assert bounds.gamma_constant(1.0, 1.0, "A") == pytest.approx(6 + 2 * ld)
    assert bounds.gamma_constant(1.0, 1.0, "B") == pytest.approx(10 + 4 * ld)
    assert bounds.gamma_constant(100.0, 1.0, "A") == 100.0
    assert bounds.gamma_constant(1.0, 2.0, "B") == pytest.approx(10 + 4 * (ld + math.log(2)))
