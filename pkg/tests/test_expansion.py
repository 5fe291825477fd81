import math

import numpy as np
import pytest

from projcond import clones, expansion, linalg
from projcond.errors import OutsideExpansionRegionError, ThresholdViolatedError

# calibrated once against dense determinant evaluation; never re-tuned
DET_FIDELITY_D2 = 2.0


def _random_symmetric_direction(rng, k):
    a = rng.standard_normal((k, k))
    a = 0.5 * (a + a.T)
    return a / linalg.spectral_norm(a)


def test_taylor_p1_values():
    assert np.allclose(expansion.taylor_p1(0.0, 3), [1.0, 0, 0, 0])
    assert np.allclose(expansion.taylor_p1(1.0, 2), [1.0, -0.5, 0.125])
    assert expansion.taylor_p1(2.7, 4)[0] == 1.0


def test_taylor_p2_values():
    assert np.allclose(expansion.taylor_p2(2, 2), [1.0, -1.0, 1.0])
    assert expansion.taylor_p2(3, 1)[1] == pytest.approx(-1.5)
    for k in (1, 2, 3, 4):
        coeffs = expansion.taylor_p2(1, k)
        j = np.arange(k + 1)
        assert np.all(np.abs(coeffs) <= 1.0**j + 1e-15)
        coeffs5 = expansion.taylor_p2(5, k)
        assert np.all(np.abs(coeffs5[1:]) <= 5.0 ** j[1:] + 1e-12)


def test_taylor_r1_zero_projection():
    r1 = expansion.taylor_r1(800, 2, 3, 0.0)
    assert np.max(np.abs(r1)) == 0.0


def test_taylor_r1_reconstructs_exact_value():
    d, p, k, xsq = 10_000, 1, 2, 1.0
    p1 = expansion.taylor_p1(xsq, k)
    r1 = expansion.taylor_r1(d, p, k, xsq)
    g1_at_k = math.exp(0.5 * (d - p - k - 1) * math.log1p(-k * xsq / d) + 0.5 * k * xsq)
    assert p1[0] + r1[0] == pytest.approx(g1_at_k, abs=1e-12)


def test_taylor_r1_threshold():
    with pytest.raises(ThresholdViolatedError):
        expansion.taylor_r1(50, 1, 2, 2.0)  # needs d > 4*4*16 = 256


def test_taylor_r1_coefficient_bound():
    # every coefficient is within p M^(2(k+2)) c1(k) / d of zero
    for (d, p, k, xsq) in ((1000, 1, 2, 1.0), (5000, 2, 3, 0.49), (400, 1, 1, 0.25)):
        r1 = expansion.taylor_r1(d, p, k, xsq)
        m = max(1.0, math.sqrt(xsq))
        cap = p * m ** (2 * (k + 2)) / d * expansion.c1_constant(k)
        assert np.all(np.abs(r1) <= cap)


def test_psi_constant_term_and_invariance():
    x = np.array([0.5])
    psi = expansion.psi_poly(x, 3, 1, 2000)
    const = psi.coeffs.get((), 0.0)
    ratio0 = clones.log_density_ratio_gram(0.25, np.eye(3), 2000, 1)
    assert const == pytest.approx(math.exp(ratio0.log_ratio), abs=1e-10)
    # remainder vanishes at the expansion point
    assert psi.evaluate(np.eye(3)) == pytest.approx(math.exp(ratio0.log_ratio), abs=1e-10)
    # coefficients of relabeled monomials coincide
    assert psi.coeffs[((0, 0),)] == pytest.approx(psi.coeffs[((2, 2),)], abs=1e-10)
    assert psi.coeffs[((0, 1),)] == pytest.approx(psi.coeffs[((1, 2),)], abs=1e-10)
    assert psi.degree <= 3


def test_psi_poly_agrees_with_eval(rng_factory):
    rng = rng_factory("psi-agree")
    for k, p, d in ((2, 1, 800), (4, 2, 1500)):
        x = rng.standard_normal(p) * 0.4
        psi = expansion.psi_poly(x, k, p, d)
        for _ in range(50):
            a = _random_symmetric_direction(rng, k)
            s = np.eye(k) + rng.uniform(0.0, 0.8 / (p * expansion.default_xi(k))) * a
            assert psi.evaluate(s) == pytest.approx(
                expansion.psi_eval(x, s, d, p), abs=1e-10
            )


def test_exactness_at_identity_grid():
    for d in (300, 1000, 10_000):
        for p in (1, 2):
            for k in (1, 2, 4):
                for xn in (0.0, 0.5, 1.0):
                    x = np.zeros(p)
                    x[0] = xn
                    rem, _ = expansion.remainder_diagnostic(x, np.eye(k), d, p)
                    assert abs(rem) < 1e-10, (d, p, k, xn)


def test_remainder_order_slope(rng_factory):
    rng = rng_factory("slope")
    eps_grid = np.array([0.02, 0.01, 0.005, 0.0025])
    for k in (1, 2, 4):
        a = _random_symmetric_direction(rng, k)
        rems = []
        for eps in eps_grid:
            rem, _ = expansion.remainder_diagnostic(
                np.array([0.5]), np.eye(k) + eps * a, 10_000, 1
            )
            rems.append(abs(rem))
        slope = np.polyfit(np.log(eps_grid), np.log(rems), 1)[0]
        assert abs(slope - (k + 1)) < 0.3, (k, slope)


def test_remainder_halving_factor(rng_factory):
    rng = rng_factory("halving")
    k = 2
    a = _random_symmetric_direction(rng, k)
    r1, _ = expansion.remainder_diagnostic(np.array([0.5]), np.eye(k) + 0.02 * a, 500, 1)
    r2, _ = expansion.remainder_diagnostic(np.array([0.5]), np.eye(k) + 0.01 * a, 500, 1)
    assert abs(r1 / r2) == pytest.approx(2 ** (k + 1), rel=0.5)


def test_remainder_region_guard():
    with pytest.raises(OutsideExpansionRegionError):
        expansion.remainder_diagnostic(np.array([0.2]), np.eye(2) + 0.5, 1000, 1)


def test_psi_threshold_guard():
    with pytest.raises(ThresholdViolatedError):
        expansion.psi_eval(np.array([0.5]), np.eye(2), 10, 1)  # d below 4(k+p+1)M^4
    with pytest.raises(Exception):
        expansion.psi_poly(np.array([0.5]), 5, 1, 10_000)  # k > 4


def test_neumann_sum_fidelity(rng_factory):
    # |iota'S^{-1}iota - k - sum_j iota'(I-S)^j iota| <= 2k ||S-I||^(k+1)
    rng = rng_factory("neumann")
    for k in (1, 2, 3, 4):
        upoly = expansion.neumann_sum_poly(k)
        for _ in range(25):
            a = _random_symmetric_direction(rng, k)
            s = np.eye(k) + rng.uniform(0.005, 0.99 / (2 * k)) * a
            dev = linalg.spectral_norm(s - np.eye(k))
            exact = float(np.ones(k) @ np.linalg.solve(s, np.ones(k))) - k
            approx = expansion.poly_eval(upoly, s - np.eye(k))
            assert abs(exact - approx) <= 2 * k * dev ** (k + 1)


def test_det_expansion_fidelity(rng_factory):
    # |det S^{-p/2} - Q2(S-I)| <= D2 p^(k+1) ||S-I||^(k+1), D2 fixed once
    rng = rng_factory("detfid")
    for k in (1, 2, 3, 4):
        for p in (1, 2):
            q2 = expansion.det_power_poly(p, k)
            for _ in range(25):
                a = _random_symmetric_direction(rng, k)
                s = np.eye(k) + rng.uniform(0.01, 0.99 / (p * expansion.default_xi(k))) * a
                dev = linalg.spectral_norm(s - np.eye(k))
                exact = float(np.linalg.det(s)) ** (-p / 2)
                approx = expansion.poly_eval(q2, s - np.eye(k))
                assert abs(exact - approx) <= DET_FIDELITY_D2 * p ** (k + 1) * dev ** (k + 1)


def test_coefficient_bound_shape_reported():
    psi = expansion.psi_poly(np.array([0.8]), 2, 1, 2000)
    shape = psi.coefficient_bound_shape()
    assert shape > 0.0
    # reported only: actual coefficients stay within a small multiple here
    worst = max(abs(v) for v in psi.coeffs.values())
    assert worst < 100 * shape
