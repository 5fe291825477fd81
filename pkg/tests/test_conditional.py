import math

import numpy as np
import pytest

from projcond import bounds, conditional as cond, distributions as dist, linalg
from projcond.acceptance import _uniform_fiber_quadrature
from projcond.errors import DegenerateDensityError

B2 = np.array([1.0, 2.0]) / math.sqrt(5.0)

# fiber-quadrature oracle for the iid-uniform law at d = 2, B = (1,2)'/sqrt5,
# frozen from a 10^5-point rule; h at x = 0 equals sqrt(2 pi) sqrt(15)/12
# exactly, which pins the quadrature itself
FROZEN_ORACLE = {
    0.0: {"h": 0.8090107969, "mu": (0.0, 0.0), "dnorm": 0.2500000000},
    0.3: {"h": 0.8462478325, "mu": (0.0, 0.3354101966), "dnorm": 0.2797388932},
    -0.8: {"h": 1.0958422798, "mu": (-0.0284017872, -0.8802262974), "dnorm": 0.5138444553},
}


def test_quadrature_oracle_reproduces_frozen_values():
    assert FROZEN_ORACLE[0.0]["h"] == pytest.approx(
        math.sqrt(2 * math.pi) * math.sqrt(15.0) / 12.0, abs=1e-9
    )
    for x, vals in FROZEN_ORACLE.items():
        h, mu, sec = _uniform_fiber_quadrature(B2, x)
        assert h == pytest.approx(vals["h"], abs=1e-6)
        assert np.allclose(mu, vals["mu"], atol=1e-6)
        delta = sec - (np.eye(2) + np.outer(B2, B2) * (x * x - 1))
        dn = float(np.max(np.abs(np.linalg.eigvalsh(delta))))
        assert dn == pytest.approx(vals["dnorm"], abs=1e-6)


def test_ratio_estimates_match_quadrature(rng_factory):
    spec = dist.iid_marginal("uniform", 2)
    B = linalg.as_stiefel(B2)
    rng = rng_factory("ratio-quad")
    for x, vals in FROZEN_ORACLE.items():
        est = cond.conditional_estimates(spec, B, np.array([x]), 100_000, rng)
        assert abs(est.h_hat - vals["h"]) < 4 * est.h_se
        assert np.all(np.abs(est.mu_hat - vals["mu"]) <= 4 * est.mu_se + 1e-12)
        assert abs(est.delta_op_norm_hat - vals["dnorm"]) < 4 * est.delta_se


def test_gaussian_exactness(rng_factory):
    rng = rng_factory("gauss-exact")
    spec = dist.gaussian(15)
    B = linalg.haar_stiefel(15, 3, rng)
    x = np.array([0.2, -0.5, 1.0])
    est = cond.conditional_estimates(spec, B, x, 3000, rng)
    assert est.h_hat == 1.0 and est.h_se == 0.0
    assert np.max(np.abs(est.mu_hat - B.entries @ x)) == 0.0
    assert est.delta_op_norm_hat == 0.0
    # jackknife replicates are identical; their mean can differ by one ulp
    assert np.max(est.mu_se) < 1e-14


def test_h_normalization_over_projections(rng_factory):
    # E_{x ~ N(0, I_p)} h(x|B) = 1 for every law
    rng = rng_factory("h-norm")
    d, p = 6, 1
    for spec in (dist.iid_marginal("uniform", d), dist.iid_marginal("exponential", d)):
        B = linalg.haar_stiefel(d, p, rng)
        vals = []
        for _ in range(200):
            x = rng.standard_normal(p)
            h, _ = cond.estimate_h(spec, B, x, 2000, rng)
            vals.append(h)
        vals = np.array(vals)
        se = vals.std() / math.sqrt(len(vals))
        assert abs(vals.mean() - 1.0) < 4 * se, spec.label


def test_axis_aligned_conditional_linearity(rng_factory):
    # with B = coordinate axes and independent coordinates, mu = Bx exactly
    rng = rng_factory("axis")
    d, p = 6, 2
    B = linalg.StiefelMatrix(d=d, p=p, entries=np.eye(d)[:, :p])
    spec = dist.iid_marginal("exponential", d)
    x = np.array([0.5, -0.4])
    mu, mu_se = cond.estimate_mu(spec, B, x, 100_000, rng)
    assert np.linalg.norm(mu - B.entries @ x) <= 4 * np.linalg.norm(mu_se) + 1e-12


def test_norm_identity_consistency(rng_factory):
    # | ||mu-Bx||^2 - (||mu||^2 - ||x||^2) | <= 2 ||x|| ||B'mu - x||
    rng = rng_factory("norm-id")
    spec = dist.iid_marginal("uniform", 4)
    B = linalg.haar_stiefel(4, 1, rng)
    x = np.array([0.6])
    mu, _ = cond.estimate_mu(spec, B, x, 100_000, rng)
    lhs = abs(np.sum((mu - B.entries @ x) ** 2) - (np.sum(mu**2) - float(x @ x)))
    rhs = 2 * np.linalg.norm(x) * np.linalg.norm(B.entries.T @ mu - x)
    assert lhs <= rhs + 1e-10


def test_degenerate_h_raises(rng_factory):
    # bounded support never hit at large d: the ratio weight vanishes
    rng = rng_factory("degenerate")
    spec = dist.iid_marginal("uniform", 200)
    B = linalg.haar_stiefel(200, 1, rng)
    with pytest.raises(DegenerateDensityError):
        cond.estimate_mu(spec, B, np.array([0.2]), 2000, rng)


def test_estimate_h_requires_minimum_sample(rng_factory):
    from projcond.errors import InvalidDimensionError

    with pytest.raises(InvalidDimensionError):
        cond.estimate_h(dist.gaussian(4), linalg.haar_stiefel(4, 1, rng_factory("x")),
                        np.array([0.0]), 10, rng_factory("y"))


def test_kernel_engine_agrees_with_ratio_engine(rng_factory):
    rng = rng_factory("engines")
    d = 8
    spec = dist.iid_marginal("uniform", d)
    B = linalg.haar_stiefel(d, 1, rng)
    x = np.array([0.4])
    mu_r, mu_se = cond.estimate_mu(spec, B, x, 200_000, rng)
    pool = cond.build_pool(spec, B, 200_000, rng, bandwidth=0.05)
    mu_k, _, noise = cond.kernel_mu(pool, x)
    assert np.max(np.abs(mu_r - mu_k)) < 4 * (np.max(mu_se) + noise) + 0.02
    h_r, h_se = cond.estimate_h(spec, B, x, 200_000, rng)
    h_k = cond.kernel_h(pool, x)
    assert abs(h_r - h_k) < 0.05


def test_deviation_probability_gaussian_zero(rng_factory):
    rng = rng_factory("devp-gauss")
    spec = dist.gaussian(20)
    B = linalg.haar_stiefel(20, 2, rng)
    res = cond.deviation_probability(spec, B, t=0.05, n_outer=100, n_inner=1500, rng=rng)
    assert res.engine == "ratio"
    assert res.mean_prob == 0.0 and res.var_prob == 0.0


def test_deviation_probability_t_zero_is_one(rng_factory):
    rng = rng_factory("devp-t0")
    spec = dist.iid_marginal("uniform", 16)
    B = linalg.haar_stiefel(16, 1, rng)
    res = cond.deviation_probability(spec, B, t=0.0, n_outer=100, n_inner=20_000, rng=rng)
    assert res.engine == "kernel"
    assert res.mean_prob == 1.0 and res.var_prob == 1.0


def test_deviation_probability_kernel_small_threshold(rng_factory):
    rng = rng_factory("devp-k")
    spec = dist.iid_marginal("uniform", 32)
    B = linalg.haar_stiefel(32, 1, rng)
    res = cond.deviation_probability(spec, B, t=0.5, n_outer=100, n_inner=50_000, rng=rng)
    assert 0.0 <= res.mean_prob <= 0.1
    assert res.noise_floor_mu < 0.25


def test_deviation_probability_preconditions(rng_factory):
    from projcond.errors import InvalidDimensionError

    rng = rng_factory("devp-pre")
    spec = dist.gaussian(10)
    B = linalg.haar_stiefel(10, 1, rng)
    with pytest.raises(InvalidDimensionError):
        cond.deviation_probability(spec, B, t=0.5, n_outer=10, n_inner=2000, rng=rng)
    with pytest.raises(InvalidDimensionError):
        cond.deviation_probability(spec, B, t=0.5, n_outer=100, n_inner=10, rng=rng)


def test_g_membership_regimes(rng_factory):
    rng = rng_factory("gmem")
    gamma = bounds.gamma_constant(1.0, 1.0, "A")
    # M_d <= 1: the good set is everything
    rep = cond.g_membership(dist.iid_marginal("uniform", 64),
                            linalg.haar_stiefel(64, 1, rng),
                            tau=0.5, gamma=gamma, n_x=100, n_inner=1000, rng=rng)
    assert rep.M_d <= 1.0 and rep.member and rep.n_x == 0
    # gaussian: the integrand vanishes identically
    rep_g = cond.g_membership(dist.gaussian(40), linalg.haar_stiefel(40, 1, rng),
                              tau=0.5, gamma=gamma, n_x=100, n_inner=1500, rng=rng,
                              tau1=3.0)
    assert rep_g.engine == "ratio" and rep_g.M_d > 1.0
    assert rep_g.integral_hat < 1e-20 and rep_g.member
    # manual override with the kernel engine at moderate dimension
    rep_u = cond.g_membership(dist.iid_marginal("uniform", 64),
                              linalg.haar_stiefel(64, 1, rng),
                              tau=0.5, gamma=gamma, n_x=100, n_inner=40_000, rng=rng,
                              tau1=3.0)
    assert rep_u.M_d > 1.0 and rep_u.integral_hat >= 0.0
    assert rep_u.member == (rep_u.integral_hat <= rep_u.delta_d)


def test_balanced_tuning_balances():
    xi1 = 1.0 / 6.0
    tau = 0.4
    t1, t2 = bounds.balanced_tuning(tau, xi1, "A")
    assert t1 + t2 - 3 * xi1 == pytest.approx(-t2 / 2)
    assert t2 / 2 == pytest.approx(tau * xi1)
    t1b, t2b = bounds.balanced_tuning(tau, 0.1, "B")
    assert t1b + t2b - 5 * 0.1 == pytest.approx(-t2b / 4)
    assert t2b / 4 == pytest.approx(tau * 0.1)
