import itertools
import math

import numpy as np
import pytest

from projcond import distributions as dist
from projcond import moments as mo
from projcond.errors import InvalidDimensionError, InvalidStructureError


def brute_force_classify(pairs):
    """Independent graph analysis used to cross-check the classifier."""
    if len(pairs) == 0:
        return "open-chain"
    loops = [e for e in pairs if e[0] == e[1]]
    if len(loops) == len(pairs):
        return "diagonal"
    if loops:
        return "general"
    verts = sorted({v for e in pairs for v in e})
    adj = {v: [] for v in verts}
    for i, (a, b) in enumerate(pairs):
        adj[a].append((b, i))
        adj[b].append((a, i))
    deg = {v: len(adj[v]) for v in verts}
    # connected components by BFS
    seen, comps = set(), []
    for v0 in verts:
        if v0 in seen:
            continue
        comp, queue = set(), [v0]
        while queue:
            v = queue.pop()
            if v in comp:
                continue
            comp.add(v)
            queue += [u for u, _ in adj[v]]
        seen |= comp
        comps.append(comp)
    if all(deg[v] == 2 for v in verts) and len(pairs) == len(verts) and len(comps) == 1:
        return "cycle"
    if (
        len(set(pairs)) == len(pairs)
        and all(deg[v] <= 2 for v in verts)
        and len(pairs) == len(verts) - len(comps)
    ):
        return "open-chain"
    return "general"


def test_classification_against_brute_force():
    pool = [(a, b) for a in range(1, 5) for b in range(a, 5)]
    count = 0
    for degree in range(1, 5):
        for combo in itertools.combinations_with_replacement(pool, degree):
            spec = mo.MonomialSpec(pairs=combo)
            assert spec.classification == brute_force_classify(spec.pairs), combo
            count += 1
    assert count > 900


def test_cycle_monomials():
    assert mo.cycle_monomial(1).pairs == ((1, 1),)
    assert mo.cycle_monomial(2).pairs == ((1, 2), (1, 2))
    c4 = mo.cycle_monomial(4)
    assert c4.classification == "cycle" and c4.degree == 4
    with pytest.raises(InvalidStructureError):
        mo.cycle_monomial(0)


def test_b1b_targets():
    assert mo.MonomialSpec(pairs=((1, 2), (1, 2))).b1b_target() == 1.0
    assert mo.MonomialSpec(pairs=((1, 2),)).b1b_target() == 0.0
    assert mo.MonomialSpec(pairs=((1, 1), (1, 1))).b1b_target() is None
    assert mo.MonomialSpec(pairs=((1, 2), (1, 2), (1, 2))).b1b_target() is None


def test_constants_ranges():
    with pytest.raises(InvalidDimensionError):
        mo.MomentConditionConstants(epsilon=0.7)
    with pytest.raises(InvalidDimensionError):
        mo.MomentConditionConstants(alpha=0.5)
    with pytest.raises(InvalidDimensionError):
        mo.MomentConditionConstants(xi=0.0)
    cons = mo.MomentConditionConstants()
    assert mo.MomentConditionConstants.from_json(cons.to_json()) == cons


def test_b1a_k1_matches_direct_statistic(rng_factory):
    # for k = 1 the norm is |sqrt(d)(Z'Z/d - 1)|
    d, n = 100, 4000
    spec = dist.iid_marginal("uniform", d)
    est, se = mo.estimate_b1a(spec, d, 1, 0.5, n, rng_factory("b1a-k1"))
    z = dist.sample_z(spec, n, rng_factory("b1a-k1-direct"))
    direct = np.abs(math.sqrt(d) * (np.einsum("nd,nd->n", z, z) / d - 1.0)) ** 3.5
    joint = math.sqrt(se**2 + direct.var() / n)
    assert abs(est - direct.mean()) < 4 * joint


def test_b1a_gaussian_stable(rng_factory):
    est, se = mo.estimate_b1a(dist.gaussian(200), 200, 2, 0.5, 10_000, rng_factory("b1a-g"))
    assert np.isfinite(est) and se / est < 0.1


def test_b1a_dimension_stability(rng_factory):
    # the CLT limit of sqrt(d)(S_1 - 1) has variance m4 - 1: estimates at
    # different d agree within joint error
    ests = {}
    for d in (100, 400):
        ests[d] = mo.estimate_b1a(
            dist.iid_marginal("uniform", d), d, 1, 0.5, 20_000, rng_factory(f"b1a-{d}")
        )
    diff = abs(ests[100][0] - ests[400][0])
    joint = math.sqrt(ests[100][1] ** 2 + ests[400][1] ** 2)
    assert diff < 4 * joint + 0.05 * ests[100][0]  # small allowance for O(1/sqrt d) drift


def test_monomial_mean_quadratic_identity(rng_factory):
    mono = mo.MonomialSpec(pairs=((1, 2), (1, 2)))
    for spec in (dist.gaussian(100), dist.iid_marginal("triangular", 100)):
        est, se, target = mo.estimate_monomial_mean(spec, 100, mono, 20_000,
                                                    rng_factory(f"quad-{spec.label}"))
        assert target == 1.0
        assert abs(est - target) < 4 * se


def test_monomial_mean_linear_term(rng_factory):
    mono = mo.MonomialSpec(pairs=((1, 2),))
    est, se, target = mo.estimate_monomial_mean(
        dist.iid_marginal("exponential", 100), 100, mono, 20_000, rng_factory("lin")
    )
    assert target == 0.0 and abs(est) < 4 * se


def test_monomial_mean_quartic_oracle(rng_factory):
    # d^2 E[(S-I)_12^2 (S-I)_13^2] = E||Z||^4 / d^2 = 1 + (m4 - 1)/d
    d = 100
    spec = dist.iid_marginal("uniform", d)
    mono = mo.MonomialSpec(pairs=((1, 2), (1, 2), (1, 3), (1, 3)))
    est, se, target = mo.estimate_monomial_mean(spec, d, mono, 40_000, rng_factory("quart"))
    oracle = 1.0 + (dist.moment_oracle(spec).m4 - 1.0) / d
    assert target == 1.0  # purely quadratic above the diagonal
    assert abs(est - oracle) < 4 * se


def test_b1b_scale_stability(rng_factory):
    # |d E[(S-I)_12^2] - 1| sqrt(d) stays bounded across d (xi = 1/2 regime)
    mono = mo.MonomialSpec(pairs=((1, 2), (1, 2)))
    spec_raw = {"family": "iid-marginal", "marginal": "uniform"}
    devs, noises = [], []
    for d in (100, 400, 1600):
        spec = dist.DistributionSpec.from_json(dict(spec_raw, d=d))
        est, se, _ = mo.estimate_monomial_mean(spec, d, mono, 40_000,
                                               rng_factory(f"scale-{d}"))
        devs.append(abs(est - 1.0) * math.sqrt(d))
        noises.append(se * math.sqrt(d))
    assert devs[-1] <= devs[0] + 4 * (noises[0] + noises[-1])


def test_b1c_structure_validation(rng_factory):
    rng = rng_factory("b1c-bad")
    g3 = mo.cycle_monomial(3)
    with pytest.raises(InvalidStructureError):  # deg(H) >= g
        mo.estimate_b1c(dist.gaussian(50), 50, g3,
                        mo.MonomialSpec(pairs=((1, 2), (2, 3), (1, 3))), 100, rng)
    with pytest.raises(InvalidStructureError):  # deg(H) < 2
        mo.estimate_b1c(dist.gaussian(50), 50, g3, mo.MonomialSpec(pairs=((1, 2),)), 100, rng)
    with pytest.raises(InvalidStructureError):  # H misses a cycle vertex
        mo.estimate_b1c(dist.gaussian(50), 50, g3,
                        mo.MonomialSpec(pairs=((1, 2), (1, 2))), 100, rng)
    with pytest.raises(InvalidStructureError):  # G not a canonical cycle
        mo.estimate_b1c(dist.gaussian(50), 50, mo.MonomialSpec(pairs=((1, 2), (2, 3))),
                        mo.MonomialSpec(pairs=((1, 2), (2, 3))), 100, rng)


def test_b1c_gaussian_vanishes(rng_factory):
    g3 = mo.cycle_monomial(3)
    h = mo.MonomialSpec(pairs=((1, 2), (2, 3)))
    est, se = mo.estimate_b1c(dist.gaussian(200), 200, g3, h, 30_000, rng_factory("b1c-g"))
    assert abs(est) < 4 * se


def test_b1c_decays_with_dimension(rng_factory):
    g3 = mo.cycle_monomial(3)
    h = mo.MonomialSpec(pairs=((1, 2), (2, 3)))
    spec_raw = {"family": "iid-marginal", "marginal": "exponential"}
    est100, se100 = mo.estimate_b1c(
        dist.DistributionSpec.from_json(dict(spec_raw, d=100)), 100, g3, h, 60_000,
        rng_factory("b1c-100"))
    est400, se400 = mo.estimate_b1c(
        dist.DistributionSpec.from_json(dict(spec_raw, d=400)), 400, g3, h, 60_000,
        rng_factory("b1c-400"))
    joint = math.sqrt(se100**2 + se400**2)
    assert abs(est400) < abs(est100) + 4 * joint
    assert est400 - est100 < 4 * joint  # ratio-test direction


@pytest.mark.parametrize("marginal,analytic_b", [
    ("uniform", 0.0), ("exponential", 4.0), ("triangular", 0.0),
])
def test_prop5_cases(rng_factory, marginal, analytic_b):
    d = 100
    spec = dist.iid_marginal(marginal, d)
    om = dist.moment_oracle(spec)
    res = mo.prop5_special_cases(spec, d, 50_000, rng_factory(f"p5-{marginal}"))
    assert res.analytic == (om.m4 - 3.0, om.m3**2, (om.m4**2 - 9.0) / d)
    assert res.analytic[1] == analytic_b
    for (est, se), target in zip((res.case_a, res.case_b, res.case_c), res.analytic):
        assert abs(est - target) < 4 * se


def test_prop5_gaussian_all_zero(rng_factory):
    res = mo.prop5_special_cases(dist.gaussian(100), 100, 50_000, rng_factory("p5-g"))
    for (est, se), target in zip((res.case_a, res.case_b, res.case_c), res.analytic):
        assert target == 0.0
        assert abs(est) < 4 * se


def test_gaussian_reference_limit_and_stability(rng_factory):
    # k=1 limit: E|N(0,2)|^3.5 = 2^(7/4) E|N(0,1)|^3.5
    limit = 2.0**1.75 * 2.0**1.75 * math.gamma(2.25) / math.sqrt(math.pi)
    ref_hi = mo.gaussian_reference(1, 3200, 30_000, rng_factory("gref-hi"))
    assert abs(ref_hi.alpha_star - limit) < 4 * ref_hi.alpha_se + 0.05 * limit
    ref_a = mo.gaussian_reference(2, 200, 15_000, rng_factory("gref-a"))
    ref_b = mo.gaussian_reference(2, 800, 15_000, rng_factory("gref-b"))
    joint = math.sqrt(ref_a.alpha_se**2 + ref_b.alpha_se**2)
    assert abs(ref_a.alpha_star - ref_b.alpha_star) < 4 * joint + 0.05 * ref_a.alpha_star
    assert ref_a.beta_star >= 0.0 and ref_a.beta_details


def test_estimated_constants_bundle(rng_factory):
    spec = dist.iid_marginal("uniform", 100)
    cons = mo.estimated_constants(spec, 100, 2, 4000, rng_factory("cons"))
    assert cons.alpha >= 1.0 and cons.beta > 0.0 and cons.D == 1.0


def test_monomial_means_close_to_gaussian_reference(rng_factory):
    # |E H - E H*| <= d^(-h/2) (alpha + alpha*) + 8 joint SE for each
    # canonical monomial of degree <= 4 over k = 4 blocks
    d, k, n = 100, 4, 20_000
    spec = dist.iid_marginal("exponential", d)
    gspec = dist.gaussian(d)
    alpha, _ = mo.estimate_b1a(spec, d, k, 0.5, 4000, rng_factory("p5i-a"))
    alpha_star, _ = mo.estimate_b1a(gspec, d, k, 0.5, 4000, rng_factory("p5i-as"))
    for mono in mo.canonical_monomials(k):
        h = mono.degree
        scale = d ** (h / 2.0)
        est, se, _ = mo.estimate_monomial_mean(spec, d, mono, n, rng_factory("p5i-z"), k=k)
        est_g, se_g, _ = mo.estimate_monomial_mean(gspec, d, mono, n, rng_factory("p5i-v"), k=k)
        diff = abs(est - est_g) / scale  # back to the unscaled means
        joint = math.sqrt(se**2 + se_g**2) / scale
        assert diff <= d ** (-h / 2.0) * (alpha + alpha_star) + 8 * joint, mono.pairs
