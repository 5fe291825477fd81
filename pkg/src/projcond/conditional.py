"""Monte Carlo estimation of conditional moments given a projection.

Two inner engines are provided.

* ``ratio``: the change-of-measure estimator.  Draws W = Bx + (I - BB')V
  with V standard Gaussian and weighs by f(W)/phi(W).  The Gaussian-exact
  moments of V (E V = 0, E VV' = I) are used as control variates, so for the
  Gaussian law the estimates collapse to their exact values (h = 1,
  mu = Bx, Delta = 0) with zero variance.  The weight has bounded-support
  collapse in high dimension for the compactly supported marginals (the
  support hit probability decays geometrically in d), so this engine is
  meant for exact checks at small d and for the Gaussian at any d.

* ``kernel``: forward sampling plus kernel regression on the projected
  coordinate.  Draws a pool Z_i ~ f, weighs by a Gaussian kernel in
  B'Z_i - x, and reports Nadaraya-Watson moments.  Dimension enters only
  through the averaging, so this engine scales to d in the hundreds and is
  the default for non-Gaussian laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import eigsh

from .distributions import (
    DistributionSpec,
    gaussian_log_density_batch,
    log_density_batch,
    sample_z,
)
from .errors import DegenerateDensityError, InvalidDimensionError
from .linalg import as_stiefel
from .bounds import PART_A, balanced_tuning

_JACKKNIFE_BLOCKS = 20


@dataclass
class ConditionalEstimates:
    """Ratio-engine estimates of h(x|B), mu_(x|B) and ||Delta_(x|B)||."""

    h_hat: float
    h_se: float
    mu_hat: np.ndarray
    mu_se: np.ndarray
    delta_op_norm_hat: float | None
    delta_se: float | None
    n_inner: int

    def mu_deviation(self, B, x) -> float:
        b = as_stiefel(B).entries
        return float(np.linalg.norm(self.mu_hat - b @ np.atleast_1d(x)))


def _ratio_conditional(
    spec: DistributionSpec,
    B,
    x,
    n: int,
    rng: np.random.Generator,
    second_moment: bool = True,
    batch: int = 20000,
) -> ConditionalEstimates:
    B = as_stiefel(B)
    d, p = B.d, B.p
    x = np.atleast_1d(np.asarray(x, dtype=float))
    b = B.entries
    bx = b @ x
    nblocks = min(_JACKKNIFE_BLOCKS, n)
    sizes = np.full(nblocks, n // nblocks)
    sizes[: n % nblocks] += 1

    s_r = np.zeros(nblocks)
    s_r2 = np.zeros(nblocks)
    s_v = np.zeros((nblocks, d))
    s_vr = np.zeros((nblocks, d))
    s_vv = np.zeros((nblocks, d, d)) if second_moment else None
    s_vvr = np.zeros((nblocks, d, d)) if second_moment else None

    for blk, size in enumerate(sizes):
        done = 0
        while done < size:
            nb = min(batch, size - done)
            v = rng.standard_normal((nb, d))
            w = bx[None, :] + v - (v @ b) @ b.T
            log_r = log_density_batch(spec, w) - gaussian_log_density_batch(w)
            r = np.exp(log_r)
            ones = np.ones(nb)
            s_r[blk] += float(np.sum(r))
            s_r2[blk] += float(np.sum(r * r))
            # identical accumulation kernels for the weighted and unweighted
            # sums, so a constant ratio cancels bitwise in the control variate
            s_v[blk] += ones @ v
            s_vr[blk] += r @ v
            if second_moment:
                s_vv[blk] += np.einsum("n,ni,nj->ij", ones, v, v)
                s_vvr[blk] += np.einsum("n,ni,nj->ij", r, v, v)
            done += nb

    def assemble(mask):
        nn = float(sizes[mask].sum())
        h = float(s_r[mask].sum()) / nn
        if h <= 0.0:
            return h, None, None
        rbar = h
        m_vec = (s_vr[mask].sum(axis=0) - rbar * s_v[mask].sum(axis=0)) / (nn * h)
        m_perp = m_vec - b @ (b.T @ m_vec)
        mu = bx + m_perp
        delta_norm = None
        if second_moment:
            d_mat = (s_vvr[mask].sum(axis=0) - rbar * s_vv[mask].sum(axis=0)) / (nn * h)
            p_d_p = d_mat - b @ (b.T @ d_mat)
            p_d_p = p_d_p - (p_d_p @ b) @ b.T
            delta = np.outer(bx, m_perp) + np.outer(m_perp, bx) + p_d_p
            delta = 0.5 * (delta + delta.T)
            delta_norm = float(np.max(np.abs(np.linalg.eigvalsh(delta))))
        return h, mu, delta_norm

    full_mask = np.ones(nblocks, dtype=bool)
    h_hat, mu_hat, delta_hat = assemble(full_mask)
    h_var = max(float(s_r2.sum()) / n - h_hat**2, 0.0)
    h_se = math.sqrt(h_var / n)

    mus = np.zeros((nblocks, d))
    deltas = np.zeros(nblocks)
    usable = mu_hat is not None
    if usable:
        for blk in range(nblocks):
            mask = full_mask.copy()
            mask[blk] = False
            h_b, mu_b, del_b = assemble(mask)
            if mu_b is None:
                usable = False
                break
            mus[blk] = mu_b
            deltas[blk] = del_b if second_moment else 0.0
    if usable:
        fac = (nblocks - 1) / nblocks
        mu_se = np.sqrt(fac * np.sum((mus - mus.mean(axis=0)) ** 2, axis=0))
        delta_se = math.sqrt(fac * float(np.sum((deltas - deltas.mean()) ** 2)))
    else:
        mu_se = np.full(d, np.nan)
        delta_se = float("nan")

    return ConditionalEstimates(
        h_hat=h_hat,
        h_se=h_se,
        mu_hat=mu_hat if mu_hat is not None else np.full(d, np.nan),
        mu_se=mu_se,
        delta_op_norm_hat=delta_hat if second_moment else None,
        delta_se=delta_se if second_moment else None,
        n_inner=n,
    )


def estimate_h(spec: DistributionSpec, B, x, n: int, rng: np.random.Generator):
    """Mean of f(W)/phi(W) over W = Bx + (I-BB')V; returns (h_hat, se)."""
    if n < 1000:
        raise InvalidDimensionError("need n >= 10^3")
    est = _ratio_conditional(spec, B, x, n, rng, second_moment=False)
    return est.h_hat, est.h_se


def _require_nondegenerate(est: ConditionalEstimates):
    if not (est.h_hat > 10.0 * est.h_se) or est.h_hat <= 0.0:
        raise DegenerateDensityError(
            f"h estimate {est.h_hat:.3e} within noise (se {est.h_se:.3e}); "
            "conditional moments are unidentified at this x"
        )


def estimate_mu(spec: DistributionSpec, B, x, n: int, rng: np.random.Generator):
    """Ratio estimate of E[Z | B'Z = x]; returns (mu_hat, componentwise se)."""
    est = _ratio_conditional(spec, B, x, n, rng, second_moment=False)
    _require_nondegenerate(est)
    return est.mu_hat, est.mu_se


def estimate_delta(spec: DistributionSpec, B, x, n: int, rng: np.random.Generator):
    """Operator norm of the conditional second-moment deviation, with se."""
    B = as_stiefel(B)
    est = _ratio_conditional(spec, B, x, n, rng, second_moment=True)
    _require_nondegenerate(est)
    return est.delta_op_norm_hat, est.delta_se


def conditional_estimates(
    spec: DistributionSpec, B, x, n: int, rng: np.random.Generator
) -> ConditionalEstimates:
    return _ratio_conditional(spec, B, x, n, rng, second_moment=True)


# ---------------------------------------------------------------------------
# forward kernel engine


@dataclass
class ForwardPool:
    """A forward sample pool with its projected coordinates."""

    b: np.ndarray        # d x p
    z: np.ndarray        # n x d (float32 to keep large-d pools affordable)
    proj: np.ndarray     # n x p
    bandwidth: float

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]

    @property
    def p(self) -> int:
        return self.b.shape[1]


def build_pool(
    spec: DistributionSpec,
    B,
    n_pool: int,
    rng: np.random.Generator,
    bandwidth: float | None = None,
    chunk: int = 20000,
) -> ForwardPool:
    B = as_stiefel(B)
    z = np.empty((n_pool, B.d), dtype=np.float32)
    proj = np.empty((n_pool, B.p))
    done = 0
    while done < n_pool:
        nb = min(chunk, n_pool - done)
        block = sample_z(spec, nb, rng)
        z[done: done + nb] = block
        proj[done: done + nb] = block @ B.entries
        done += nb
    if B.p == 1:
        # sorted by projection: every kernel window is a contiguous slice
        order = np.argsort(proj[:, 0], kind="stable")
        z = np.ascontiguousarray(z[order])
        proj = proj[order]
    if bandwidth is None:
        # projections of a standardized vector have unit variance
        bandwidth = 1.06 * n_pool ** (-1.0 / (B.p + 4))
    return ForwardPool(b=B.entries, z=z, proj=proj, bandwidth=float(bandwidth))


def _bandwidth_at(pool: ForwardPool, x: np.ndarray) -> float:
    """Balloon bandwidth: widen in the projection tails to keep the local
    effective sample size roughly constant.

    The projection of a standardized vector is approximately standard
    Gaussian, so the local density falls off like phi_p(x); the bandwidth is
    scaled by (phi_p(0)/phi_p(x))^(1/p), capped at a factor of 3.
    """
    factor = min(3.0, math.exp(float(x @ x) / (2.0 * pool.p)))
    return pool.bandwidth * factor


def _window_slice(pool: ForwardPool, x: np.ndarray):
    """Contiguous window within 4 kernel widths for sorted p = 1 pools."""
    h = _bandwidth_at(pool, x)
    col = pool.proj[:, 0]
    lo = int(np.searchsorted(col, x[0] - 4.0 * h, side="left"))
    hi = int(np.searchsorted(col, x[0] + 4.0 * h, side="right"))
    u = (col[lo:hi] - x[0]) / h
    return lo, hi, np.exp(-0.5 * u * u)


def _nearest_block(sorted_vals: np.ndarray, x0: float, cap: int):
    """Start/stop of the cap nearest entries of a sorted array around x0."""
    n = sorted_vals.shape[0]
    if n <= cap:
        return 0, n
    left = int(np.searchsorted(sorted_vals, x0))
    a_min = max(0, left - cap)
    a_max = max(a_min, min(left, n - cap))
    cand = np.arange(a_min, a_max + 1)
    cost = np.maximum(x0 - sorted_vals[cand], sorted_vals[cand + cap - 1] - x0)
    a = int(cand[np.argmin(cost)])
    return a, a + cap


def _pool_weights(pool: ForwardPool, x: np.ndarray):
    """Indices and weights within 4 kernel widths (general-p path)."""
    u = (pool.proj - x[None, :]) / _bandwidth_at(pool, x)
    dist_sq = np.einsum("np,np->n", u, u)
    idx = np.flatnonzero(dist_sq < 16.0)
    w = np.exp(-0.5 * dist_sq[idx])
    return idx, w


def kernel_h(pool: ForwardPool, x) -> float:
    """Projected density at x relative to the standard Gaussian density."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if pool.p == 1:
        _, _, w = _window_slice(pool, x)
    else:
        _, w = _pool_weights(pool, x)
    p = pool.p
    h = _bandwidth_at(pool, x)
    f_hat = float(np.sum(w)) / (pool.n * (2 * math.pi) ** (p / 2) * h**p)
    log_phi = -0.5 * float(x @ x) - 0.5 * p * math.log(2 * math.pi)
    return f_hat / math.exp(log_phi)


def kernel_mu(pool: ForwardPool, x, noise_cap: int = 4000):
    """Kernel-regression estimate of E[Z | B'Z = x] and its noise scale.

    Returns (mu_hat, proj_mean, noise_norm): the weighted mean of the pool,
    the weighted mean of its projections (the matched smoothing target for
    Bx), and the approximate root mean squared norm of the sampling error
    (computed on the highest-weight subset, which carries almost all of the
    variance).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if pool.p == 1:
        lo, hi, w = _window_slice(pool, x)
        zw, pw = pool.z[lo:hi], pool.proj[lo:hi]
    else:
        idx, w = _pool_weights(pool, x)
        zw, pw = pool.z[idx], pool.proj[idx]
    sw = float(np.sum(w))
    if sw <= 0.0 or w.shape[0] < 2:
        raise DegenerateDensityError(f"no pool mass near x = {x}")
    wf = w.astype(np.float32)
    mu = (wf @ zw).astype(np.float64) / sw
    proj_mean = (w @ pw) / sw
    if w.shape[0] > noise_cap:
        if pool.p == 1:
            a, b = _nearest_block(pw[:, 0], float(x[0]), noise_cap)
            zl, wl = zw[a:b], w[a:b]
        else:
            keep = np.argpartition(-w, noise_cap)[:noise_cap]
            zl, wl = zw[keep], w[keep]
    else:
        zl, wl = zw, w
    resid_sq = (wl**2) @ np.asarray(
        (zl - mu.astype(np.float32)) ** 2, dtype=np.float64
    )
    noise = math.sqrt(float(np.sum(resid_sq))) / sw
    return mu, proj_mean, noise


def kernel_mu_deviation(pool: ForwardPool, x):
    """||mu_hat - B proj_mean||: the smoothed conditional-mean deviation.

    Comparing the smoothed conditional mean against the equally smoothed
    projection (rather than the point value Bx) cancels the first-order
    kernel bias, which otherwise dominates in the projection tails.
    """
    mu, proj_mean, noise = kernel_mu(pool, x)
    return float(np.linalg.norm(mu - pool.b @ proj_mean)), noise


def kernel_delta_norm(pool: ForwardPool, x, cap: int = 30000):
    """Operator norm of the smoothed conditional second-moment deviation.

    Compares Ehat_w[ZZ'] against I + B(Ehat_w[(B'Z)(B'Z)'] - I_p)B', i.e.
    the projection block of the target is smoothed with the same weights,
    cancelling the first-order kernel bias.  When more than ``cap`` pool
    points fall inside the kernel window, only the ``cap`` highest-weight
    points are kept (a locally narrowed bandwidth); the weighted second
    moment is then accumulated with one float32 GEMM.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if pool.p == 1:
        lo, hi, w = _window_slice(pool, x)
        if hi - lo > cap:
            a, b_idx = _nearest_block(pool.proj[lo:hi, 0], float(x[0]), cap)
            lo, hi = lo + a, lo + b_idx
            w = w[a:b_idx]
        zl, proj_l = pool.z[lo:hi], pool.proj[lo:hi]
    else:
        idx, w = _pool_weights(pool, x)
        if idx.size > cap:
            keep = np.argpartition(-w, cap)[:cap]
            idx, w = idx[keep], w[keep]
        zl, proj_l = pool.z[idx], pool.proj[idx]
    if w.shape[0] < 2:
        raise DegenerateDensityError(f"no pool mass near x = {x}")
    sw = float(np.sum(w))
    b = pool.b
    d = pool.d
    proj_second = np.einsum("n,ni,nj->ij", w, proj_l, proj_l) / sw
    shift = proj_second - np.eye(pool.p)
    xw = zl * np.sqrt(w, dtype=np.float32)[:, None]
    gram = (xw.T @ xw).astype(np.float64)
    delta = gram / sw - np.eye(d) - b @ shift @ b.T
    if d <= 256:
        return float(np.max(np.abs(np.linalg.eigvalsh(delta))))
    vals = eigsh(delta, k=1, which="LM", tol=1e-4, return_eigenvectors=False,
                 maxiter=500)
    return float(np.abs(vals[0]))


# ---------------------------------------------------------------------------
# deviation probabilities and the good-set membership test


def _resolve_engine(engine: str, spec: DistributionSpec) -> str:
    if engine == "auto":
        return "ratio" if spec.family == "gaussian" else "kernel"
    if engine not in ("ratio", "kernel"):
        raise InvalidDimensionError(f"unknown engine '{engine}'")
    return engine


@dataclass
class DeviationProbability:
    """Estimated P(||mu_hat - Bx|| > t) and P(||Delta_hat|| > t).

    The probabilities concern exact conditional moments which the inner
    loop only approximates; inner noise floors are reported so estimates
    are read as upper-bounded by noise.
    """

    t: float
    mean_prob: float
    mean_se: float
    var_prob: float | None
    var_se: float | None
    noise_floor_mu: float
    n_outer: int
    n_inner: int
    engine: str


def deviation_probability(
    spec: DistributionSpec,
    B,
    t: float,
    n_outer: int,
    n_inner: int,
    rng: np.random.Generator,
    engine: str = "auto",
    include_variance: bool = True,
    bandwidth: float | None = None,
) -> DeviationProbability:
    """Outer-loop deviation frequencies for the conditional mean/variance.

    Each outer draw sets x = B'Z for a fresh Z; the inner engine estimates
    mu and Delta at that x, and the indicator of a deviation beyond t is
    averaged.
    """
    if n_outer < 100:
        raise InvalidDimensionError("need n_outer >= 10^2")
    if n_inner < 1000:
        raise InvalidDimensionError("need n_inner >= 10^3")
    B = as_stiefel(B)
    engine = _resolve_engine(engine, spec)
    b = B.entries
    z_outer = sample_z(spec, n_outer, rng)
    xs = z_outer @ b

    pool = None
    if engine == "kernel":
        pool = build_pool(spec, B, n_pool=n_inner, rng=rng, bandwidth=bandwidth)

    mean_hits = 0
    var_hits = 0
    noise_acc = 0.0
    for j in range(n_outer):
        x = xs[j]
        if engine == "ratio":
            est = _ratio_conditional(spec, B, x, n_inner, rng,
                                     second_moment=include_variance)
            if est.h_hat <= 0.0:
                # no usable weight: the estimator carries no information here
                dev_mu = math.inf
                dev_delta = math.inf
                noise = math.inf
            else:
                dev_mu = float(np.linalg.norm(est.mu_hat - b @ x))
                dev_delta = est.delta_op_norm_hat if include_variance else None
                noise = float(np.linalg.norm(est.mu_se))
        else:
            dev_mu, noise = kernel_mu_deviation(pool, x)
            dev_delta = kernel_delta_norm(pool, x) if include_variance else None
        mean_hits += dev_mu > t
        if include_variance:
            var_hits += dev_delta > t
        noise_acc += noise

    mean_p = mean_hits / n_outer
    var_p = var_hits / n_outer if include_variance else None

    def binom(q):
        return math.sqrt(q * (1.0 - q) / n_outer)

    return DeviationProbability(
        t=t,
        mean_prob=mean_p,
        mean_se=binom(mean_p),
        var_prob=var_p,
        var_se=binom(var_p) if include_variance else None,
        noise_floor_mu=noise_acc / n_outer,
        n_outer=n_outer,
        n_inner=n_inner,
        engine=engine,
    )


@dataclass
class GMembershipReport:
    """Membership test for the good set of frames.

    member is the point-estimate rule integral_hat <= delta_d; the standard
    error is reported alongside.  When M_d <= 1 the good set is the whole
    manifold and membership holds unconditionally.
    """

    M_d: float
    delta_d: float
    integral_hat: float
    integral_se: float
    member: bool
    n_x: int
    engine: str


def g_membership(
    spec: DistributionSpec,
    B,
    tau: float,
    gamma: float,
    n_x: int,
    n_inner: int,
    rng: np.random.Generator,
    xi_eff: float = 1.0 / 6.0,
    tau1: float | None = None,
    tau2: float | None = None,
    engine: str = "auto",
) -> GMembershipReport:
    """Estimate the defining integral of the good set and test membership.

    The integral of ||mu_(x|B) - Bx||^2 h(x|B)^2 over the Gaussian ball
    ||x|| <= M_d is estimated by rejection-sampled Gaussian x's; the
    ball probability rescales the conditional mean.  tau1/tau2 default to
    the balanced tuning given tau and xi_eff, but can be overridden.
    """
    from scipy.stats import chi2

    B = as_stiefel(B)
    d, p = B.d, B.p
    if d < 3:
        raise InvalidDimensionError("need d >= 3 so that log d > 1")
    if n_x < 100:
        raise InvalidDimensionError("need n_x >= 100")
    t1_default, t2_default = balanced_tuning(tau, xi_eff, PART_A)
    tau1 = t1_default if tau1 is None else tau1
    tau2 = t2_default if tau2 is None else tau2
    m_d = math.sqrt(tau1 * math.log(d) / gamma)
    delta_d = d ** (-tau2)
    engine = _resolve_engine(engine, spec)
    if m_d <= 1.0:
        return GMembershipReport(
            M_d=m_d, delta_d=delta_d, integral_hat=0.0, integral_se=0.0,
            member=True, n_x=0, engine=engine,
        )

    ball_prob = float(chi2.cdf(m_d**2, df=p))
    xs = np.empty((n_x, p))
    got = 0
    while got < n_x:
        cand = rng.standard_normal((max(64, n_x), p))
        keep = cand[np.einsum("np,np->n", cand, cand) <= m_d**2]
        take = min(n_x - got, keep.shape[0])
        xs[got: got + take] = keep[:take]
        got += take

    pool = build_pool(spec, B, n_pool=n_inner, rng=rng) if engine == "kernel" else None
    b = B.entries
    vals = np.empty(n_x)
    for j in range(n_x):
        x = xs[j]
        if engine == "ratio":
            est = _ratio_conditional(spec, B, x, n_inner, rng, second_moment=False)
            h_val = est.h_hat
            dev_sq = float(np.sum((est.mu_hat - b @ x) ** 2)) if h_val > 0 else 0.0
        else:
            h_val = kernel_h(pool, x)
            dev, _ = kernel_mu_deviation(pool, x)
            dev_sq = dev**2
        vals[j] = dev_sq * h_val**2
    integral = ball_prob * float(np.mean(vals))
    se = ball_prob * float(np.std(vals)) / math.sqrt(n_x)
    return GMembershipReport(
        M_d=m_d, delta_d=delta_d, integral_hat=integral, integral_se=se,
        member=bool(integral <= delta_d), n_x=n_x, engine=engine,
    )
