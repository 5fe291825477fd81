"""Rotational clones and their exact joint density ratio.

Clones are W_j = Bx + (I - BB')V_j for a Haar-distributed frame B and i.i.d.
standard Gaussian V_j: k vectors sharing the same projection x.  Their joint
density relative to i.i.d. standard Gaussians depends on the observed vectors
only through the scaled Gram matrix S_k and ||x||, which this module
evaluates entirely in the log domain.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DimensionMismatchError, InvalidChainError, InvalidDimensionError
from .linalg import StiefelMatrix, as_stiefel, haar_stiefel_batch


@dataclass(frozen=True)
class CloneDraw:
    """One batch of clones: W_j = Bx + (I - BB')V_j, j = 1..k."""

    B: StiefelMatrix
    x: np.ndarray
    W: np.ndarray  # k x d
    V: np.ndarray  # k x d

    def __post_init__(self):
        b = self.B.entries
        err = np.max(np.abs(self.W @ b - self.x[None, :]))
        if err > 1e-10:
            raise DimensionMismatchError(f"B'W_j != x (max error {err:.3e})")


@dataclass(frozen=True)
class DensityRatioValue:
    """log of the clone density ratio; -inf when outside the support."""

    log_ratio: float
    in_domain: bool


def _mutation_factor() -> float:
    # test hook: lets the verification harness check that a corrupted
    # normalizing constant is caught by the acceptance suite
    if os.environ.get("PROJCOND_MUTATE", "") == "eta":
        return 1.05
    return 1.0


def log_eta(d: int, p: int, k: int) -> float:
    """log of the normalizing constant eta(d, p, k)."""
    if p == 0:  # degenerate hook: empty product, zero exponent
        return 0.0
    if not 1 <= k <= d - p:
        raise InvalidDimensionError(f"need 1 <= k <= d - p, got k={k}, d-p={d - p}")
    i = np.arange(1, k + 1)
    val = -0.5 * k * p * math.log(d / 2.0) + float(
        np.sum(gammaln((d - i + 1) / 2.0) - gammaln((d - p - i + 1) / 2.0))
    )
    return val * _mutation_factor()


def eta_norm_const(d: int, p: int, k: int) -> float:
    return math.exp(log_eta(d, p, k))


def eta_norm_const_bound(d: int, p: int, k: int) -> float:
    """Closed-form upper bound on eta(d, p, k); valid for k < d - p - 1."""
    if not 1 <= k < d - p - 1:
        raise InvalidDimensionError(f"bound needs 1 <= k < d - p - 1, got k={k}")
    return math.exp((p**2 / d) * (1.0 - (p + k - 1) / d) ** (-1) * k**2 / 2.0)


def sample_clones(B, x, k: int, rng: np.random.Generator) -> CloneDraw:
    """Draw k clones sharing the projection x along the frame B."""
    B = as_stiefel(B)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != B.p:
        raise DimensionMismatchError(f"x has length {x.shape[0]}, expected {B.p}")
    if k < 1:
        raise InvalidDimensionError("need k >= 1")
    b = B.entries
    v = rng.standard_normal((k, B.d))
    w = b @ x + v - (v @ b) @ b.T
    return CloneDraw(B=B, x=x, W=w, V=v)


def log_density_ratio_gram(
    x_norm_sq: float, gram: np.ndarray, d: int, p: int
) -> DensityRatioValue:
    """Density ratio from the scaled Gram matrix S_k = (w_i'w_j / d).

    In the support (S_k invertible with ||x||^2 iota'S_k^{-1} iota < d) the
    log-ratio is

        log eta(d,p,k) - (p/2) logdet S_k
        + ((d-p-k-1)/2) log(1 - ||x||^2 iota'S_k^{-1} iota / d)
        + k ||x||^2 / 2,

    and -inf otherwise.  The Gram solve replaces any explicit inverse; a
    failed solve means the density is zero.
    """
    s = np.asarray(gram, dtype=float)
    k = s.shape[0]
    if not 1 <= k <= d - p:
        raise InvalidDimensionError(f"need 1 <= k <= d - p, got k={k}, d-p={d - p}")
    sign, logdet = np.linalg.slogdet(s)
    if sign <= 0 or not np.isfinite(logdet):
        return DensityRatioValue(log_ratio=-np.inf, in_domain=False)
    try:
        v = np.linalg.solve(s, np.ones(k))
    except np.linalg.LinAlgError:
        return DensityRatioValue(log_ratio=-np.inf, in_domain=False)
    quad = x_norm_sq * float(np.sum(v)) / d
    if not np.isfinite(quad) or quad >= 1.0:
        return DensityRatioValue(log_ratio=-np.inf, in_domain=False)
    val = (
        log_eta(d, p, k)
        - 0.5 * p * logdet
        + 0.5 * (d - p - k - 1) * math.log1p(-quad)
        + 0.5 * k * x_norm_sq
    )
    return DensityRatioValue(log_ratio=float(val), in_domain=True)


def clone_log_density_ratio(x, vectors, p: int) -> DensityRatioValue:
    """Density ratio of k observed d-vectors sharing projection x."""
    w = np.atleast_2d(np.asarray(vectors, dtype=float))
    k, d = w.shape
    if k > d - p:
        raise InvalidDimensionError(f"need k <= d - p, got k={k}, d-p={d - p}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    gram = w @ w.T / d
    gram = np.triu(gram) + np.triu(gram, 1).T
    return log_density_ratio_gram(float(x @ x), gram, d, p)


def log_density_ratio_batch(
    x_norm_sq: float, vectors: np.ndarray, p: int
) -> np.ndarray:
    """Vectorized log density ratio over a (n, k, d) batch of vectors."""
    n, k, d = vectors.shape
    if k > d - p:
        raise InvalidDimensionError(f"need k <= d - p, got k={k}, d-p={d - p}")
    gram = np.einsum("nkd,nld->nkl", vectors, vectors) / d
    sign, logdet = np.linalg.slogdet(gram)
    ones = np.ones(k)
    out = np.full(n, -np.inf)
    ok = sign > 0
    if np.any(ok):
        rhs = np.ones((int(ok.sum()), k, 1))
        sol = np.linalg.solve(gram[ok], rhs)[..., 0]
        quad = x_norm_sq * np.sum(sol, axis=1) / d
        good = np.isfinite(quad) & (quad < 1.0)
        vals = (
            log_eta(d, p, k)
            - 0.5 * p * logdet[ok]
            + 0.5 * (d - p - k - 1) * np.log1p(-np.where(good, quad, 0.0))
            + 0.5 * k * x_norm_sq
        )
        res = np.where(good, vals, -np.inf)
        out[np.flatnonzero(ok)] = res
    return out


def _validate_chain(chain, k: int) -> tuple[int, ...]:
    idx = tuple(int(j) for j in chain)
    if len(idx) < 1 or idx[0] != 0:
        raise InvalidChainError("chain indices must start with j_0 = 0")
    for a, b in zip(idx, idx[1:]):
        if not a + 1 < b:
            raise InvalidChainError(f"need j_(i-1) + 1 < j_i, got {a} then {b}")
    if idx[-1] > k:
        raise InvalidChainError(f"j_m = {idx[-1]} exceeds k = {k}")
    return idx


def _chain_statistic(w: np.ndarray, idx: tuple[int, ...]) -> np.ndarray:
    """Product over chains of consecutive inner products of the clones.

    For each segment (j_(i-1), j_i], multiplies W_a'W_{a+1} ... W_{b-1}'W_b;
    an empty index set gives the constant 1.
    """
    n = w.shape[0]
    stat = np.ones(n)
    for a, b in zip(idx, idx[1:]):
        for j in range(a, b - 1):
            stat = stat * np.einsum("nd,nd->n", w[:, j], w[:, j + 1])
    return stat


def _cycle_statistic(w: np.ndarray, j: int) -> np.ndarray:
    """W_1'W_2 W_2'W_3 ... W_j W_j'W_1 (the squared norm when j = 1)."""
    if j == 1:
        return np.einsum("nd,nd->n", w[:, 0], w[:, 0])
    stat = np.einsum("nd,nd->n", w[:, 0], w[:, 1])
    for i in range(1, j - 1):
        stat = stat * np.einsum("nd,nd->n", w[:, i], w[:, i + 1])
    return stat * np.einsum("nd,nd->n", w[:, j - 1], w[:, 0])


def _sample_clone_batch(
    x: np.ndarray, d: int, p: int, k: int, n: int, rng: np.random.Generator
) -> np.ndarray:
    b = haar_stiefel_batch(d, p, n, rng)
    v = rng.standard_normal((n, k, d))
    bv = np.einsum("ndp,nkd->nkp", b, v)
    return np.einsum("ndp,p->nd", b, x)[:, None, :] + v - np.einsum("nkp,ndp->nkd", bv, b)


def gaussian_chain_identity(
    x, d: int, p: int, k: int, chain, n: int, rng: np.random.Generator,
    batch: int = 20000,
):
    """Monte Carlo check of the exact clone-moment identities.

    For ``chain`` a tuple (0, j_1, ..., j_m), estimates
    E[prod of chain inner products of W] - ||x||^(2(j_m - m)), which is
    exactly zero.  For ``chain = "alternating"`` estimates the signed
    binomial combination of cycle statistics minus (1 - ||x||^2)^k, also
    exactly zero (k even).  Returns (estimate, standard error).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != p:
        raise DimensionMismatchError(f"x has length {x.shape[0]}, expected {p}")
    if k > d - p:
        raise InvalidDimensionError(f"need k <= d - p, got k={k}, d-p={d - p}")
    xsq = float(x @ x)
    alternating = isinstance(chain, str)
    if alternating:
        if chain != "alternating":
            raise InvalidChainError(f"unknown chain keyword '{chain}'")
        if k % 2 != 0:
            raise InvalidChainError("the alternating-sum identity needs k even")
        target = (1.0 - xsq) ** k
    else:
        idx = _validate_chain(chain, k)
        m = len(idx) - 1
        target = xsq ** (idx[-1] - m)

    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n:
        nb = min(batch, n - done)
        w = _sample_clone_batch(x, d, p, k, nb, rng)
        if alternating:
            stat = np.zeros(nb)
            for j in range(1, k + 1):
                coef = (-1.0) ** (k - j) * math.comb(k, j)
                stat += coef * (_cycle_statistic(w, j) - d + p - 1.0)
        else:
            stat = _chain_statistic(w, idx)
        total += float(np.sum(stat))
        total_sq += float(np.sum(stat**2))
        done += nb
    mean = total / n
    var = max(total_sq / n - mean**2, 0.0)
    se = math.sqrt(var / n)
    return mean - target, se
