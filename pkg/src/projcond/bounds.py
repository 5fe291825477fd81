"""Closed-form deviation bounds and their asymptotic behaviour.

Everything here is scalar arithmetic, carried out in the log domain so that
formula-level scans can run at astronomically large dimensions (the scans
take log d as the grid variable).  The multiplicative constants kappa and g
are not pinned down by the theory; defaults of 1 are used and every reported
bound is to be read "up to those constants".  Bounds >= 1 carry no
information and are flagged vacuous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import GrowthConditionViolatedError, InvalidDimensionError, ProjcondError
from .moments import MomentConditionConstants

LOG_2_SQRT_PI_E = math.log(2.0) + 0.5 * (math.log(math.pi) + 1.0)  # log(2 sqrt(pi e))

PART_A = "A"
PART_B = "B"
_PART_SCALE = {PART_A: 3, PART_B: 5}
_PART_K = {PART_A: 2, PART_B: 4}


def xi_effective(xi: float, epsilon: float, part: str) -> float:
    """min{xi, eps/2 + 1/4, 1/2} divided by 3 (part A) or 5 (part B)."""
    return min(xi, epsilon / 2.0 + 0.25, 0.5) / _PART_SCALE[part]


def gamma_constant(g: float, D: float, part: str) -> float:
    """Tail constant: max{g, 6 + 2 log(2 D sqrt(pi e))} for part A and
    max{g, 10 + 4 log(2 D sqrt(pi e))} for part B."""
    ld = LOG_2_SQRT_PI_E + math.log(D)
    if part == PART_A:
        return max(g, 6.0 + 2.0 * ld)
    return max(g, 10.0 + 4.0 * ld)


def balanced_tuning(tau: float, xi_eff: float, part: str) -> tuple[float, float]:
    """Tuning exponents (tau_1, tau_2) that balance the two bound halves.

    Part A solves tau_1 + tau_2 - 3 xi_1 = -tau_2/2 and tau_2/2 = tau xi_1;
    part B solves tau_1 + tau_2 - 5 xi_2 = -tau_2/4 = -tau xi_2.
    """
    if part == PART_A:
        tau2 = 2.0 * tau * xi_eff
        tau1 = 3.0 * xi_eff * (1.0 - tau)
    else:
        tau2 = 4.0 * tau * xi_eff
        tau1 = 5.0 * xi_eff * (1.0 - tau)
    return tau1, tau2


def generic_bound(
    p: int, k: int, epsilon: float, g: float, M: float, D: float,
    d: float, xi: float, kappa: float,
) -> float:
    """kappa p^(2k+1+eps) e^(g M^2) (2 D sqrt(pi e))^(pk) d^(-min{xi, eps/2+1/4, 1/2})."""
    if d < 2:
        raise InvalidDimensionError("need d >= 2")
    if kappa == 0.0:
        return 0.0
    log_val = (
        math.log(kappa)
        + (2 * k + 1 + epsilon) * math.log(p)
        + g * M**2
        + p * k * (LOG_2_SQRT_PI_E + math.log(D))
        - min(xi, epsilon / 2.0 + 0.25, 0.5) * math.log(d)
    )
    return math.exp(log_val)


@dataclass(frozen=True)
class TheoremBoundInputs:
    d: float
    p: int
    t: float
    tau: float
    constants: MomentConditionConstants
    kappa: float = 1.0
    g: float = 1.0
    part: str = PART_A

    def __post_init__(self):
        if self.part not in (PART_A, PART_B):
            raise InvalidDimensionError("part must be 'A' or 'B'")
        if not self.p < self.d:
            raise InvalidDimensionError("need p < d")
        if not 0.0 < self.tau < 1.0:
            raise InvalidDimensionError("tau must lie in (0, 1)")
        if self.kappa < 0.0:
            raise InvalidDimensionError("kappa must be >= 0 (>= 1 for meaningful bounds)")
        if self.t <= 0.0:
            raise InvalidDimensionError("threshold t must be > 0")


@dataclass(frozen=True)
class TheoremBoundResult:
    xi_eff: float
    gamma: float
    deviation_bound: float
    nu_gc_bound: float
    deviation_vacuous: bool
    nu_gc_vacuous: bool
    log_deviation_bound: float
    log_nu_gc_bound: float


def _log_theorem_parts(
    log_d: float, p: int, t: float, tau: float,
    constants: MomentConditionConstants, kappa: float, g: float, part: str,
) -> tuple[float, float, float, float]:
    xi_eff = xi_effective(constants.xi, constants.epsilon, part)
    gamma = gamma_constant(g, constants.D, part)
    c = _PART_SCALE[part]
    log_first = -tau * xi_eff * log_d - math.log(t)
    log_second = (
        math.log(gamma) - math.log(1.0 - tau) + math.log(p) - math.log(c * xi_eff * log_d)
    )
    log_dev = np.logaddexp(log_first, log_second)
    log_nu = -tau * xi_eff * (1.0 - (gamma / tau) * p / (xi_eff * log_d)) * log_d
    if kappa > 0:
        log_nu += math.log(kappa)
    else:
        log_nu = -math.inf
    if part == PART_B:
        log_nu += math.log(2.0)
    return xi_eff, gamma, float(log_dev), float(log_nu)


def theorem_bound(inputs: TheoremBoundInputs) -> TheoremBoundResult:
    """Evaluate the two non-asymptotic bounds for the requested part.

    deviation_bound = (1/t) d^(-tau xi_eff) + gamma/(1-tau) p/(c xi_eff log d)
    and nu_gc_bound = kappa d^(-tau xi_eff (1 - (gamma/tau) p/(xi_eff log d)))
    with c = 3, kappa weight 1 for part A and c = 5, weight 2 for part B.
    """
    log_d = math.log(inputs.d)
    xi_eff, gamma, log_dev, log_nu = _log_theorem_parts(
        log_d, inputs.p, inputs.t, inputs.tau,
        inputs.constants, inputs.kappa, inputs.g, inputs.part,
    )
    dev = math.exp(log_dev) if log_dev < 700 else math.inf
    nu = math.exp(log_nu) if log_nu < 700 else math.inf
    return TheoremBoundResult(
        xi_eff=xi_eff,
        gamma=gamma,
        deviation_bound=dev,
        nu_gc_bound=nu,
        deviation_vacuous=bool(log_dev >= 0.0),
        nu_gc_vacuous=bool(log_nu >= 0.0),
        log_deviation_bound=log_dev,
        log_nu_gc_bound=log_nu,
    )


def applicability_thresholds(d: float, p: int, k: int, M: float):
    """Check d > max{4(k+p+1)M^4, 2k + p(2k+2)2^(k+3), p^2} (all strict).

    Returns (applicable, margins) where margins lists each threshold.
    """
    t1 = 4.0 * (k + p + 1) * M**4
    t2 = 2.0 * k + p * (2 * k + 2) * 2.0 ** (k + 3)
    t3 = float(p**2)
    margins = {
        "taylor": t1,
        "density_moment": t2,
        "p_squared": t3,
        "required": max(t1, t2, t3),
        "d": float(d),
    }
    return bool(d > max(t1, t2, t3)), margins


@dataclass
class ScanRow:
    log_d: float
    p: int
    ratio: float  # p / (xi log d), the growth-condition quantity
    log_deviation_bound: float
    log_nu_gc_bound: float
    deviation_bound: float
    nu_gc_bound: float
    vacuous: bool


def asymptotic_scan(
    constants: MomentConditionConstants,
    p_rule: Callable[[float], int],
    log_d_grid,
    tau: float = 0.5,
    t: float = 1.0,
    kappa: float = 1.0,
    g: float = 1.0,
    part: str = PART_B,
) -> list[ScanRow]:
    """Formula-level scan of the bounds along a grid of log d values.

    p_rule maps log d to the projection dimension p_d.  The growth condition
    p_d/(xi_eff log d) -> 0 is checked as a trend: the ratio must be strictly
    decreasing along the grid and its final value at most half the initial
    one.  Both bounds are evaluated in the log domain, so the grid may reach
    log d = 10^6 and beyond.
    """
    grid = [float(v) for v in log_d_grid]
    if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidDimensionError("log_d_grid must be increasing with >= 2 points")
    xi_eff = xi_effective(constants.xi, constants.epsilon, part)
    ps = [int(p_rule(ld)) for ld in grid]
    for ld, p in zip(grid, ps):
        if p < 1 or math.log(p) >= ld:
            raise InvalidDimensionError(f"need 1 <= p_d < d along the grid, got p={p}")
    ratios = [p / (xi_eff * ld) for p, ld in zip(ps, grid)]
    decreasing = all(b < a for a, b in zip(ratios, ratios[1:]))
    if not decreasing or ratios[-1] > 0.5 * ratios[0]:
        raise GrowthConditionViolatedError(
            f"p_d/(xi log d) does not vanish along the grid: {ratios}"
        )
    rows = []
    for ld, p in zip(grid, ps):
        _, gamma, log_dev, log_nu = _log_theorem_parts(
            ld, p, t, tau, constants, kappa, g, part
        )
        rows.append(
            ScanRow(
                log_d=ld,
                p=p,
                ratio=p / (xi_eff * ld),
                log_deviation_bound=log_dev,
                log_nu_gc_bound=log_nu,
                deviation_bound=math.exp(log_dev) if log_dev < 700 else math.inf,
                nu_gc_bound=math.exp(log_nu) if log_nu < 700 else math.inf,
                vacuous=bool(log_dev >= 0.0 or log_nu >= 0.0),
            )
        )
    _check_scan(rows)
    return rows


def _check_scan(rows: list[ScanRow]):
    """Both bounds must decrease strictly once nonvacuous; for fixed p the
    values must drop below 10^-3 wherever log d >= 10^6."""
    start = next((i for i, r in enumerate(rows) if not r.vacuous), None)
    if start is not None:
        for a, b in zip(rows[start:], rows[start + 1:]):
            if not (b.log_deviation_bound < a.log_deviation_bound
                    and b.log_nu_gc_bound < a.log_nu_gc_bound):
                raise ProjcondError(
                    f"bounds fail to decrease between log d = {a.log_d} and {b.log_d}"
                )
    if len({r.p for r in rows}) == 1:
        limit = math.log(1e-3)
        for r in rows:
            if r.log_d >= 1e6 and not (
                r.log_deviation_bound < limit and r.log_nu_gc_bound < limit
            ):
                raise ProjcondError(f"bounds not below 1e-3 at log d = {r.log_d}")
