"""Uplink ISAC over a normalized radio-resource budget.

The resource is split into a sensing-only block (share ``alpha_s``), a
communication-only block (``alpha_c``) and a mixed block (``alpha_m``)
in which the base station decodes the user first, treating the residual
sensing echo as noise, and then processes the echo interference-free.
OMA leaves the mixed block empty and pure NOMA uses nothing else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import LinkBudget, exponential_snr_draws
from .errors import InsufficientTrials, SplitDesignMismatch
from .numerics import RNG_ID, RngSeed, grid_argmax, monte_carlo_mean
from .results import RegionResult, RegionRow

__all__ = [
    "UplinkDesign",
    "ResourceSplit",
    "UplinkPoint",
    "reir",
    "comm_rate_mixed",
    "uplink_point",
    "frontier",
    "ergodic_frontier",
    "epsilon_constraint_split",
]

SIMPLEX_TOL = 1e-9


class UplinkDesign(str, Enum):
    OMA = "oma"
    PURE_NOMA = "pure_noma"
    SEMI_NOMA = "semi_noma"


@dataclass(frozen=True)
class ResourceSplit:
    alpha_s: float
    alpha_c: float
    alpha_m: float

    def __post_init__(self):
        parts = (self.alpha_s, self.alpha_c, self.alpha_m)
        if any(not (a >= 0 and math.isfinite(a)) for a in parts):
            raise ValueError(f"resource shares must be finite and nonnegative, got {parts}")
        if abs(math.fsum(parts) - 1.0) > SIMPLEX_TOL:
            raise ValueError(
                f"resource shares must sum to 1 (simplex invariant), got {math.fsum(parts)!r}"
            )

    def as_tuple(self):
        return (self.alpha_s, self.alpha_c, self.alpha_m)


@dataclass(frozen=True)
class UplinkPoint:
    sensing_rate: float
    comm_rate: float
    split: ResourceSplit


def _design(design) -> UplinkDesign:
    return UplinkDesign(design)


def check_split(design, split: ResourceSplit) -> None:
    design = _design(design)
    if design is UplinkDesign.OMA and split.alpha_m != 0:
        raise SplitDesignMismatch("OMA requires an empty mixed block (alpha_m = 0)")
    if design is UplinkDesign.PURE_NOMA and (split.alpha_s != 0 or split.alpha_c != 0):
        raise SplitDesignMismatch("pure NOMA requires alpha_s = alpha_c = 0, alpha_m = 1")


def reir(alpha, budget: LinkBudget):
    """Radar estimation information rate ``(alpha/2) log2(1 + kappa gamma_s)``."""
    if np.any(np.asarray(alpha) < 0) or np.any(np.asarray(alpha) > 1):
        raise ValueError("alpha must lie in [0, 1]")
    return 0.5 * alpha * math.log2(1.0 + budget.kappa * budget.gamma_s)


def _mixed_rate(alpha_m, gamma_c, budget):
    # user decoded first against the residual echo
    sinr = gamma_c / (1.0 + budget.rho_resid * budget.gamma_s)
    return alpha_m * np.log2(1.0 + sinr)


def comm_rate_mixed(alpha_m, budget: LinkBudget):
    """Communication rate earned in the mixed sensing-communication block."""
    if np.any(np.asarray(alpha_m) < 0) or np.any(np.asarray(alpha_m) > 1):
        raise ValueError("alpha_m must lie in [0, 1]")
    return _mixed_rate(alpha_m, budget.gamma_c, budget)


def _comm_rate(alpha_c, alpha_m, gamma_c, budget):
    return alpha_c * np.log2(1.0 + gamma_c) + _mixed_rate(alpha_m, gamma_c, budget)


def uplink_point(design, split: ResourceSplit, budget: LinkBudget) -> UplinkPoint:
    check_split(design, split)
    r_s = reir(split.alpha_s + split.alpha_m, budget)
    r_c = float(_comm_rate(split.alpha_c, split.alpha_m, budget.gamma_c, budget))
    return UplinkPoint(float(r_s), r_c, split)


def _frontier_splits(design, num_points):
    design = _design(design)
    if num_points < 2:
        raise ValueError("num_points must be at least 2")
    betas = np.linspace(0.0, 1.0, num_points)
    splits = []
    for beta in betas:
        beta = float(beta)
        if design is UplinkDesign.OMA:
            splits.append(ResourceSplit(beta, 1.0 - beta, 0.0))
        elif design is UplinkDesign.PURE_NOMA:
            splits.append(ResourceSplit(0.0, 0.0, 1.0))
        else:
            # moving mass from the mixed block to the sensing-only block keeps
            # the REIR fixed and only lowers the communication rate
            splits.append(ResourceSplit(0.0, 1.0 - beta, beta))
    return betas, splits


def _row(design, beta, point, extra=None):
    aux = {
        "alpha_s": point.split.alpha_s,
        "alpha_c": point.split.alpha_c,
        "alpha_m": point.split.alpha_m,
    }
    if extra:
        aux.update(extra)
    return RegionRow(
        design=_design(design).value,
        sweep_param=float(beta),
        sensing_value=point.sensing_rate,
        comm_value=point.comm_rate,
        aux=aux,
    )


def frontier(design, budget: LinkBudget, num_points: int = 101) -> RegionResult:
    """Pareto frontier of one uplink design, swept over the sensing share."""
    betas, splits = _frontier_splits(design, num_points)
    points = [uplink_point(design, s, budget) for s in splits]
    rows = [_row(design, b, p) for b, p in zip(betas, points)]
    result = RegionResult(rows=rows, points=points,
                          metadata={"design": _design(design).value})
    return result.mark_pareto()


def ergodic_frontier(
    design,
    mean_gamma_c: float,
    budget_template: LinkBudget,
    trials: int,
    seed: RngSeed,
    num_points: int = 101,
    snr_sampler=None,
) -> RegionResult:
    """Frontier with the communication rate averaged over Rayleigh fading.

    The uplink SNR of trial ``t`` is drawn by ``snr_sampler(mean, trials,
    seed)`` (exponential by default) and shared by every frontier point;
    the sensing echo stays deterministic.  Each row carries the 95 %
    half-width of its Monte Carlo estimate as ``mc_half_width``.
    """
    if trials < 100:
        raise InsufficientTrials(f"ergodic frontier needs at least 100 trials, got {trials}")
    sampler = snr_sampler or exponential_snr_draws
    gammas = np.asarray(sampler(mean_gamma_c, np.arange(trials), seed), dtype=np.float64)
    betas, splits = _frontier_splits(design, num_points)
    points, rows = [], []
    cache = {}
    for beta, split in zip(betas, splits):
        key = split.as_tuple()
        if key not in cache:
            def draws(idx, _seed, split=split):
                return _comm_rate(split.alpha_c, split.alpha_m, gammas[idx], budget_template)

            cache[key] = monte_carlo_mean(draws, trials, seed, vectorized=True)
        mean, half_width = cache[key]
        point = UplinkPoint(float(reir(split.alpha_s + split.alpha_m, budget_template)),
                            mean, split)
        points.append(point)
        rows.append(_row(design, beta, point, {"mc_half_width": half_width}))
    result = RegionResult(
        rows=rows,
        points=points,
        metadata={"design": _design(design).value, "trials": int(trials), "rng": RNG_ID},
    )
    return result.mark_pareto()


def epsilon_constraint_split(budget: LinkBudget, min_sensing_rate: float,
                             points_per_dim: int = 201):
    """Grid search for the best semi-NOMA split meeting a REIR floor.

    Exhaustive over the probability simplex; used to certify the
    closed-form frontier.  Returns the :class:`~nomaisac.numerics.SolveResult`
    whose argument is ``(alpha_s, alpha_c, alpha_m)``.
    """
    floor = float(min_sensing_rate) - 1e-12
    sens_per_share = 0.5 * math.log2(1.0 + budget.kappa * budget.gamma_s)

    def objective(pts):
        a_s, a_c, a_m = pts[:, 0], pts[:, 1], pts[:, 2]
        r_s = sens_per_share * (a_s + a_m)
        r_c = _comm_rate(a_c, a_m, budget.gamma_c, budget)
        return np.where(r_s >= floor, r_c, -np.inf)

    return grid_argmax(objective, [(0.0, 1.0)] * 3, points_per_dim,
                       simplex_constraint=True, vectorized=True)
