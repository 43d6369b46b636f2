"""Deterministic numerical building blocks.

Complex quadratic forms, the exponential integral, a counter-based random
number generator, a multi-start projected-gradient ascent solver, an
exhaustive grid maximizer and a seeded Monte Carlo averaging driver.
Every random quantity in the toolkit is derived from an :class:`RngSeed`
through a stateless hash so that results never depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainError,
    GridTooLarge,
    InfeasibleConstraint,
    InsufficientTrials,
    InternalConsistencyError,
    NonFiniteObjective,
    NotHermitian,
)

__all__ = [
    "RNG_ID",
    "RngSeed",
    "OptimizerSettings",
    "SolveResult",
    "as_complex_vector",
    "as_complex_matrix",
    "check_hermitian_psd",
    "hermitian_quadratic_form",
    "exp_integral_e1",
    "finite_difference_gradient",
    "projected_gradient_max",
    "monte_carlo_mean",
    "grid_argmax",
    "realify",
    "complexify",
]

RNG_ID = "splitmix64-counter-v1"

HERMITIAN_TOL = 1e-10
MAX_GRID_DIM = 4
MAX_POINTS_PER_DIM = 2001
MAX_GRID_POINTS = 100_000_000
_GRID_CHUNK = 1 << 20

_M64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INDEX_MULT = np.uint64(0xD6E8FEB86659FD93)


def _splitmix(z):
    # SplitMix64 finalizer; uint64 arithmetic wraps modulo 2**64.
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX1
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX2
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class RngSeed:
    """Root of a family of independent random substreams.

    The uniforms of trial ``t`` are a pure function of
    ``(seed, stream_id, t, index)``, so any subset of trials can be
    regenerated in any order, on any number of workers.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"{name} must be an integer")
            if not 0 <= int(value) <= _M64:
                raise ValueError(f"{name} must fit in an unsigned 64-bit integer")

    def child(self, stream_id: int) -> "RngSeed":
        return RngSeed(self.seed, stream_id)

    def _key(self):
        with np.errstate(over="ignore"):
            s = np.array([self.seed], dtype=np.uint64)
            sid = np.array([self.stream_id], dtype=np.uint64)
            return _splitmix(s ^ _splitmix(sid + _GOLDEN))[0]

    def uniform(self, trial, size=None):
        """Uniform draws in (0, 1].

        ``trial`` may be an integer or an integer array.  With ``size=None``
        one draw per trial is returned; otherwise ``size`` draws per trial
        (shape ``trial.shape + (size,)``).
        """
        trial = np.asarray(trial, dtype=np.uint64)
        if size is None:
            index = np.zeros(trial.shape, dtype=np.uint64)
        else:
            index = np.arange(size, dtype=np.uint64)
            trial = trial[..., None]
        with np.errstate(over="ignore"):
            z = _splitmix(self._key() + (trial + np.uint64(1)) * _GOLDEN)
            z = _splitmix(z ^ ((index + np.uint64(1)) * _INDEX_MULT))
        return ((z >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53

    def normal(self, trial: int, size: int) -> np.ndarray:
        """Standard normal draws for one trial (Box-Muller)."""
        half = (size + 1) // 2
        u = self.uniform(int(trial), 2 * half)
        radius = np.sqrt(-2.0 * np.log(u[:half]))
        angle = 2.0 * np.pi * u[half:]
        z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
        return z[:size]

    def complex_normal(self, trial: int, shape) -> np.ndarray:
        """Circularly-symmetric complex Gaussian entries with unit variance."""
        shape = tuple(np.atleast_1d(shape))
        n = int(np.prod(shape))
        z = self.normal(trial, 2 * n)
        return ((z[:n] + 1j * z[n:]) / np.sqrt(2.0)).reshape(shape)


@dataclass(frozen=True)
class OptimizerSettings:
    max_iters: int = 2000
    step_init: float = 0.1
    step_shrink: float = 0.5
    tol: float = 1e-8
    restarts: int = 16
    finite_diff_eps: float = 1e-6

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be positive")
        if not self.step_init > 0:
            raise ValueError("step_init must be positive")
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.restarts) < 1:
            raise ValueError("restarts must be positive")
        if not self.finite_diff_eps > 0:
            raise ValueError("finite_diff_eps must be positive")


@dataclass
class SolveResult:
    argument: np.ndarray
    value: float
    converged: bool
    iterations: int
    restarts_used: int


# ---------------------------------------------------------------------------
# complex linear algebra
# ---------------------------------------------------------------------------

def as_complex_vector(a, name="vector") -> np.ndarray:
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionMismatch(f"{name} must be a non-empty 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def as_complex_matrix(R, name="matrix") -> np.ndarray:
    arr = np.asarray(R, dtype=np.complex128)
    if arr.ndim != 2 or arr.size < 1:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def check_hermitian_psd(R, tol=HERMITIAN_TOL, check_psd=True) -> np.ndarray:
    """Validate that ``R`` is Hermitian (and PSD) within ``tol``."""
    R = as_complex_matrix(R)
    if R.shape[0] != R.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got shape {R.shape}")
    if np.max(np.abs(R - R.conj().T)) > tol:
        raise NotHermitian("matrix is not conjugate-symmetric within tolerance")
    if check_psd:
        eig = np.linalg.eigvalsh(0.5 * (R + R.conj().T))
        if eig[0] < -tol:
            raise NotHermitian(f"matrix has negative eigenvalue {eig[0]:.3e}")
    return R


def hermitian_quadratic_form(a, R) -> float:
    """Return the real value of ``a^H R a`` for Hermitian ``R``."""
    a = as_complex_vector(a, "a")
    R = as_complex_matrix(R, "R")
    if R.shape != (a.size, a.size):
        raise DimensionMismatch(
            f"vector of length {a.size} incompatible with matrix of shape {R.shape}"
        )
    check_hermitian_psd(R, check_psd=False)
    q = np.vdot(a, R @ a)
    value = float(q.real)
    if abs(q.imag) >= 1e-9 * (1.0 + abs(value)):
        raise InternalConsistencyError(f"quadratic form has imaginary residue {q.imag:.3e}")
    return value


def realify(z) -> np.ndarray:
    """Interleave real and imaginary parts: ``[re0, im0, re1, im1, ...]``."""
    z = np.asarray(z, dtype=np.complex128).ravel()
    out = np.empty(2 * z.size)
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def complexify(x, shape=None) -> np.ndarray:
    """Inverse of :func:`realify`."""
    x = np.asarray(x, dtype=np.float64)
    z = x[0::2] + 1j * x[1::2]
    return z if shape is None else z.reshape(shape)


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

_EULER_GAMMA = 0.57721566490153286061


def exp_integral_e1(x: float) -> float:
    """Exponential integral E1(x) for x > 0.

    Power series for ``x <= 1`` and a modified-Lentz evaluation of the
    continued fraction otherwise; both are accurate to near machine
    precision in their branch.
    """
    x = float(x)
    if not x > 0 or math.isnan(x):
        raise DomainError(f"E1 is defined for x > 0 only, got {x}")
    if math.isinf(x):
        return 0.0
    if x <= 1.0:
        # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
        total = 0.0
        term = 1.0
        for k in range(1, 200):
            term *= -x / k
            contrib = term / k
            total += contrib
            if abs(contrib) < 1e-17 * abs(total):
                break
        return -_EULER_GAMMA - math.log(x) - total
    # continued fraction  e^{-x} / (x + 1 - 1^2/(x + 3 - 2^2/(x + 5 - ...)))
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x)


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

def finite_difference_gradient(objective, x, eps=1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a real vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        grad[i] = (objective(x + e) - objective(x - e)) / (2.0 * eps)
    return grad


def _checked(objective, x):
    value = float(objective(x))
    if not math.isfinite(value):
        raise NonFiniteObjective(f"objective returned {value} at a feasible point")
    return value


def _ascend(objective, gradient, project, x0, settings):
    """Single projected-gradient ascent run with monotone backtracking.

    The trial step is the Barzilai-Borwein length of the previous accepted
    move (``step_init`` on the first iteration); it is shrunk by
    ``step_shrink`` until the objective does not decrease.
    """
    x = project(np.asarray(x0, dtype=np.float64))
    f = _checked(objective, x)
    g = gradient(x)
    step = settings.step_init
    flat = 0
    iterations = 0
    converged = False
    while iterations < settings.max_iters:
        iterations += 1
        trial = step
        accepted = False
        while trial > 1e-14 * max(1.0, step):
            x_new = project(x + trial * g)
            move = x_new - x
            if not np.any(move):
                break
            f_new = _checked(objective, x_new)
            if f_new >= f:
                accepted = True
                break
            trial *= settings.step_shrink
        if not accepted:
            converged = True
            break
        g_new = gradient(x_new)
        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy < 0:
            step = float(np.dot(s, s)) / -sy
        else:
            step = trial / settings.step_shrink
        step = min(max(step, 1e-12), 1e12)
        gain = f_new - f
        x, f, g = x_new, f_new, g_new
        if gain <= settings.tol * (1.0 + abs(f)):
            flat += 1
            if flat >= 3:
                converged = True
                break
        else:
            flat = 0
    return x, f, converged, iterations


def projected_gradient_max(
    objective: Callable[[np.ndarray], float],
    project: Callable[[np.ndarray], np.ndarray],
    x0,
    settings: Optional[OptimizerSettings] = None,
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    seed: Optional[RngSeed] = None,
    starts: Optional[Sequence[np.ndarray]] = None,
) -> SolveResult:
    """Maximize ``objective`` over the set onto which ``project`` maps.

    Parameters
    ----------
    objective : callable
        Real function of a real vector, finite on the feasible set.
    project : callable
        Idempotent map onto the feasible set.
    x0 : array_like
        First starting point.
    settings : OptimizerSettings, optional
    gradient : callable, optional
        Analytic gradient.  Central finite differences with
        ``settings.finite_diff_eps`` are used when omitted.
    seed : RngSeed, optional
        Source of the random restart points (``RngSeed(0)`` by default).
    starts : sequence of arrays, optional
        Explicit starting points.  When given they replace the random
        restarts; ``x0`` is always tried first.

    Returns
    -------
    SolveResult
        Best iterate over all restarts.
    """
    settings = settings or OptimizerSettings()
    seed = seed if seed is not None else RngSeed(0)
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    if gradient is None:
        eps = settings.finite_diff_eps

        def gradient(x):
            return finite_difference_gradient(objective, x, eps)

    if starts is None:
        scale = max(1.0, float(np.linalg.norm(x0)))
        candidates = [x0] + [
            x0 + scale * seed.normal(r, x0.size) for r in range(1, settings.restarts)
        ]
    else:
        candidates = [x0] + [np.asarray(s, dtype=np.float64).ravel() for s in starts]

    best = None
    total_iters = 0
    all_converged = True
    for start in candidates:
        x, f, converged, iters = _ascend(objective, gradient, project, start, settings)
        total_iters += iters
        all_converged &= converged
        if best is None or f > best[1]:
            best = (x, f)
    return SolveResult(
        argument=best[0],
        value=best[1],
        converged=all_converged,
        iterations=total_iters,
        restarts_used=len(candidates),
    )


def _close_simplex(prefix, last_axis):
    """Append the last-axis grid value completing each prefix to sum 1."""
    rest = 1.0 - prefix.sum(axis=1)
    n = last_axis.size
    step = (last_axis[-1] - last_axis[0]) / (n - 1)
    if step > 0:
        j = np.clip(np.rint((rest - last_axis[0]) / step), 0, n - 1).astype(np.int64)
    else:
        j = np.zeros(rest.shape, dtype=np.int64)
    last = last_axis[j]
    pts = np.column_stack([prefix, last])
    return pts[np.abs(pts.sum(axis=1) - 1.0) <= 1e-9]


def grid_argmax(
    objective,
    box: Sequence[Sequence[float]],
    points_per_dim: int,
    simplex_constraint: bool = False,
    vectorized: bool = False,
) -> SolveResult:
    """Exhaustive maximization over a uniform Cartesian grid.

    Points are visited in lexicographic order and only a strictly larger
    value replaces the incumbent, so ties resolve to the lexicographically
    smallest argument.  Non-finite objective values mark infeasible points.

    With ``vectorized=True`` the objective receives an ``(n, dim)`` array
    and must return ``n`` values.
    """
    box = [tuple(map(float, b)) for b in box]
    dim = len(box)
    if dim < 1:
        raise ValueError("box must have at least one coordinate")
    if dim > MAX_GRID_DIM:
        raise GridTooLarge(f"grid dimension {dim} exceeds {MAX_GRID_DIM}")
    if not 2 <= points_per_dim <= MAX_POINTS_PER_DIM:
        raise GridTooLarge(f"points_per_dim must lie in [2, {MAX_POINTS_PER_DIM}]")
    total = points_per_dim**dim
    if total > MAX_GRID_POINTS:
        raise GridTooLarge(f"{total} grid points exceed the limit of {MAX_GRID_POINTS}")
    for lo, hi in box:
        if not hi >= lo:
            raise ValueError(f"empty box interval [{lo}, {hi}]")

    axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in box]
    # on the simplex the last coordinate is pinned by the others, so only
    # the leading coordinates are enumerated
    free = dim - 1 if simplex_constraint else dim
    shape = (points_per_dim,) * free
    n_free = points_per_dim**free
    best_value = -np.inf
    best_point = None
    for start in range(0, n_free, _GRID_CHUNK):
        idx = np.unravel_index(np.arange(start, min(start + _GRID_CHUNK, n_free)), shape)
        pts = np.stack([axes[d][idx[d]] for d in range(free)], axis=1).reshape(-1, free)
        if simplex_constraint:
            pts = _close_simplex(pts, axes[-1])
            if pts.shape[0] == 0:
                continue
        if vectorized:
            vals = np.asarray(objective(pts), dtype=np.float64)
        else:
            vals = np.array([objective(p) for p in pts], dtype=np.float64)
        vals = np.where(np.isfinite(vals), vals, -np.inf)
        k = int(np.argmax(vals))
        if vals[k] > best_value:
            best_value = float(vals[k])
            best_point = pts[k].copy()
    if best_point is None:
        raise InfeasibleConstraint("no grid point yields a finite objective value")
    return SolveResult(
        argument=best_point,
        value=best_value,
        converged=True,
        iterations=total,
        restarts_used=0,
    )


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def monte_carlo_mean(sampler, trials: int, seed: RngSeed, vectorized: bool = False):
    """Sample mean and 95 % half-width of a seeded per-trial sampler.

    ``sampler(trial_index, seed)`` returns one real.  With
    ``vectorized=True`` it instead receives the full array of trial indices
    and returns one value per trial.  Summation uses ``math.fsum`` (exactly
    rounded), so the result does not depend on how trials were scheduled.
    """
    trials = int(trials)
    if trials < 2:
        raise InsufficientTrials(f"need at least 2 trials, got {trials}")
    if vectorized:
        values = np.asarray(sampler(np.arange(trials), seed), dtype=np.float64)
        if values.shape != (trials,):
            raise DimensionMismatch(f"sampler returned shape {values.shape}, expected ({trials},)")
    else:
        values = np.fromiter((float(sampler(t, seed)) for t in range(trials)), np.float64, trials)
    if not np.all(np.isfinite(values)):
        raise NonFiniteObjective("sampler produced non-finite values")
    mean = math.fsum(values.tolist()) / trials
    var = math.fsum(((values - mean) ** 2).tolist()) / (trials - 1)
    return mean, 1.96 * math.sqrt(var / trials)
