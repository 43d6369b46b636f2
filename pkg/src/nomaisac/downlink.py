"""Downlink ISAC beamforming: NOMA-empowered and NOMA-inspired designs.

A base station with an ``M``-element ULA serves ``K`` single-antenna users
with precoders ``w_k`` and, for the NOMA-inspired family, one extra
sensing precoder ``v``.  The transmit covariance of all precoders forms the
sensing beampattern.  Communication rates follow from the gain matrix
``G[i, j] = |h_i^H w_j|^2`` (columns ``0..K-1`` are the user streams,
column ``K`` the sensing stream when present).

Tradeoff points are computed by maximizing the communication objective
under a sensing constraint with a quadratic penalty, using multi-start
projected gradient ascent on the realified precoders.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .channel import ArrayGeometry, ChannelSet, steering_matrix, steering_vector
from .errors import (
    DesignMismatch,
    DimensionMismatch,
    InfeasibleConstraint,
    InvalidPermutation,
    NomaIsacError,
    SolverFailed,
)
from .numerics import (
    RNG_ID,
    OptimizerSettings,
    RngSeed,
    complexify,
    projected_gradient_max,
    realify,
)
from .results import RegionResult, RegionRow

__all__ = [
    "DownlinkDesign",
    "SensingMetricSpec",
    "BeamformerSet",
    "DownlinkPoint",
    "PenalizedObjective",
    "transmit_covariance",
    "sensing_metric",
    "default_decoding_order",
    "rates_sdma",
    "rates_noma_empowered",
    "rates_noma_inspired",
    "evaluate_design",
    "tradeoff_point",
    "region_sweep_downlink",
]

_LN2 = math.log(2.0)
POWER_TOL = 1e-9
VIOLATION_TOL = 1e-6
MAX_DOUBLINGS = 20
PENALTY_INIT = 1e3
TEMPERATURE_INIT = 0.032
TEMPERATURE_FINAL = 1e-3
RESTORE_LOSS_TOL = 1e-4
PRUNE_FRACTION = 4
SCREEN_ITERS = 150


class DownlinkDesign(str, Enum):
    NOMA_EMPOWERED = "noma_empowered"
    SDMA_BASELINE = "sdma_baseline"
    NOMA_INSPIRED = "noma_inspired"
    IDEAL_SENIC = "ideal_senic"
    NO_SENIC = "no_senic"

    @property
    def has_sensing_precoder(self) -> bool:
        return self in (DownlinkDesign.NOMA_INSPIRED, DownlinkDesign.IDEAL_SENIC,
                        DownlinkDesign.NO_SENIC)


@dataclass(frozen=True)
class SensingMetricSpec:
    """Sensing figure of merit evaluated on the transmit beampattern.

    ``gain_at_target`` is the power radiated toward ``target_angle``;
    ``beampattern_mse`` is the mean squared deviation from a scaled
    rectangular mainlobe of half-width ``mainlobe_halfwidth`` on an
    ``num_angles``-point uniform grid over ``[-pi/2, pi/2]``.
    """

    kind: str = "gain_at_target"
    target_angle: float = 0.0
    mainlobe_halfwidth: float = math.radians(5.0)
    num_angles: int = 181

    def __post_init__(self):
        if self.kind not in ("gain_at_target", "beampattern_mse"):
            raise ValueError(f"unknown sensing metric {self.kind!r}")
        if self.num_angles < 3:
            raise ValueError("num_angles must be at least 3")
        if not self.mainlobe_halfwidth > 0:
            raise ValueError("mainlobe_halfwidth must be positive")
        if abs(self.target_angle) > math.pi / 2:
            raise ValueError("target_angle must lie in [-pi/2, pi/2]")

    @property
    def angle_grid(self) -> np.ndarray:
        return np.linspace(-math.pi / 2, math.pi / 2, self.num_angles)

    @property
    def desired_pattern(self) -> np.ndarray:
        grid = self.angle_grid
        return (np.abs(grid - self.target_angle) <= self.mainlobe_halfwidth + 1e-12).astype(float)


@dataclass(frozen=True, eq=False)
class BeamformerSet:
    """User precoders as rows of a ``(K, M)`` array plus optional sensing precoder."""

    user_precoders: np.ndarray
    sensing_precoder: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.array(self.user_precoders, dtype=np.complex128)
        if w.ndim == 1:
            w = w[None, :]
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise DimensionMismatch(f"user_precoders must have shape (K, M), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("user_precoders contain non-finite entries")
        w.setflags(write=False)
        object.__setattr__(self, "user_precoders", w)
        if self.sensing_precoder is not None:
            v = np.array(self.sensing_precoder, dtype=np.complex128).ravel()
            if v.size != w.shape[1]:
                raise DimensionMismatch("sensing_precoder must have the same dimension as w_k")
            if not np.all(np.isfinite(v)):
                raise ValueError("sensing_precoder contains non-finite entries")
            v.setflags(write=False)
            object.__setattr__(self, "sensing_precoder", v)

    @property
    def num_users(self) -> int:
        return self.user_precoders.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.user_precoders.shape[1]

    def stacked(self) -> np.ndarray:
        """All precoders as rows; the sensing precoder, if any, comes last."""
        if self.sensing_precoder is None:
            return np.array(self.user_precoders)
        return np.vstack([self.user_precoders, self.sensing_precoder[None, :]])

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.stacked()) ** 2))

    @classmethod
    def from_stacked(cls, W, num_users: int) -> "BeamformerSet":
        W = np.asarray(W, dtype=np.complex128)
        v = W[num_users] if W.shape[0] > num_users else None
        return cls(W[:num_users], v)

    def __eq__(self, other):
        if not isinstance(other, BeamformerSet):
            return NotImplemented
        if (self.sensing_precoder is None) != (other.sensing_precoder is None):
            return False
        return np.array_equal(self.stacked(), other.stacked())

    __hash__ = None


@dataclass
class DownlinkPoint:
    sensing_value: float
    comm_value: float
    per_user_rates: np.ndarray
    multicast_rate: float
    beamformers: BeamformerSet
    constraint_violation: float = 0.0
    solver: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, DownlinkPoint):
            return NotImplemented
        return (self.sensing_value == other.sensing_value
                and self.comm_value == other.comm_value
                and np.array_equal(self.per_user_rates, other.per_user_rates)
                and self.multicast_rate == other.multicast_rate
                and self.beamformers == other.beamformers)


# ---------------------------------------------------------------------------
# covariance and sensing
# ---------------------------------------------------------------------------

def transmit_covariance(b: BeamformerSet) -> np.ndarray:
    """``R_x = sum_k w_k w_k^H (+ v v^H)``."""
    W = b.stacked()
    R = W.T @ W.conj()
    return 0.5 * (R + R.conj().T)


def _pattern(R, A):
    # a_l^H R a_l for every row a_l of A
    return np.real(np.einsum("lm,mn,ln->l", A.conj(), R, A))


def _mse_from_pattern(p, d):
    dd = float(d @ d)
    eta = max(0.0, float(d @ p) / dd) if dd > 0 else 0.0
    return float(np.mean((eta * d - p) ** 2)), eta


def sensing_metric(R_x, spec: SensingMetricSpec, geometry: ArrayGeometry) -> float:
    """Beampattern gain toward the target, or the mainlobe-matching MSE."""
    R_x = np.asarray(R_x, dtype=np.complex128)
    M = geometry.num_antennas
    if R_x.shape != (M, M):
        raise DimensionMismatch(f"covariance shape {R_x.shape} does not match {M} antennas")
    if spec.kind == "gain_at_target":
        a = steering_vector(geometry, spec.target_angle)
        return float(np.real(np.vdot(a, R_x @ a)))
    A = steering_matrix(geometry, spec.angle_grid)
    mse, _ = _mse_from_pattern(_pattern(R_x, A), spec.desired_pattern)
    return mse


def _sensing_value(spec, metric):
    return metric if spec.kind == "gain_at_target" else -metric


def _pattern_mse(W, A, d, with_grad):
    """Beampattern MSE of stacked precoders ``W`` and its complex gradient."""
    Q = A.conj() @ W.T
    p = np.sum(np.abs(Q) ** 2, axis=1)
    value, eta = _mse_from_pattern(p, d)
    if not with_grad:
        return value, None
    # envelope argument: the optimal scale needs no differentiation
    dp = 2.0 * (p - eta * d) / p.size
    return value, 2.0 * (dp[:, None] * Q).T @ A


# ---------------------------------------------------------------------------
# communication rates
# ---------------------------------------------------------------------------

def _gains(channels: ChannelSet, W) -> np.ndarray:
    return np.abs(channels.user_channels.conj() @ W.T) ** 2


def _check_dims(channels: ChannelSet, b: BeamformerSet):
    if b.num_antennas != channels.num_antennas:
        raise DimensionMismatch("precoder and channel dimensions differ")
    if b.num_users != channels.num_users:
        raise DimensionMismatch(
            f"{b.num_users} user precoders for {channels.num_users} users"
        )


def _rate(signal, interference, noise):
    return np.log2(1.0 + signal / (interference + noise))


def rates_sdma(channels: ChannelSet, b: BeamformerSet) -> np.ndarray:
    """Per-user rates treating all other streams as noise."""
    if b.sensing_precoder is not None:
        raise DesignMismatch("SDMA rates are defined without a sensing precoder")
    _check_dims(channels, b)
    G = _gains(channels, b.stacked())
    sig = np.diag(G)
    return _rate(sig, G.sum(axis=1) - sig, channels.noise_power)


def default_decoding_order(channels: ChannelSet) -> list:
    """Users sorted by ascending channel norm (ties by index); first is decoded first."""
    norms = np.linalg.norm(channels.user_channels, axis=1)
    return sorted(range(channels.num_users), key=lambda k: (norms[k], k))


def _positions(order, K):
    order = [int(k) for k in order]
    if sorted(order) != list(range(K)):
        raise InvalidPermutation(f"{order} is not a permutation of 0..{K - 1}")
    pos = np.empty(K, dtype=int)
    pos[order] = np.arange(K)
    return pos


def sic_rate_matrix(channels: ChannelSet, b: BeamformerSet, order=None) -> np.ndarray:
    """Achievable rate of stream ``k`` at user ``i`` under SIC (NaN if ``i`` never decodes ``k``).

    User ``i`` decodes every stream at or before its own position, each
    against the streams decoded after it.
    """
    if b.sensing_precoder is not None:
        raise DesignMismatch("NOMA-empowered rates are defined without a sensing precoder")
    _check_dims(channels, b)
    K = channels.num_users
    pos = _positions(default_decoding_order(channels) if order is None else order, K)
    G = _gains(channels, b.stacked())
    out = np.full((K, K), np.nan)
    for k in range(K):
        later = pos > pos[k]
        for i in range(K):
            if pos[i] >= pos[k]:
                out[i, k] = _rate(G[i, k], G[i, later].sum(), channels.noise_power)
    return out


def rates_noma_empowered(channels: ChannelSet, b: BeamformerSet, order=None) -> np.ndarray:
    """Per-stream rates: the worst SINR among the users obliged to decode it."""
    return np.nanmin(sic_rate_matrix(channels, b, order), axis=0)


_INSPIRED_MODES = ("noma_inspired", "ideal_senic", "no_senic")


def rates_noma_inspired(channels: ChannelSet, b: BeamformerSet, mode="noma_inspired"):
    """Private rates and multicast rate of the sensing-waveform designs.

    Returns
    -------
    per_user_rates : ndarray of shape (K,)
    multicast_rate : float
        Nonzero only for ``noma_inspired``, where every user first decodes
        the multicast stream carried by the sensing precoder.
    """
    mode = DownlinkDesign(mode).value
    if mode not in _INSPIRED_MODES:
        raise DesignMismatch(f"{mode} is not a sensing-waveform design")
    if b.sensing_precoder is None:
        raise DesignMismatch(f"{mode} requires a sensing precoder")
    _check_dims(channels, b)
    K = channels.num_users
    noise = channels.noise_power
    G = _gains(channels, b.stacked())
    users = G[:, :K]
    sig = np.diag(users)
    inter = users.sum(axis=1) - sig
    if mode == "no_senic":
        return _rate(sig, inter + G[:, K], noise), 0.0
    private = _rate(sig, inter, noise)
    if mode == "ideal_senic":
        return private, 0.0
    multicast = float(np.min(_rate(G[:, K], users.sum(axis=1), noise)))
    return private, multicast


def _aggregate(design: DownlinkDesign, rates, multicast):
    if design in (DownlinkDesign.NOMA_EMPOWERED, DownlinkDesign.SDMA_BASELINE):
        return float(np.min(rates))
    return float(np.sum(rates) + len(rates) * multicast)


def evaluate_design(design, channels: ChannelSet, b: BeamformerSet, order=None):
    """``(per_user_rates, multicast_rate, comm_value)`` of a fixed beamformer set.

    ``comm_value`` is the minimum user rate for the NOMA-empowered and SDMA
    designs, and the sum rate plus ``K`` times the multicast rate for the
    sensing-waveform family.
    """
    design = DownlinkDesign(design)
    if design is DownlinkDesign.SDMA_BASELINE:
        rates, mc = rates_sdma(channels, b), 0.0
    elif design is DownlinkDesign.NOMA_EMPOWERED:
        rates, mc = rates_noma_empowered(channels, b, order), 0.0
    else:
        rates, mc = rates_noma_inspired(channels, b, design.value)
    return rates, mc, _aggregate(design, rates, mc)


# ---------------------------------------------------------------------------
# smooth objective with analytic gradient
# ---------------------------------------------------------------------------

@dataclass
class _RateTerms:
    """Rate terms ``log2(1 + G[row, sig] / (sum_{mask} G[row, :] + noise))``.

    ``sig_sel`` and ``mask_sel`` act on the flattened gain matrix.
    """

    sig_sel: np.ndarray
    mask_sel: np.ndarray
    groups: list  # (weight, term indices, "sum" | "min")


def _rate_terms(design: DownlinkDesign, K: int, pos, include_multicast=True) -> _RateTerms:
    N = K + 1 if design.has_sensing_precoder else K
    rows, sig, masks, groups = [], [], [], []

    def add(i, s, mask):
        rows.append(i)
        sig.append(s)
        masks.append(mask)
        return len(rows) - 1

    if design is DownlinkDesign.NOMA_EMPOWERED:
        idx = []
        for k in range(K):
            later = np.zeros(N, bool)
            later[:K] = pos > pos[k]
            for i in range(K):
                if pos[i] >= pos[k]:
                    idx.append(add(i, k, later))
        groups.append((1.0, idx, "min"))
    elif design is DownlinkDesign.SDMA_BASELINE:
        idx = []
        for k in range(K):
            mask = np.zeros(N, bool)
            mask[:K] = True
            mask[k] = False
            idx.append(add(k, k, mask))
        groups.append((1.0, idx, "min"))
    else:
        idx = []
        for k in range(K):
            mask = np.zeros(N, bool)
            mask[:K] = True
            mask[k] = False
            if design is DownlinkDesign.NO_SENIC:
                mask[K] = True
            idx.append(add(k, k, mask))
        groups.append((1.0, idx, "sum"))
        if design is DownlinkDesign.NOMA_INSPIRED and include_multicast:
            mc = []
            for i in range(K):
                mask = np.zeros(N, bool)
                mask[:K] = True
                mc.append(add(i, K, mask))
            groups.append((float(K), mc, "min"))
    T = len(rows)
    sig_sel = np.zeros((T, K * N))
    sig_sel[np.arange(T), np.array(rows) * N + np.array(sig)] = 1.0
    mask_sel = np.zeros((T, K * N))
    for t, (i, mask) in enumerate(zip(rows, masks)):
        mask_sel[t, i * N:(i + 1) * N] = mask
    groups = [(w, np.array(idx), kind) for w, idx, kind in groups]
    return _RateTerms(sig_sel, mask_sel, groups)


def _softmin(values, temperature):
    """Smooth minimum and its weights; ``temperature == 0`` gives the hard min."""
    i = int(values.argmin())
    m = float(values[i])
    if temperature <= 0 or values.size == 1:
        w = np.zeros(values.size)
        w[i] = 1.0
        return m, w
    e = np.exp((m - values) / temperature)
    s = float(e.sum())
    return m - temperature * math.log(s), e / s


class PenalizedObjective:
    """Smoothed communication objective minus a quadratic sensing penalty.

    Acts on the realified stacked precoders ``x`` (interleaved real and
    imaginary parts, precoder by precoder)::

        f(x) = comm(x) - penalty * (violation(x) / scale) ** 2

    where ``comm`` replaces each minimum by a soft-minimum with the given
    ``temperature`` and ``violation`` is ``max(0, tau - gain)`` or
    ``max(0, mse - tau)``.  ``gradient`` is the closed-form gradient.
    """

    def __init__(self, design, channels: ChannelSet, geometry: ArrayGeometry,
                 spec: SensingMetricSpec, constraint: float, penalty: float = 1.0,
                 temperature: float = 0.0, order=None, scale: Optional[float] = None,
                 include_multicast: bool = True):
        self.design = DownlinkDesign(design)
        self.channels = channels
        self.spec = spec
        self.constraint = float(constraint)
        self.penalty = float(penalty)
        self.temperature = float(temperature)
        K = channels.num_users
        self.num_users = K
        self.num_precoders = K + 1 if self.design.has_sensing_precoder else K
        self.shape = (self.num_precoders, geometry.num_antennas)
        if geometry.num_antennas != channels.num_antennas:
            raise DimensionMismatch("geometry and channels disagree on the antenna count")
        order = default_decoding_order(channels) if order is None else order
        self.terms = _rate_terms(self.design, K, _positions(order, K), include_multicast)
        self._H = channels.user_channels
        self._Hc = channels.user_channels.conj()
        self._noise = channels.noise_power
        if spec.kind == "gain_at_target":
            self._A = steering_vector(geometry, spec.target_angle)[None, :]
            self._d = None
        else:
            self._A = steering_matrix(geometry, spec.angle_grid)
            self._d = spec.desired_pattern
        self._Ac = self._A.conj()
        if scale is None:
            scale = max(abs(self.constraint), 1e-12)
        self.scale = float(scale)

    # communication part --------------------------------------------------
    def _comm(self, W, with_grad):
        C = self._Hc @ W.T
        G = C.real**2 + C.imag**2
        g = G.ravel()
        t = self.terms
        S = t.sig_sel @ g
        noisy = self._noise + t.mask_sel @ g
        full = noisy + S
        vals = np.log2(full / noisy)
        total = 0.0
        coef = np.zeros_like(vals)
        for weight, idx, kind in t.groups:
            v = vals[idx]
            if kind == "sum":
                total += weight * float(v.sum())
                coef[idx] += weight
            else:
                m, w = _softmin(v, self.temperature)
                total += weight * m
                coef[idx] += weight * w
        if not with_grad:
            return total, None
        d_full = coef / (full * _LN2)
        d_int = d_full - coef / (noisy * _LN2)
        D = (t.sig_sel.T @ d_full + t.mask_sel.T @ d_int).reshape(G.shape)
        return total, 2.0 * (D * C).T @ self._H

    # sensing part --------------------------------------------------------
    def _sensing(self, W, with_grad):
        if self._d is None:
            c = self._Ac @ W.T
            value = float((c.real**2 + c.imag**2).sum())
            return value, (2.0 * c.T @ self._A if with_grad else None)
        return _pattern_mse(W, self._A, self._d, with_grad)

    def violation_of(self, metric):
        if self._d is None:
            return max(0.0, self.constraint - metric)
        return max(0.0, metric - self.constraint)

    def _penalized(self, x, with_grad):
        W = complexify(x, self.shape)
        comm, gc = self._comm(W, with_grad)
        metric, gs = self._sensing(W, with_grad)
        viol = self.violation_of(metric)
        value = comm - self.penalty * (viol / self.scale) ** 2
        if not with_grad:
            return value, None
        sign = 1.0 if self._d is None else -1.0
        grad = gc + sign * 2.0 * self.penalty * viol / self.scale**2 * gs
        return value, realify(grad)

    def __call__(self, x) -> float:
        # the ascent loop asks for the gradient at the accepted point next,
        # so compute both and keep the gradient
        value, grad = self._penalized(x, True)
        self._cache = (np.array(x, dtype=np.float64), grad)
        return value

    def gradient(self, x) -> np.ndarray:
        cache = getattr(self, "_cache", None)
        if cache is not None and np.array_equal(cache[0], x):
            return cache[1]
        return self._penalized(x, True)[1]

    def sensing(self, x) -> float:
        return self._sensing(complexify(x, self.shape), False)[0]


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------

def _power_projector(P, shape, zero_rows=()):
    zero_rows = list(zero_rows)

    def project(x):
        x = np.array(x, dtype=np.float64)
        if zero_rows:
            X = x.reshape(shape[0], -1)
            X[zero_rows] = 0.0
        n2 = float(np.dot(x, x))
        if n2 > P:
            x *= math.sqrt(P / n2)
        return x

    return project


def _steered_projector(a, P, shape, zero_rows=()):
    """Projection onto full-power precoders that all lie along ``a``."""
    zero_rows = list(zero_rows)
    u = a / np.linalg.norm(a)
    live = [j for j in range(shape[0]) if j not in zero_rows]

    def project(x):
        W = complexify(x, shape)
        coeff = W @ u.conj()
        coeff[zero_rows] = 0.0
        n = float(np.linalg.norm(coeff))
        if n == 0.0:
            coeff[live] = 1.0
            n = math.sqrt(len(live))
        coeff *= math.sqrt(P) / n
        return realify(coeff[:, None] * u[None, :])

    return project


def _sensing_only_optimum(spec, geometry, P, num_precoders, settings, seed):
    """Minimum beampattern MSE under the power budget (MSE metric pre-solve)."""
    A = steering_matrix(geometry, spec.angle_grid)
    d = spec.desired_pattern
    shape = (num_precoders, geometry.num_antennas)

    def neg_mse(x):
        return -_pattern_mse(complexify(x, shape), A, d, False)[0]

    def grad(x):
        return -realify(_pattern_mse(complexify(x, shape), A, d, True)[1])

    a = steering_vector(geometry, spec.target_angle)
    x0 = realify(np.tile(a * math.sqrt(P / (geometry.num_antennas * num_precoders)),
                         (num_precoders, 1)))
    res = projected_gradient_max(neg_mse, _power_projector(P, shape), x0,
                                 settings, gradient=grad, seed=seed)
    return -res.value, res.argument


def _restore(obj: PenalizedObjective, x, target_x, project):
    """Blend ``x`` toward a sensing-feasible point until the constraint holds.

    Returns the blended point and its violation.  The blend path stays in
    the power ball; bisection keeps the feasible end of the bracket.
    """
    viol = obj.violation_of(obj.sensing(x))
    if viol < VIOLATION_TOL:
        return x, viol
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if obj.violation_of(obj.sensing(project((1 - mid) * x + mid * target_x))) == 0.0:
            hi = mid
        else:
            lo = mid
    xr = project((1 - hi) * x + hi * target_x)
    return xr, obj.violation_of(obj.sensing(xr))


def _aligned_steer(x, a, shape, P):
    # every precoder rotated onto the target direction, keeping its phase
    # toward the target and its share of the power
    W = complexify(x, shape)
    M = shape[1]
    norms = np.linalg.norm(W, axis=1)
    total = float(np.linalg.norm(norms))
    if total == 0:
        c = np.full(shape[0], math.sqrt(P / (M * shape[0])))
    else:
        c = math.sqrt(P / M) * norms / total
    phase = np.exp(1j * np.angle(W @ a.conj()))
    return realify((c * phase)[:, None] * a[None, :])


def _warm_starts(design, channels, geometry, spec, P, N):
    K = channels.num_users
    M = geometry.num_antennas
    a = steering_vector(geometry, spec.target_angle)
    per = math.sqrt(P / N)
    # |h^H w| is maximized by w proportional to h
    mrt = [h / np.linalg.norm(h) * per if np.linalg.norm(h) > 0 else a / math.sqrt(M) * per
           for h in channels.user_channels]
    steer = [a / math.sqrt(M) * per] * K
    if N > K:
        mrt.append(a / math.sqrt(M) * per)
        steer = steer + [a / math.sqrt(M) * per]
    return [realify(np.array(mrt)), realify(np.array(steer))]


def tradeoff_point(
    design,
    channels: ChannelSet,
    geometry: ArrayGeometry,
    spec: SensingMetricSpec,
    power: float,
    constraint: float,
    settings: Optional[OptimizerSettings] = None,
    seed: Optional[RngSeed] = None,
    order=None,
    warm_start: Optional[BeamformerSet] = None,
    zero_sensing_precoder: bool = False,
) -> DownlinkPoint:
    """Best communication objective subject to a sensing constraint.

    Maximizes the design's communication value over beamformers with total
    power at most ``power`` and gain ``>= constraint`` (or MSE
    ``<= constraint``).  Each start (seeded random points, an MRT start, a
    target-steering start and the optional ``warm_start``) runs a penalty
    continuation: the penalty weight doubles and the soft-min temperature
    halves until the sensing violation drops below ``1e-6`` (at most 20
    doublings).  The final iterate is blended toward a sensing-feasible
    point if a residual violation remains.

    Raises
    ------
    InfeasibleConstraint
        If the constraint exceeds what any beamformer can reach.
    SolverFailed
        If no start ends with violation below ``1e-6``.
    """
    design = DownlinkDesign(design)
    settings = settings or OptimizerSettings()
    seed = seed if seed is not None else RngSeed(0)
    P = float(power)
    if not P > 0:
        raise ValueError("power must be positive")
    if geometry.num_antennas != channels.num_antennas:
        raise DimensionMismatch("geometry and channels disagree on the antenna count")
    K = channels.num_users
    M = geometry.num_antennas
    N = K + 1 if design.has_sensing_precoder else K
    shape = (N, M)
    tau = float(constraint)
    zero_rows = [K] if (zero_sensing_precoder and N > K) else []
    project = _power_projector(P, shape, zero_rows)

    a = steering_vector(geometry, spec.target_angle)
    if spec.kind == "gain_at_target":
        if tau < 0 or tau > P * M * (1 + 1e-12) + POWER_TOL:
            raise InfeasibleConstraint(f"gain constraint {tau} outside [0, {P * M}]")
        scale = P * M
        sensing_target = None
        if tau >= P * M - VIOLATION_TOL:
            # only full power along the target direction meets the constraint
            project = _steered_projector(a, P, shape, zero_rows)
    else:
        n_sense = N - len(zero_rows)
        mse_min, x_sense = _sensing_only_optimum(
            spec, geometry, P, n_sense, dataclasses.replace(settings, restarts=4),
            seed.child(0xC0FFEE))
        if tau < mse_min - 1e-9:
            raise InfeasibleConstraint(f"MSE constraint {tau} below the attainable {mse_min}")
        scale = max(tau, 1e-12)
        sensing_target = np.zeros(N * M * 2)
        sensing_target[: n_sense * M * 2] = x_sense

    starts = [
        project(np.sqrt(P) * z / np.linalg.norm(z))
        for z in (seed.normal(r, 2 * N * M) for r in range(settings.restarts))
    ]
    starts += [project(s) for s in _warm_starts(design, channels, geometry, spec, P, N)]
    if warm_start is not None:
        ws = warm_start.stacked()
        if ws.shape == shape:
            starts.append(project(realify(ws)))

    inner = dataclasses.replace(settings, restarts=1)
    has_min = any(kind == "min" and len(idx) > 1
                  for _, idx, kind in _rate_terms(design, K, np.arange(K), not zero_rows).groups)

    def objective(stage):
        temperature = TEMPERATURE_INIT * 0.5**stage if has_min else 0.0
        return PenalizedObjective(design, channels, geometry, spec, tau,
                                  PENALTY_INIT * 2.0**stage, temperature, order, scale,
                                  not zero_rows), temperature

    def true_comm(x):
        b = BeamformerSet.from_stacked(complexify(x, shape), K)
        return evaluate_design(design, channels, b, order)[2]

    def restore_target(x):
        if sensing_target is not None:
            return sensing_target
        return _aligned_steer(x, a, shape, P)

    iterations = 0
    obj0, _ = objective(0)
    screen = dataclasses.replace(inner, max_iters=min(inner.max_iters, SCREEN_ITERS))
    first = []
    for x in starts:
        res = projected_gradient_max(obj0, project, x, screen, gradient=obj0.gradient)
        iterations += res.iterations
        first.append((res.value, res.argument, not res.converged))
    # only the most promising starts go through the full continuation
    keep = max(2, -(-len(first) // PRUNE_FRACTION))
    ranked = sorted(range(len(first)), key=lambda i: (-first[i][0], i))[:keep]

    best = None
    for i in sorted(ranked):
        x = first[i][1]
        stage = 0
        while True:
            obj, temperature = objective(stage)
            if stage > 0 or first[i][2]:
                res = projected_gradient_max(obj, project, x, inner, gradient=obj.gradient)
                iterations += res.iterations
                x = res.argument
            viol = obj.violation_of(obj.sensing(x))
            smooth_enough = temperature <= TEMPERATURE_FINAL * (1 + 1e-9)
            if smooth_enough and viol < VIOLATION_TOL:
                break
            if smooth_enough:
                xr, vr = _restore(obj, x, restore_target(x), project)
                if vr < VIOLATION_TOL and true_comm(x) - true_comm(xr) <= RESTORE_LOSS_TOL:
                    x, viol = xr, vr
                    break
            if stage == MAX_DOUBLINGS:
                break
            stage += 1
        if viol >= VIOLATION_TOL:
            x, viol = _restore(obj, x, restore_target(x), project)
        if viol >= VIOLATION_TOL:
            continue
        value = true_comm(x)
        if best is None or value > best[0]:
            best = (value, x, viol)
    if best is None:
        raise SolverFailed("no start reached a sensing violation below 1e-6")

    b = BeamformerSet.from_stacked(complexify(best[1], shape), K)
    return _make_point(design, channels, geometry, spec, b, order, best[2],
                       {"iterations": iterations, "starts": len(starts), "refined": keep})


def _make_point(design, channels, geometry, spec, b, order, viol, solver):
    rates, mc, value = evaluate_design(design, channels, b, order)
    metric = sensing_metric(transmit_covariance(b), spec, geometry)
    return DownlinkPoint(
        sensing_value=_sensing_value(spec, metric),
        comm_value=value,
        per_user_rates=np.asarray(rates, dtype=float),
        multicast_rate=float(mc),
        beamformers=b,
        constraint_violation=float(viol),
        solver=solver,
    )


def _meets(spec, point, tau):
    if spec.kind == "gain_at_target":
        return point.sensing_value >= tau - VIOLATION_TOL
    return -point.sensing_value <= tau + VIOLATION_TOL


def _downlink_row(design, tau, point, status="ok"):
    if point is None:
        return RegionRow(design=design.value, sweep_param=float(tau), sensing_value=None,
                         comm_value=None, aux={}, status=status)
    aux = {f"rate_{k + 1}": float(r) for k, r in enumerate(point.per_user_rates)}
    aux["multicast_rate"] = point.multicast_rate
    aux["tx_power"] = point.beamformers.total_power
    return RegionRow(design=design.value, sweep_param=float(tau),
                     sensing_value=point.sensing_value, comm_value=point.comm_value,
                     aux=aux, status=status)


def region_sweep_downlink(
    design,
    channels: ChannelSet,
    geometry: ArrayGeometry,
    spec: SensingMetricSpec,
    power: float,
    sweep: Sequence[float],
    settings: Optional[OptimizerSettings] = None,
    seed: Optional[RngSeed] = None,
    order=None,
    warm_start_levels: bool = True,
) -> RegionResult:
    """Epsilon-constraint sweep over sensing-constraint levels.

    Levels must be ascending.  Each level warm-starts from the previous
    solution.  Afterwards every level adopts any other level's solution
    that also satisfies its constraint and communicates more, so the
    reported curve is monotone.  Failed levels are recorded with status
    ``infeasible`` or ``solver_failed`` and do not stop the sweep.
    """
    design = DownlinkDesign(design)
    levels = [float(t) for t in sweep]
    if any(b < a for a, b in zip(levels, levels[1:])):
        raise ValueError("sweep levels must be sorted ascending")
    points, statuses = [], []
    previous = None
    for tau in levels:
        try:
            pt = tradeoff_point(design, channels, geometry, spec, power, tau, settings, seed,
                                order, previous if warm_start_levels else None)
            points.append(pt)
            statuses.append("ok")
            previous = pt.beamformers
        except InfeasibleConstraint:
            points.append(None)
            statuses.append("infeasible")
        except (SolverFailed, NomaIsacError, FloatingPointError):
            points.append(None)
            statuses.append("solver_failed")

    for i, tau in enumerate(levels):
        if points[i] is None:
            continue
        for j in range(len(levels)):
            other = points[j]
            if other is not None and other.comm_value > points[i].comm_value \
                    and _meets(spec, other, tau):
                points[i] = other
    rows = [_downlink_row(design, tau, pt, st) for tau, pt, st in zip(levels, points, statuses)]
    result = RegionResult(rows=rows, points=points,
                          metadata={"design": design.value, "rng": RNG_ID})
    return result.mark_pareto()
