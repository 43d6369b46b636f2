"""Array responses, user channels and scalar link budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AngleOutOfRange, DimensionMismatch, DomainError
from .numerics import RngSeed

__all__ = [
    "ArrayGeometry",
    "ChannelSet",
    "CorrelationSpec",
    "LinkBudget",
    "steering_vector",
    "steering_matrix",
    "draw_rayleigh_channels",
    "exponential_snr_draw",
    "exponential_snr_draws",
]

_ANGLE_SLACK = 1e-12


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array with ``num_antennas`` elements."""

    num_antennas: int
    element_spacing: float = 0.5

    def __post_init__(self):
        if int(self.num_antennas) < 1:
            raise ValueError("num_antennas must be at least 1")
        if not self.element_spacing > 0:
            raise ValueError("element_spacing must be positive")


@dataclass(frozen=True)
class CorrelationSpec:
    rho: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """``K`` user channels stacked as rows of a ``(K, M)`` array."""

    user_channels: np.ndarray
    noise_power: float = 1.0

    def __post_init__(self):
        h = np.asarray(self.user_channels, dtype=np.complex128)
        if h.ndim == 1:
            h = h[None, :]
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
            raise DimensionMismatch(f"user_channels must have shape (K, M), got {h.shape}")
        if not np.all(np.isfinite(h)):
            raise DomainError("user_channels contain non-finite entries")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        h.setflags(write=False)
        object.__setattr__(self, "user_channels", h)

    @property
    def num_users(self) -> int:
        return self.user_channels.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.user_channels.shape[1]


@dataclass(frozen=True)
class LinkBudget:
    """Scalar SNRs and power budget shared by uplink and downlink models.

    ``gamma_s`` is the sensing-echo SNR and ``gamma_c`` the uplink
    communication SNR (both linear).  ``rho_resid`` is the fraction of echo
    power left after predictive echo subtraction (1 means none).
    """

    gamma_s: float = 1.0
    gamma_c: float = 1.0
    kappa: float = 1.0
    rho_resid: float = 1.0
    total_power: float = 1.0

    def __post_init__(self):
        for name in ("gamma_s", "gamma_c"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be a finite nonnegative number, got {value}")
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not 0.0 <= self.rho_resid <= 1.0:
            raise ValueError(f"rho_resid must lie in [0, 1], got {self.rho_resid}")
        if not (self.total_power > 0 and math.isfinite(self.total_power)):
            raise ValueError(f"total_power must be positive, got {self.total_power}")


def _check_angle(theta):
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(~np.isfinite(theta)) or np.any(np.abs(theta) > np.pi / 2 + _ANGLE_SLACK):
        raise AngleOutOfRange("angles must lie in [-pi/2, pi/2]")
    return theta


def steering_vector(geometry: ArrayGeometry, theta: float) -> np.ndarray:
    """ULA response ``exp(i 2 pi d m sin(theta))`` for ``m = 0..M-1``."""
    theta = float(_check_angle(theta))
    m = np.arange(geometry.num_antennas)
    return np.exp(1j * 2.0 * np.pi * geometry.element_spacing * m * math.sin(theta))


def steering_matrix(geometry: ArrayGeometry, thetas) -> np.ndarray:
    """Steering vectors for several angles, one per row: shape ``(L, M)``."""
    thetas = _check_angle(np.atleast_1d(thetas))
    m = np.arange(geometry.num_antennas)
    return np.exp(1j * 2.0 * np.pi * geometry.element_spacing * np.outer(np.sin(thetas), m))


def draw_rayleigh_channels(
    geometry: ArrayGeometry,
    num_users: int,
    spec: CorrelationSpec,
    seed: RngSeed,
    trial: int = 0,
    noise_power: float = 1.0,
) -> ChannelSet:
    """Correlated Rayleigh user channels.

    User 0 gets i.i.d. unit-variance CSCG entries ``h0``; every other user
    ``h_k = rho h0 + sqrt(1 - rho^2) g_k`` with independent ``g_k``.
    ``trial`` selects the substream, so draw ``t`` of a sweep is
    reproducible in isolation.
    """
    if int(num_users) < 1:
        raise ValueError("num_users must be at least 1")
    M = geometry.num_antennas
    z = seed.complex_normal(trial, (num_users, M))
    h = np.empty_like(z)
    h[0] = z[0]
    if num_users > 1:
        rho = spec.rho
        h[1:] = rho * z[0] + math.sqrt(max(0.0, 1.0 - rho * rho)) * z[1:]
        if rho == 1.0:
            h[1:] = z[0]
    return ChannelSet(h, noise_power)


def exponential_snr_draws(mean_snr: float, trials, seed: RngSeed) -> np.ndarray:
    """Vectorized :func:`exponential_snr_draw` over an array of trial indices."""
    if not mean_snr > 0:
        raise ValueError(f"mean_snr must be positive, got {mean_snr}")
    u = seed.uniform(np.asarray(trials))
    return mean_snr * -np.log(u) + 0.0


def exponential_snr_draw(mean_snr: float, trial: int, seed: RngSeed) -> float:
    """Rayleigh-fading SNR: exponential with mean ``mean_snr``."""
    return float(exponential_snr_draws(mean_snr, trial, seed))
