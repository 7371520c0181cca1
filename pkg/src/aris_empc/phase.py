"""Closed-form SNR, quadratic rate bound and least-squares RIS phase design.

Per user k the reflected field is ``sqrt(C_k) * sum_n exp(j B_n^k)`` with

    B_n^k = g_k * n + theta_n,   g_k = (2 pi / lambda) d_RIS (sin mu_k - sin phi)

and ``C_k = g_BS * (P / sigma^2) |alpha beta_k|^2``. The factor ``g_BS`` is the
MRT array gain ``|Gamma_BS^H w|^2 = M``. The sign of ``g_k`` follows from the
channel model with Hermitian user channels; :func:`aris_empc.channel.snr_direct`
is the reference the closed forms must reproduce.

Sums over ``n != m`` count ordered pairs, i.e. twice the sum over ``n < m``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import ChannelState
from .scenario import ScenarioConfig, UserSet

__all__ = [
    "PairDifferenceSystem",
    "WeightSet",
    "wrap_phases",
    "wrap_angle",
    "snr_scale",
    "phase_slopes",
    "weights",
    "snr_closed_form",
    "rate_lower_bound",
    "true_rate_term",
    "build_difference_system",
    "build_target_vector",
    "optimal_phases",
    "surrogate_objective",
]

TWO_PI = 2.0 * np.pi
PINV_RCOND = 1e-10


@dataclass(frozen=True)
class PairDifferenceSystem:
    a_matrix: np.ndarray  # (N(N-1)/2, N)
    pair_order: tuple[tuple[int, int], ...]

    @property
    def first(self) -> np.ndarray:
        return np.array([p[0] for p in self.pair_order])

    @property
    def second(self) -> np.ndarray:
        return np.array([p[1] for p in self.pair_order])


@dataclass(frozen=True)
class WeightSet:
    gamma: np.ndarray  # (K,)
    c: np.ndarray      # (K,)


def wrap_phases(theta) -> np.ndarray:
    """Map phases into [0, 2 pi)."""
    out = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    out[out >= TWO_PI] = 0.0
    return out


def wrap_angle(x) -> np.ndarray:
    """Map angle differences into [-pi, pi)."""
    return np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi


def _gain(config: ScenarioConfig, gain) -> float:
    return float(config.num_bs_antennas if gain is None else gain)


def snr_scale(channels: ChannelState, config: ScenarioConfig, gain=None) -> np.ndarray:
    """``C_k`` for every user, including the BS array gain factor."""
    snr0 = config.tx_power_per_user / config.noise_power
    return _gain(config, gain) * snr0 * np.abs(channels.alpha * channels.beta) ** 2


def phase_slopes(channels: ChannelState, config: ScenarioConfig) -> np.ndarray:
    """Per-element geometric phase increment ``g_k`` for every user."""
    a = channels.angles
    return TWO_PI / config.wavelength * config.elem_sep_ris * (a.sin_aod_ris_user - a.sin_aoa_bs_ris)


def weights(channels: ChannelState, config: ScenarioConfig, gain=None) -> WeightSet:
    c = snr_scale(channels, config, gain)
    n = config.num_ris_elements
    k = len(c)
    gamma = config.bandwidth * c / (np.log(2.0) * k * (1.0 + c * n**2))
    return WeightSet(gamma=gamma, c=c)


def _phase_terms(phases, user_index, channels, config) -> np.ndarray:
    theta = np.asarray(phases, dtype=float)
    if theta.shape != (config.num_ris_elements,):
        raise ValueError(f"expected {config.num_ris_elements} phases, got shape {theta.shape}")
    g = phase_slopes(channels, config)[user_index]
    return g * np.arange(theta.size) + theta


def _pair_residuals(b_terms: np.ndarray, wrap: bool) -> np.ndarray:
    sys = build_difference_system(b_terms.size)
    r = sys.a_matrix @ b_terms
    return wrap_angle(r) if wrap else r


def snr_closed_form(q, phases, user_index: int, channels: ChannelState, config: ScenarioConfig,
                    gain=None) -> float:
    b_terms = _phase_terms(phases, user_index, channels, config)
    n = b_terms.size
    if n == 1:
        pair_sum = 0.0
    else:
        pair_sum = 2.0 * np.cos(_pair_residuals(b_terms, wrap=False)).sum()
    c = snr_scale(channels, config, gain)[user_index]
    return float(c * (n + pair_sum))


def rate_lower_bound(q, phases, user_index: int, channels: ChannelState, config: ScenarioConfig,
                     gain=None, wrap: bool = True) -> float:
    """Quadratic lower bound on the per-second rate of one user.

    With ``wrap`` the pair residuals are first reduced to [-pi, pi), which
    keeps the bound valid (cosine is periodic) and makes it a function of the
    phases modulo 2 pi.
    """
    b_terms = _phase_terms(phases, user_index, channels, config)
    gamma = weights(channels, config, gain).gamma[user_index]
    n = b_terms.size
    sq = 0.0 if n == 1 else np.sum(_pair_residuals(b_terms, wrap) ** 2)
    return float(gamma * (n**2 - sq))  # 1/2 * ordered-pair sum == unordered sum


def true_rate_term(q, phases, user_index: int, channels: ChannelState, config: ScenarioConfig,
                   gain=None) -> float:
    """``(B / K) log2(1 + eta_k)`` using the closed-form SNR."""
    snr = snr_closed_form(q, phases, user_index, channels, config, gain)
    return float(config.bandwidth / len(channels.beta) * np.log1p(snr) / np.log(2.0))


@lru_cache(maxsize=64)
def build_difference_system(n_elements: int) -> PairDifferenceSystem:
    """Stack the blocks ``[0, 1, -I]`` so row (n, m), n < m, computes theta_n - theta_m."""
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    blocks, pairs = [], []
    for i in range(n_elements - 1):
        rows = n_elements - 1 - i
        block = np.hstack([np.zeros((rows, i)), np.ones((rows, 1)), -np.eye(rows)])
        blocks.append(block)
        pairs.extend((i, m) for m in range(i + 1, n_elements))
    a = np.vstack(blocks) if blocks else np.zeros((0, n_elements))
    a.setflags(write=False)
    return PairDifferenceSystem(a, tuple(pairs))


def build_target_vector(q, user_index: int, channels: ChannelState, config: ScenarioConfig,
                        paper_literal: bool = False) -> np.ndarray:
    """Pair targets ``b_(n,m)`` such that ``theta_n - theta_m = b`` zeroes the residual.

    ``paper_literal`` drops the BS-side angle term, reproducing the textbook
    formula ``(2 pi / lambda)(m - n) d_RIS sin mu_k``; diagnostics only.
    """
    sys = build_difference_system(config.num_ris_elements)
    if paper_literal:
        s = channels.angles.sin_aod_ris_user[user_index]
        slope = TWO_PI / config.wavelength * config.elem_sep_ris * s
    else:
        slope = phase_slopes(channels, config)[user_index]
    return slope * (sys.second - sys.first).astype(float)


def optimal_phases(q, channels: ChannelState, users: UserSet, config: ScenarioConfig, gain=None,
                   wrap: bool = True, paper_literal_b: bool = False) -> np.ndarray:
    """Minimum-norm weighted least-squares phases, wrapped into [0, 2 pi).

    Solves ``min_theta sum_k gamma_k ||A theta - b^k||^2`` through the
    pseudo-inverse of the rank-deficient normal matrix.
    """
    sys = build_difference_system(config.num_ris_elements)
    a = sys.a_matrix
    gamma = weights(channels, config, gain).gamma
    ata = a.T @ a
    normal = np.zeros_like(ata)
    rhs = np.zeros(config.num_ris_elements)
    for k in range(len(users)):
        b = build_target_vector(q, k, channels, config, paper_literal=paper_literal_b)
        normal += gamma[k] * ata
        rhs += gamma[k] * (a.T @ b)
    theta = np.linalg.pinv(normal, rcond=PINV_RCOND) @ rhs
    return wrap_phases(theta) if wrap else theta


def surrogate_objective(q, phases, channels: ChannelState, users: UserSet, config: ScenarioConfig,
                        gain=None, wrap: bool = True) -> float:
    """``sum_k gamma_k sum_{n != m} (B_n^k - B_m^k)^2``; the quantity the LS phases minimize."""
    gamma = weights(channels, config, gain).gamma
    total = 0.0
    for k in range(len(users)):
        r = _pair_residuals(_phase_terms(phases, k, channels, config), wrap)
        total += gamma[k] * 2.0 * np.sum(r**2)
    return float(total)
