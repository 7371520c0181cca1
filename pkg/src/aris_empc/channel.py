"""Line-of-sight link geometry, ULA steering vectors, channels and MRT.

Both arrays lie along the global x-axis: the BS ULA sits at the origin and the
RIS ULA rides on the UAV at ``[q, L]`` with a fixed horizontal orientation. An
angle sine is therefore the x-component of the unit line-of-sight direction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .scenario import ScenarioConfig, UserSet

__all__ = [
    "AngleSet",
    "ChannelState",
    "uav_position",
    "angles_at",
    "steering_vector",
    "random_phases",
    "build_channels",
    "mrt_precoder",
    "snr_direct",
]


@dataclass(frozen=True)
class AngleSet:
    sin_aoa_bs_ris: float       # arrival at the RIS from the BS
    sin_aod_bs: float           # departure at the BS toward the RIS
    sin_aod_ris_user: np.ndarray  # (K,) departure at the RIS toward each user


@dataclass(frozen=True)
class ChannelState:
    h_bs_ris: np.ndarray    # (N, M)
    h_ris_user: np.ndarray  # (K, N); row k is h_k, so h_k^H = row.conj()
    alpha: complex
    beta: np.ndarray        # (K,)
    random_phase_H: float
    random_phase_h: float
    angles: AngleSet
    dist_bs: float
    dist_users: np.ndarray  # (K,)


def uav_position(q, altitude: float) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.array([q[0], q[1], altitude])


def _link_geometry(q, users: UserSet, config: ScenarioConfig):
    rho = uav_position(q, config.altitude)
    dist_bs = float(np.linalg.norm(rho))
    if dist_bs == 0.0:
        raise GeometryError("UAV coincides with the BS at the origin")
    diff = users.positions - rho
    dist_users = np.linalg.norm(diff, axis=1)
    hit = np.flatnonzero(dist_users == 0.0)
    if hit.size:
        raise GeometryError(f"UAV coincides with user {int(hit[0])}")
    return rho, dist_bs, diff, dist_users


def angles_at(q, users: UserSet, config: ScenarioConfig) -> AngleSet:
    rho, dist_bs, diff, dist_users = _link_geometry(q, users, config)
    sin_kappa = rho[0] / dist_bs
    return AngleSet(
        sin_aoa_bs_ris=-sin_kappa,
        sin_aod_bs=sin_kappa,
        sin_aod_ris_user=diff[:, 0] / dist_users,
    )


def steering_vector(sin_angle: float, num_elements: int, elem_sep: float, wavelength: float) -> np.ndarray:
    """ULA response ``exp(-j 2 pi n d sin / lambda)`` for n = 0..num_elements-1."""
    n = np.arange(num_elements)
    return np.exp(-2j * np.pi * n * elem_sep * sin_angle / wavelength)


def random_phases(q, seed: int) -> tuple[float, float]:
    """The pair (phi_H, phi_h), a deterministic function of (q, seed)."""
    bits = np.asarray(q, dtype=np.float64).view(np.uint64)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), *map(int, bits)]))
    phi_H, phi_h = rng.uniform(0.0, 2 * np.pi, size=2)
    return float(phi_H), float(phi_h)


def build_channels(q, users: UserSet, config: ScenarioConfig, seed: int) -> ChannelState:
    rho, dist_bs, diff, dist_users = _link_geometry(q, users, config)
    angles = angles_at(q, users, config)
    lam = config.wavelength
    phi_H, phi_h = random_phases(q, seed)
    sqrt_l0 = np.sqrt(config.ref_path_loss)

    alpha = sqrt_l0 / dist_bs * np.exp(1j * phi_H) * np.exp(-2j * np.pi * dist_bs / lam)
    beta = sqrt_l0 / dist_users * np.exp(1j * phi_h) * np.exp(-2j * np.pi * dist_users / lam)

    n_ris = config.num_ris_elements
    g_ris = steering_vector(angles.sin_aoa_bs_ris, n_ris, config.elem_sep_ris, lam)
    g_bs = steering_vector(angles.sin_aod_bs, config.num_bs_antennas, config.elem_sep_bs, lam)
    H = alpha * np.outer(g_ris, g_bs.conj())

    # h_k^H = beta_k * Gamma_RIS(mu_k)^H  =>  h_k = conj(beta_k) * Gamma_RIS(mu_k)
    g_users = np.stack([
        steering_vector(s, n_ris, config.elem_sep_ris, lam) for s in angles.sin_aod_ris_user
    ])
    h = beta.conj()[:, None] * g_users
    return ChannelState(H, h, complex(alpha), beta, phi_H, phi_h, angles, dist_bs, dist_users)


def mrt_precoder(q, config: ScenarioConfig) -> np.ndarray:
    rho = uav_position(q, config.altitude)
    dist_bs = float(np.linalg.norm(rho))
    if dist_bs == 0.0:
        raise GeometryError("UAV coincides with the BS at the origin")
    g_bs = steering_vector(rho[0] / dist_bs, config.num_bs_antennas, config.elem_sep_bs, config.wavelength)
    return g_bs / np.linalg.norm(g_bs)


def snr_direct(q, phases, user_index: int, channels: ChannelState, config: ScenarioConfig) -> float:
    """SNR from literal matrix arithmetic ``P |h_k^H Theta H w|^2 / sigma^2``.

    Deliberately unoptimized: this is the reference the closed forms are
    checked against.
    """
    theta = np.asarray(phases, dtype=float)
    if theta.shape != (config.num_ris_elements,):
        raise ValueError(f"expected {config.num_ris_elements} phases, got shape {theta.shape}")
    w = mrt_precoder(q, config)
    Theta = np.diag(np.exp(1j * theta))
    hk_H = channels.h_ris_user[user_index].conj()
    signal = hk_H @ Theta @ channels.h_bs_ris @ w
    return float(config.tx_power_per_user * abs(signal) ** 2 / config.noise_power)
