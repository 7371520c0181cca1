"""Independent reference computations used by the tests.

Everything here is rebuilt from raw positions and scenario numbers, without
calling the package's phase or kernel code, so agreement is a real check.
"""
import itertools

import numpy as np


def geometry_terms(q, users, cfg):
    """Per-user (slope g_k, C_k) from positions: the phase step across the
    surface and the coherent SNR scale including the BS array gain."""
    qx, qy = q
    rho = np.array([qx, qy, cfg.altitude])
    d_bs = np.sqrt(rho @ rho)
    diff = users.positions - rho
    d_k = np.sqrt(np.sum(diff**2, axis=1))
    sin_phi = -qx / d_bs
    sin_mu = diff[:, 0] / d_k
    slope = 2 * np.pi / cfg.wavelength * cfg.elem_sep_ris * (sin_mu - sin_phi)
    c = cfg.num_bs_antennas * cfg.tx_power_per_user / cfg.noise_power * cfg.ref_path_loss**2 / (d_bs * d_k) ** 2
    return slope, c


def weights_from(c, cfg):
    k = len(c)
    n = cfg.num_ris_elements
    return cfg.bandwidth * c / (np.log(2) * k * (1 + c * n * n))


def wrap(x):
    return np.mod(x + np.pi, 2 * np.pi) - np.pi


def surrogate_two_element_grid(q, users, cfg, points):
    """Wrapped surrogate on a points x points grid of (theta_0, theta_1).

    For two elements the only pair residual of user k is
    theta_0 - theta_1 - g_k. Returns (values, axis).
    """
    slope, c = geometry_terms(q, users, cfg)
    gamma = weights_from(c, cfg)
    axis = np.arange(points) * (2 * np.pi / points)
    d = axis[:, None] - axis[None, :]
    vals = np.zeros_like(d)
    for g, w in zip(slope, gamma):
        vals += w * 2.0 * wrap(d - g) ** 2
    return vals, axis


def pair_matrix(n):
    rows = []
    for i, j in itertools.combinations(range(n), 2):
        r = np.zeros(n)
        r[i], r[j] = 1.0, -1.0
        rows.append(r)
    return np.array(rows)


def unwrapped_surrogate(theta, q, users, cfg):
    slope, c = geometry_terms(q, users, cfg)
    gamma = weights_from(c, cfg)
    n = cfg.num_ris_elements
    a = pair_matrix(n)
    idx = np.arange(n)
    total = 0.0
    for g, w in zip(slope, gamma):
        r = a @ (g * idx + theta)
        total += w * 2.0 * np.sum(r**2)
    return total


def pgd_minimize(q, users, cfg, tol=1e-10, max_iter=200000):
    """Projected gradient descent on the unwrapped surrogate.

    The objective depends only on phase differences, so iterates are kept in
    the zero-mean subspace (projection removes the mean) where the problem
    is strictly convex. Step 1/L with L the largest Hessian eigenvalue.
    """
    slope, c = geometry_terms(q, users, cfg)
    gamma = weights_from(c, cfg)
    n = cfg.num_ris_elements
    a = pair_matrix(n)
    idx = np.arange(n)
    ata = a.T @ a
    lip = 4.0 * gamma.sum() * np.linalg.eigvalsh(ata).max()
    theta = np.zeros(n)
    for _ in range(max_iter):
        grad = np.zeros(n)
        for g, w in zip(slope, gamma):
            grad += 4.0 * w * a.T @ (a @ (g * idx + theta))
        grad -= grad.mean()
        if np.linalg.norm(grad) < tol * max(1.0, lip):
            break
        theta = theta - grad / lip
        theta -= theta.mean()
    return theta


def brute_force_snr(q, theta, k, users, cfg):
    """|sum_n exp(j B_n)|^2 scaled by C_k, with B_n from the positions."""
    slope, c = geometry_terms(q, users, cfg)
    b = slope[k] * np.arange(cfg.num_ris_elements) + theta
    return c[k] * abs(np.exp(1j * b).sum()) ** 2
