"""Batched horizon evaluation: numba kernel plus a pure-numpy twin.

Set ``ARIS_EMPC_DISABLE_NUMBA=1`` to force the numpy path (also used when
numba is not importable). Both paths implement the same arithmetic and must
agree to rounding.

The least-squares phases reduce to ``theta = s * u`` per position: every
user's target vector is a multiple ``g_k`` of one fixed pair vector, so the
pseudo-inverse solve collapses onto the precomputed direction
``u = pinv(A^T A) A^T e`` with ``s = sum_k gamma_k g_k / sum_k gamma_k``.
"""
from __future__ import annotations

import os
from functools import lru_cache

import numpy as np

from .phase import PINV_RCOND, build_difference_system

_DISABLE = os.environ.get("ARIS_EMPC_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLE:
        raise ImportError("disabled by ARIS_EMPC_DISABLE_NUMBA")
    import numba
except ImportError:
    numba = None

USE_NUMBA = numba is not None


@lru_cache(maxsize=64)
def unit_phase_direction(n_elements: int) -> np.ndarray:
    sys = build_difference_system(n_elements)
    a = sys.a_matrix
    e = (sys.second - sys.first).astype(float)
    u = np.linalg.pinv(a.T @ a, rcond=PINV_RCOND) @ (a.T @ e)
    u.setflags(write=False)
    return u


def evaluate_batch_numpy(x0, controls, dt, users_xy, altitude, psi, unit_phase, coef, bw_user,
                         c1, c2, gravity, mass):
    """Evaluate P candidate control sequences of length S0 from state ``x0``.

    Returns ``(bits, propulsion, kinetic, speeds, q_end)`` with shapes
    (P,), (P,), (P,), (P, S0 + 1), (P, 2).
    """
    controls = np.asarray(controls, dtype=float)
    p, s0, _ = controls.shape
    vel = np.empty((p, s0 + 1, 2))
    pos = np.empty((p, s0 + 1, 2))
    vel[:, 0] = x0[:2]
    pos[:, 0] = x0[2:]
    for s in range(s0):
        a = controls[:, s]
        pos[:, s + 1] = pos[:, s] + vel[:, s] * dt + 0.5 * a * dt * dt
        vel[:, s + 1] = vel[:, s] + a * dt

    speeds = np.sqrt(vel[..., 0] ** 2 + vel[..., 1] ** 2)
    v = vel[:, :s0]
    sp = speeds[:, :s0]
    aa = np.sum(controls * controls, axis=-1)
    av = np.sum(controls * v, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lateral = aa - av * av / (sp * sp)
        power = c1 * sp**3 + c2 / sp * (1.0 + lateral / gravity**2)
    propulsion = dt * power.sum(axis=1)
    kinetic = 0.5 * mass * (speeds[:, -1] ** 2 - speeds[:, 0] ** 2)

    # Rates at the S0 interval start points.
    pts = pos[:, :s0].reshape(-1, 2)
    qx, qy = pts[:, :1], pts[:, 1:]
    d_bs2 = qx**2 + qy**2 + altitude**2
    sin_phi = -qx / np.sqrt(d_bs2)
    dx = users_xy[:, 0] - qx
    dy = users_xy[:, 1] - qy
    dk2 = dx**2 + dy**2 + altitude**2
    slope = psi * (dx / np.sqrt(dk2) - sin_phi)          # (P*S0, K)
    c = coef / (d_bs2 * dk2)
    n = unit_phase.size
    w = c / (1.0 + c * n * n)
    s_bar = np.sum(w * slope, axis=1) / np.sum(w, axis=1)
    idx = np.arange(n)
    phase = slope[:, :, None] * idx + (s_bar[:, None] * unit_phase)[:, None, :]
    re = np.cos(phase).sum(axis=-1)
    im = np.sin(phase).sum(axis=-1)
    snr = c * (re * re + im * im)
    rate = bw_user * np.log1p(snr).sum(axis=1) / np.log(2.0)
    bits = dt * rate.reshape(p, s0).sum(axis=1)
    return bits, propulsion, kinetic, speeds, pos[:, -1].copy()


if USE_NUMBA:

    @numba.njit(cache=True, fastmath=False)
    def _evaluate_batch_numba(x0, controls, dt, users_xy, altitude, psi, unit_phase, coef, bw_user,
                              c1, c2, gravity, mass):
        p, s0, _ = controls.shape
        k_users = users_xy.shape[0]
        n = unit_phase.shape[0]
        bits = np.zeros(p)
        propulsion = np.zeros(p)
        kinetic = np.zeros(p)
        speeds = np.empty((p, s0 + 1))
        q_end = np.empty((p, 2))
        slope = np.empty(k_users)
        c = np.empty(k_users)
        ur = np.empty(n)
        ui = np.empty(n)
        g2 = gravity * gravity
        for i in range(p):
            vx, vy, qx, qy = x0[0], x0[1], x0[2], x0[3]
            speeds[i, 0] = np.sqrt(vx * vx + vy * vy)
            for s in range(s0):
                ax, ay = controls[i, s, 0], controls[i, s, 1]
                sp = speeds[i, s]
                if sp > 0.0:
                    lateral = ax * ax + ay * ay - (ax * vx + ay * vy) ** 2 / (sp * sp)
                    propulsion[i] += dt * (c1 * sp**3 + c2 / sp * (1.0 + lateral / g2))
                else:
                    propulsion[i] = np.inf

                d_bs2 = qx * qx + qy * qy + altitude * altitude
                sin_phi = -qx / np.sqrt(d_bs2)
                wsum = 0.0
                wslope = 0.0
                for k in range(k_users):
                    dx = users_xy[k, 0] - qx
                    dy = users_xy[k, 1] - qy
                    dk2 = dx * dx + dy * dy + altitude * altitude
                    slope[k] = psi * (dx / np.sqrt(dk2) - sin_phi)
                    c[k] = coef / (d_bs2 * dk2)
                    w = c[k] / (1.0 + c[k] * n * n)
                    wsum += w
                    wslope += w * slope[k]
                s_bar = wslope / wsum
                # exp(j(g m + s u_m)) = exp(j g)^m exp(j s u_m): the second factor
                # is shared by all users, the first is a running product.
                for m in range(n):
                    ur[m] = np.cos(s_bar * unit_phase[m])
                    ui[m] = np.sin(s_bar * unit_phase[m])
                rate = 0.0
                for k in range(k_users):
                    zr = np.cos(slope[k])
                    zi = np.sin(slope[k])
                    pr = 1.0
                    pi = 0.0
                    re = 0.0
                    im = 0.0
                    for m in range(n):
                        re += pr * ur[m] - pi * ui[m]
                        im += pr * ui[m] + pi * ur[m]
                        pr, pi = pr * zr - pi * zi, pr * zi + pi * zr
                    rate += np.log1p(c[k] * (re * re + im * im))
                bits[i] += dt * bw_user * rate / np.log(2.0)

                qx += vx * dt + 0.5 * ax * dt * dt
                qy += vy * dt + 0.5 * ay * dt * dt
                vx += ax * dt
                vy += ay * dt
                speeds[i, s + 1] = np.sqrt(vx * vx + vy * vy)
            kinetic[i] = 0.5 * mass * (speeds[i, s0] ** 2 - speeds[i, 0] ** 2)
            q_end[i, 0] = qx
            q_end[i, 1] = qy
        return bits, propulsion, kinetic, speeds, q_end

    def evaluate_batch_numba(x0, controls, dt, users_xy, altitude, psi, unit_phase, coef, bw_user,
                             c1, c2, gravity, mass):
        return _evaluate_batch_numba(
            np.ascontiguousarray(x0, dtype=np.float64),
            np.ascontiguousarray(controls, dtype=np.float64),
            float(dt), np.ascontiguousarray(users_xy, dtype=np.float64), float(altitude), float(psi),
            np.ascontiguousarray(unit_phase, dtype=np.float64), float(coef), float(bw_user),
            float(c1), float(c2), float(gravity), float(mass),
        )

    evaluate_batch = evaluate_batch_numba
else:
    evaluate_batch_numba = None
    evaluate_batch = evaluate_batch_numpy
