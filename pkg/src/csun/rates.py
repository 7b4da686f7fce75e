"""Slack fixed point and Monte-Carlo ground truth for the ergodic rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Allocation, NumericalError, Scenario, SlackState

BLOCK = 4096


def _fixed_point_map(w, snr, M):
    # snr = l^2 p / sigma^2 along the last axis
    return 1.0 + np.sum(snr * w[..., None] / (w[..., None] + M * snr), axis=-1)


def slack_residual(w, power, gain, num_antennas, noise_power):
    """Relative residual |f(w) - w| / w of the slack equation."""
    snr = np.asarray(gain) ** 2 * np.asarray(power) / noise_power
    w = np.asarray(w, dtype=float)
    return np.abs(_fixed_point_map(w, snr, num_antennas) - w) / w


def solve_slack_fixed_point(power, gain, num_antennas, noise_power,
                            tol=1e-13, max_iter=10_000):
    """Solve w = 1 + sum_k l_k^2 p_k / (sigma^2 + M l_k^2 p_k / w).

    Vectorised over leading axes; the last axis runs over UAVs.  The map
    minus the identity is concave in w, so Newton's method started at the
    upper bracket ``1 + sum snr`` decreases monotonically onto the unique
    root in [1, inf).
    """
    power = np.asarray(power, dtype=float)
    if np.any(power < 0):
        raise ValueError("power must be non-negative")
    snr = np.asarray(gain, dtype=float) ** 2 * power / noise_power
    M = num_antennas
    w = 1.0 + snr.sum(axis=-1)
    for it in range(max_iter):
        d = w[..., None] + M * snr
        g = 1.0 + np.sum(snr * w[..., None] / d, axis=-1) - w
        dg = np.sum(M * snr ** 2 / d ** 2, axis=-1) - 1.0
        step = np.where(g != 0, g / dg, 0.0)
        w = np.maximum(w - step, 1.0)
        if np.all(np.abs(step) <= tol * w):
            break
    res = np.abs(_fixed_point_map(w, snr, M) - w) / w
    if np.any(res > 1e-6):
        raise NumericalError(f"slack fixed point did not converge after "
                             f"{max_iter} iterations", trace=float(res.max()))
    return w


def slack_for(power, sc: Scenario) -> SlackState:
    """Fixed-point slack for every (n, u, g) under the (N, G, K) power tensor."""
    w = solve_slack_fixed_point(power[:, None, :, :], sc.gain,
                                sc.num_antennas, sc.noise_power)
    return SlackState(w)


def _block_rng(seed, key, b):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key) + (b,)))


def mc_rate_samples(power, gain, num_antennas, noise_power, samples, seed, key=()):
    """Per-draw rates log2 det(I + S L P L S^H / sigma^2).

    Draws come in fixed-size blocks, each with its own counter-derived
    seed, so the result depends only on (seed, key, samples).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    d = np.asarray(gain, dtype=float) ** 2 * np.asarray(power, dtype=float) / noise_power
    K = d.size
    M = num_antennas
    out = np.empty(samples)
    if not np.any(d > 0):
        out[:] = 0.0
        return out
    sq = np.sqrt(d)
    for b, start in enumerate(range(0, samples, BLOCK)):
        n = min(BLOCK, samples - start)
        rng = _block_rng(seed, key, b)
        S = (rng.standard_normal((n, M, K)) + 1j * rng.standard_normal((n, M, K))) / np.sqrt(2.0)
        H = S * sq[None, None, :]
        if K <= M:
            gram = np.einsum("smk,smj->skj", H.conj(), H)
            eye = np.eye(K)
        else:
            gram = np.einsum("smk,sjk->smj", H, H.conj())
            eye = np.eye(M)
        C = np.linalg.cholesky(eye + gram)
        diag = np.real(np.diagonal(C, axis1=-2, axis2=-1))
        out[start:start + n] = 2.0 * np.sum(np.log2(diag), axis=-1)
    return out


def mc_ergodic_rate(power, gain, num_antennas, noise_power, samples, seed, key=()):
    return float(mc_rate_samples(power, gain, num_antennas, noise_power,
                                 samples, seed, key).mean())


@dataclass
class MCObjectives:
    d_e: float
    d_min: float
    per_user: np.ndarray


def mc_objectives(alloc: Allocation, sc: Scenario, samples, seed) -> MCObjectives:
    """Monte-Carlo D_e and D_min of an allocation.

    Each (n, u, g) link uses its own fading stream keyed by its indices, so
    two allocations sharing a link see identical draws on it.
    """
    N, U, G, K = sc.gain.shape
    per_user = np.zeros((N, U))
    for n, u, g in zip(*np.nonzero(alloc.x)):
        if alloc.hover[n] == 0:
            continue
        r = mc_ergodic_rate(alloc.power[n, g], sc.gain[n, u, g], sc.num_antennas,
                            sc.noise_power, samples, seed, key=(int(n), int(u), int(g)))
        per_user[n, u] += alloc.hover[n] * r
    per_user = np.where(sc.user_mask, per_user, np.nan)
    d_e = float(np.nansum(per_user))
    served = alloc.x.sum(axis=2) > 0
    d_min = 0.0 if np.any(~served[sc.user_mask]) else float(np.nanmin(per_user))
    return MCObjectives(d_e, d_min, per_user)
