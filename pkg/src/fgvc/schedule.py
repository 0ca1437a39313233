"""DDPM noise-schedule arithmetic and closed-form Gaussian conditionals.

A schedule over steps t = 1..T is defined by variances ``beta[t]`` with

    alpha[t]      = 1 - beta[t]
    alpha_bar[t]  = prod_{s<=t} alpha[s]        (alpha_bar[0] = 1)
    beta_tilde[t] = (1 - alpha_bar[t-1]) / (1 - alpha_bar[t]) * beta[t]

``beta_tilde[1]`` is exactly zero, so the last reverse step is deterministic.

The forward marginal at step t of a clean signal y is
``z_t = sqrt(alpha_bar[t]) * y + sqrt(1 - alpha_bar[t]) * eps``; the
conditionals below are the standard posterior and model-reverse Gaussians
built on that marginal. All arrays here are indexed so that position t holds
the step-t value (position 0 is the conventional boundary value).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSchedule, ShapeMismatch


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable schedule: shareable across concurrent encode/decode tasks."""

    T: int
    beta: np.ndarray        # beta[1..T], beta[0] = 0 (unused)
    alpha: np.ndarray       # alpha[t] = 1 - beta[t], alpha[0] = 1
    alpha_bar: np.ndarray   # alpha_bar[0] = 1
    beta_tilde: np.ndarray  # beta_tilde[1] = 0

    def __post_init__(self):
        for arr in (self.beta, self.alpha, self.alpha_bar, self.beta_tilde):
            arr.setflags(write=False)


def build_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear-beta schedule with extended-precision cumulative products.

    Raises InvalidSchedule when the bounds are out of range, when T > 1 with
    beta_start == beta_end (the variance sequence must be strictly
    increasing), or when any derived coefficient leaves (0, 1).
    """
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise InvalidSchedule(f"T must be a positive integer, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise InvalidSchedule(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    if T > 1 and beta_start == beta_end:
        raise InvalidSchedule("constant beta is not strictly increasing for T > 1")

    beta = np.zeros(T + 1)
    beta[1:] = np.linspace(beta_start, beta_end, T)
    alpha = 1.0 - beta
    alpha[0] = 1.0

    # accumulate and derive in extended precision so alpha_bar survives large T
    ab_ext = np.cumprod(alpha.astype(np.longdouble))
    ab_ext[0] = 1.0
    alpha_bar = ab_ext.astype(np.float64)
    alpha_bar[0] = 1.0

    beta_tilde = np.zeros(T + 1)
    beta_tilde[1:] = ((1.0 - ab_ext[:-1]) / (1.0 - ab_ext[1:])
                      * beta[1:]).astype(np.float64)

    if not (alpha_bar[1:] > 0.0).all() or not (alpha_bar[1:] < 1.0).all():
        raise InvalidSchedule("alpha_bar left (0, 1); T or beta range too extreme")
    if T > 1 and not (np.diff(alpha_bar[1:]) < 0.0).all():
        raise InvalidSchedule("alpha_bar is not strictly decreasing")

    return NoiseSchedule(T=int(T), beta=beta, alpha=alpha,
                         alpha_bar=alpha_bar, beta_tilde=beta_tilde)


def _check_step(sched: NoiseSchedule, t: int) -> None:
    if not 1 <= t <= sched.T:
        raise InvalidSchedule(f"step {t} outside [1, {sched.T}]")


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape {a.shape} vs {b.shape}")


def posterior_coeffs(sched: NoiseSchedule, t: int) -> tuple[float, float, float]:
    """(coefficient on y, coefficient on z_t, variance) of q(z_{t-1} | z_t, y)."""
    _check_step(sched, t)
    one_m_ab = 1.0 - sched.alpha_bar[t]
    c_y = np.sqrt(sched.alpha_bar[t - 1]) * sched.beta[t] / one_m_ab
    c_z = np.sqrt(sched.alpha[t]) * (1.0 - sched.alpha_bar[t - 1]) / one_m_ab
    return float(c_y), float(c_z), float(sched.beta_tilde[t])


def posterior_params(sched: NoiseSchedule, t: int, z_t: np.ndarray,
                     y: np.ndarray) -> tuple[np.ndarray, float]:
    """Mean and variance of the forward posterior q(z_{t-1} | z_t, y)."""
    _check_shapes(np.asarray(z_t), np.asarray(y))
    c_y, c_z, var = posterior_coeffs(sched, t)
    return c_y * y + c_z * z_t, var


def estimate_x0(sched: NoiseSchedule, t: int, z_t: np.ndarray,
                eps_hat: np.ndarray) -> np.ndarray:
    """Invert the forward marginal: x0_hat = (z_t - sqrt(1-ab_t) eps) / sqrt(ab_t)."""
    _check_step(sched, t)
    _check_shapes(np.asarray(z_t), np.asarray(eps_hat))
    ab = sched.alpha_bar[t]
    return (z_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def reverse_mean(sched: NoiseSchedule, t: int, z_t: np.ndarray,
                 eps_hat: np.ndarray) -> tuple[np.ndarray, float]:
    """Mean and variance of the model reverse Gaussian p(z_{t-1} | z_t).

    mu = (z_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t),
    with the same variance beta_tilde[t] as the posterior. Substituting the
    exact noise (z_t - sqrt(ab_t) y) / sqrt(1 - ab_t) for eps_hat recovers the
    posterior mean identically.
    """
    _check_step(sched, t)
    _check_shapes(np.asarray(z_t), np.asarray(eps_hat))
    ab = sched.alpha_bar[t]
    mu = (z_t - sched.beta[t] / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(sched.alpha[t])
    return mu, float(sched.beta_tilde[t])
