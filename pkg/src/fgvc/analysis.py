"""Joint versus frame-wise coding cost on small Gaussian instances.

For a zero-mean Gaussian source y with covariance S, the forward process at
step t gives jointly Gaussian (y, z_t, z_{t+1}); every expected coding cost of
transmitting z_t given z_{t+1} has a closed form. Two independent routes are
implemented:

* ``kl_joint_step`` / ``kl_framewise_step`` compute the expected Gaussian KL
  between the true posterior and the model prior induced by the full (resp.
  cross-frame-zeroed block-diagonal) covariance, via traces, solves and
  log-determinants of the explicit second-moment algebra.
* ``conditional_mi_gap`` computes, from entropies (log-determinant
  differences) alone, the sum over frames of the mutual information between a
  frame's latent and its temporal context given its own-frame conditioning:

      gap_t = sum_i I( z_t^i ; z_t^{<i}, z_{t+1}^{j != i} | z_{t+1}^i )

The two routes agree to machine precision on the Gaussian family, and the gap
is nonnegative for every positive definite source covariance: the frame-wise
codec transmits the same per-coordinate posterior with a strictly less
informed prior.

Measured counterparts run the actual chunked race coder with the exact MMSE
priors of either model class over the same source draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FgvcError, NotPositiveDefinite
from .pipeline import encode_gop
from .prior import FramewisePrior, SpectralGaussianPrior
from .rng import keyed_generator
from .schedule import NoiseSchedule, posterior_coeffs

LOG2E = math.log2(math.e)
MAX_DIMS = 64


def ar1_covariance(n: int, rho: float) -> np.ndarray:
    idx = np.arange(n)
    return rho ** np.abs(np.subtract.outer(idx, idx)) if rho != 0.0 else np.eye(n)


@dataclass(frozen=True)
class GaussianSourceSpec:
    """Small source instance: n_frames frames of frame_dim coefficients with a
    full joint covariance (at most MAX_DIMS total dimensions)."""

    n_frames: int
    frame_dim: int
    cov: np.ndarray

    def __post_init__(self):
        n = self.n_frames * self.frame_dim
        cov = np.asarray(self.cov, float)
        if cov.shape != (n, n):
            raise NotPositiveDefinite(f"covariance {cov.shape} vs dimension {n}")
        if n > MAX_DIMS:
            raise FgvcError(f"instance has {n} dims; closed forms are capped at {MAX_DIMS}")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise NotPositiveDefinite("covariance is not symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite("covariance is not positive definite") from exc

    @classmethod
    def separable_ar1(cls, n_frames: int, frame_shape: tuple[int, ...],
                      rho_time: float, rho_space: float) -> "GaussianSourceSpec":
        """Kronecker AR(1) in time crossed with AR(1) along each spatial axis."""
        space = np.eye(1)
        for ax in frame_shape:
            space = np.kron(space, ar1_covariance(ax, rho_space))
        cov = np.kron(ar1_covariance(n_frames, rho_time), space)
        return cls(n_frames=n_frames, frame_dim=int(np.prod(frame_shape)), cov=cov)

    @property
    def dim(self) -> int:
        return self.n_frames * self.frame_dim

    def frame_slice(self, i: int) -> slice:
        return slice(i * self.frame_dim, (i + 1) * self.frame_dim)

    def framewise_cov(self) -> np.ndarray:
        out = np.zeros_like(np.asarray(self.cov, float))
        for i in range(self.n_frames):
            s = self.frame_slice(i)
            out[s, s] = self.cov[s, s]
        return out


def _second_moments(cov: np.ndarray, sched: NoiseSchedule, t: int):
    """Blocks of the joint law of (y, z_t, z_{t+1}) for source covariance cov."""
    n = cov.shape[0]
    eye = np.eye(n)
    ab_t = sched.alpha_bar[t]
    s_zz = ab_t * cov + (1.0 - ab_t) * eye
    s_pp = sched.alpha[t + 1] * s_zz + sched.beta[t + 1] * eye
    s_zp = math.sqrt(sched.alpha[t + 1]) * s_zz
    s_yp = math.sqrt(sched.alpha_bar[t + 1]) * cov
    return s_zz, s_pp, s_zp, s_yp


def _expected_kl_bits(cov: np.ndarray, sched: NoiseSchedule, t: int) -> float:
    """Expected KL (bits) of coding z_t from z_{t+1} against the exact
    conditional prior induced by source covariance cov, via the general
    Gaussian-KL trace formula averaged over the source."""
    n = cov.shape[0]
    eye = np.eye(n)
    c_y, c_z, btld = posterior_coeffs(sched, t + 1)
    s_zz, s_pp, s_zp, s_yp = _second_moments(cov, sched, t)

    W = np.linalg.solve(s_pp, s_zp.T).T          # E[z_t | z_{t+1}] = W z_{t+1}
    P = s_zz - W @ s_zp.T                        # prior covariance
    D = c_z * eye - W
    # E[(posterior mean - prior mean)(...)^T] from the coefficient algebra
    M = (c_y * c_y) * cov + c_y * (s_yp @ D.T) + c_y * (D @ s_yp.T) + D @ s_pp @ D.T

    P_inv_M = np.linalg.solve(P, M)
    P_inv_tr = np.trace(np.linalg.solve(P, eye))
    sign, logdet_p = np.linalg.slogdet(P)
    if sign <= 0:
        raise NotPositiveDefinite("prior covariance lost positive definiteness")
    nats = 0.5 * (btld * P_inv_tr - n + np.trace(P_inv_M)
                  + logdet_p - n * math.log(btld))
    return float(nats) * LOG2E


def kl_joint_step(spec: GaussianSourceSpec, sched: NoiseSchedule, t: int) -> float:
    """Expected step-t coding cost (bits) under the joint model prior."""
    return _expected_kl_bits(np.asarray(spec.cov, float), sched, t)


def kl_framewise_step(spec: GaussianSourceSpec, sched: NoiseSchedule, t: int) -> float:
    """Expected step-t coding cost (bits) when every frame is coded against a
    prior that knows only its own frame's statistics."""
    total = 0.0
    for i in range(spec.n_frames):
        s = spec.frame_slice(i)
        total += _expected_kl_bits(np.asarray(spec.cov, float)[s, s], sched, t)
    return total


def conditional_mi_gap(spec: GaussianSourceSpec, sched: NoiseSchedule, t: int) -> float:
    """Entropy route for the frame-wise excess cost at step t (bits)."""
    cov = np.asarray(spec.cov, float)
    n = spec.dim
    s_zz, s_pp, s_zp, _ = _second_moments(cov, sched, t)
    joint = np.block([[s_zz, s_zp], [s_zp.T, s_pp]])

    def cond_logdet(target, given):
        target = list(target)
        given = list(given)
        s_tt = joint[np.ix_(target, target)]
        if given:
            s_tg = joint[np.ix_(target, given)]
            s_gg = joint[np.ix_(given, given)]
            s_tt = s_tt - s_tg @ np.linalg.solve(s_gg, s_tg.T)
        sign, val = np.linalg.slogdet(s_tt)
        if sign <= 0:
            raise NotPositiveDefinite("conditional covariance lost definiteness")
        return val

    gap_nats = 0.0
    for i in range(spec.n_frames):
        zi = list(range(i * spec.frame_dim, (i + 1) * spec.frame_dim))
        zpi = [n + k for k in zi]
        z_before = list(range(0, i * spec.frame_dim))
        zp_others = [n + k for k in range(n) if (n + k) not in zpi]
        ctx = z_before + zp_others
        gap_nats += 0.5 * (cond_logdet(zi, zpi) - cond_logdet(zi, ctx + zpi))
    return float(gap_nats) * LOG2E


def accumulate_gap(spec: GaussianSourceSpec, sched: NoiseSchedule,
                   t_star: int) -> float:
    """Total frame-wise excess (bits) over the coded steps t_star .. T-1."""
    if not 1 <= t_star < sched.T:
        raise FgvcError(f"t_star {t_star} outside [1, {sched.T})")
    return sum(kl_framewise_step(spec, sched, t) - kl_joint_step(spec, sched, t)
               for t in range(t_star, sched.T))


# -- measured counterparts -----------------------------------------------------------

def joint_prior(spec: GaussianSourceSpec, floor: float = 1e-12) -> SpectralGaussianPrior:
    """Exact MMSE denoiser for the full covariance (eigenbasis Wiener)."""
    vals, vecs = np.linalg.eigh(np.asarray(spec.cov, float))
    return SpectralGaussianPrior(np.maximum(vals, floor), transform_id="eigen",
                                 basis=vecs)


def framewise_prior(spec: GaussianSourceSpec, floor: float = 1e-12) -> FramewisePrior:
    """Exact MMSE denoiser of the cross-frame-zeroed model (per-frame Wiener).

    Assumes a stationary source (identical diagonal blocks), which holds for
    the separable instances used in the measured experiments.
    """
    block = np.asarray(spec.cov, float)[spec.frame_slice(0), spec.frame_slice(0)]
    vals, vecs = np.linalg.eigh(block)
    return FramewisePrior(np.maximum(vals, floor), n_frames=spec.n_frames,
                          frame_basis=vecs)


def sample_source(spec: GaussianSourceSpec, base_seed: int, run: int) -> np.ndarray:
    """One keyed draw y ~ N(0, cov), shaped (n_frames, frame_dim)."""
    chol = np.linalg.cholesky(np.asarray(spec.cov, float))
    u = keyed_generator(base_seed, "src", run).standard_normal(spec.dim)
    return (chol @ u).reshape(spec.n_frames, spec.frame_dim)


def measured_bits(spec: GaussianSourceSpec, sched: NoiseSchedule, t_star: int,
                  prior, base_seed: int, run: int, chunk_size: int = 16,
                  kl_cap: float = 4.0) -> int:
    """Actual coded payload bits for one source draw down to t_star."""
    y = sample_source(spec, base_seed, run)
    res = encode_gop(y, prior, sched, t_star, base_seed, gop_index=run,
                     chunk_size=chunk_size, kl_cap=kl_cap)
    return res.rate_table[t_star]


def measured_gap(spec: GaussianSourceSpec, sched: NoiseSchedule, t_star: int,
                 base_seed: int, n_runs: int, chunk_size: int = 16,
                 kl_cap: float = 4.0) -> tuple[float, float]:
    """(mean frame-wise bits - mean joint bits, mean joint bits) over paired
    runs coding the same draws with either prior."""
    pj = joint_prior(spec)
    pf = framewise_prior(spec)
    joint_bits = []
    fw_bits = []
    for run in range(n_runs):
        joint_bits.append(measured_bits(spec, sched, t_star, pj, base_seed, run,
                                        chunk_size, kl_cap))
        fw_bits.append(measured_bits(spec, sched, t_star, pf, base_seed, run,
                                     chunk_size, kl_cap))
    return float(np.mean(fw_bits) - np.mean(joint_bits)), float(np.mean(joint_bits))
