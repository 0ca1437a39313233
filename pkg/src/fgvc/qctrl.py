"""Adaptive quality control.

Progressive trajectory coding makes every timestep's exact rate known after a
single encode, and any timestep can be decoded without re-encoding. The
controller exploits this: it measures a few (rate, quality) anchors, fits the
power-law surrogate ``P = alpha * R**beta`` online, inverts it for the target
quality, and iteratively refines the chosen timestep until the achieved
quality is within ``eps`` of the target. Anchors from the previous group can
be reused through a single measured alignment point, which multiplicatively
rescales the old curve onto the new group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateFit, MissingAlignmentAnchor,
                     NonInvertibleSurrogate)


@dataclass(frozen=True)
class RpSample:
    """One measured operating point: rate (bits per pixel), quality, timestep."""

    R: float
    P: float
    t: int


@dataclass
class SurrogateParams:
    alpha: float
    beta: float
    fit_r2: float

    def predict(self, rate: float) -> float:
        return self.alpha * rate ** self.beta


@dataclass
class ControlConfig:
    p_target: float
    M: int = 4
    eps: float = 0.005
    max_iters: int = 10
    quality_metric: str = "ms-ssim"

    def __post_init__(self):
        if self.M < 2:
            raise DegenerateFit(f"need M >= 2 anchors, got {self.M}")
        if self.eps <= 0:
            raise DegenerateFit(f"eps must be positive, got {self.eps}")


# -- surrogate fitting ------------------------------------------------------------

def fit_power_law(samples, max_iters: int = 200, tol: float = 1e-14) -> SurrogateParams:
    """Least squares for P = alpha * R**beta.

    Initialised by log-log linear regression, then refined with damped
    Gauss-Newton steps on (log alpha, beta) against the plain (not log)
    residuals. Raises DegenerateFit when all rates coincide.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise DegenerateFit(f"need at least 2 samples, got {len(samples)}")
    R = np.array([s.R for s in samples], float)
    P = np.array([s.P for s in samples], float)
    if (R <= 0).any() or (P <= 0).any():
        raise DegenerateFit("power-law fit needs strictly positive rates and qualities")
    if np.ptp(R) == 0.0:
        raise DegenerateFit("all rates identical; exponent unidentifiable")

    logR = np.log(R)
    logP = np.log(P)
    A = np.stack([np.ones_like(logR), logR], axis=1)
    (la, b), *_ = np.linalg.lstsq(A, logP, rcond=None)

    lam = 1e-6
    prev_cost = math.inf
    for _ in range(max_iters):
        model = np.exp(la + b * logR)
        r = P - model
        cost = float(r @ r)
        J = np.stack([-model, -model * logR], axis=1)
        g = J.T @ r
        H = J.T @ J
        try:
            step = np.linalg.solve(H + lam * np.eye(2), -g)
        except np.linalg.LinAlgError:
            break
        la_new, b_new = la + step[0], b + step[1]
        new_model = np.exp(la_new + b_new * logR)
        new_cost = float(((P - new_model) ** 2).sum())
        if new_cost <= cost:
            la, b = float(la_new), float(b_new)
            lam = max(lam * 0.3, 1e-12)
            if abs(prev_cost - new_cost) <= tol * max(1.0, new_cost):
                prev_cost = new_cost
                break
            prev_cost = new_cost
        else:
            lam *= 10.0
            if lam > 1e12:
                break

    alpha = math.exp(la)
    resid = P - alpha * R ** b
    ss_res = float(resid @ resid)
    ss_tot = float(((P - P.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 and ss_res < 1e-24 else (
        0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot)
    return SurrogateParams(alpha=alpha, beta=float(b), fit_r2=r2)


def predict_target_rate(params: SurrogateParams, p_target: float) -> float:
    """Invert the surrogate: R* = (P_tar / alpha)**(1/beta)."""
    if params.alpha <= 0 or p_target <= 0:
        raise NonInvertibleSurrogate(
            f"need alpha > 0 and target > 0, got {params.alpha}, {p_target}")
    if params.beta == 0.0:
        raise NonInvertibleSurrogate("beta is zero; surrogate has no inverse")
    return (p_target / params.alpha) ** (1.0 / params.beta)


def select_timestep(rate_table: dict[int, float], r_star: float) -> int:
    """Timestep whose rate is closest to R*; ties resolved toward larger t
    (the lower-rate side)."""
    best_t = None
    best_gap = math.inf
    for t in sorted(rate_table, reverse=True):
        gap = abs(rate_table[t] - r_star)
        if gap < best_gap:
            best_gap = gap
            best_t = t
    return best_t


# -- anchor collection and refinement ----------------------------------------------

def anchor_timesteps(rate_table: dict[int, float], M: int) -> list[int]:
    """M timesteps spread uniformly over the coded range."""
    ts = sorted(rate_table)
    if len(ts) <= M:
        return ts
    idx = np.unique(np.linspace(0, len(ts) - 1, M).round().astype(int))
    return [ts[i] for i in idx]


def sparse_sample(measure, rate_table: dict[int, float], M: int) -> list[RpSample]:
    """Decode and measure M uniformly spaced anchors along one encoded
    trajectory. ``measure(t)`` must return an RpSample with R from the rate
    table."""
    return [measure(t) for t in anchor_timesteps(rate_table, M)]


@dataclass
class ControlResult:
    t_star: int
    achieved: RpSample
    phi: list[RpSample]
    trace: list[dict] = field(default_factory=list)
    converged: bool = False
    anchor_decodes: int = 0
    align_decodes: int = 0
    refine_decodes: int = 0


def refine(measure, rate_table: dict[int, float], phi: list[RpSample],
           config: ControlConfig,
           measured: dict[int, RpSample] | None = None) -> ControlResult:
    """Fit / invert / select / measure until |P - P_tar| <= eps or the
    iteration cap.

    ``phi`` is the fitting set and may contain rescaled history estimates;
    ``measured`` holds the samples genuinely decoded on this group (anchors or
    the alignment point). Convergence and the best-so-far guarantee consider
    measured samples only. Re-selecting an already measured timestep costs no
    decode, and a repeat selection that did not converge ends the loop (the
    surrogate has stabilised). The returned timestep minimises |P - P_tar|
    over everything measured.
    """
    phi = list(phi)
    measured = dict(measured) if measured else {}
    trace: list[dict] = []
    decodes = 0

    def gap(s: RpSample) -> float:
        return abs(s.P - config.p_target)

    best = min(measured.values(), key=gap) if measured else None
    converged = best is not None and gap(best) <= config.eps

    if not converged:
        for it in range(1, config.max_iters + 1):
            params = fit_power_law(phi)
            r_star = predict_target_rate(params, config.p_target)
            t_sel = select_timestep(rate_table, r_star)
            fresh = t_sel not in measured
            if fresh:
                sample = measure(t_sel)
                decodes += 1
                measured[t_sel] = sample
            else:
                sample = measured[t_sel]
            trace.append({"iteration": it, "t": t_sel, "R": sample.R,
                          "P": sample.P, "alpha": params.alpha, "beta": params.beta})
            if best is None or gap(sample) < gap(best):
                best = sample
            phi = [s for s in phi if s.t != t_sel]
            phi.append(sample)
            worst = max(range(len(phi)), key=lambda i: gap(phi[i]))
            phi.pop(worst)
            if gap(sample) <= config.eps:
                converged = True
                break
            if not fresh:
                break

    return ControlResult(t_star=best.t, achieved=best, phi=phi, trace=trace,
                         converged=converged, refine_decodes=decodes)


def reuse_history(phi_prev: list[RpSample], alignment: RpSample) -> list[RpSample]:
    """Warm start from the previous group's anchors.

    The alignment point must share a timestep with some previous sample; its
    rate and quality ratios against that sample rescale every historical point
    multiplicatively, and the alignment measurement itself replaces the scaled
    copy at its own timestep.
    """
    ref = next((s for s in phi_prev if s.t == alignment.t), None)
    if ref is None:
        raise MissingAlignmentAnchor(
            f"timestep {alignment.t} not present in the previous sample set")
    c_r = alignment.R / ref.R
    c_p = alignment.P / ref.P
    out = [RpSample(c_r * s.R, c_p * s.P, s.t) for s in phi_prev if s.t != alignment.t]
    out.append(alignment)
    return out


def control_gop(measure, rate_table: dict[int, float], config: ControlConfig,
                phi_prev: list[RpSample] | None = None) -> ControlResult:
    """Full controller pass for one group: cold start via sparse anchors, or a
    warm start that realigns the previous group's curve through one measured
    point. Returns the refined result; ``phi`` in it seeds the next group."""
    if phi_prev:
        usable = [s for s in phi_prev if s.t in rate_table]
        if usable:
            t_align = min(usable, key=lambda s: abs(s.P - config.p_target)).t
            alignment = measure(t_align)
            phi0 = reuse_history(phi_prev, alignment)
            phi0 = [s for s in phi0 if s.t in rate_table]
            result = refine(measure, rate_table, phi0, config,
                            measured={alignment.t: alignment})
            result.align_decodes = 1
            return result
    phi0 = sparse_sample(measure, rate_table, config.M)
    result = refine(measure, rate_table, phi0, config,
                    measured={s.t: s for s in phi0})
    result.anchor_decodes = len(phi0)
    return result
