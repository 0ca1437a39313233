"""Reverse channel coding: transmit a sample of a target Gaussian q using a
shared prior p at roughly KL(q || p) bits.

The encoder runs an exponential race over candidates drawn from p by a keyed
generator: candidate n arrives at Poisson time t_n (cumulative unit

exponentials) and is scored ``t_n * p(z_n) / q(z_n)``; the minimiser's index
is transmitted. When a true lower bound ``w_min = inf p/q > 0`` is known
(discrete targets) the race stops exactly once no future candidate can win;
continuous Gaussians have ``inf p/q = 0``, so the encoder instead scans a
fixed budget of ``2**(KL + 5)`` candidates (capped at 2**20) and returns the
best seen, flagged as exhausted. The decoder regenerates candidate n from the
same keyed stream, so both sides hold bit-identical samples.

Selected indices are written with the parameter-free Elias-delta code; per
step, the latent is split into chunks whose boundaries both sides derive from
shared knowledge only (the prior's marginal variances and the schedule).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (ChunkTooHot, MalformedCode, NonpositiveVariance,
                     SeedOutOfRange, ZeroDensity)
from .rng import RekeyableStream
from .schedule import NoiseSchedule, posterior_coeffs, posterior_params, reverse_mean

LOG2E = math.log2(math.e)
BUDGET_CAP = 2 ** 20
_DECODE_BLOCK = 1 << 16


# -- bit-level IO (MSB-first within bytes) ------------------------------------

class BitWriter:
    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._nbits = 0

    def write_bits(self, value: int, count: int) -> None:
        for shift in range(count - 1, -1, -1):
            self._acc = (self._acc << 1) | ((value >> shift) & 1)
            self._nbits += 1
            if self._nbits == 8:
                self._bytes.append(self._acc)
                self._acc = 0
                self._nbits = 0

    @property
    def bit_length(self) -> int:
        return 8 * len(self._bytes) + self._nbits

    def to_bytes(self) -> bytes:
        """Zero-pad to a byte boundary and return the buffer."""
        out = bytearray(self._bytes)
        if self._nbits:
            out.append(self._acc << (8 - self._nbits))
        return bytes(out)


class BitReader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0  # bit position

    def read_bits(self, count: int) -> int:
        end = self._pos + count
        if end > 8 * len(self._data):
            raise MalformedCode(f"bitstream truncated at bit {8 * len(self._data)}")
        value = 0
        for _ in range(count):
            byte = self._data[self._pos >> 3]
            value = (value << 1) | ((byte >> (7 - (self._pos & 7))) & 1)
            self._pos += 1
        return value

    @property
    def bits_consumed(self) -> int:
        return self._pos


# -- Elias delta -------------------------------------------------------------

def elias_delta_length(n: int) -> int:
    """Code length: floor(log2 n) + 2*floor(log2(floor(log2 n)+1)) + 1 bits."""
    if n < 1:
        raise MalformedCode(f"Elias delta is defined for n >= 1, got {n}")
    nb = n.bit_length()
    return (nb - 1) + 2 * (nb.bit_length() - 1) + 1


def elias_delta_encode(writer: BitWriter, n: int) -> None:
    if n < 1:
        raise MalformedCode(f"Elias delta is defined for n >= 1, got {n}")
    nb = n.bit_length()
    writer.write_bits(0, nb.bit_length() - 1)          # gamma prefix zeros
    writer.write_bits(nb, nb.bit_length())             # bit count of n
    if nb > 1:
        writer.write_bits(n & ((1 << (nb - 1)) - 1), nb - 1)


def elias_delta_decode(reader: BitReader) -> int:
    zeros = 0
    while reader.read_bits(1) == 0:
        zeros += 1
        if zeros > 64:
            raise MalformedCode("Elias delta prefix too long")
    nb = (1 << zeros) | (reader.read_bits(zeros) if zeros else 0)
    if nb == 1:
        return 1
    return (1 << (nb - 1)) | reader.read_bits(nb - 1)


# -- Gaussian pairs and KL ----------------------------------------------------

@dataclass(frozen=True)
class GaussianPair:
    """Target q = N(mu_q, var I) and prior p = N(mu_p, var I) for one chunk."""

    mu_q: np.ndarray
    mu_p: np.ndarray
    var: float

    def __post_init__(self):
        if self.var <= 0.0:
            raise NonpositiveVariance(f"shared variance must be > 0, got {self.var}")
        if np.shape(self.mu_q) != np.shape(self.mu_p):
            raise NonpositiveVariance(
                f"mean lengths differ: {np.shape(self.mu_q)} vs {np.shape(self.mu_p)}")


def kl_bits(pair: GaussianPair) -> float:
    """Equal-variance Gaussian KL in bits: ||mu_q - mu_p||^2 / (2 var) * log2 e."""
    diff = np.asarray(pair.mu_q, float) - np.asarray(pair.mu_p, float)
    return float(diff @ diff / (2.0 * pair.var) * LOG2E)


# -- generic PFR (exponential race) -------------------------------------------

@dataclass
class PfrResult:
    n_star: int
    sample: np.ndarray
    exhausted: bool
    scanned: int


def pfr_encode(simulate, log_ratio, race_rng: np.random.Generator, budget: int,
               w_min: float | None = None, block: int = 512) -> PfrResult:
    """Run the race over candidates ``simulate(lo, hi)`` scored by
    ``log(t_n) + log_ratio(z_n)`` where log_ratio = log p - log q.

    With ``w_min`` (a true positive lower bound on p/q) the race terminates
    exactly; otherwise the full budget is scanned and the best candidate is
    returned with ``exhausted=True``. Raises ZeroDensity when q vanishes at a
    candidate (log_ratio of +inf).
    """
    best_score = math.inf
    best_n = 0
    best_sample = None
    t_carry = 0.0
    log_wmin = math.log(w_min) if w_min is not None else None

    lo = 0
    while lo < budget:
        hi = min(lo + block, budget)
        z = simulate(lo, hi)
        ratios = np.asarray(log_ratio(z), dtype=np.float64)
        if np.isposinf(ratios).any():
            raise ZeroDensity("target density is zero at a prior candidate")
        times = t_carry + np.cumsum(race_rng.standard_exponential(hi - lo))
        scores = np.log(times) + ratios

        prefix = np.minimum.accumulate(scores)
        running = np.minimum(prefix, best_score)
        if log_wmin is not None:
            done = running <= np.log(times) + log_wmin
            if done.any():
                k = int(np.argmax(done))
                sub = scores[:k + 1]
                jj = int(np.argmin(sub))
                if sub[jj] < best_score:
                    best_score = float(sub[jj])
                    best_n = lo + jj + 1
                    best_sample = np.array(z[jj], copy=True)
                return PfrResult(best_n, best_sample, False, lo + k + 1)

        j = int(np.argmin(scores))
        if scores[j] < best_score:
            best_score = float(scores[j])
            best_n = lo + j + 1
            best_sample = np.array(z[j], copy=True)
        t_carry = float(times[-1])
        lo = hi

    return PfrResult(best_n, best_sample, True, budget)


def pfr_decode(n_star: int, simulate) -> np.ndarray:
    """Regenerate the selected candidate.

    ``simulate`` must address candidates by absolute stream index (fresh keyed
    generator, skipping or regenerating earlier draws), so that
    ``simulate(n-1, n)`` reproduces exactly the encoder's n-th candidate.
    """
    if n_star < 1:
        raise SeedOutOfRange(f"seed index must be >= 1, got {n_star}")
    return np.array(simulate(n_star - 1, n_star)[0], copy=True)


# -- Gaussian fast path --------------------------------------------------------

def candidate_budget(kl_chunk_bits: float, cap: int = BUDGET_CAP) -> int:
    """2**(KL + 5) candidates, capped."""
    return int(min(cap, math.ceil(2.0 ** (min(max(kl_chunk_bits, 0.0), 15.0) + 5.0))))


def _gaussian_race(delta: np.ndarray, d2: float, var: float,
                   cand_rng: np.random.Generator, race_rng: np.random.Generator,
                   budget: int, block: int = 2048) -> tuple[int, np.ndarray]:
    """Core race over candidates z = mu_p + sqrt(var) * eps.

    For equal variances, log p(z) - log q(z) reduces to
    ``(||mu_p - mu_q||^2 + 2 sqrt(var) eps . (mu_p - mu_q)) / (2 var)``,
    so only the raw normals and one dot product per candidate are needed.
    """
    dim = delta.size
    scale = math.sqrt(var) / var  # 2 std / (2 var)
    base = d2 / (2.0 * var)
    best_score = math.inf
    best_n = 0
    best_eps = None
    t_carry = 0.0

    lo = 0
    while lo < budget:
        hi = min(lo + block, budget)
        eps = cand_rng.standard_normal((hi - lo, dim))
        times = np.cumsum(race_rng.standard_exponential(hi - lo))
        if t_carry:
            times += t_carry
        scores = np.log(times)
        scores += (eps @ delta) * scale
        j = int(np.argmin(scores))
        if scores[j] + base < best_score:
            best_score = float(scores[j]) + base
            best_n = lo + j + 1
            best_eps = eps[j].copy()
        t_carry = float(times[-1])
        lo = hi

    return best_n, best_eps


def pfr_encode_gaussian(pair: GaussianPair, cand_rng: np.random.Generator,
                        race_rng: np.random.Generator, budget: int,
                        block: int = 2048) -> tuple[int, np.ndarray, bool]:
    """Race for one Gaussian chunk pair; returns (n_star, raw normals of the
    winner, exhausted). Continuous targets always scan the full budget."""
    mu_q = np.asarray(pair.mu_q, np.float64).ravel()
    mu_p = np.asarray(pair.mu_p, np.float64).ravel()
    delta = mu_p - mu_q
    n_star, eps = _gaussian_race(delta, float(delta @ delta), pair.var,
                                 cand_rng, race_rng, budget, block)
    return n_star, eps, True


def pfr_decode_gaussian_eps(n_star: int, dim: int,
                            cand_rng: np.random.Generator) -> np.ndarray:
    """Raw normals of candidate n_star from the keyed stream, bit-identical to
    the encoder's selection."""
    if n_star < 1:
        raise SeedOutOfRange(f"seed index must be >= 1, got {n_star}")
    if n_star > BUDGET_CAP:
        raise SeedOutOfRange(f"seed index {n_star} exceeds the candidate cap {BUDGET_CAP}")
    remaining = n_star
    eps = None
    while remaining > 0:
        take = min(remaining, _DECODE_BLOCK)
        eps = cand_rng.standard_normal((take, dim))
        remaining -= take
    return eps[-1].copy()


# -- chunking ------------------------------------------------------------------

@dataclass
class ChunkSpec:
    """Ordered disjoint exhaustive partition of flat coefficient indices."""

    bounds: list[tuple[int, int]]
    kl_estimates: np.ndarray  # expected bits per chunk, from shared knowledge
    kl_cap: float


def expected_step_kl_per_coef(marginal_var: np.ndarray, sched: NoiseSchedule,
                              t: int) -> np.ndarray:
    """Expected per-coefficient KL (bits) of coding z_t from z_{t+1}, under the
    prior's own source model. Depends only on (profile, schedule, t), so the
    decoder derives the identical values.
    """
    sigma2 = np.asarray(marginal_var, np.float64)
    a2 = sched.alpha_bar[t + 1]
    b2 = 1.0 - a2
    c_y, _, btld = posterior_coeffs(sched, t + 1)
    mmse = sigma2 * b2 / (a2 * sigma2 + b2)
    return (c_y * c_y) * mmse / (2.0 * btld) * LOG2E


def derive_chunks(marginal_var: np.ndarray, sched: NoiseSchedule, t: int,
                  chunk_size: int = 16, kl_cap: float = 4.0) -> ChunkSpec:
    """Contiguous runs of ``chunk_size`` coefficients, midpoint-split until the
    expected KL of every run is under ``kl_cap``."""
    kl_coef = expected_step_kl_per_coef(marginal_var, sched, t)
    cum = np.concatenate([[0.0], np.cumsum(kl_coef)])
    n = kl_coef.size

    bounds: list[tuple[int, int]] = []

    def split(lo: int, hi: int) -> None:
        kl = cum[hi] - cum[lo]
        if kl <= kl_cap or hi - lo == 1:
            if kl > kl_cap:
                raise ChunkTooHot(
                    f"coefficient {lo} alone carries {kl:.2f} bits > cap {kl_cap}")
            bounds.append((lo, hi))
            return
        mid = (lo + hi) // 2
        split(lo, mid)
        split(mid, hi)

    for lo in range(0, n, chunk_size):
        split(lo, min(lo + chunk_size, n))

    estimates = np.array([cum[hi] - cum[lo] for lo, hi in bounds])
    return ChunkSpec(bounds=bounds, kl_estimates=estimates, kl_cap=kl_cap)


# -- step coding -----------------------------------------------------------------

@dataclass
class StepResult:
    z: np.ndarray
    seeds: list[int]
    coded_bits: int
    kl_bits: float
    exhausted_chunks: int = 0


def _step_means(prior, sched: NoiseSchedule, t: int, z_next: np.ndarray,
                y: np.ndarray | None):
    """Posterior and model means (flat) plus shared variance for coding z_t
    from z_{t+1}. ``y=None`` yields only the model side (decoder)."""
    eps_hat = prior.predict_eps(z_next, t + 1, sched)
    mu_p, var = reverse_mean(sched, t + 1, z_next, eps_hat)
    mu_q = None
    if y is not None:
        mu_q, _ = posterior_params(sched, t + 1, z_next, y)
        mu_q = mu_q.ravel()
    return mu_q, mu_p.ravel(), var


def encode_step(prior, sched: NoiseSchedule, t: int, z_next: np.ndarray,
                y: np.ndarray, chunks: ChunkSpec, base_seed: int,
                gop: int) -> StepResult:
    """Code z_t given the (decoder-identical) state z_{t+1}.

    The assembled z_t uses the race-selected samples, never a fresh posterior
    draw, so encoder and decoder states cannot diverge.
    """
    mu_q, mu_p, var = _step_means(prior, sched, t, z_next, y)
    if var <= 0.0:
        raise NonpositiveVariance(f"step variance must be > 0, got {var}")
    z_flat = np.empty_like(mu_p)
    seeds: list[int] = []
    coded_bits = 0
    exhausted = 0
    std = math.sqrt(var)
    cand_stream = RekeyableStream()
    race_stream = RekeyableStream()

    delta = mu_p - mu_q
    starts = np.fromiter((lo for lo, _ in chunks.bounds), dtype=np.intp,
                         count=len(chunks.bounds))
    d2 = np.add.reduceat(delta * delta, starts)
    kls = d2 / (2.0 * var) * LOG2E
    kl_total = float(kls.sum())

    for j, (lo, hi) in enumerate(chunks.bounds):
        budget = candidate_budget(kls[j])
        cand = cand_stream.rekey(base_seed, "cand", gop, t, j)
        race = race_stream.rekey(base_seed, "race", gop, t, j)
        n_star, eps_sel = _gaussian_race(delta[lo:hi], float(d2[j]), var,
                                         cand, race, budget)
        exhausted += 1  # continuous mode always exhausts its budget
        seeds.append(n_star)
        coded_bits += elias_delta_length(n_star)
        z_flat[lo:hi] = mu_p[lo:hi] + std * eps_sel

    return StepResult(z=z_flat.reshape(z_next.shape), seeds=seeds,
                      coded_bits=coded_bits, kl_bits=kl_total,
                      exhausted_chunks=exhausted)


def decode_step(prior, sched: NoiseSchedule, t: int, z_next: np.ndarray,
                seeds: list[int], chunks: ChunkSpec, base_seed: int,
                gop: int) -> np.ndarray:
    """Replay the encoder's selections to rebuild z_t bit-exactly."""
    _, mu_p, var = _step_means(prior, sched, t, z_next, None)
    z_flat = np.empty_like(mu_p)
    std = math.sqrt(var)
    cand_stream = RekeyableStream()
    for j, (lo, hi) in enumerate(chunks.bounds):
        cand = cand_stream.rekey(base_seed, "cand", gop, t, j)
        eps = pfr_decode_gaussian_eps(seeds[j], hi - lo, cand)
        z_flat[lo:hi] = mu_p[lo:hi] + std * eps
    return z_flat.reshape(z_next.shape)
