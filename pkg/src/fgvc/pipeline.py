"""End-to-end GOP codec.

A video is segmented into groups of ``l`` frames sharing ``m`` overlapping
frames with their predecessor. Each group is mapped to a latent tensor by an
orthonormal separable block transform (an s-point temporal DCT crossed with a
d x d spatial DCT, block coefficients absorbed into channels), progressively
coded along the diffusion trajectory, and reconstructed by replaying seeds to
``z_{t*}`` followed by unconditional ancestral denoising down to the final
deterministic mean. Overlapping latent frames of adjacent groups are blended
before the inverse transform to suppress boundary flicker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import BadDims, BadGopParams, OverlapTooLarge, VideoTooShort
from .prior import PriorModel
from .rcc import ChunkSpec, decode_step, derive_chunks, encode_step
from .rng import keyed_generator
from .schedule import NoiseSchedule, reverse_mean


@dataclass
class VideoTensor:
    """Frames x height x width (x channels) samples in [0, 1]."""

    data: np.ndarray
    fps: tuple[int, int] = (30, 1)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 3 else self.data.shape[3]


@dataclass(frozen=True)
class Gop:
    index: int
    start: int
    stop: int
    overlap: int  # frames shared with the previous group

    @property
    def length(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class TransformSpec:
    s: int = 4
    d: int = 8
    transform_id: str = "block-dct"
    truncation_mask: np.ndarray | None = None  # boolean over channels

    @property
    def block_channels(self) -> int:
        return self.s * self.d * self.d


# -- segmentation ---------------------------------------------------------------

def segment_gops(n_frames: int, l: int, m: int, s: int) -> list[Gop]:
    """Groups start at k*(l - m); the tail group is shortened to cover the end
    exactly (never below 2s frames; a sub-minimum remainder is folded into the
    final group instead).
    """
    if not (l > m >= 0):
        raise BadGopParams(f"need l > m >= 0, got l={l} m={m}")
    if l % s or m % s:
        raise BadGopParams(f"l={l} and m={m} must be divisible by s={s}")
    if n_frames % s:
        raise BadGopParams(f"frame count {n_frames} not divisible by s={s} (pad first)")
    if n_frames < 2 * s:
        raise VideoTooShort(f"{n_frames} frames < minimum segment of {2 * s}")

    stride = l - m
    gops: list[Gop] = []
    start = 0
    while True:
        remaining = n_frames - start
        if remaining <= l:
            gops.append(Gop(len(gops), start, n_frames, m if gops else 0))
            break
        nxt = start + stride
        if n_frames - nxt < 2 * s:  # remainder too small to stand alone: fold it in
            gops.append(Gop(len(gops), start, n_frames, m if gops else 0))
            break
        gops.append(Gop(len(gops), start, start + l, m if gops else 0))
        start = nxt
    return gops


def pad_video(data: np.ndarray, s: int, d: int) -> np.ndarray:
    """Edge-replicate so (frames, H, W) are divisible by (s, d, d)."""
    L, H, W = data.shape[:3]
    pads = [(0, (-L) % s), (0, (-H) % d), (0, (-W) % d)]
    if data.ndim == 4:
        pads.append((0, 0))
    if any(p[1] for p in pads):
        data = np.pad(data, pads, mode="edge")
    return data


# -- orthonormal block transform --------------------------------------------------

def _check_dims(shape, s: int, d: int) -> None:
    n, h, w = shape[:3]
    if n % s or h % d or w % d:
        raise BadDims(f"dims {shape[:3]} not divisible by blocks ({s},{d},{d})")


def transform_forward(clip: np.ndarray, spec: TransformSpec) -> np.ndarray:
    """(n, H, W[, c]) samples -> (n/s, H/d, W/d, c*s*d*d) latent coefficients.

    Orthonormal separable DCT per block; coefficient count is preserved, and
    the inverse reconstructs the input to ~1e-15 unless truncation is enabled.
    """
    clip = np.asarray(clip, dtype=np.float64)
    mono = clip.ndim == 3
    if mono:
        clip = clip[..., None]
    _check_dims(clip.shape, spec.s, spec.d)
    n, H, W, c = clip.shape
    s, d = spec.s, spec.d

    x = clip.reshape(n // s, s, H // d, d, W // d, d, c)
    x = scipy.fft.dctn(x, type=2, norm="ortho", axes=(1, 3, 5))
    # (n/s, H/d, W/d, c, s, d, d) -> channels absorb (block coords, input channel)
    x = np.moveaxis(x, (1, 3, 5), (4, 5, 6))
    latent = np.ascontiguousarray(x).reshape(n // s, H // d, W // d, c * s * d * d)
    if spec.truncation_mask is not None:
        latent = latent * spec.truncation_mask[None, None, None, :]
    return latent


def transform_inverse(latent: np.ndarray, spec: TransformSpec,
                      channels: int = 1) -> np.ndarray:
    """Invert transform_forward. Returns (n, H, W) for channels=1 else
    (n, H, W, channels)."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 4:
        raise BadDims(f"latent must be 4-D, got {latent.shape}")
    s, d = spec.s, spec.d
    nl, hl, wl, ctot = latent.shape
    if ctot != channels * spec.block_channels:
        raise BadDims(f"{ctot} channels vs expected {channels * spec.block_channels}")
    x = latent.reshape(nl, hl, wl, channels, s, d, d)
    x = np.moveaxis(x, (4, 5, 6), (1, 3, 5))
    x = scipy.fft.idctn(x, type=2, norm="ortho", axes=(1, 3, 5))
    clip = np.ascontiguousarray(x).reshape(nl * s, hl * d, wl * d, channels)
    return clip[..., 0] if channels == 1 else clip


def latent_shape_for(n_frames: int, H: int, W: int, channels: int,
                     spec: TransformSpec) -> tuple[int, int, int, int]:
    return (n_frames // spec.s, H // spec.d, W // spec.d,
            channels * spec.block_channels)


# -- trajectory coding -------------------------------------------------------------

@dataclass
class GopEncodeResult:
    gop_index: int
    seeds: dict[int, list[int]]          # t -> seed per chunk
    chunk_specs: dict[int, ChunkSpec]
    rate_table: dict[int, int]           # t -> cumulative coded bits down to t
    kl_table: dict[int, float]           # t -> cumulative analytic KL bits
    states: dict[int, np.ndarray] = field(default_factory=dict)  # t -> z_t

    def coded_bits(self, t_star: int) -> int:
        return self.rate_table[t_star]


def initial_state(shape, base_seed: int, gop: int) -> np.ndarray:
    return keyed_generator(base_seed, "zT", gop).standard_normal(shape)


def encode_gop(y: np.ndarray, prior: PriorModel, sched: NoiseSchedule,
               t_star: int, base_seed: int, gop_index: int,
               chunk_size: int = 16, kl_cap: float = 4.0,
               keep_states: bool = False) -> GopEncodeResult:
    """Code the trajectory z_{T-1} .. z_{t_star} for a clean latent y.

    ``rate_table[t]`` gives the exact bitstream size were decoding to stop at
    t, so a controller can pick a timestep after the fact without re-encoding.
    With ``keep_states`` every intermediate z_t is retained (they are
    bit-identical to what the decoder reconstructs).
    """
    if not 1 <= t_star <= sched.T - 1:
        raise BadGopParams(f"t_star {t_star} outside [1, {sched.T - 1}]")
    marg = prior.marginal_variances(y.size)
    z = initial_state(y.shape, base_seed, gop_index)
    seeds: dict[int, list[int]] = {}
    chunk_specs: dict[int, ChunkSpec] = {}
    rate_table: dict[int, int] = {}
    kl_table: dict[int, float] = {}
    states: dict[int, np.ndarray] = {sched.T: z} if keep_states else {}
    cum_bits = 0
    cum_kl = 0.0

    for t in range(sched.T - 1, t_star - 1, -1):
        chunks = derive_chunks(marg, sched, t, chunk_size, kl_cap)
        step = encode_step(prior, sched, t, z, y, chunks, base_seed, gop_index)
        z = step.z
        seeds[t] = step.seeds
        chunk_specs[t] = chunks
        cum_bits += step.coded_bits
        cum_kl += step.kl_bits
        rate_table[t] = cum_bits
        kl_table[t] = cum_kl
        if keep_states:
            states[t] = z

    return GopEncodeResult(gop_index=gop_index, seeds=seeds, chunk_specs=chunk_specs,
                           rate_table=rate_table, kl_table=kl_table, states=states)


def replay_state(seeds: dict[int, list[int]], prior: PriorModel,
                 sched: NoiseSchedule, t_star: int, shape, base_seed: int,
                 gop_index: int, chunk_size: int = 16,
                 kl_cap: float = 4.0) -> np.ndarray:
    """Decoder side: rebuild z_{t_star} from transmitted seeds."""
    size = int(np.prod(shape))
    marg = prior.marginal_variances(size)
    z = initial_state(shape, base_seed, gop_index)
    for t in range(sched.T - 1, t_star - 1, -1):
        chunks = derive_chunks(marg, sched, t, chunk_size, kl_cap)
        z = decode_step(prior, sched, t, z, seeds[t], chunks, base_seed, gop_index)
    return z


def denoise_from(z_t: np.ndarray, t: int, prior: PriorModel,
                 sched: NoiseSchedule, base_seed: int, gop_index: int,
                 fresh_noise: bool = False,
                 noise_rng: np.random.Generator | None = None) -> np.ndarray:
    """Unconditional ancestral steps t -> 0. Noise is keyed from the header
    seed by default so decoding is reproducible; ``fresh_noise`` draws from
    ``noise_rng`` instead. The final step has zero variance, so the output is
    the last deterministic mean.
    """
    z = z_t
    for u in range(t, 0, -1):
        eps_hat = prior.predict_eps(z, u, sched)
        mu, var = reverse_mean(sched, u, z, eps_hat)
        if var > 0.0:
            if fresh_noise:
                rng = noise_rng if noise_rng is not None else np.random.default_rng()
                noise = rng.standard_normal(z.shape)
            else:
                noise = keyed_generator(base_seed, "dn", gop_index, u).standard_normal(z.shape)
            z = mu + math.sqrt(var) * noise
        else:
            z = mu
    return z


def decode_gop(seeds: dict[int, list[int]], prior: PriorModel,
               sched: NoiseSchedule, t_star: int, shape, base_seed: int,
               gop_index: int, chunk_size: int = 16, kl_cap: float = 4.0,
               fresh_noise: bool = False) -> np.ndarray:
    """Replay seeds to z_{t_star}, then denoise to the clean latent estimate."""
    z = replay_state(seeds, prior, sched, t_star, shape, base_seed, gop_index,
                     chunk_size, kl_cap)
    return denoise_from(z, t_star, prior, sched, base_seed, gop_index, fresh_noise)


# -- overlap fusion ------------------------------------------------------------------

def fuse_overlap(y_prev: np.ndarray, y_cur: np.ndarray, m_latent: int,
                 gamma=0.5) -> np.ndarray:
    """Blend the first ``m_latent`` frames of the current latent with the
    content-aligned trailing frames of the previous one:

        fused[i] = gamma(i) * cur[i] + (1 - gamma(i)) * prev[l' - m' + i]

    ``gamma`` may be a constant or a callable of the 1-based overlap index.
    Frames outside the overlap are untouched.
    """
    if not 1 <= m_latent <= min(y_prev.shape[0], y_cur.shape[0]):
        raise OverlapTooLarge(
            f"overlap {m_latent} vs latents of {y_prev.shape[0]} and {y_cur.shape[0]}")
    out = np.array(y_cur, copy=True)
    lp = y_prev.shape[0]
    for i in range(1, m_latent + 1):
        g = gamma(i) if callable(gamma) else float(gamma)
        out[i - 1] = g * y_cur[i - 1] + (1.0 - g) * y_prev[lp - m_latent + i - 1]
    return out


def effective_bitrate(rate: float, l: int, m: int, K: int) -> float:
    """Distinct-frame bitrate after overlap redundancy:
    R * l K / (l + (K-1)(l - m))."""
    if not (l > m >= 0) or K < 1:
        raise BadGopParams(f"need l > m >= 0 and K >= 1, got l={l} m={m} K={K}")
    return rate * (l * K) / (l + (K - 1) * (l - m))
