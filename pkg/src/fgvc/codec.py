"""Whole-video encode/decode orchestration.

Encoding: shift samples to zero mean, pad dims to the block factors, segment
into overlapping groups, block-transform each group to its latent, code the
trajectory, and either stop at a fixed timestep or let the quality controller
pick one per group. Decoding replays each group's seeds, denoises, fuses
overlapping latent frames with the previous group, inverse-transforms, and
crops back to the true dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import CodecConfig
from .container import (PRIOR_POWER_LAW, PRIOR_SIDECAR, BitstreamHeader,
                        GopRecord, serialize_header)
from .errors import MalformedBitstream, MalformedCode
from .metrics import feasible_scales, ms_ssim_video
from .pipeline import (Gop, TransformSpec, VideoTensor, denoise_from,
                       encode_gop, fuse_overlap, latent_shape_for, pad_video,
                       segment_gops, transform_forward, transform_inverse)
from .prior import (SpectralGaussianPrior, fit_variance_profile,
                    power_law_profile, profile_hash)
from .qctrl import ControlConfig, RpSample, control_gop
from .rcc import (BitReader, BitWriter, decode_step, derive_chunks,
                  elias_delta_decode, elias_delta_encode)
from .rng import keyed_generator
from .schedule import build_schedule


@dataclass
class GopStats:
    index: int
    start: int
    frames: int
    t_star: int
    payload_bits: int
    bpp: float
    quality: float | None = None
    converged: bool | None = None
    decodes: int = 0
    trace: list[dict] = field(default_factory=list)


@dataclass
class EncodedVideo:
    header: BitstreamHeader
    payloads: list[bytes]
    stats: list[GopStats]
    profile: np.ndarray | None = None  # sidecar payload for fitted priors

    def to_bytes(self) -> bytes:
        return serialize_header(self.header) + b"".join(self.payloads)


def _shift_and_pad(video: VideoTensor, cfg: CodecConfig) -> np.ndarray:
    return pad_video(video.data - 0.5, cfg.s, cfg.d)


def _gop_latent(padded: np.ndarray, gop: Gop, spec: TransformSpec) -> np.ndarray:
    clip = padded[gop.start:gop.stop]
    if clip.ndim == 3:
        return transform_forward(clip, spec)
    parts = [transform_forward(clip[..., c], spec) for c in range(clip.shape[3])]
    return np.concatenate(parts, axis=3)


def _latent_to_frames(latent: np.ndarray, spec: TransformSpec, channels: int) -> np.ndarray:
    if channels == 1:
        return transform_inverse(latent, spec, 1)
    per = spec.block_channels
    planes = [transform_inverse(latent[..., c * per:(c + 1) * per], spec, 1)
              for c in range(channels)]
    return np.stack(planes, axis=-1)


def _build_prior(header_like, latent_shape, fitted_profile: np.ndarray | None):
    """Prior for one group's latent shape from header parameters. Fitted
    profiles are stored for the nominal group length and sliced in time for
    shortened tails."""
    if header_like.prior_id == PRIOR_SIDECAR:
        if fitted_profile is None:
            raise MalformedBitstream("bitstream references a profile sidecar "
                                     "but none was provided")
        full = fitted_profile.reshape((-1,) + tuple(latent_shape[1:]))
        if latent_shape[0] > full.shape[0]:
            raise MalformedBitstream(
                f"sidecar covers {full.shape[0]} latent frames, need {latent_shape[0]}")
        profile = np.ascontiguousarray(full[:latent_shape[0]])
    else:
        profile = power_law_profile(latent_shape, ( header_like.s, header_like.d,
                                                    header_like.d),
                                    header_like.prior_amplitude,
                                    header_like.prior_exponent)
    return SpectralGaussianPrior(profile.ravel())


def seeds_to_payload(seeds: dict[int, list[int]], T: int, t_star: int) -> bytes:
    w = BitWriter()
    for t in range(T - 1, t_star - 1, -1):
        for n in seeds[t]:
            elias_delta_encode(w, n)
    return w.to_bytes()


class _GopSession:
    """Decode-and-measure service bound to one encoded trajectory; measured
    points are memoised so no timestep is ever decoded twice."""

    def __init__(self, enc, ref_frames, prior, sched, base_seed, gop_index,
                 spec, channels, pixel_frames, height, width, scales):
        self.enc = enc
        self.ref = ref_frames
        self.prior = prior
        self.sched = sched
        self.base_seed = base_seed
        self.gop_index = gop_index
        self.spec = spec
        self.channels = channels
        self.pixels = pixel_frames * height * width
        self.scales = scales
        self.decode_count = 0
        self._memo: dict[int, RpSample] = {}

    def rate_bpp(self, t: int) -> float:
        return self.enc.rate_table[t] / self.pixels

    def measure(self, t: int) -> RpSample:
        if t not in self._memo:
            y_hat = denoise_from(self.enc.states[t], t, self.prior, self.sched,
                                 self.base_seed, self.gop_index)
            frames = _latent_to_frames(y_hat, self.spec, self.channels) + 0.5
            frames = np.clip(frames, 0.0, 1.0)
            crop = frames[:self.ref.shape[0], :self.ref.shape[1], :self.ref.shape[2]]
            quality = ms_ssim_video(crop, self.ref, self.scales)
            self.decode_count += 1
            self._memo[t] = RpSample(R=self.rate_bpp(t), P=quality, t=t)
        return self._memo[t]


def encode_video(video: VideoTensor, cfg: CodecConfig) -> EncodedVideo:
    sched = build_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    spec = TransformSpec(s=cfg.s, d=cfg.d)
    padded = _shift_and_pad(video, cfg)
    gops = segment_gops(padded.shape[0], cfg.gop_len, cfg.overlap, cfg.s)
    channels = video.channels

    use_control = cfg.target_quality is not None
    if not use_control and not 1 <= cfg.t_star <= cfg.T - 1:
        raise MalformedBitstream(f"t_star {cfg.t_star} outside [1, {cfg.T - 1}]")

    fitted_profile = None
    if cfg.prior == "fitted":
        nominal = next((g for g in gops if g.length == cfg.gop_len), gops[0])
        lat0 = _gop_latent(padded, nominal, spec)
        fitted_profile = fit_variance_profile([lat0])

    header = BitstreamHeader(
        frames=video.frames, height=video.height, width=video.width,
        fps=video.fps, channels=channels, gop_len=cfg.gop_len,
        overlap=cfg.overlap, s=cfg.s, d=cfg.d, gamma=cfg.gamma, T=cfg.T,
        beta_start=cfg.beta_start, beta_end=cfg.beta_end,
        chunk_size=cfg.chunk_size, kl_cap=cfg.kl_cap, base_seed=cfg.base_seed,
        prior_id=PRIOR_SIDECAR if cfg.prior == "fitted" else PRIOR_POWER_LAW,
        prior_amplitude=cfg.prior_amplitude, prior_exponent=cfg.prior_exponent)
    if fitted_profile is not None:
        header.profile_sha256 = profile_hash(fitted_profile)
        header.profile_len = fitted_profile.size

    scales = min(cfg.metric_scales, feasible_scales(video.height, video.width))
    payloads: list[bytes] = []
    stats: list[GopStats] = []
    phi_prev = None

    for gop in gops:
        y = _gop_latent(padded, gop, spec)
        prior = _build_prior(header, y.shape, fitted_profile)
        t_min = 1 if use_control else cfg.t_star
        enc = encode_gop(y, prior, sched, t_min, cfg.base_seed, gop.index,
                         cfg.chunk_size, cfg.kl_cap, keep_states=use_control)

        quality = None
        converged = None
        decodes = 0
        trace: list[dict] = []
        if use_control:
            true_stop = min(gop.stop, video.frames)
            ref = video.data[gop.start:true_stop, :video.height, :video.width]
            session = _GopSession(enc, ref, prior, sched, cfg.base_seed,
                                  gop.index, spec, channels, gop.length,
                                  video.height, video.width, scales)
            rate_table = {t: session.rate_bpp(t) for t in enc.rate_table}
            ctl = ControlConfig(p_target=cfg.target_quality, M=cfg.M,
                                eps=cfg.eps, max_iters=cfg.max_iters)
            result = control_gop(session.measure, rate_table, ctl, phi_prev)
            t_star = result.t_star
            quality = result.achieved.P
            converged = result.converged
            decodes = session.decode_count
            trace = result.trace
            phi_prev = result.phi
        else:
            t_star = cfg.t_star

        payload = seeds_to_payload(enc.seeds, cfg.T, t_star)
        payloads.append(payload)
        header.gops.append(GopRecord(t_star=t_star, coded_frames=gop.length,
                                     payload_len=len(payload)))
        stats.append(GopStats(
            index=gop.index, start=gop.start, frames=gop.length, t_star=t_star,
            payload_bits=enc.rate_table[t_star],
            bpp=enc.rate_table[t_star] / (gop.length * video.height * video.width),
            quality=quality, converged=converged, decodes=decodes, trace=trace))

    return EncodedVideo(header=header, payloads=payloads, stats=stats,
                        profile=fitted_profile)


def decode_video(blob: bytes, profile: np.ndarray | None = None,
                 fusion: bool = True, fresh_noise: bool = False,
                 noise_seed: int | None = None) -> VideoTensor:
    from .container import parse_header

    header, pos = parse_header(blob)
    sched = build_schedule(header.T, header.beta_start, header.beta_end)
    spec = TransformSpec(s=header.s, d=header.d)

    pad_frames = header.frames + (-header.frames) % header.s
    pad_h = header.height + (-header.height) % header.d
    pad_w = header.width + (-header.width) % header.d
    gops = segment_gops(pad_frames, header.gop_len, header.overlap, header.s)
    if len(gops) != len(header.gops):
        raise MalformedBitstream(
            f"header lists {len(header.gops)} GOPs, geometry implies {len(gops)}")

    if header.channels == 1:
        out = np.zeros((pad_frames, pad_h, pad_w))
    else:
        out = np.zeros((pad_frames, pad_h, pad_w, header.channels))
    noise_rng = (np.random.Generator(np.random.Philox(key=noise_seed))
                 if noise_seed is not None else None)

    prev_latent = None
    for gop, rec in zip(gops, header.gops):
        payload = blob[pos:pos + rec.payload_len]
        if len(payload) != rec.payload_len:
            raise MalformedBitstream(
                f"GOP {gop.index}: payload truncated "
                f"({len(payload)} of {rec.payload_len} bytes)", gop=gop.index)
        pos += rec.payload_len

        lat_shape = latent_shape_for(gop.length, pad_h, pad_w, header.channels, spec)
        prior = _build_prior(header, lat_shape, profile)
        marg = prior.marginal_variances(int(np.prod(lat_shape)))
        reader = BitReader(payload)
        z = keyed_generator(header.base_seed, "zT", gop.index).standard_normal(lat_shape)
        try:
            for t in range(header.T - 1, rec.t_star - 1, -1):
                chunks = derive_chunks(marg, sched, t, header.chunk_size, header.kl_cap)
                seeds = [elias_delta_decode(reader) for _ in chunks.bounds]
                z = decode_step(prior, sched, t, z, seeds, chunks,
                                header.base_seed, gop.index)
        except MalformedCode as exc:
            raise MalformedBitstream(f"GOP {gop.index}: {exc}", gop=gop.index) from exc

        y_hat = denoise_from(z, rec.t_star, prior, sched, header.base_seed,
                             gop.index, fresh_noise=fresh_noise,
                             noise_rng=noise_rng)
        if fusion and prev_latent is not None and gop.overlap:
            m_latent = gop.overlap // header.s
            y_hat = fuse_overlap(prev_latent, y_hat, m_latent, header.gamma)
        prev_latent = y_hat

        frames = _latent_to_frames(y_hat, spec, header.channels) + 0.5
        out[gop.start:gop.stop] = np.clip(frames, 0.0, 1.0)

    data = out[:header.frames, :header.height, :header.width]
    return VideoTensor(data=np.ascontiguousarray(data),
                       fps=header.fps)
