"""Denoiser abstraction and analytic Gaussian backends.

The codec never trains anything: the role of a learned noise predictor is
played by closed-form MMSE estimators for Gaussian sources. For a source
coefficient with variance ``sigma2`` observed through the forward marginal
``z = sqrt(ab) x + sqrt(1-ab) eps``, the optimal (Wiener) noise estimate is

    eps_hat = z * sqrt(1 - ab) / (ab * sigma2 + (1 - ab))

applied per coefficient in the basis that diagonalises the source. Two
backends are provided: a joint spatiotemporal prior over all latent
coefficients, and a frame-wise prior that models every latent frame in
isolation (all cross-frame statistics dropped).
"""

from __future__ import annotations

import hashlib
import struct
from abc import ABC, abstractmethod

import numpy as np

from .errors import EmptyCorpus, ProfileMismatch
from .schedule import NoiseSchedule

DEFAULT_EPS_VAR = 1e-6


class PriorModel(ABC):
    """Deterministic noise predictor; immutable after construction."""

    name: str = "abstract"

    @abstractmethod
    def predict_eps(self, z: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        """Estimate the noise component of z at step t. Output shape == input shape."""

    @abstractmethod
    def marginal_variances(self, size: int) -> np.ndarray:
        """Per-coordinate source variances in latent coordinates (flat, length size).

        Shared by encoder and decoder to derive chunk boundaries, so it must
        depend only on the prior's own parameters.
        """


def _wiener_eps(z: np.ndarray, sigma2: np.ndarray, ab: float) -> np.ndarray:
    return z * (np.sqrt(1.0 - ab) / (ab * sigma2 + (1.0 - ab)))


class SpectralGaussianPrior(PriorModel):
    """Joint prior: independent Gaussian coefficients in an orthonormal basis.

    With ``basis=None`` the latent coordinates are already the diagonalising
    basis (the pipeline's block transform). With an explicit orthonormal
    ``basis`` U, prediction rotates into U, applies the per-coefficient Wiener
    estimate against ``var_profile``, and rotates back.
    """

    def __init__(self, var_profile: np.ndarray, transform_id: str = "block-dct",
                 basis: np.ndarray | None = None):
        profile = np.asarray(var_profile, dtype=np.float64).ravel()
        if profile.size == 0 or not (profile > 0.0).all():
            raise ProfileMismatch("variance profile must be non-empty and positive")
        self.var_profile = profile
        self.transform_id = transform_id
        self.basis = None if basis is None else np.asarray(basis, dtype=np.float64)
        if self.basis is not None and self.basis.shape != (profile.size, profile.size):
            raise ProfileMismatch(
                f"basis {self.basis.shape} incompatible with profile of {profile.size}")
        self.name = "spectral-joint"

    def predict_eps(self, z: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.size != self.var_profile.size:
            raise ProfileMismatch(
                f"latent has {z.size} coefficients, profile has {self.var_profile.size}")
        ab = sched.alpha_bar[t]
        flat = z.ravel()
        if self.basis is None:
            out = _wiener_eps(flat, self.var_profile, ab)
        else:
            coef = self.basis.T @ flat
            out = self.basis @ _wiener_eps(coef, self.var_profile, ab)
        return out.reshape(z.shape)

    def marginal_variances(self, size: int) -> np.ndarray:
        if size != self.var_profile.size:
            raise ProfileMismatch(f"requested {size}, profile has {self.var_profile.size}")
        if self.basis is None:
            return self.var_profile.copy()
        return (self.basis ** 2) @ self.var_profile


class FramewisePrior(PriorModel):
    """Frame-wise prior: every latent frame modelled independently.

    The latent's leading axis indexes frames. Prediction for frame i reads
    only frame i of the input, so zeroing or permuting other frames cannot
    change it.
    """

    def __init__(self, frame_profile: np.ndarray, n_frames: int,
                 frame_basis: np.ndarray | None = None):
        profile = np.asarray(frame_profile, dtype=np.float64).ravel()
        if profile.size == 0 or not (profile > 0.0).all():
            raise ProfileMismatch("frame profile must be non-empty and positive")
        if n_frames < 1:
            raise ProfileMismatch(f"need at least one frame, got {n_frames}")
        self.frame_profile = profile
        self.n_frames = int(n_frames)
        self.frame_basis = None if frame_basis is None else np.asarray(frame_basis, float)
        if (self.frame_basis is not None
                and self.frame_basis.shape != (profile.size, profile.size)):
            raise ProfileMismatch("frame basis incompatible with frame profile")
        self.name = "framewise"

    def predict_eps(self, z: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        fsize = self.frame_profile.size
        if z.size != self.n_frames * fsize or z.shape[0] != self.n_frames:
            raise ProfileMismatch(
                f"latent {z.shape} incompatible with {self.n_frames} frames of {fsize}")
        ab = sched.alpha_bar[t]
        frames = z.reshape(self.n_frames, fsize)
        if self.frame_basis is None:
            out = _wiener_eps(frames, self.frame_profile[None, :], ab)
        else:
            coef = frames @ self.frame_basis
            out = _wiener_eps(coef, self.frame_profile[None, :], ab) @ self.frame_basis.T
        return out.reshape(z.shape)

    def marginal_variances(self, size: int) -> np.ndarray:
        fsize = self.frame_profile.size
        if size != self.n_frames * fsize:
            raise ProfileMismatch(f"requested {size}, prior covers {self.n_frames * fsize}")
        if self.frame_basis is None:
            per_frame = self.frame_profile
        else:
            per_frame = (self.frame_basis ** 2) @ self.frame_profile
        return np.tile(per_frame, self.n_frames)


def power_law_profile(latent_shape: tuple[int, ...], block: tuple[int, int, int],
                      amplitude: float = 1.0, exponent: float = 2.0) -> np.ndarray:
    """Default source model: sigma2(f) = A / (1 + |f|)^p over the block's
    3D frequency index, broadcast over all latent positions.

    ``latent_shape`` is (frames, height, width, channels) where channels holds
    the flattened block coefficients (possibly times input channels).
    """
    s, d1, d2 = block
    per_block = s * d1 * d2
    channels = latent_shape[-1]
    if channels % per_block != 0:
        raise ProfileMismatch(f"{channels} channels not a multiple of block {per_block}")
    ft, fy, fx = np.meshgrid(np.arange(s), np.arange(d1), np.arange(d2), indexing="ij")
    freq = np.sqrt(ft ** 2 + fy ** 2 + fx ** 2).ravel()
    base = amplitude / (1.0 + freq) ** exponent
    per_channel = np.tile(base, channels // per_block)
    out = np.broadcast_to(per_channel, latent_shape)
    return np.ascontiguousarray(out)


def fit_variance_profile(corpus, eps_var: float = DEFAULT_EPS_VAR) -> np.ndarray:
    """Per-coefficient empirical second moment over a corpus of latents,
    floored at eps_var so likelihood ratios stay finite."""
    latents = list(corpus)
    if not latents:
        raise EmptyCorpus("variance fit needs at least one latent")
    shape = np.asarray(latents[0]).shape
    acc = np.zeros(shape, dtype=np.float64)
    for lat in latents:
        lat = np.asarray(lat, dtype=np.float64)
        if lat.shape != shape:
            raise ProfileMismatch(f"corpus shapes differ: {lat.shape} vs {shape}")
        acc += lat * lat
    return np.maximum(acc / len(latents), eps_var)


# -- profile sidecar (little-endian, length-prefixed) -------------------------

def profile_to_bytes(profile: np.ndarray) -> bytes:
    flat = np.asarray(profile, dtype="<f8").ravel()
    return struct.pack("<Q", flat.size) + flat.tobytes()


def profile_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise ProfileMismatch("profile sidecar shorter than its length prefix")
    (count,) = struct.unpack_from("<Q", buf, 0)
    expected = 8 + 8 * count
    if len(buf) != expected:
        raise ProfileMismatch(f"profile sidecar is {len(buf)} bytes, expected {expected}")
    return np.frombuffer(buf, dtype="<f8", count=count, offset=8).astype(np.float64)


def profile_hash(profile: np.ndarray) -> bytes:
    return hashlib.sha256(profile_to_bytes(profile)).digest()
