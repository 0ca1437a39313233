"""fgvc: progressive lossy video codec over a diffusion trajectory.

Compression works by reverse channel coding: the clean latent of each group
of pictures defines a sequence of Gaussian posteriors along a diffusion
schedule, and only the winning seed index of a shared-randomness race is
transmitted per step and chunk. Rate scales continuously with the termination
timestep; an online power-law surrogate picks that timestep per group for a
target quality, and overlapping groups are fused in latent space for temporal
coherence.
"""

from .config import CodecConfig
from .pipeline import VideoTensor
from .schedule import NoiseSchedule, build_schedule

__version__ = "0.1.0"

__all__ = [
    "CodecConfig",
    "NoiseSchedule",
    "VideoTensor",
    "build_schedule",
    "__version__",
]
