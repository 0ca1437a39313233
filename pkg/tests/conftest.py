import numpy as np
import pytest

from fgvc.prior import SpectralGaussianPrior, power_law_profile
from fgvc.rng import keyed_generator
from fgvc.schedule import build_schedule


@pytest.fixture(scope="session")
def small_sched():
    return build_schedule(32, 1e-3, 0.05)


@pytest.fixture(scope="session")
def tiny_sched():
    return build_schedule(2, 0.1, 0.2)


def gaussian_latent(shape, block, seed, scale=0.3):
    """Latent drawn from the default power-law source model plus its profile."""
    profile = power_law_profile(shape, block)
    g = keyed_generator(seed, "corpus")
    return np.sqrt(profile) * g.standard_normal(shape) * scale, profile


def matched_prior(profile):
    return SpectralGaussianPrior(profile.ravel())
