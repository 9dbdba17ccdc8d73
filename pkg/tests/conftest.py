import numpy as np
import pytest

from pcm import Box, Dataset, SynthSpec, default_spec, generate


@pytest.fixture(scope="session")
def small_sigma0_dataset():
    """Noiseless default-spec trial, small enough for brute-force checks."""
    return generate(default_spec(n=5000, seed=7, sigma=0.0))


@pytest.fixture(scope="session")
def small_sigma5_dataset():
    return generate(default_spec(n=5000, seed=7, sigma=5.0))


@pytest.fixture(scope="session")
def aligned_sigma0():
    """Noiseless trial whose region faces lie on the eps(n)-grid.

    n=4096 at d=2 gives eps=1/8, and all region faces sit on multiples of
    1/8, so every grid cell is pure and zero-noise results are exact.
    """
    spec = SynthSpec(
        d=2,
        regions=(
            Box(lo=(0.125, 0.125), hi=(0.375, 0.375), level=0),
            Box(lo=(0.625, 0.625), hi=(0.875, 0.875), level=0),
            Box(lo=(0.625, 0.125), hi=(0.875, 0.375), level=2),
            Box(lo=(0.125, 0.625), hi=(0.375, 0.875), level=2),
        ),
        default_level=1,
        mu=np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 2.0]]),
        sigma=0.0,
        p_treat=0.5,
        n=4096,
        seed=3,
    )
    return spec, generate(spec)


def make_dataset(x, t, y, ybar=None, c_true=None):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 1 and x.shape[1] > 1 and np.ndim(t) == 1 and len(t) > 1:
        x = x.T
    return Dataset.from_arrays(x, t, y, ybar, c_true)
