import logging

import numpy as np
import pytest

from rpcikit.volume import LabelVolume, ScalarVolume, Spacing, WorldTransform

# Keep the CLI's logging.basicConfig from binding the root logger to a
# per-test captured stderr that pytest later closes.
logging.getLogger().addHandler(logging.NullHandler())


def make_labels(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> LabelVolume:
    transform = WorldTransform(origin=np.asarray(origin, dtype=np.float64), direction=np.eye(3))
    return LabelVolume(
        data=np.asarray(data, dtype=np.uint8), spacing=Spacing(*spacing), transform=transform
    )


def make_scalar(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> ScalarVolume:
    transform = WorldTransform(origin=np.asarray(origin, dtype=np.float64), direction=np.eye(3))
    return ScalarVolume(
        data=np.asarray(data, dtype=np.int16), spacing=Spacing(*spacing), transform=transform
    )


def random_mask(rng: np.random.Generator, dims, p: float, ensure_nonempty: bool = True):
    mask = rng.random(dims) < p
    if ensure_nonempty and not mask.any():
        idx = tuple(rng.integers(0, d) for d in dims)
        mask[idx] = True
    return mask


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20260819))
