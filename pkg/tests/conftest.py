import numpy as np
import pytest

from acontrario_tamper.synth import synth_texture, synth_tamper


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_squares():
    """Dark 200x200 ground with two separated bright squares."""
    img = np.full((200, 200), 0.1)
    img[20:80, 20:80] = 0.9
    img[120:190, 110:180] = 0.7
    return img


@pytest.fixture(scope="session")
def tampered_texture():
    base = synth_texture(256, seed=7)
    tampered, truth = synth_tamper(base, "upsample:1.5", (64, 64, 128, 128))
    return base, tampered, truth
