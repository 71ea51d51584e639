import numpy as np
import pytest

from kdg.fourier import ComplexImage


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_complex_image(rng, h, w) -> ComplexImage:
    return ComplexImage(rng.standard_normal((h, w)) + 1j * rng.standard_normal((h, w)))


def fd_agree(fd: np.ndarray, an: np.ndarray, rtol: float, atol: float) -> bool:
    """Two-term gradient-check tolerance.

    ``rtol`` is the stated relative tolerance; ``atol`` absorbs the
    central-difference oracle's own float64 roundoff floor (about
    eps * |loss| / h), which dominates for near-zero gradient entries.
    """
    fd = np.asarray(fd, dtype=np.float64)
    an = np.asarray(an, dtype=np.float64)
    return bool(np.all(np.abs(fd - an) <= rtol * np.maximum(np.abs(fd), np.abs(an)) + atol))
