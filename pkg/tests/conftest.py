"""
Shared fixtures
"""
import numpy as np
import pytest

from sbelab.common.config import get_settings
from sbelab.measures.gaussian import MeasureSpec, RngStream, sample
from sbelab.models.schemas import MeasureKind


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Settings are re-read from the environment in every test"""
    monkeypatch.delenv("SBELAB_N_JOBS", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def random_field():
    """Invariant-measure draw on a lattice of cutoff K"""
    def make(K: int, seed: int = 0, dim: int = 1):
        kind = MeasureKind.WHITE_NOISE_1D if dim == 1 else MeasureKind.NS_GIBBS_2D
        return sample(MeasureSpec(kind, K), RngStream(seed, "fixture"))
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
