import numpy as np
import pytest

from hybridlid.ctc import PosteriorMatrix
from hybridlid.roman import BLANK


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_post(rows, symbols=None):
    rows = np.asarray(rows, dtype=float)
    if symbols is None:
        symbols = (BLANK,) + tuple("abcdefghijklmnopqrstuvwxyz"[: rows.shape[1] - 1])
    return PosteriorMatrix(rows, tuple(symbols))
