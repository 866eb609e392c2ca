"""
共通フィクスチャ
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from utils.numerics import Signature, SignatureKind  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def euclid_12():
    return Signature(1, 2)


@pytest.fixture
def euclid_22():
    return Signature(2, 2)


@pytest.fixture
def pseudo_11():
    return Signature(1, 1, SignatureKind.PSEUDO)
