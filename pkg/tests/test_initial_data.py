"""
初期データ生成のテスト
"""
import numpy as np
import pytest

from services.initial_data import (
    band_limited_random_state, bump_state, circle_state, make_initial_state, measured_radius, sine_state,
)
from services.surface import GraphState, ParametricState
from utils.errors import InvalidInput
from utils.numerics import Signature, SignatureKind

TWO_PI = 2.0 * np.pi


def test_sine_formula(euclid_22):
    state = sine_state(euclid_22, (8, 6), (TWO_PI, 3.0), 0.2)
    x = state.coordinates()
    assert np.allclose(state.values[..., 0], 0.2 * np.sin(x[..., 0]))
    assert np.allclose(state.values[..., 1], 0.2 * np.sin(TWO_PI * x[..., 1] / 3.0 + np.pi / 3.0))


def test_random_is_reproducible(euclid_22):
    a = band_limited_random_state(euclid_22, (12, 12), (TWO_PI, TWO_PI), seed=7)
    b = band_limited_random_state(euclid_22, (12, 12), (TWO_PI, TWO_PI), seed=7)
    c = band_limited_random_state(euclid_22, (12, 12), (TWO_PI, TWO_PI), seed=8)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


@pytest.mark.parametrize("target", [0.1, 0.3])
def test_random_hits_target_radius(euclid_22, target):
    state = band_limited_random_state(euclid_22, (16, 16), (TWO_PI, TWO_PI), seed=3, target_radius=target)
    assert measured_radius(state) == pytest.approx(target, rel=1e-8)


def test_random_pseudo_target(pseudo_11):
    state = band_limited_random_state(pseudo_11, (32,), (TWO_PI,), seed=1, target_radius=0.8)
    assert measured_radius(state) == pytest.approx(0.8, rel=1e-8)


def test_zero_target_is_flat(euclid_12):
    state = band_limited_random_state(euclid_12, (16,), (TWO_PI,), seed=0, target_radius=0.0)
    assert not np.any(state.values)


def test_bump_peaks_at_centre(euclid_12):
    state = bump_state(euclid_12, (17,), (TWO_PI,), amplitude=0.5, width=0.5)
    peak = int(np.argmax(state.values[:, 0]))
    assert abs(state.coordinates()[peak, 0] - np.pi) <= TWO_PI / 17
    assert np.max(state.values[:, 1]) == pytest.approx(0.5 * np.max(state.values[:, 0]))


def test_circle_state():
    state = circle_state(Signature(1, 2), 32, 1.5)
    assert isinstance(state, ParametricState)
    assert np.allclose(np.linalg.norm(state.positions(), axis=-1), 1.5)
    with pytest.raises(InvalidInput):
        circle_state(Signature(2, 1), 32, 1.0)
    with pytest.raises(InvalidInput):
        circle_state(Signature(1, 1, SignatureKind.PSEUDO), 32, 1.0)


class TestMakeInitialState:
    def test_unknown_generator(self, euclid_12):
        with pytest.raises(InvalidInput):
            make_initial_state(euclid_12, (8,), (TWO_PI,), "spiral")

    def test_circle_needs_parametric(self, euclid_12):
        with pytest.raises(InvalidInput):
            make_initial_state(euclid_12, (8,), (TWO_PI,), "circle")

    def test_parametric_conversion(self, euclid_12):
        state = make_initial_state(euclid_12, (8,), (TWO_PI,), "sine", representation="parametric", amplitude=0.1)
        assert isinstance(state, ParametricState)

    def test_flat_with_slope(self, euclid_12):
        slope = np.array([[0.5], [0.0]])
        state = make_initial_state(euclid_12, (8,), (TWO_PI,), "flat", slope=slope)
        assert isinstance(state, GraphState)
        assert np.array_equal(state.slope, slope)
