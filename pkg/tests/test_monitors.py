"""
モニタとモノトニシティ判定のテスト
"""
import numpy as np
import pytest

from services.flow import FlowConfig, Termination, run
from services.grassmann import BallParams
from services.identities import commutator_norms
from services.initial_data import band_limited_random_state, circle_state, flat_state, sine_state
from services.monitors import (
    COLUMNS, CT_FIT_TOL, DEFAULT_SLACKS, CtFit, HuiskenSettings, MonitorRecord, MonitorSuite, Slack, check_series,
    ct_fit, enb_residual, height_monitor, huisken_density, identity_residuals, monotonicity_verdicts,
    normal_position_monitor, pseudo_decay_monitor, self_similar_residual, violations, weighted_monitor,
)
from services.surface import gauss_data, geometry_snapshot, shape_operators
from utils.errors import InfeasibleRadius, InvalidInput, InvalidTime
from utils.numerics import Signature, SignatureKind

TWO_PI = 2.0 * np.pi


def test_columns_order():
    assert COLUMNS[:4] == ["t", "sup_B2", "sup_H2", "gauss_radius_sup"]
    assert COLUMNS[-2:] == ["t_rescaled", "enb_residual"]
    assert len(COLUMNS) == 19


class TestScalarMonitors:
    def test_height(self, euclid_12):
        state = sine_state(euclid_12, (12,), (TWO_PI,), 0.3)
        heights = state.values
        assert height_monitor(state) == pytest.approx(np.max(np.linalg.norm(heights, axis=-1)))

    def test_height_parametric_circle(self):
        state = circle_state(Signature(1, 1), 16, 2.0)
        assert height_monitor(state) == pytest.approx(2.0)

    def test_normal_position_circle(self):
        snapshot = geometry_snapshot(circle_state(Signature(1, 1), 64, 1.5), order=4)
        value, holds = normal_position_monitor(snapshot, growth=(10.0, 0.5))
        assert value == pytest.approx(1.5 ** 2, rel=1e-6)
        assert holds is True
        _, holds = normal_position_monitor(snapshot, growth=(0.1, 0.5))
        assert holds is False

    def test_self_similar_plane_through_origin(self, euclid_22):
        state = flat_state(euclid_22, (6, 6), (TWO_PI, TWO_PI), slope=np.array([[0.3, 0.0], [0.1, 0.2]]))
        assert self_similar_residual(geometry_snapshot(state)) < 1e-12

    def test_self_similar_offset_plane(self, euclid_12):
        state = flat_state(euclid_12, (6,), (TWO_PI,), offset=[0.5, 0.0])
        assert self_similar_residual(geometry_snapshot(state)) == pytest.approx(0.5)

    def test_pseudo_decay_at_start(self, pseudo_11):
        state = sine_state(pseudo_11, (32,), (TWO_PI,), 0.3)
        snapshot = geometry_snapshot(state)
        gauss = gauss_data(snapshot)
        assert pseudo_decay_monitor(snapshot, gauss) == pytest.approx(gauss.radius ** 2)

    def test_weighted(self, euclid_12):
        state = sine_state(euclid_12, (32,), (TWO_PI,), 0.05)
        snapshot = geometry_snapshot(state)
        gauss = gauss_data(snapshot)
        ball = BallParams.for_radius(0.3)
        weighted, decay = weighted_monitor(snapshot, gauss, ball)
        h1 = 1.0 + ball.epsilon - np.cos(np.sqrt(2.0) * gauss.distance)
        assert weighted == pytest.approx(np.max(snapshot.curvature.norm_B2 * h1 ** ball.q))
        assert decay == pytest.approx(np.max(h1 ** ball.q))

    def test_weighted_needs_feasible_ball(self, euclid_12):
        snapshot = geometry_snapshot(sine_state(euclid_12, (16,), (TWO_PI,), 0.05))
        with pytest.raises(InfeasibleRadius):
            weighted_monitor(snapshot, gauss_data(snapshot), BallParams.for_radius(0.5))
        with pytest.raises(InfeasibleRadius):
            weighted_monitor(snapshot, gauss_data(snapshot), None)


class TestHuisken:
    @pytest.mark.parametrize("t0", [0.1, 0.25])
    def test_flat_plane_density_is_one(self, t0):
        sig = Signature(2, 1)
        state = flat_state(sig, (32, 32), (TWO_PI, TWO_PI))
        theta, truncation = huisken_density(geometry_snapshot(state), [np.pi, np.pi, 0.0], t0=t0)
        assert truncation < 1e-4
        assert abs(theta - 1.0) <= truncation + 1e-6

    def test_line_density_with_offset_centre(self, euclid_12):
        # 線から距離 d の中心では exp(−d²/4τ) になる
        state = flat_state(euclid_12, (64,), (TWO_PI,))
        theta, _ = huisken_density(geometry_snapshot(state), [np.pi, 0.5, 0.0], t0=0.25)
        assert theta == pytest.approx(np.exp(-0.25), abs=1e-4)

    def test_truncation_grows_near_edge(self, euclid_12):
        snapshot = geometry_snapshot(flat_state(euclid_12, (32,), (TWO_PI,)))
        _, inside = huisken_density(snapshot, [np.pi, 0.0, 0.0], t0=0.25)
        _, edge = huisken_density(snapshot, [0.0, 0.0, 0.0], t0=0.25)
        assert edge > 0.4
        assert inside < edge

    def test_invalid_time(self, euclid_12):
        state = flat_state(euclid_12, (8,), (TWO_PI,)).evolved(np.zeros((8, 2)), 1.0)
        with pytest.raises(InvalidTime):
            huisken_density(geometry_snapshot(state), [0.0, 0.0, 0.0], t0=1.0)

    def test_pseudo_rejected(self, pseudo_11):
        with pytest.raises(InvalidInput):
            huisken_density(geometry_snapshot(flat_state(pseudo_11, (8,), (TWO_PI,))), [0.0, 0.0], t0=1.0)


class TestIdentityResiduals:
    @staticmethod
    def residuals(size: int):
        state = sine_state(Signature(1, 2), (size,), (TWO_PI,), 0.3)
        return identity_residuals(state, dt_probe=0.05 * TWO_PI / size)

    def test_second_order_convergence(self):
        coarse, mid, fine = (self.residuals(n) for n in (32, 64, 128))
        for name in ("res_g", "res_gamma", "res_B2", "res_volume", "res_H2"):
            a, b, c = getattr(coarse, name), getattr(mid, name), getattr(fine, name)
            assert a / b >= 2.5, name
            assert b / c >= 2.5, name

    def test_flat_plane_is_exact(self, euclid_22):
        state = flat_state(euclid_22, (8, 8), (TWO_PI, TWO_PI), slope=np.array([[0.2, 0.0], [0.0, 0.1]]))
        residuals = identity_residuals(state, dt_probe=1e-3)
        assert residuals.res_g < 1e-12
        assert residuals.res_B2 < 1e-12
        assert residuals.res_gamma < 1e-12

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", [SignatureKind.EUCLIDEAN, SignatureKind.PSEUDO])
    def test_second_order_convergence_non_commuting(self, kind):
        # m = 2 のランダムデータでは形作用素が可換でなく、交換子の項が残差に効く
        sig = Signature(2, 2, kind)
        levels = []
        for size in (32, 64, 128):
            state = band_limited_random_state(sig, (size, size), (TWO_PI, TWO_PI), seed=3, target_radius=0.3)
            if size == 32:
                shapes = shape_operators(geometry_snapshot(state, order=4))
                assert np.max(commutator_norms(shapes)) > 1e-3
            levels.append(identity_residuals(state, dt_probe=0.05 * TWO_PI / size))
        coarse, mid, fine = levels
        for name in ("res_g", "res_B2"):
            a, b, c = getattr(coarse, name), getattr(mid, name), getattr(fine, name)
            assert a / b >= 2.5, name
            assert b / c >= 2.5, name


class TestMonitorSuite:
    def test_unknown_monitor(self, euclid_12):
        with pytest.raises(InvalidInput):
            MonitorSuite(euclid_12, enabled=["curvature"])

    def test_explicit_weighted_needs_small_ball(self, euclid_12):
        with pytest.raises(InfeasibleRadius):
            MonitorSuite(euclid_12, ball=BallParams.for_radius(0.5), enabled=["weighted"])

    def test_explicit_huisken_needs_settings(self, euclid_12):
        with pytest.raises(InvalidInput):
            MonitorSuite(euclid_12, enabled=["huisken"])

    def test_default_record(self, euclid_12):
        suite = MonitorSuite(euclid_12)
        record = suite(sine_state(euclid_12, (16,), (TWO_PI,), 0.1))
        assert record.sup_B2 is not None
        assert record.gauss_radius_sup is not None
        assert record.height_sup is not None
        assert record.weighted_sup is None
        assert record.self_similar_residual is None
        assert record.res_g is None

    def test_full_record(self, euclid_12):
        suite = MonitorSuite(euclid_12, ball=BallParams.for_radius(0.3), rescaled=True,
                             huisken=HuiskenSettings([np.pi, 0.0, 0.0], t0=1.0), dt_probe=1e-3)
        record = suite(sine_state(euclid_12, (16,), (TWO_PI,), 0.05))
        assert record.weighted_sup is not None
        assert record.decay_monitor is not None
        assert record.huisken_density is not None
        assert record.huisken_truncation is not None
        assert record.self_similar_residual is not None
        assert record.t_rescaled == 0.0
        assert record.res_B2 is not None

    def test_huisken_stops_after_t0(self, euclid_12):
        suite = MonitorSuite(euclid_12, huisken=HuiskenSettings([0.0, 0.0, 0.0], t0=0.5))
        state = flat_state(euclid_12, (8,), (TWO_PI,))
        assert suite(state.evolved(state.values, 0.6)).huisken_density is None

    def test_predicted_euclidean(self, euclid_12):
        suite = MonitorSuite(euclid_12, ball=BallParams.for_radius(0.2))
        state = sine_state(euclid_12, (16,), (TWO_PI,), 0.05)
        predicted = suite.predicted(state, suite(state))
        assert predicted == ["gauss_radius_sup", "weighted_sup", "decay_monitor", "ct_fit", "height_sup"]

    def test_predicted_with_slope(self, euclid_12):
        suite = MonitorSuite(euclid_12)
        state = flat_state(euclid_12, (8,), (TWO_PI,), slope=np.array([[0.1], [0.0]]))
        assert "height_sup" not in suite.predicted(state, suite(state))

    def test_predicted_large_radius(self, euclid_12):
        suite = MonitorSuite(euclid_12)
        state = flat_state(euclid_12, (8,), (TWO_PI,))
        assert "gauss_radius_sup" not in suite.predicted(state, MonitorRecord(t=0.0, gauss_radius_sup=1.2))

    def test_predicted_pseudo(self, pseudo_11):
        suite = MonitorSuite(pseudo_11)
        state = sine_state(pseudo_11, (16,), (TWO_PI,), 0.3)
        predicted = suite.predicted(state, suite(state))
        assert predicted == ["gauss_radius_sup", "sup_B2", "height_sup", "pseudo_decay_sup", "enb_residual"]


class TestVerdicts:
    def test_check_series(self):
        holds, worst = check_series(np.array([3.0, 2.0, 2.0, 1.0]), Slack())
        assert holds
        assert worst == pytest.approx(0.0)
        holds, worst = check_series(np.array([1.0, 1.5]), Slack(absolute=0.1))
        assert not holds
        assert worst == pytest.approx(0.4)

    def test_relative_slack(self):
        holds, _ = check_series(np.array([100.0, 100.05]), Slack(relative=1e-3))
        assert holds

    def test_initial_reference(self):
        # 初期値以下なら途中の増加は許す
        holds, _ = check_series(np.array([1.0, 0.5, 0.9]), Slack(reference="initial"))
        assert holds
        holds, _ = check_series(np.array([1.0, 0.5, 1.1]), Slack(reference="initial"))
        assert not holds

    def test_single_sample(self):
        assert check_series(np.array([1.0]), Slack()) == (True, None)

    def test_verdicts_and_violations(self):
        records = [MonitorRecord(t=0.0, sup_B2=1.0, height_sup=1.0),
                   MonitorRecord(t=1.0, sup_B2=2.0, height_sup=0.5)]
        verdicts = monotonicity_verdicts(records, ["height_sup"])
        assert set(verdicts) == {"sup_B2", "height_sup"}
        assert not verdicts["sup_B2"].holds
        assert not verdicts["sup_B2"].predicted
        assert verdicts["height_sup"].holds
        assert violations(verdicts) == []
        assert violations(monotonicity_verdicts(records, ["sup_B2"])) == ["sup_B2"]

    def test_huisken_slack_includes_truncation(self):
        records = [MonitorRecord(t=0.0, huisken_density=1.0, huisken_truncation=1e-3),
                   MonitorRecord(t=0.1, huisken_density=1.0005, huisken_truncation=1e-3)]
        verdicts = monotonicity_verdicts(records, ["huisken_density"])
        assert verdicts["huisken_density"].holds


class TestCtFit:
    def records(self):
        return [MonitorRecord(t=0.0, sup_B2=5.0, decay_monitor=2.0),
                MonitorRecord(t=0.05, sup_B2=4.0),
                MonitorRecord(t=0.5, sup_B2=1.0),
                MonitorRecord(t=1.0, sup_B2=0.5)]

    def test_fit(self):
        fit = ct_fit(self.records(), t_end=1.0)
        assert fit.c == pytest.approx(0.5)
        assert fit.decay0 == 2.0
        assert fit.bound == pytest.approx(2.0 * (1.0 + CT_FIT_TOL))
        assert fit.holds

    def test_fit_violation(self):
        records = self.records() + [MonitorRecord(t=2.0, sup_B2=1.5)]
        assert not ct_fit(records, t_end=2.0).holds

    def test_bound_is_initial_decay_monitor(self):
        # decay_monitor(0) をわずかに超える c は許容幅 1e-2 の外
        records = [MonitorRecord(t=0.0, sup_B2=5.0, decay_monitor=0.5),
                   MonitorRecord(t=1.0, sup_B2=0.504)]
        assert ct_fit(records, t_end=1.0).holds
        records[-1] = MonitorRecord(t=1.0, sup_B2=0.51)
        fit = ct_fit(records, t_end=1.0)
        assert fit.c == pytest.approx(0.51)
        assert not fit.holds

    def test_no_decay_monitor(self):
        fit = ct_fit([MonitorRecord(t=0.0, sup_B2=1.0)], t_end=1.0)
        assert fit == CtFit(c=None, decay0=None, bound=None, holds=True)


class TestCurvatureDecayRate:
    def test_comparison_solution_is_exact(self):
        # y′ = −(2/n)y² の解 y = 1/(1/y₀ + 2t/n)
        y0, n = 2.0, 2
        t = np.array([0.0, 0.05, 0.3, 1.0])
        y = 1.0 / (1.0 / y0 + 2.0 * t / n)
        for k in range(1, t.size):
            assert enb_residual(t[k - 1], y[k - 1], t[k], y[k], n) == pytest.approx(0.0, abs=1e-12)

    def test_slow_decay_is_positive(self):
        assert enb_residual(0.0, 1.0, 0.1, 1.0, 1) == pytest.approx(2.0)
        assert enb_residual(0.0, 0.0, 0.1, 0.0, 2) == 0.0

    def test_time_must_increase(self):
        with pytest.raises(InvalidTime):
            enb_residual(0.2, 1.0, 0.2, 0.9, 1)

    def test_suite_records_consecutive_pairs(self, pseudo_11):
        suite = MonitorSuite(pseudo_11, enabled=["sup_B2", "enb"])
        state = sine_state(pseudo_11, (32,), (TWO_PI,), 0.3)
        first = suite(state)
        later = state.evolved(0.9 * state.values, 0.05)
        second = suite(later)
        assert first.enb_residual is None
        assert second.enb_residual == pytest.approx(enb_residual(0.0, first.sup_B2, 0.05, second.sup_B2, 1))
        # 時刻が戻ったら新しいランとして扱う
        assert suite(state).enb_residual is None

    def test_not_recorded_for_euclidean(self, euclid_12):
        suite = MonitorSuite(euclid_12)
        state = sine_state(euclid_12, (16,), (TWO_PI,), 0.1)
        suite(state)
        assert suite(state.evolved(state.values, 0.1)).enb_residual is None
        assert "enb_residual" not in suite.predicted(state, suite(state))

    def test_upper_bound_check(self):
        slack = DEFAULT_SLACKS["enb_residual"]
        assert check_series(np.array([-1.0, 0.005]), slack) == (True, pytest.approx(-0.005))
        holds, worst = check_series(np.array([-1.0, 0.02]), slack)
        assert not holds
        assert worst == pytest.approx(0.01)
        assert check_series(np.array([0.02]), slack)[0] is False

    @staticmethod
    def required_slack(size: int) -> float:
        sig = Signature(1, 1, SignatureKind.PSEUDO)
        suite = MonitorSuite(sig, enabled=["sup_B2", "enb"])
        state = sine_state(sig, (size,), (TWO_PI,), 0.5)
        result = run(FlowConfig(stepper="rk4", t_end=0.1, monitor_every=5), state, suite)
        assert result.termination is Termination.REACHED_T_END
        verdict = monotonicity_verdicts(result.records, suite.predicted(state, result.records[0]))["enb_residual"]
        assert verdict.predicted
        assert verdict.holds
        return max(verdict.worst_excess + DEFAULT_SLACKS["enb_residual"].absolute, 0.0)

    def test_slack_does_not_grow_under_refinement(self):
        coarse = self.required_slack(64)
        fine = self.required_slack(128)
        assert fine <= coarse + 1e-12
