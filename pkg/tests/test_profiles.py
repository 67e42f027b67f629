import numpy as np
import pytest

from ftls_lab import (
    AnchorError,
    NoProfileError,
    StepSizeError,
    build_profile,
    classify,
    classify_from_fbar,
    equation_residual,
    leader,
    make_grid,
    profile_rhs,
    uniform_profile_W,
    z_flat,
)

from conftest import FBAR, ROOT_LOW_V2

# coarse-but-honest settings for unit tests; acceptance reruns at paper scale
DZ = 0.002
X_MIN, X_MAX = -6.0, 6.0


class TestGrid:
    def test_zero_is_a_node(self):
        x = make_grid(-1.0, 2.0, 0.3)
        assert np.min(np.abs(x)) < 1e-12

    def test_step_must_resolve_car_length(self, report_1b):
        with pytest.raises(StepSizeError):
            build_profile(report_1b, 0.5, X_min=-2.0, X_max=2.0, dz=0.1)


class TestConstantProfile:
    def test_uniform_road_constant_seed_is_exact(self, params_uniform):
        report = classify(params_uniform, 0.4, 0.4)
        P = build_profile(report, 0.4, X_min=-4.0, X_max=4.0, dz=DZ)
        assert np.max(np.abs(P.values - 0.4)) == 0.0
        assert equation_residual(P, stride=50) < 1e-12


class TestJumpProfiles:
    def test_1b_profile_shape(self, report_1b):
        P = build_profile(report_1b, 0.5, X_min=X_MIN, X_max=X_MAX, dz=DZ)
        assert P(0.0) == pytest.approx(0.5, abs=1e-12)
        assert np.all(np.diff(P.values) >= -1e-12)          # monotone rise
        assert abs(P.values[0] - report_1b.rho_minus) < 1e-3
        assert abs(P.values[-1] - report_1b.rho_plus) < 1e-6

    def test_1a_profile_constant_on_right(self, report_1a):
        P = build_profile(report_1a, X_min=X_MIN, X_max=X_MAX, dz=DZ)
        right = P.x >= 0.0
        assert np.max(np.abs(P.values[right] - report_1a.rho_plus)) < 1e-12
        assert abs(P.values[0] - report_1a.rho_minus) < 1e-3

    def test_unique_subcase_rejects_other_anchors(self, report_1a):
        with pytest.raises(AnchorError):
            build_profile(report_1a, 0.5, X_min=X_MIN, X_max=X_MAX, dz=DZ)

    def test_anchor_outside_admissible_range(self, report_1b):
        low, _ = 0.25, 0.75
        with pytest.raises(AnchorError):
            build_profile(report_1b, low - 0.01, X_min=X_MIN, X_max=X_MAX, dz=DZ)

    def test_residual_shrinks_quadratically(self, report_1b):
        coarse = build_profile(report_1b, 0.5, X_min=-4.0, X_max=4.0, dz=0.004)
        fine = build_profile(report_1b, 0.5, X_min=-4.0, X_max=4.0, dz=0.002)
        r_coarse = equation_residual(coarse, stride=10)
        r_fine = equation_residual(fine, stride=10)
        assert 2.5 < r_coarse / r_fine < 6.0

    def test_2b_profile_builds(self, report_2b):
        P = build_profile(report_2b, 0.5, X_min=X_MIN, X_max=X_MAX, dz=DZ)
        assert P(0.0) == pytest.approx(0.5, abs=1e-12)
        assert abs(P.values[0] - report_2b.rho_minus) < 1e-2


class TestNoProfileRefusal:
    @pytest.mark.parametrize("tag", ["1C", "1D", "2C", "2D"])
    def test_refused_subcases(self, tag, params_down, params_up):
        params = params_down if tag.startswith("1") else params_up
        report = classify_from_fbar(params, FBAR, tag)
        with pytest.raises(NoProfileError):
            build_profile(report, X_min=X_MIN, X_max=X_MAX, dz=DZ)


class TestUniformWave:
    def test_endpoints_and_anchor(self, params_uniform):
        W = uniform_profile_W(1.0, FBAR, params_uniform, 0.5,
                              X_min=-8.0, X_max=8.0, dz=DZ)
        assert W(0.0) == pytest.approx(0.5, abs=1e-6)
        assert abs(W.values[0] - 0.25) < 1e-3
        assert abs(W.values[-1] - 0.75) < 1e-6
        assert np.all(np.diff(W.values) >= -1e-12)

    def test_anchor_must_sit_between_roots(self, params_uniform):
        with pytest.raises(AnchorError):
            uniform_profile_W(1.0, FBAR, params_uniform, 0.8, dz=DZ)


class TestProfileGeometry:
    def test_leader_gap(self, report_1b):
        P = build_profile(report_1b, 0.5, X_min=X_MIN, X_max=X_MAX, dz=DZ)
        x = 0.3
        gap = leader(P, x) - x
        assert gap == pytest.approx(P.params.ell / P(x), rel=1e-2)

    def test_z_flat_window_clears_jump(self, report_1b):
        P = build_profile(report_1b, 0.5, X_min=X_MIN, X_max=X_MAX, dz=DZ)
        zf = z_flat(P)
        assert zf < 0.0
        assert leader(P, zf) + P.params.kernel.h == pytest.approx(0.0, abs=1e-9)

    def test_slope_bound(self, report_1b):
        # the equation slope never exceeds P^2 / ell
        P = build_profile(report_1b, 0.5, X_min=X_MIN, X_max=X_MAX, dz=DZ)
        xs = P.x[:: len(P.x) // 200]
        for x in xs:
            assert profile_rhs(P, float(x)) < P(float(x)) ** 2 / P.params.ell
