import json
import math

import numpy as np
import pytest

from annulus_involutions.sections import make_section
from annulus_involutions.symmetry import SymmetryInvolution
from annulus_involutions.verify import (
    CheckResult,
    VerificationReport,
    annulus_points,
    check_commutation,
    check_energy_invariance,
    check_field_condition,
    check_involution,
    check_lower_bound,
    check_period_invariance,
    config_digest,
    fixed_set_distance,
    sample_parameters,
    sample_time_fractions,
)


def mirror(z):
    return np.array([z[0], -z[1]])


def point_reflection(z):
    return -np.asarray(z, dtype=float)


def quarter_turn(z):
    return np.array([-z[1], z[0]])


SAMPLES = [np.array(p) for p in
           [(1.0, 0.0), (0.3, 0.8), (-0.5, 1.1), (1.4, -0.6), (-0.9, -0.9)]]


class TestCheckInvolution:
    def test_identity(self):
        r = check_involution(lambda z: z.copy(), SAMPLES)
        assert r.passed and r.max_residual == 0.0

    def test_mirror(self):
        r = check_involution(mirror, SAMPLES)
        assert r.passed and r.max_residual <= 1e-15

    def test_quarter_turn_fails(self):
        # rotating twice by a quarter turn is the half turn: residual 2|z|
        r = check_involution(quarter_turn, SAMPLES)
        assert not r.passed
        worst = max(SAMPLES, key=np.linalg.norm)
        expected = 2 * np.linalg.norm(worst) / (1 + np.linalg.norm(worst))
        assert r.max_residual == pytest.approx(expected)
        assert r.worst_point == tuple(worst)

    def test_evaluation_failure_recorded(self):
        def flaky(z):
            if z[0] < 0:
                raise ValueError("boom")
            return z.copy()

        r = check_involution(flaky, SAMPLES)
        assert r.passed  # surviving samples all pass
        assert len(r.errors) == 2


class TestCheckCommutation:
    def test_point_reflection_commutes(self, linear_center, cfg):
        r = check_commutation(linear_center, point_reflection, +1, SAMPLES,
                              [0.3, 1.0, 2.5], cfg)
        assert r.passed and r.max_residual <= 1e-9

    def test_mirror_anticommutes(self, linear_center, cfg):
        r = check_commutation(linear_center, mirror, -1, SAMPLES,
                              [0.3, 1.0, 2.5], cfg)
        assert r.passed and r.max_residual <= 1e-9

    def test_mirror_does_not_commute(self, linear_center, cfg):
        # negative control from the contract: mirror with sign +1 must fail
        r = check_commutation(linear_center, mirror, +1, SAMPLES,
                              [0.3, 1.0, 2.5], cfg)
        assert not r.passed
        assert r.max_residual > 0.5
        assert r.worst_time is not None


class TestCheckFieldCondition:
    def test_mirror_reversible(self, linear_center):
        r = check_field_condition(linear_center, mirror, -1, SAMPLES)
        assert r.passed and r.max_residual <= 1e-10

    def test_point_reflection_symmetric(self, linear_center):
        r = check_field_condition(linear_center, point_reflection, +1, SAMPLES)
        assert r.passed and r.max_residual <= 1e-10

    def test_wrong_sign_fails(self, linear_center):
        r = check_field_condition(linear_center, mirror, +1, SAMPLES)
        assert not r.passed


class TestCheckPeriodInvariance:
    def test_symmetry_involution(self, pendulum, cfg):
        sec = make_section(pendulum, "s", "0", (0.3, 2.5), name="x-axis")
        sigma = SymmetryInvolution(pendulum, cfg)
        samples = annulus_points(pendulum, sec, 4, cfg, seed=3)
        r = check_period_invariance(pendulum, sigma, samples, cfg)
        assert r.passed and r.max_residual <= 1e-7

    def test_off_cycle_map_fails(self, pendulum, cfg):
        shrink = lambda z: 0.5 * np.asarray(z, dtype=float)
        r = check_period_invariance(pendulum, shrink, [np.array([2.0, 0.0])], cfg)
        assert not r.passed


class TestEnergyInvariance:
    def test_mirror_preserves(self, pendulum):
        r = check_energy_invariance(pendulum, lambda z: np.array([-z[0], z[1]]),
                                    SAMPLES)
        assert r.passed

    def test_shrink_fails(self, pendulum):
        r = check_energy_invariance(pendulum, lambda z: 0.5 * z, SAMPLES)
        assert not r.passed

    def test_requires_first_integral(self):
        from annulus_involutions.expr import PlanarField
        bare = PlanarField.from_strings("-y", "x")
        with pytest.raises(ValueError):
            check_energy_invariance(bare, mirror, SAMPLES)


class TestFixedSetDistance:
    def test_mirror_x_axis(self, linear_center):
        sec = make_section(linear_center, "s", "0", (0.2, 2.0), name="x-axis")
        samples = SAMPLES + [np.array([0.5, 0.0]), np.array([1.7, 0.0])]
        r = fixed_set_distance(mirror, samples, sec)
        assert r.passed
        assert r.extras["on_delta_move"] <= 1e-10
        assert r.extras["fixed_dist_to_delta"] <= 1e-10
        # (1, 0) from the generic samples also sits on the section
        assert r.extras["n_on_delta"] == 3

    def test_swap_diagonal(self, linear_center):
        sec = make_section(linear_center, "s", "s", (0.2, 2.0), name="diagonal")
        swap = lambda z: np.array([z[1], z[0]])
        samples = [np.array(p) for p in
                   [(0.3, 0.8), (-0.5, 1.1), (1.4, -0.6), (0.8, 0.8)]]
        r = fixed_set_distance(swap, samples, sec)
        assert r.passed
        assert r.extras["on_delta_move"] <= 1e-10

    def test_swap_fixed_ray_off_segment_fails(self, linear_center):
        # the swap also fixes the opposite ray of the diagonal line, which is
        # far from the [0.2, 2] segment: the check must flag that
        sec = make_section(linear_center, "s", "s", (0.2, 2.0), name="diagonal")
        swap = lambda z: np.array([z[1], z[0]])
        r = fixed_set_distance(swap, [np.array([-0.9, -0.9])], sec)
        assert not r.passed
        assert r.extras["fixed_dist_to_delta"] > 1.0

    def test_point_reflection_is_fixed_point_free(self, linear_center):
        # the half-turn moves every annulus point; section samples move by 2|z|
        sec = make_section(linear_center, "s", "0", (0.2, 2.0), name="x-axis")
        samples = SAMPLES + [np.array([1.0, 0.0])]
        r = fixed_set_distance(point_reflection, samples, sec)
        assert not r.passed
        assert r.extras["n_fixed"] == 0
        assert r.extras["on_delta_move"] == pytest.approx(2.0)

    def test_fixed_points_off_section_fail(self, linear_center):
        # the mirror in the y-axis fixes (0, y) points far from the section
        sec = make_section(linear_center, "s", "0", (0.2, 2.0), name="x-axis")
        ymirror = lambda z: np.array([-z[0], z[1]])
        r = fixed_set_distance(ymirror, [np.array([0.0, 1.3])], sec)
        assert not r.passed
        assert r.extras["fixed_dist_to_delta"] > 1.0


class TestLowerBound:
    def test_pass_and_fail(self):
        ok = check_lower_bound("margin", 0.5, 0.1)
        assert ok.passed and ok.max_residual == pytest.approx(-0.4)
        bad = check_lower_bound("margin", 0.05, 0.1)
        assert not bad.passed
        # the report invariant pass <=> residual <= tolerance still holds
        assert (bad.max_residual <= bad.tolerance) == bad.passed


class TestSampling:
    def test_parameters_deterministic_and_in_range(self):
        a = sample_parameters(20, 0.2, 2.0, seed=3)
        b = sample_parameters(20, 0.2, 2.0, seed=3)
        assert np.array_equal(a, b)
        assert np.all((a > 0.2) & (a < 2.0))

    def test_seeds_differ(self):
        assert not np.array_equal(sample_parameters(10, 0.0, 1.0, 0),
                                  sample_parameters(10, 0.0, 1.0, 1))

    def test_fractions_avoid_special_values(self):
        f = sample_time_fractions(50, seed=2)
        for special in (0.0, 0.5, 1.0):
            assert np.abs(f - special).min() >= 0.015

    def test_annulus_points_on_cycles(self, linear_center, cfg):
        sec = make_section(linear_center, "s", "0", (0.2, 2.0), name="x-axis")
        pts = annulus_points(linear_center, sec, 8, cfg, seed=0)
        radii = np.linalg.norm(pts, axis=1)
        assert np.all((radii > 0.2) & (radii < 2.0))
        # reproducible
        again = annulus_points(linear_center, sec, 8, cfg, seed=0)
        assert np.array_equal(pts, again)


class TestReport:
    def _demo_report(self):
        checks = [
            CheckResult("a", 1e-9, 1e-7, True, (1.0, 0.0), None),
            CheckResult("b", 2e-3, 1e-6, False, (0.3, 0.8), 1.5, ["(1, 2): nope"]),
        ]
        return VerificationReport(checks=checks, provenance={"field": "demo",
                                                             "config_digest": "abc"})

    def test_counts_and_lookup(self):
        rep = self._demo_report()
        assert rep.counts() == (1, 2)
        assert not rep.all_pass
        assert rep["a"].passed
        with pytest.raises(KeyError):
            rep["missing"]

    def test_json_schema(self):
        rep = self._demo_report()
        data = json.loads(rep.to_json())
        assert set(data) == {"provenance", "all_pass", "checks"}
        chk = data["checks"][0]
        assert set(chk) == {"check_name", "max_residual", "tolerance", "pass",
                            "worst_point"}
        assert chk["worst_point"] == {"point": [1.0, 0.0], "time": None}
        failing = data["checks"][1]
        assert failing["pass"] is False
        assert failing["errors"] == ["(1, 2): nope"]

    def test_pass_iff_residual_within_tolerance(self):
        rep = self._demo_report()
        for c in rep.checks:
            assert c.passed == (c.max_residual <= c.tolerance)

    def test_csv_schema(self):
        text = self._demo_report().to_csv()
        lines = text.strip().split("\n")
        assert lines[0] == "check,residual,tolerance,pass"
        assert lines[1].startswith("a,1e-09,1e-07,true")
        assert lines[2].endswith("false")

    def test_completeness_despite_errors(self, linear_center, cfg):
        def broken(z):
            raise RuntimeError("always fails")

        checks = [
            check_involution(broken, SAMPLES),
            check_commutation(linear_center, broken, +1, SAMPLES, [1.0], cfg),
            check_field_condition(linear_center, broken, +1, SAMPLES),
        ]
        rep = VerificationReport(checks=checks, provenance={})
        assert len(rep.checks) == 3
        for c in rep.checks:
            assert not c.passed
            assert math.isinf(c.max_residual)
            assert len(c.errors) == len(SAMPLES)

    def test_determinism(self, linear_center, cfg):
        sec = make_section(linear_center, "s", "0", (0.2, 2.0), name="x-axis")
        samples = annulus_points(linear_center, sec, 5, cfg, seed=1)
        a = check_commutation(linear_center, mirror, -1, samples, [0.7, 2.1], cfg)
        b = check_commutation(linear_center, mirror, -1, samples, [0.7, 2.1], cfg)
        assert a.max_residual == b.max_residual
        assert a.worst_point == b.worst_point


class TestDigest:
    def test_stable_and_order_independent(self):
        a = config_digest({"x": 1, "y": 2})
        b = config_digest({"y": 2, "x": 1})
        assert a == b and len(a) == 12
        assert config_digest({"x": 1, "y": 3}) != a
