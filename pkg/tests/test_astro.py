"""Tests for two-body kinematics."""

import math

import numpy as np
import pytest

from dyson_ring.astro import (
    OrbitalElements,
    RingConfig,
    StateVector,
    earth_elements,
    edelbaum_delta_v,
    kepler_propagate,
    lambert_solve,
    plane_angle,
    propagate_state,
    solve_kepler,
    state_to_elements,
    station_state,
    synodic_period,
    wrap_angle,
)
from dyson_ring.constants import AU, DAY
from dyson_ring.exceptions import (
    InfeasibleGeometryError,
    InfiniteSynodicError,
    SingularGeometryError,
    ValidationError,
)


def _angle_gap(a: float, b: float) -> float:
    d = abs(wrap_angle(a) - wrap_angle(b))
    return min(d, 2 * math.pi - d)


@pytest.fixture
def eccentric():
    return OrbitalElements(
        a=2.5 * AU, e=0.2, i=0.3, raan=1.0, argp=2.0, M0=0.5, epoch0=0.0
    )


class TestElements:
    """OrbitalElements / RingConfig validation."""

    def test_angles_are_wrapped(self):
        el = OrbitalElements(AU, 0.1, 0.1, -0.5, 7.0, 2 * math.pi)
        assert 0.0 <= el.raan < 2 * math.pi
        assert el.raan == pytest.approx(2 * math.pi - 0.5)
        assert el.argp == pytest.approx(7.0 - 2 * math.pi)
        assert el.M0 == 0.0

    def test_hyperbolic_rejected(self):
        with pytest.raises(ValidationError):
            OrbitalElements(AU, 1.0, 0.0, 0.0, 0.0, 0.0)

    def test_negative_axis_rejected(self):
        with pytest.raises(ValidationError):
            OrbitalElements(-AU, 0.1, 0.0, 0.0, 0.0, 0.0)

    def test_ring_bounds(self):
        with pytest.raises(ValidationError):
            RingConfig(a_D=0.5 * AU)
        with pytest.raises(ValidationError):
            RingConfig(a_D=6.0 * AU)
        assert RingConfig(a_D=6.0 * AU, check_bounds=False).radius_au == 6.0

    def test_state_vector_rejects_origin(self):
        with pytest.raises(ValidationError):
            StateVector(np.zeros(3), np.ones(3))


class TestKepler:
    """Kepler equation and element/state conversions."""

    def test_wrap_angle(self):
        assert wrap_angle(-0.1) == pytest.approx(2 * math.pi - 0.1)
        assert wrap_angle(2 * math.pi) == 0.0
        assert wrap_angle(1.0) == 1.0

    @pytest.mark.parametrize("e", [0.0, 0.3, 0.6, 0.89])
    def test_solve_kepler_satisfies_equation(self, e):
        for M in (0.1, 1.0, 3.0, 5.5):
            E = solve_kepler(M, e)
            assert E - e * math.sin(E) == pytest.approx(M, abs=1e-11)

    def test_circular_orbit_keeps_radius(self):
        el = OrbitalElements(1.3 * AU, 0.0, 0.2, 0.4, 0.0, 0.0)
        for t in (0.0, 50 * DAY, 400 * DAY):
            assert kepler_propagate(el, t).r_mag == pytest.approx(1.3 * AU, rel=1e-12)

    def test_full_period_returns_to_start(self, eccentric):
        s0 = kepler_propagate(eccentric, 0.0)
        s1 = kepler_propagate(eccentric, eccentric.period)
        assert np.allclose(s0.r, s1.r, atol=10.0)
        assert np.allclose(s0.v, s1.v, atol=1e-6)

    def test_state_to_elements_round_trip(self, eccentric):
        sv = kepler_propagate(eccentric, 0.0)
        el = state_to_elements(sv)
        assert el.a == pytest.approx(eccentric.a, rel=1e-9)
        assert el.e == pytest.approx(eccentric.e, abs=1e-9)
        assert el.i == pytest.approx(eccentric.i, abs=1e-9)
        assert _angle_gap(el.raan, eccentric.raan) < 1e-7
        assert _angle_gap(el.argp, eccentric.argp) < 1e-7
        assert _angle_gap(el.M0, eccentric.M0) < 1e-7

    def test_energy_conserved(self, eccentric):
        e0 = kepler_propagate(eccentric, 0.0).energy()
        e1 = kepler_propagate(eccentric, 321 * DAY).energy()
        assert e1 == pytest.approx(e0, rel=1e-10)


class TestUniversalPropagation:
    """propagate_state against the closed-form Kepler solution."""

    @pytest.mark.parametrize("days", [1.0, 100.0, 900.0, -250.0])
    def test_matches_kepler(self, eccentric, days):
        s0 = kepler_propagate(eccentric, 0.0)
        expected = kepler_propagate(eccentric, days * DAY)
        got = propagate_state(s0, days * DAY)
        assert got.t == pytest.approx(days * DAY)
        assert np.allclose(got.r, expected.r, atol=1e3)
        assert np.allclose(got.v, expected.v, atol=1e-3)

    def test_zero_step_is_identity(self, eccentric):
        s0 = kepler_propagate(eccentric, 0.0)
        s1 = propagate_state(s0, 0.0)
        assert np.array_equal(s0.r, s1.r)
        assert s1.r is not s0.r


class TestLambert:
    """Zero-revolution Lambert arcs."""

    def test_recovers_known_arc(self, eccentric):
        tof = 0.3 * eccentric.period
        s0 = kepler_propagate(eccentric, 0.0)
        s1 = kepler_propagate(eccentric, tof)
        v1, v2 = lambert_solve(s0.r, s1.r, tof)
        assert np.allclose(v1, s0.v, atol=1e-2)
        assert np.allclose(v2, s1.v, atol=1e-2)

    def test_non_positive_time_rejected(self):
        with pytest.raises(InfeasibleGeometryError):
            lambert_solve(np.array([AU, 0, 0]), np.array([0, AU, 0]), 0.0)

    def test_collinear_geometry_rejected(self):
        with pytest.raises(SingularGeometryError):
            lambert_solve(np.array([AU, 0, 0]), np.array([-1.5 * AU, 0, 0]), 200 * DAY)


class TestRing:
    """Station states, synodic periods and helpers."""

    def test_stations_on_circle(self):
        ring = RingConfig(a_D=1.3 * AU, i_D=0.2, raan_D=1.0)
        for j in (1, 6, 12):
            s = station_state(ring, j, 123 * DAY)
            assert s.r_mag == pytest.approx(1.3 * AU, rel=1e-12)
            assert float(s.r @ s.v) == pytest.approx(0.0, abs=1e-3 * s.r_mag)

    def test_stations_thirty_degrees_apart(self):
        ring = RingConfig(a_D=AU)
        r1 = station_state(ring, 1, 0.0).r
        r4 = station_state(ring, 4, 0.0).r
        r2 = station_state(ring, 2, 0.0).r
        assert float(r1 @ r4) == pytest.approx(0.0, abs=1e-3 * AU)
        cos12 = float(r1 @ r2) / (AU * AU)
        assert cos12 == pytest.approx(math.cos(math.pi / 6), abs=1e-12)

    def test_station_index_checked(self):
        with pytest.raises(ValidationError):
            station_state(RingConfig(a_D=AU), 13, 0.0)

    def test_synodic_period(self):
        ring = RingConfig(a_D=1.29 * AU)
        ast = OrbitalElements(2.32 * AU, 0.031, 0.02, 0.0, 0.0, 0.0)
        expected = 2 * math.pi / abs(ast.mean_motion - ring.mean_motion)
        assert synodic_period(ast, ring) == pytest.approx(expected)

    def test_equal_mean_motion_raises(self):
        ring = RingConfig(a_D=1.5 * AU)
        ast = OrbitalElements(1.5 * AU, 0.1, 0.0, 0.0, 0.0, 0.0)
        with pytest.raises(InfiniteSynodicError):
            synodic_period(ast, ring)

    def test_earth_period_is_one_year(self):
        assert earth_elements().period / DAY == pytest.approx(365.2569, abs=0.01)

    def test_plane_angle(self):
        assert plane_angle(0.3, 1.0, 0.3, 1.0) == pytest.approx(0.0, abs=1e-7)
        assert plane_angle(0.1, 2.0, 0.0, 0.0) == pytest.approx(0.1)

    def test_edelbaum_delta_v(self):
        assert edelbaum_delta_v(AU, AU, 0.0) == 0.0
        dv = edelbaum_delta_v(AU, 2 * AU, 0.0)
        v1 = math.sqrt(1.32712440018e20 / AU)
        assert dv == pytest.approx(v1 * (1 - 1 / math.sqrt(2)), rel=1e-12)
