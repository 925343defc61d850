"""Two-body kinematics: element conversions, propagation, Lambert arcs, ring stations.

All quantities are SI (m, s, rad) with the Sun as the only attractor.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy.optimize import brentq

from .constants import AU, MU_SUN, STATIONS
from .exceptions import (
    DegenerateOrbitError,
    InfeasibleGeometryError,
    InfiniteSynodicError,
    SingularGeometryError,
    ValidationError,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
KEPLER_TOL = 1e-12
KEPLER_MAX_ITER = 100


def wrap_angle(angle: float) -> float:
    """Normalize an angle to [0, 2*pi)."""
    wrapped = math.fmod(angle, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    return 0.0 if wrapped >= TWO_PI else wrapped


def mean_motion(a: float, mu: float = MU_SUN) -> float:
    return math.sqrt(mu / a**3)


def circular_speed(a: float, mu: float = MU_SUN) -> float:
    return math.sqrt(mu / a)


@dataclass(frozen=True)
class OrbitalElements:
    """Keplerian elements of a body at reference epoch ``epoch0`` (s)."""

    a: float
    e: float
    i: float
    raan: float
    argp: float
    M0: float
    epoch0: float = 0.0

    def __post_init__(self):
        if not self.a > 0.0:
            raise ValidationError("Semi-major axis must be positive", a=self.a)
        if not 0.0 <= self.e < 1.0:
            raise ValidationError("Eccentricity must lie in [0, 1)", e=self.e)
        if not 0.0 <= self.i <= math.pi:
            raise ValidationError("Inclination must lie in [0, pi]", i=self.i)
        for name in ("raan", "argp", "M0"):
            object.__setattr__(self, name, wrap_angle(getattr(self, name)))

    @property
    def mean_motion(self) -> float:
        return mean_motion(self.a)

    @property
    def period(self) -> float:
        return TWO_PI / self.mean_motion


@dataclass(frozen=True, eq=False)
class StateVector:
    """Heliocentric inertial position (m) and velocity (m/s) at epoch ``t`` (s)."""

    r: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float).reshape(3))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(3))
        if not np.linalg.norm(self.r) > 0.0:
            raise ValidationError("Position vector must be non-zero")

    @property
    def r_mag(self) -> float:
        return float(np.linalg.norm(self.r))

    @property
    def v_mag(self) -> float:
        return float(np.linalg.norm(self.v))

    def energy(self, mu: float = MU_SUN) -> float:
        return 0.5 * self.v_mag**2 - mu / self.r_mag

    def angular_momentum(self) -> np.ndarray:
        return np.cross(self.r, self.v)


@dataclass(frozen=True)
class RingConfig:
    """Circular Dyson ring hosting twelve stations 30 degrees apart."""

    a_D: float
    i_D: float = 0.0
    raan_D: float = 0.0
    phi1: float = 0.0
    check_bounds: bool = field(default=True, compare=False, repr=False)

    A_MIN = 0.65 * AU
    A_MAX = 5.0 * AU

    def __post_init__(self):
        if self.check_bounds and not (
            self.A_MIN * (1 - 1e-12) <= self.a_D <= self.A_MAX * (1 + 1e-12)
        ):
            raise ValidationError(
                "Ring radius must lie in [0.65, 5] AU", a_D_au=self.a_D / AU
            )
        if not 0.0 <= self.i_D <= math.pi:
            raise ValidationError("Ring inclination must lie in [0, pi]", i_D=self.i_D)

    @property
    def radius_au(self) -> float:
        return self.a_D / AU

    @property
    def mean_motion(self) -> float:
        return mean_motion(self.a_D)

    @property
    def period(self) -> float:
        return TWO_PI / self.mean_motion

    def station_phase(self, j: int) -> float:
        return self.phi1 + (j - 1) * math.pi / 6.0


# ----------------------------------------------------------------------------
# Kepler problem
# ----------------------------------------------------------------------------


def solve_kepler(M: float, e: float) -> float:
    """Eccentric anomaly for mean anomaly ``M`` by Newton iteration."""
    M = wrap_angle(M)
    E = M + e * math.sin(M)
    for _ in range(KEPLER_MAX_ITER):
        f = E - e * math.sin(E) - M
        if abs(f) < KEPLER_TOL:
            return E
        E -= f / (1.0 - e * math.cos(E))
    if abs(E - e * math.sin(E) - M) < KEPLER_TOL:
        return E
    raise DegenerateOrbitError(
        "Kepler iteration did not converge", e=e, mean_anomaly=M
    )


def _perifocal_to_inertial(raan: float, i: float, argp: float) -> np.ndarray:
    cO, sO = math.cos(raan), math.sin(raan)
    ci, si = math.cos(i), math.sin(i)
    cw, sw = math.cos(argp), math.sin(argp)
    return np.array(
        [
            [cO * cw - sO * sw * ci, -cO * sw - sO * cw * ci, sO * si],
            [sO * cw + cO * sw * ci, -sO * sw + cO * cw * ci, -cO * si],
            [sw * si, cw * si, ci],
        ]
    )


def elements_to_state(el: OrbitalElements, M: float, t: float) -> StateVector:
    """Cartesian state for elements ``el`` at mean anomaly ``M``."""
    E = solve_kepler(M, el.e)
    cE, sE = math.cos(E), math.sin(E)
    b = el.a * math.sqrt(1.0 - el.e**2)
    r_pqw = np.array([el.a * (cE - el.e), b * sE, 0.0])
    E_dot = el.mean_motion / (1.0 - el.e * cE)
    v_pqw = np.array([-el.a * sE * E_dot, b * cE * E_dot, 0.0])
    R = _perifocal_to_inertial(el.raan, el.i, el.argp)
    return StateVector(R @ r_pqw, R @ v_pqw, t)


def kepler_propagate(el: OrbitalElements, t: float) -> StateVector:
    """Exact two-body state of ``el`` at epoch ``t``."""
    M = el.M0 + el.mean_motion * (t - el.epoch0)
    return elements_to_state(el, M, t)


def state_to_elements(sv: StateVector, mu: float = MU_SUN) -> OrbitalElements:
    """Keplerian elements of a bound state, referenced at ``sv.t``.

    Undefined angles are set to zero: RAAN for equatorial orbits and the
    argument of periapsis for circular ones, with the anomaly measured from
    the node (or the x-axis) instead.
    """
    r, v = sv.r, sv.v
    r_mag = np.linalg.norm(r)
    h = np.cross(r, v)
    h_mag = np.linalg.norm(h)
    n = np.cross([0.0, 0.0, 1.0], h)
    n_mag = np.linalg.norm(n)
    e_vec = np.cross(v, h) / mu - r / r_mag
    e = float(np.linalg.norm(e_vec))
    energy = 0.5 * float(v @ v) - mu / r_mag
    if energy >= 0.0:
        raise DegenerateOrbitError("State is not on a bound orbit", e=e)
    a = -mu / (2.0 * energy)
    inc = math.acos(max(-1.0, min(1.0, h[2] / h_mag)))
    eps = 1e-11

    raan = math.atan2(n[1], n[0]) if n_mag > eps * h_mag else 0.0
    if e > eps:
        if n_mag > eps * h_mag:
            argp = math.acos(max(-1.0, min(1.0, float(n @ e_vec) / (n_mag * e))))
            if e_vec[2] < 0.0:
                argp = TWO_PI - argp
        else:
            argp = math.atan2(e_vec[1], e_vec[0])
            if h[2] < 0.0:
                argp = TWO_PI - argp
        nu = math.acos(max(-1.0, min(1.0, float(e_vec @ r) / (e * r_mag))))
        if float(r @ v) < 0.0:
            nu = TWO_PI - nu
    else:
        argp = 0.0
        if n_mag > eps * h_mag:
            nu = math.acos(max(-1.0, min(1.0, float(n @ r) / (n_mag * r_mag))))
            if r[2] < 0.0:
                nu = TWO_PI - nu
        else:
            nu = math.atan2(r[1], r[0])

    E = 2.0 * math.atan2(
        math.sqrt(1.0 - e) * math.sin(nu / 2.0), math.sqrt(1.0 + e) * math.cos(nu / 2.0)
    )
    M = E - e * math.sin(E)
    return OrbitalElements(a, e, inc, raan, argp, M, sv.t)


# ----------------------------------------------------------------------------
# Universal variables
# ----------------------------------------------------------------------------


def stumpff_c(z: float) -> float:
    if z > 1e-3:
        return (1.0 - math.cos(math.sqrt(z))) / z
    if z < -1e-3:
        return (math.cosh(math.sqrt(-z)) - 1.0) / (-z)
    return 0.5 - z / 24.0 + z * z / 720.0 - z**3 / 40320.0


def stumpff_s(z: float) -> float:
    if z > 1e-3:
        s = math.sqrt(z)
        return (s - math.sin(s)) / (z * s)
    if z < -1e-3:
        s = math.sqrt(-z)
        return (math.sinh(s) - s) / ((-z) * s)
    return 1.0 / 6.0 - z / 120.0 + z * z / 5040.0 - z**3 / 362880.0


def propagate_state(sv: StateVector, dt: float, mu: float = MU_SUN) -> StateVector:
    """Propagate a Cartesian state by ``dt`` seconds with universal variables."""
    if dt == 0.0:
        return StateVector(sv.r.copy(), sv.v.copy(), sv.t)
    r0, v0 = sv.r, sv.v
    r0_mag = float(np.linalg.norm(r0))
    vr0 = float(r0 @ v0) / r0_mag
    alpha = 2.0 / r0_mag - float(v0 @ v0) / mu
    sqrt_mu = math.sqrt(mu)

    dt_eff = dt
    if alpha > 1e-30:
        period = TWO_PI / (sqrt_mu * alpha**1.5)
        dt_eff = math.fmod(dt, period)
    chi = sqrt_mu * abs(alpha) * dt_eff
    if alpha <= 1e-30:
        chi = sqrt_mu * dt_eff / r0_mag

    for _ in range(KEPLER_MAX_ITER):
        z = alpha * chi * chi
        C, S = stumpff_c(z), stumpff_s(z)
        F = (
            r0_mag * vr0 / sqrt_mu * chi * chi * C
            + (1.0 - alpha * r0_mag) * chi**3 * S
            + r0_mag * chi
            - sqrt_mu * dt_eff
        )
        dF = (
            r0_mag * vr0 / sqrt_mu * chi * (1.0 - z * S)
            + (1.0 - alpha * r0_mag) * chi * chi * C
            + r0_mag
        )
        step = F / dF
        chi -= step
        if abs(step) <= 1e-13 * max(1.0, abs(chi)):
            break
    else:
        raise DegenerateOrbitError("Universal anomaly iteration did not converge")

    z = alpha * chi * chi
    C, S = stumpff_c(z), stumpff_s(z)
    f = 1.0 - chi * chi / r0_mag * C
    g = dt_eff - chi**3 * S / sqrt_mu
    r = f * r0 + g * v0
    r_mag = float(np.linalg.norm(r))
    fdot = sqrt_mu / (r_mag * r0_mag) * (alpha * chi**3 * S - chi)
    gdot = 1.0 - chi * chi / r_mag * C
    v = fdot * r0 + gdot * v0
    return StateVector(r, v, sv.t + dt)


# ----------------------------------------------------------------------------
# Lambert
# ----------------------------------------------------------------------------


def lambert_solve(
    r1: np.ndarray,
    r2: np.ndarray,
    tof: float,
    prograde: bool = True,
    mu: float = MU_SUN,
) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-revolution Lambert arc from ``r1`` to ``r2`` in ``tof`` seconds.

    The time-of-flight equation in the universal variable ``z`` is monotone on
    the admissible branch, so it is bracketed and solved with Brent's method.
    Points where y(z) < 0 are mapped to a zero time of flight, which keeps the
    bracket valid on long-way transfers.
    """
    if not tof > 0.0:
        raise InfeasibleGeometryError("Time of flight must be positive", tof=tof)
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    r1_mag = float(np.linalg.norm(r1))
    r2_mag = float(np.linalg.norm(r2))
    cos_dnu = max(-1.0, min(1.0, float(r1 @ r2) / (r1_mag * r2_mag)))
    dnu = math.acos(cos_dnu)
    cross_z = float(np.cross(r1, r2)[2])
    if (prograde and cross_z < 0.0) or (not prograde and cross_z >= 0.0):
        dnu = TWO_PI - dnu
    if abs(math.sin(dnu)) < 1e-8:
        raise SingularGeometryError("Collinear Lambert geometry", transfer_angle=dnu)

    A = math.sin(dnu) * math.sqrt(r1_mag * r2_mag / (1.0 - cos_dnu))
    sqrt_mu = math.sqrt(mu)

    def y_of(z: float) -> float:
        return r1_mag + r2_mag + A * (z * stumpff_s(z) - 1.0) / math.sqrt(stumpff_c(z))

    def tof_error(z: float) -> float:
        y = y_of(z)
        if y <= 0.0:
            return -tof
        C = stumpff_c(z)
        x = math.sqrt(y / C)
        return (x**3 * stumpff_s(z) + A * math.sqrt(y)) / sqrt_mu - tof

    z_hi = TWO_PI**2 - 1e-6
    if tof_error(z_hi) <= 0.0:
        raise InfeasibleGeometryError(
            "Time of flight beyond the zero-revolution range", tof=tof
        )
    z_lo = -TWO_PI**2
    while tof_error(z_lo) > 0.0:
        z_lo = 2.0 * z_lo
        if z_lo < -4e5:
            raise InfeasibleGeometryError("Could not bracket Lambert solution", tof=tof)
    try:
        z = brentq(tof_error, z_lo, z_hi, xtol=1e-14, rtol=1e-13, maxiter=300)
    except (RuntimeError, ValueError) as e:
        raise InfeasibleGeometryError(f"Lambert iteration failed: {e}", tof=tof)

    y = y_of(z)
    if y <= 0.0:
        raise InfeasibleGeometryError("Lambert solution on invalid branch", tof=tof)
    f = 1.0 - y / r1_mag
    g = A * math.sqrt(y / mu)
    gdot = 1.0 - y / r2_mag
    v1 = (r2 - f * r1) / g
    v2 = (gdot * r2 - r1) / g
    return v1, v2


# ----------------------------------------------------------------------------
# Ring and Earth
# ----------------------------------------------------------------------------


def station_state(ring: RingConfig, j: int, t: float) -> StateVector:
    """Circular-orbit state of station ``j`` (1..12) at epoch ``t``."""
    if not 1 <= j <= STATIONS:
        raise ValidationError("Station index must lie in 1..12", j=j)
    u = ring.station_phase(j) + ring.mean_motion * t
    cu, su = math.cos(u), math.sin(u)
    cO, sO = math.cos(ring.raan_D), math.sin(ring.raan_D)
    ci, si = math.cos(ring.i_D), math.sin(ring.i_D)
    r = ring.a_D * np.array([cO * cu - sO * su * ci, sO * cu + cO * su * ci, su * si])
    v = circular_speed(ring.a_D) * np.array(
        [-cO * su - sO * cu * ci, -sO * su + cO * cu * ci, cu * si]
    )
    return StateVector(r, v, t)


def synodic_period(ast: OrbitalElements, ring: RingConfig) -> float:
    """2*pi / |n_ast - n_D|."""
    dn = abs(ast.mean_motion - ring.mean_motion)
    if dn <= 1e-12 * ring.mean_motion:
        raise InfiniteSynodicError(
            f"Asteroid and ring share mean motion (a={ast.a / AU:.6f} AU)"
        )
    return TWO_PI / dn


def earth_elements() -> OrbitalElements:
    """Circular 1 AU, zero-inclination Earth with zero phase at mission start."""
    return OrbitalElements(a=AU, e=0.0, i=0.0, raan=0.0, argp=0.0, M0=0.0, epoch0=0.0)


def plane_angle(i1: float, raan1: float, i2: float, raan2: float) -> float:
    """Angle between two orbital planes."""
    c = math.cos(i1) * math.cos(i2) + math.sin(i1) * math.sin(i2) * math.cos(
        raan1 - raan2
    )
    return math.acos(max(-1.0, min(1.0, c)))


def edelbaum_delta_v(a1: float, a2: float, delta_i: float, mu: float = MU_SUN) -> float:
    """Edelbaum delta-v (m/s) between circular orbits of radii ``a1`` and ``a2``."""
    v1, v2 = circular_speed(a1, mu), circular_speed(a2, mu)
    arg = v1 * v1 + v2 * v2 - 2.0 * v1 * v2 * math.cos(0.5 * math.pi * delta_i)
    return math.sqrt(max(0.0, arg))
