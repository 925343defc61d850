"""Time-optimal constant-acceleration transfers by costate shooting.

The augmented state (r, v, lambda_r, lambda_v) is integrated in canonical units:
lengths in AU, mu = 1, and time scaled so a 1 AU circular orbit has period 2*pi.
Costates are stored in the same units. Epochs crossing the public API are in
seconds; the conversion happens at the edge of each solver.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize, root

from .astro import (
    RingConfig,
    StateVector,
    edelbaum_delta_v,
    kepler_propagate,
    plane_angle,
    station_state,
)
from .constants import ALPHA, AU, CONSTANTS, DAY, GAMMA, MISSION_END
from .exceptions import (
    DysonRingError,
    PreconditionError,
    PropagationError,
    SingularControlError,
)
from .population import Asteroid

logger = logging.getLogger(__name__)

TU = CONSTANTS.time_unit
VU = CONSTANTS.velocity_unit
GAMMA_ND = GAMMA * TU**2 / AU
AU_PER_YEAR = CONSTANTS.au_per_year

# Residual returned when a trial point cannot be propagated.
FAILED_RESIDUAL = 1e3
POSITION_TOL_M = 10e3
VELOCITY_TOL_MPS = 0.01


@dataclass(frozen=True, eq=False)
class Costates:
    """Position and velocity costates (canonical units)."""

    lr: np.ndarray
    lv: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lr", np.asarray(self.lr, dtype=float).reshape(3))
        object.__setattr__(self, "lv", np.asarray(self.lv, dtype=float).reshape(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.lr, self.lv])

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "Costates":
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:6])

    def scaled(self, k: float) -> "Costates":
        return Costates(k * self.lr, k * self.lv)


@dataclass(frozen=True, eq=False)
class AugmentedState:
    """State plus costates in canonical units."""

    r: np.ndarray
    v: np.ndarray
    lr: np.ndarray
    lv: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.r, self.v, self.lr, self.lv])

    @classmethod
    def from_array(cls, y: Sequence[float]) -> "AugmentedState":
        y = np.asarray(y, dtype=float)
        return cls(y[0:3].copy(), y[3:6].copy(), y[6:9].copy(), y[9:12].copy())

    @classmethod
    def from_state(cls, sv: StateVector, c: Costates) -> "AugmentedState":
        return cls(sv.r / AU, sv.v / VU, c.lr.copy(), c.lv.copy())

    @property
    def costates(self) -> Costates:
        return Costates(self.lr, self.lv)

    def to_state(self, t: float) -> StateVector:
        return StateVector(self.r * AU, self.v * VU, t)


@dataclass
class TransferSolution:
    """Outcome of one time-optimal transfer solve.

    ``tf`` is always the arrival epoch t0 + T. Phase-free solutions also record
    ``target_epoch``, the epoch at which the ring reference point was evaluated.
    """

    ast_id: int
    station_j: int
    t0: float
    tf: float
    costates0: Costates
    m_arr: float
    converged: bool
    residual_norm: float
    degenerate: bool = False
    target_epoch: Optional[float] = None
    starts_tried: int = 0

    @property
    def T(self) -> float:
        return self.tf - self.t0

    @property
    def phase_free(self) -> bool:
        return self.target_epoch is not None

    def to_record(self) -> Dict:
        return {
            "ast_id": self.ast_id,
            "station_j": self.station_j,
            "t0": self.t0,
            "tf": self.tf,
            "costates0": [float(x) for x in self.costates0.as_array()],
            "m_arr": self.m_arr,
            "converged": self.converged,
            "residual_norm": self.residual_norm,
            "degenerate": self.degenerate,
            "target_epoch": self.target_epoch,
        }

    @classmethod
    def from_record(cls, rec: Dict) -> "TransferSolution":
        return cls(
            ast_id=int(rec["ast_id"]),
            station_j=int(rec["station_j"]),
            t0=float(rec["t0"]),
            tf=float(rec["tf"]),
            costates0=Costates.from_array(rec["costates0"]),
            m_arr=float(rec["m_arr"]),
            converged=bool(rec["converged"]),
            residual_norm=float(rec["residual_norm"]),
            degenerate=bool(rec.get("degenerate", False)),
            target_epoch=(
                None if rec.get("target_epoch") is None else float(rec["target_epoch"])
            ),
        )


@dataclass
class OcpOptions:
    """Solver settings shared by the rendezvous and phase-free problems."""

    multi_starts: int = 10
    costate_box: float = 10.0
    tol: float = 1e-12
    search_tol: float = 1e-10
    fd_step: float = 1e-7
    max_iter: int = 100
    residual_tol: float = 1e-6
    keep_best: bool = False
    polish: bool = True
    seed: int = 0
    max_flight_days: float = 3652.5
    min_flight_days: float = 1.0


# ----------------------------------------------------------------------------
# Pontryagin machinery
# ----------------------------------------------------------------------------


def _unit_thrust(lv: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(lv))
    if norm == 0.0 or not math.isfinite(norm):
        raise SingularControlError()
    return -lv / norm


def control_direction(c: Costates) -> np.ndarray:
    """Optimal thrust direction -lambda_v/|lambda_v|."""
    return _unit_thrust(c.lv)


def hamiltonian(s: AugmentedState, mu: float = 1.0, gamma: float = GAMMA_ND) -> float:
    """H = lambda_r . v + lambda_v . (-mu r/r^3) - gamma |lambda_v| + 1."""
    lv_norm = float(np.linalg.norm(s.lv))
    if lv_norm == 0.0:
        raise SingularControlError()
    r3 = float(np.linalg.norm(s.r)) ** 3
    return (
        float(s.lr @ s.v)
        - mu * float(s.lv @ s.r) / r3
        - gamma * lv_norm
        + 1.0
    )


def _rhs(t: float, y: np.ndarray, mu: float, gamma: float) -> np.ndarray:
    r, v, lr, lv = y[0:3], y[3:6], y[6:9], y[9:12]
    lv_norm = math.sqrt(lv[0] * lv[0] + lv[1] * lv[1] + lv[2] * lv[2])
    if lv_norm < 1e-300:
        raise SingularControlError()
    r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2]
    r_norm = math.sqrt(r2)
    r3 = r2 * r_norm
    out = np.empty(12)
    out[0:3] = v
    out[3:6] = -mu * r / r3 - gamma * lv / lv_norm
    out[6:9] = mu * (lv / r3 - 3.0 * float(r @ lv) * r / (r3 * r2))
    out[9:12] = -lr
    return out


def augmented_rhs(
    s: AugmentedState, mu: float = 1.0, gamma: float = GAMMA_ND
) -> AugmentedState:
    """Time derivative of the augmented state."""
    if not np.linalg.norm(s.r) > 0.0:
        raise PreconditionError("Position must be non-zero")
    return AugmentedState.from_array(_rhs(0.0, s.as_array(), mu, gamma))


def propagate_augmented(
    s0: AugmentedState,
    T: float,
    tol: float = 1e-12,
    mu: float = 1.0,
    gamma: float = GAMMA_ND,
    t_eval: Optional[np.ndarray] = None,
):
    """Integrate the augmented dynamics for ``T`` canonical time units.

    Returns the final AugmentedState, or ``(final, samples)`` when ``t_eval``
    is given, with ``samples`` a (12, len(t_eval)) array.
    """
    if T < 0.0:
        raise PreconditionError("Propagation time must be non-negative", T=T)
    if T == 0.0:
        final = AugmentedState.from_array(s0.as_array())
        if t_eval is not None:
            return final, np.repeat(s0.as_array()[:, None], len(t_eval), axis=1)
        return final
    try:
        sol = solve_ivp(
            _rhs,
            (0.0, T),
            s0.as_array(),
            method="DOP853",
            rtol=tol,
            atol=tol,
            args=(mu, gamma),
            t_eval=t_eval,
        )
    except SingularControlError:
        raise PropagationError("Velocity costate vanished during integration")
    except (ValueError, ArithmeticError) as e:
        raise PropagationError(f"Integration failed: {e}")
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        raise PropagationError(
            f"Integration failed: {sol.message}",
            t_reached=float(sol.t[-1]) if sol.t.size else 0.0,
        )
    if t_eval is None:
        return AugmentedState.from_array(sol.y[:, -1])
    if sol.t[-1] != T:
        return propagate_augmented(s0, T, tol, mu, gamma), sol.y
    return AugmentedState.from_array(sol.y[:, -1]), sol.y


def costate_rescale(s: AugmentedState) -> Optional[float]:
    """Positive scale k with H(k * costates) = 0, or None when none exists."""
    denom = 1.0 - hamiltonian(s)
    if denom <= 0.0 or not math.isfinite(denom):
        return None
    return 1.0 / denom


def sample_hamiltonian(
    ast: Asteroid, sol: TransferSolution, points: int = 100, tol: float = 1e-12
) -> np.ndarray:
    """Hamiltonian at ``points`` epochs spread over the arc of ``sol``."""
    s0 = AugmentedState.from_state(kepler_propagate(ast.el, sol.t0), sol.costates0)
    T = sol.T / TU
    grid = np.linspace(0.0, T, points)
    _, ys = propagate_augmented(s0, T, tol, t_eval=grid)
    return np.array([hamiltonian(AugmentedState.from_array(y)) for y in ys.T])


def arrival_mass(m0: float, T: float) -> float:
    """m0 * (1 - alpha * T), clamped at zero (T in seconds)."""
    if m0 <= 0.0 or T < 0.0:
        raise PreconditionError("Arrival mass needs m0 > 0 and T >= 0", m0=m0, T=T)
    return max(0.0, m0 * (1.0 - ALPHA * T))


# ----------------------------------------------------------------------------
# Shooting
# ----------------------------------------------------------------------------


def _terminal_residual(
    final: AugmentedState, target: StateVector, h0: float
) -> np.ndarray:
    dr = final.r - target.r / AU
    dv = (final.v * VU - target.v) / AU_PER_YEAR
    return np.concatenate([dr, dv, [h0]])


def _shoot(
    ast: Asteroid,
    t0: float,
    costates0: Costates,
    T: float,
    target: StateVector,
    tol: float,
) -> np.ndarray:
    s0 = AugmentedState.from_state(kepler_propagate(ast.el, t0), costates0)
    h0 = hamiltonian(s0)
    final = propagate_augmented(s0, T / TU, tol)
    return _terminal_residual(final, target, h0)


def shooting_residual(
    t0: float,
    costates0: Costates,
    tf: float,
    ast: Asteroid,
    ring: RingConfig,
    j: int,
    tol: float = 1e-12,
) -> np.ndarray:
    """[r(tf) - r_st(tf) (AU), v(tf) - v_st(tf) (AU/year), H(t0)]."""
    if not tf > t0:
        raise PreconditionError("Arrival must follow departure", t0=t0, tf=tf)
    return _shoot(ast, t0, costates0, tf - t0, station_state(ring, j, tf), tol)


def endpoint_errors(
    ast: Asteroid, sol: TransferSolution, ring: RingConfig, tol: float = 1e-12
) -> Tuple[float, float]:
    """Position (m) and velocity (m/s) mismatch after re-propagating ``sol``."""
    target_epoch = sol.target_epoch if sol.phase_free else sol.tf
    j = max(1, sol.station_j)
    res = _shoot(
        ast, sol.t0, sol.costates0, sol.T, station_state(ring, j, target_epoch), tol
    )
    return (
        float(np.linalg.norm(res[0:3])) * AU,
        float(np.linalg.norm(res[3:6])) * AU_PER_YEAR,
    )


def _within_endpoint_budget(res: np.ndarray) -> bool:
    return (
        float(np.linalg.norm(res[0:3])) * AU <= POSITION_TOL_M
        and float(np.linalg.norm(res[3:6])) * AU_PER_YEAR <= VELOCITY_TOL_MPS
    )


class _CachedResidual:
    """Residual and central-difference Jacobian over a flat decision vector."""

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], step: float):
        self.func = func
        self.step = step
        self._x: Optional[np.ndarray] = None
        self._f: Optional[np.ndarray] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self._x is not None and np.array_equal(x, self._x):
            return self._f  # type: ignore[return-value]
        try:
            f = self.func(x)
            if not np.all(np.isfinite(f)):
                raise PropagationError("Non-finite residual")
        except DysonRingError:
            f = np.full(7, FAILED_RESIDUAL)
        self._x, self._f = np.array(x, copy=True), f
        return f

    def jac(self, x: np.ndarray) -> np.ndarray:
        J = np.empty((7, x.size))
        for k in range(x.size):
            h = self.step * max(1.0, abs(x[k]))
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            try:
                fp, fm = self.func(xp), self.func(xm)
            except DysonRingError:
                fp = fm = np.zeros(7)
            J[:, k] = (fp - fm) / (2.0 * h)
        return J


def _tangential_guess(sv: StateVector, raise_orbit: bool) -> Costates:
    v_hat = sv.v / np.linalg.norm(sv.v)
    sign = -1.0 if raise_orbit else 1.0
    return Costates(np.zeros(3), sign * v_hat / GAMMA_ND)


def _normalized(sv: StateVector, c: Costates) -> Costates:
    k = costate_rescale(AugmentedState.from_state(sv, c))
    return c.scaled(k) if k is not None else c


def _start_guesses(
    sv0: StateVector,
    raise_orbit: bool,
    guess: Optional[Costates],
    options: OcpOptions,
    rng: np.random.Generator,
) -> List[Costates]:
    starts: List[Costates] = []
    if guess is not None:
        starts.append(guess)
    starts.append(_normalized(sv0, _tangential_guess(sv0, raise_orbit)))
    while len(starts) < max(1, options.multi_starts):
        box = options.costate_box
        c = Costates.from_array(rng.uniform(-box, box, size=6))
        if np.linalg.norm(c.lv) == 0.0:
            continue
        starts.append(_normalized(sv0, c))
    return starts[: max(1, options.multi_starts)]


def _edelbaum_guess(ast: Asteroid, ring: RingConfig) -> float:
    di = plane_angle(ast.el.i, ast.el.raan, ring.i_D, ring.raan_D)
    return edelbaum_delta_v(ast.el.a, ring.a_D, di) / GAMMA


def _problem_rng(options: OcpOptions, *keys: float) -> np.random.Generator:
    entropy = [options.seed] + [int(abs(k)) % (2**32) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _degenerate(ast: Asteroid, ring: RingConfig) -> bool:
    return ast.el.e < 1e-6 and _edelbaum_guess(ast, ring) < DAY


def solve_rendezvous(
    ast: Asteroid,
    ring: RingConfig,
    j: int,
    t_act: float,
    window: Tuple[float, float],
    guess: Optional[Costates] = None,
    options: Optional[OcpOptions] = None,
    t_guess: Optional[float] = None,
) -> TransferSolution:
    """Minimum-time transfer from ``ast`` (leaving after ``t_act``) to station ``j``.

    Decision vector: [t0, tf, lambda_r, lambda_v] with times in canonical units.
    Every start runs SLSQP on the seven shooting equalities, followed by an
    optional Newton polish with tf fixed. Failures never raise; the best
    attempt is returned with ``converged=False``.
    """
    options = options or OcpOptions()
    tf_lo, tf_hi = window
    if not tf_lo < tf_hi:
        raise PreconditionError("Arrival window is empty", tf_lo=tf_lo, tf_hi=tf_hi)
    if tf_hi <= t_act:
        raise PreconditionError(
            "Arrival window closes before activation", tf_hi=tf_hi, t_act=t_act
        )
    if not 0.0 <= t_act <= MISSION_END:
        raise PreconditionError("Activation epoch outside mission", t_act=t_act)

    min_T = options.min_flight_days * DAY
    T_guess = t_guess if t_guess is not None else _edelbaum_guess(ast, ring)
    tf0 = min(max(t_act + T_guess, tf_lo), tf_hi)
    t00 = max(t_act, min(tf0 - T_guess, tf0 - min_T))
    lo_t0 = t_act / TU
    hi_tf = tf_hi / TU
    bounds = [(lo_t0, hi_tf), (max(tf_lo, t_act) / TU, hi_tf)] + [(None, None)] * 6

    def residual(x: np.ndarray) -> np.ndarray:
        t0, tf = x[0] * TU, x[1] * TU
        if tf - t0 <= 0.0:
            raise PropagationError("Non-positive flight time")
        target = station_state(ring, j, tf)
        c = Costates.from_array(x[2:])
        return _shoot(ast, t0, c, tf - t0, target, options.search_tol)

    def final_residual(x: np.ndarray) -> np.ndarray:
        t0, tf = x[0] * TU, x[1] * TU
        target = station_state(ring, j, tf)
        return _shoot(ast, t0, Costates.from_array(x[2:]), tf - t0, target, options.tol)

    cons = _CachedResidual(residual, options.fd_step)
    sv0 = kepler_propagate(ast.el, t00)
    rng = _problem_rng(options, ast.id, j, tf_lo / DAY)
    starts = _start_guesses(sv0, ast.el.a < ring.a_D, guess, options, rng)

    best: Optional[TransferSolution] = None
    for k, c0 in enumerate(starts):
        x0 = np.concatenate([[t00 / TU, tf0 / TU], c0.as_array()])
        x = _run_slsqp(x0, cons, bounds, (1, 0), min_T / TU, options)
        if options.polish:
            x = _polish(x, final_residual, free=[0] + list(range(2, 8)))
        t0, tf = x[0] * TU, x[1] * TU
        try:
            res = final_residual(x)
        except DysonRingError:
            continue
        norm = float(np.linalg.norm(res))
        ok = (
            norm < options.residual_tol
            and _within_endpoint_budget(res)
            and t0 >= t_act - 1e-6
            and tf_lo - 1e-6 <= tf <= tf_hi + 1e-6
            and tf - t0 > 0.0
        )
        sol = TransferSolution(
            ast_id=ast.id,
            station_j=j,
            t0=t0,
            tf=tf,
            costates0=Costates.from_array(x[2:]),
            m_arr=arrival_mass(ast.m0, max(0.0, tf - t0)),
            converged=ok,
            residual_norm=norm,
            starts_tried=k + 1,
        )
        best = _better(best, sol)
        if ok and not options.keep_best:
            break

    if best is None:
        best = TransferSolution(
            ast_id=ast.id,
            station_j=j,
            t0=t00,
            tf=tf0,
            costates0=starts[0],
            m_arr=arrival_mass(ast.m0, max(0.0, tf0 - t00)),
            converged=False,
            residual_norm=float("inf"),
            starts_tried=len(starts),
        )
    if not best.converged:
        logger.warning(
            f"Rendezvous ast={ast.id} station={j} did not converge "
            f"(residual={best.residual_norm:.3e})"
        )
    return best


def solve_phase_free(
    ast: Asteroid,
    ring: RingConfig,
    guess: Optional[Costates] = None,
    options: Optional[OcpOptions] = None,
    t_ref: Optional[float] = None,
) -> TransferSolution:
    """Minimum-time transfer to the ring orbit with the arrival phase left free.

    Decision vector: [t0, T, t_target, lambda_r, lambda_v]. The target state is
    the ring reference point at ``t_target``, independent of t0 + T, so the
    optimum bounds every rendezvous flight time from below.
    """
    options = options or OcpOptions()
    t_ref = ast.el.epoch0 if t_ref is None else t_ref

    if _degenerate(ast, ring):
        logger.info(f"Phase-free ast={ast.id}: degenerate zero-time transfer")
        return TransferSolution(
            ast_id=ast.id,
            station_j=0,
            t0=t_ref,
            tf=t_ref,
            costates0=Costates(np.zeros(3), np.ones(3)),
            m_arr=ast.m0,
            converged=False,
            residual_norm=0.0,
            degenerate=True,
            target_epoch=t_ref,
        )

    min_T = options.min_flight_days * DAY
    max_T = options.max_flight_days * DAY
    T_guess = min(max(_edelbaum_guess(ast, ring), 10.0 * DAY), 0.9 * max_T)
    sv0 = kepler_propagate(ast.el, t_ref)
    n_mean = 0.5 * (ast.el.mean_motion + ring.mean_motion)
    lon = math.atan2(sv0.r[1], sv0.r[0])
    phase = (lon + n_mean * T_guess - ring.raan_D - ring.phi1) % (2 * math.pi)
    ts0 = phase / ring.mean_motion

    bounds = [
        (t_ref / TU, (t_ref + ast.el.period) / TU),
        (min_T / TU, max_T / TU),
        (0.0, ring.period / TU),
    ] + [(None, None)] * 6

    def make(tol: float):
        def residual(x: np.ndarray) -> np.ndarray:
            t0, T, ts = x[0] * TU, x[1] * TU, x[2] * TU
            if T <= 0.0:
                raise PropagationError("Non-positive flight time")
            target = station_state(ring, 1, ts)
            return _shoot(ast, t0, Costates.from_array(x[3:]), T, target, tol)

        return residual

    final_residual = make(options.tol)
    cons = _CachedResidual(make(options.search_tol), options.fd_step)
    rng = _problem_rng(options, ast.id, ring.a_D / 1e6)
    starts = _start_guesses(sv0, ast.el.a < ring.a_D, guess, options, rng)

    best: Optional[TransferSolution] = None
    for k, c0 in enumerate(starts):
        x0 = np.concatenate([[t_ref / TU, T_guess / TU, ts0 / TU], c0.as_array()])
        x = _run_slsqp(x0, cons, bounds, (1, None), None, options)
        if options.polish:
            x = _polish(x, final_residual, free=[1] + list(range(3, 9)))
        t0, T, ts = x[0] * TU, x[1] * TU, x[2] * TU
        try:
            res = final_residual(x)
        except DysonRingError:
            continue
        norm = float(np.linalg.norm(res))
        ok = norm < options.residual_tol and _within_endpoint_budget(res) and T > 0.0
        sol = TransferSolution(
            ast_id=ast.id,
            station_j=0,
            t0=t0,
            tf=t0 + T,
            costates0=Costates.from_array(x[3:]),
            m_arr=arrival_mass(ast.m0, max(0.0, T)),
            converged=ok,
            residual_norm=norm,
            target_epoch=ts,
            starts_tried=k + 1,
        )
        best = _better(best, sol)
        if ok and not options.keep_best:
            break

    if best is None:
        best = TransferSolution(
            ast_id=ast.id,
            station_j=0,
            t0=t_ref,
            tf=t_ref + T_guess,
            costates0=starts[0],
            m_arr=arrival_mass(ast.m0, T_guess),
            converged=False,
            residual_norm=float("inf"),
            target_epoch=ts0,
            starts_tried=len(starts),
        )
    if not best.converged:
        logger.warning(
            f"Phase-free ast={ast.id} did not converge "
            f"(residual={best.residual_norm:.3e})"
        )
    return best


def _better(
    current: Optional[TransferSolution], candidate: TransferSolution
) -> TransferSolution:
    if current is None:
        return candidate
    if candidate.converged != current.converged:
        return candidate if candidate.converged else current
    if candidate.converged:
        return candidate if candidate.T < current.T else current
    return candidate if candidate.residual_norm < current.residual_norm else current


def _run_slsqp(
    x0: np.ndarray,
    cons: _CachedResidual,
    bounds: List[Tuple[Optional[float], Optional[float]]],
    objective_index: Tuple[int, Optional[int]],
    min_T: Optional[float],
    options: OcpOptions,
) -> np.ndarray:
    """Minimize the flight time subject to the shooting equalities.

    ``objective_index`` is (plus, minus): the objective is x[plus] - x[minus],
    or x[plus] alone when minus is None.
    """
    plus, minus = objective_index
    grad = np.zeros(x0.size)
    grad[plus] = 1.0
    if minus is not None:
        grad[minus] = -1.0

    def objective(x: np.ndarray) -> float:
        return float(x[plus] - (x[minus] if minus is not None else 0.0))

    constraints = [{"type": "eq", "fun": cons, "jac": cons.jac}]
    if min_T is not None and minus is not None:
        constraints.append(
            {
                "type": "ineq",
                "fun": lambda x: np.array([x[plus] - x[minus] - min_T]),
                "jac": lambda x: grad[None, :],
            }
        )
    lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
    hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])
    x0 = np.clip(x0, lo, hi)
    try:
        res = minimize(
            objective,
            x0,
            jac=lambda x: grad,
            method="SLSQP",
            bounds=bounds,
            constraints=constraints,
            options={"maxiter": options.max_iter, "ftol": 1e-12},
        )
        x = np.clip(res.x, lo, hi)
        logger.debug(f"SLSQP status={res.status} ({res.message}) nit={res.nit}")
    except (ValueError, ArithmeticError) as e:
        logger.debug(f"SLSQP aborted: {e}")
        x = x0
    return x


def _polish(
    x: np.ndarray, func: Callable[[np.ndarray], np.ndarray], free: List[int]
) -> np.ndarray:
    """Newton refinement of the square system obtained by freezing one time."""

    def sub(z: np.ndarray) -> np.ndarray:
        y = x.copy()
        y[free] = z
        try:
            return func(y)
        except DysonRingError:
            return np.full(7, FAILED_RESIDUAL)

    try:
        start = sub(x[free])
        out = root(sub, x[free], method="lm", options={"xtol": 1e-14, "ftol": 1e-14})
        if np.linalg.norm(out.fun) < np.linalg.norm(start):
            y = x.copy()
            y[free] = out.x
            return y
    except (ValueError, ArithmeticError) as e:
        logger.debug(f"Polish aborted: {e}")
    return x


def with_mass(sol: TransferSolution, m0: float) -> TransferSolution:
    """Copy of ``sol`` with the arrival mass recomputed from ``m0``."""
    return replace(sol, m_arr=arrival_mass(m0, max(0.0, sol.T)))
