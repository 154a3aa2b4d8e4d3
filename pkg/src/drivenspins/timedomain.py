"""Fixed-step RK4 integration of the mean-field equations.

Two experiments are built on top of the integrator: a ringdown measurement
of the effective cavity damping, and the open-loop hysteresis experiment in
which the cavity coordinate ``x_a`` is prescribed and only the spins evolve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError, InsufficientDataError, SettleError
from .jacobian import MeanFieldState, SystemParams, fixed_point, theta_rhs
from .model import steady_pz, steady_spin_state

BLOCH_SLACK = 1e-6
_HUGE = 1e150


@dataclass
class Trajectory:
    """Samples at ``times[k] = k * dt``."""

    times: np.ndarray
    a: np.ndarray
    p_plus: np.ndarray
    p_z: np.ndarray
    params: SystemParams
    dt: float

    def __len__(self):
        return len(self.times)

    def state(self, k: int) -> MeanFieldState:
        return MeanFieldState(self.a[k], self.p_plus[k], self.p_z[k])

    @property
    def states(self) -> list[MeanFieldState]:
        return [self.state(k) for k in range(len(self))]

    @property
    def x_a(self) -> np.ndarray:
        return 4 * self.a.real

    @property
    def final(self) -> MeanFieldState:
        return self.state(-1)


def resolution_limit(params: SystemParams) -> float:
    """Largest allowed step: 1/40 of the bare cavity period."""
    return 2 * math.pi / params.cavity.omega / 40


def integrate(initial: MeanFieldState, params: SystemParams, t_end: float, dt: float,
              *, record_every: int = 1) -> Trajectory:
    """Advance ``d/dt state = -Theta(state)`` with classical RK4."""
    if not t_end > 0:
        raise ConfigError(f"t_end must be positive, got {t_end}")
    if not 0 < dt <= resolution_limit(params) * (1 + 1e-12):
        raise ConfigError(f"dt={dt:g} violates the resolution guard dt <= {resolution_limit(params):g}")
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    n_rec = n_steps // record_every + 1

    cav, spins = params.cavity, params.spins
    lam = cav.eigenvalue
    g, w1 = cav.g, params.drive.omega_1
    cp = complex(spins.gamma2, params.delta)
    g1, p0 = spins.gamma1, spins.p0
    ig, iw1 = 1j * g, 1j * w1

    def rhs(a, p, z):
        return (ig * z - lam * a,
                -(cp * p + iw1 * z + 4j * g * a.real * p),
                -g1 * (z - p0) + 4 * w1 * p.imag)

    a_rec = np.empty(n_rec, dtype=complex)
    p_rec = np.empty(n_rec, dtype=complex)
    z_rec = np.empty(n_rec)
    a, p, z = initial.a, initial.p_plus, initial.p_z
    a_rec[0], p_rec[0], z_rec[0] = a, p, z
    h, h2, h6 = dt, dt / 2, dt / 6
    j = 1
    for k in range(1, n_steps + 1):
        ka1, kp1, kz1 = rhs(a, p, z)
        ka2, kp2, kz2 = rhs(a + h2 * ka1, p + h2 * kp1, z + h2 * kz1)
        ka3, kp3, kz3 = rhs(a + h2 * ka2, p + h2 * kp2, z + h2 * kz2)
        ka4, kp4, kz4 = rhs(a + h * ka3, p + h * kp3, z + h * kz3)
        a = a + h6 * (ka1 + 2 * ka2 + 2 * ka3 + ka4)
        p = p + h6 * (kp1 + 2 * kp2 + 2 * kp3 + kp4)
        z = z + h6 * (kz1 + 2 * kz2 + 2 * kz3 + kz4)
        if not (abs(a) < _HUGE and abs(p) < _HUGE and abs(z) < _HUGE):
            raise DivergenceError(f"state became non-finite after t={(k - 1) * dt:g}",
                                  last_finite_time=(k - 1) * dt)
        if k % record_every == 0:
            a_rec[j], p_rec[j], z_rec[j] = a, p, z
            j += 1
    times = np.arange(n_rec) * (dt * record_every)
    if abs(initial.p_z) <= 1 and np.max(np.abs(z_rec)) > 1 + BLOCH_SLACK:
        raise DivergenceError("p_z left the Bloch ball; reduce dt", last_finite_time=times[-1])
    return Trajectory(times, a_rec, p_rec, z_rec, params, dt * record_every)


def relaxed_spins(params: SystemParams, tol: float = 1e-10, max_time: float | None = None) -> MeanFieldState:
    """Spin steady state with the cavity held at ``a = 0``."""
    uncoupled = params.with_coupling(0.0)
    p_plus0, p_z0 = steady_spin_state(params.spins, params.drive)
    state = MeanFieldState(0j, p_plus0, p_z0)
    scale = params.rate_scale * max(abs(params.spins.p0), 1e-300)
    max_time = max_time or 50 / min(params.spins.gamma1, params.spins.gamma2)
    elapsed = 0.0
    while True:
        _, tp, tz = theta_rhs(state, uncoupled)
        if math.hypot(abs(tp), tz) < tol * scale:
            return state
        if elapsed > max_time:
            raise SettleError("spins did not relax with the cavity held at zero")
        chunk = 5 / min(params.spins.gamma1, params.spins.gamma2)
        traj = integrate(state, uncoupled, chunk, resolution_limit(params))
        state = MeanFieldState(0j, traj.p_plus[-1], traj.p_z[-1])
        elapsed += chunk


def envelope_peaks(t: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Positive local maxima of ``y`` refined by a three-point parabola."""
    mid = y[1:-1]
    idx = np.nonzero((mid > y[:-2]) & (mid >= y[2:]) & (mid > 0))[0] + 1
    ym, y0, yp = y[idx - 1], y[idx], y[idx + 1]
    curv = ym - 2 * y0 + yp
    shift = np.where(curv != 0, 0.5 * (ym - yp) / np.where(curv != 0, curv, 1), 0.0)
    peak = y0 - 0.25 * (ym - yp) * shift
    dt = t[1] - t[0]
    return t[idx] + shift * dt, peak


@dataclass
class RingdownResult:
    gamma_eff: float
    window: tuple[float, float]
    n_points: int
    trajectory: Trajectory = field(repr=False)


def ringdown(params: SystemParams, kick_amplitude: float, *, dt: float | None = None,
             t_end: float | None = None) -> RingdownResult:
    """Kick the cavity out of the coupled steady state and fit its decay.

    The envelope is read off the local maxima of ``Re(a - a_fp)`` where
    ``a_fp`` is the static displacement of the coupled fixed point.  The fit
    uses ``[5/gamma2, min(t_end, 5/gamma_a)]``.
    """
    cav, spins = params.cavity, params.spins
    if t_end is None:
        if cav.gamma <= 0:
            raise ConfigError("t_end is required when the cavity damping is zero")
        t_end = 5 / cav.gamma
    dt = dt or resolution_limit(params) / 2
    start = 5 / spins.gamma2
    stop = min(t_end, 5 / cav.gamma) if cav.gamma > 0 else t_end

    relaxed = relaxed_spins(params)
    initial = MeanFieldState(kick_amplitude, relaxed.p_plus, relaxed.p_z)
    record_every = max(1, math.ceil(t_end / dt / 2_000_000))
    traj = integrate(initial, params, t_end, dt, record_every=record_every)
    offset = fixed_point(params).a if params.g > 0 else 0j
    t_pk, y_pk = envelope_peaks(traj.times, (traj.a - offset).real)
    sel = (t_pk >= start) & (t_pk <= stop)
    if np.count_nonzero(sel) < 10:
        raise InsufficientDataError(
            f"only {np.count_nonzero(sel)} envelope points in the fit window [{start:g}, {stop:g}]")
    slope = np.polyfit(t_pk[sel], np.log(y_pk[sel]), 1)[0]
    return RingdownResult(-float(slope), (start, stop), int(np.count_nonzero(sel)), traj)


def ringdown_damping(params: SystemParams, kick_amplitude: float, **kwargs) -> float:
    """Effective cavity damping rate measured by ringdown."""
    return ringdown(params, kick_amplitude, **kwargs).gamma_eff


def shoelace_area(x, y) -> float:
    """Signed polygon area, counterclockwise positive."""
    x, y = np.asarray(x), np.asarray(y)
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass
class HysteresisResult:
    """Steady loop in the ``(x_a, p_z)`` plane.

    ``area`` is the loop integral of ``p_z dx_a`` per cycle, i.e. the
    shoelace area taken clockwise-positive.  With the cavity force
    ``+i g p_z`` the work done on the mode per cycle is ``g/2 * area``, so a
    positive area means energy flowing into the cavity.
    """

    loop: np.ndarray
    area: float
    cycles_discarded: int
    cycle_areas: list[float]
    coupling: float

    @property
    def work_per_cycle(self) -> float:
        return 0.5 * self.coupling * self.area

    @property
    def ccw_area(self) -> float:
        return -self.area


def _spin_cycle(params: SystemParams, xs: np.ndarray, dt: float, y, record=None):
    """One period of the prescribed-x spin dynamics in real coordinates.

    ``xs`` holds the prescribed ``x_a`` at every half step of the cycle.
    """
    spins = params.spins
    g, w1 = params.g, params.drive.omega_1
    g1, g2, p0, delta = spins.gamma1, spins.gamma2, spins.p0, params.delta
    u, v, z = y
    h, h2, h6 = dt, dt / 2, dt / 6
    n = (len(xs) - 1) // 2

    def rhs(u, v, z, d):
        return (-g2 * u + d * v, -g2 * v - d * u - w1 * z, -g1 * (z - p0) + 4 * w1 * v)

    for k in range(n):
        d0 = delta + g * xs[2 * k]
        d1 = delta + g * xs[2 * k + 1]
        d2 = delta + g * xs[2 * k + 2]
        au, av, az = rhs(u, v, z, d0)
        bu, bv, bz = rhs(u + h2 * au, v + h2 * av, z + h2 * az, d1)
        cu, cv, cz = rhs(u + h2 * bu, v + h2 * bv, z + h2 * bz, d1)
        eu, ev, ez = rhs(u + h * cu, v + h * cv, z + h * cz, d2)
        u += h6 * (au + 2 * bu + 2 * cu + eu)
        v += h6 * (av + 2 * bv + 2 * cv + ev)
        z += h6 * (az + 2 * bz + 2 * cz + ez)
        if record is not None:
            record[k + 1] = z
    return u, v, z


def hysteresis_loop(params: SystemParams, x_amplitude: float, oscillation_frequency: float,
                    n_settle_cycles: int = 20, n_measure_cycles: int = 5, *,
                    steps_per_cycle: int | None = None, periodic_seed: bool = True,
                    closure_tol: float = 1e-6) -> HysteresisResult:
    """Drive the spins with ``x_a(t) = X0 cos(w t)`` and record the ``(x_a, p_z)`` loop.

    The cavity equation is not evolved.  With ``periodic_seed`` the settle
    phase starts on the periodic orbit of the discrete one-cycle map (the
    spin equations are affine in the spin variables, so four cycles fix it);
    otherwise it starts from the undriven-cavity steady state.
    """
    if oscillation_frequency <= 0 or x_amplitude < 0:
        raise ConfigError("oscillation frequency must be positive and amplitude non-negative")
    if n_measure_cycles < 1 or n_settle_cycles < 0:
        raise ConfigError("need n_measure_cycles >= 1 and n_settle_cycles >= 0")
    spins, w1 = params.spins, params.drive.omega_1
    period = 2 * math.pi / oscillation_frequency
    if steps_per_cycle is None:
        fastest = max(math.hypot(2 * w1, abs(params.delta) + params.g * x_amplitude),
                      spins.gamma1, spins.gamma2, oscillation_frequency)
        steps_per_cycle = max(400, math.ceil(period / (2 * math.pi / fastest / 40)))
    n = int(steps_per_cycle)
    dt = period / n
    phase = np.arange(2 * n + 1) * (math.pi / n)
    xs = x_amplitude * np.cos(phase)
    # exact endpoints keep the discrete map periodic
    xs[0] = xs[-1] = x_amplitude

    if periodic_seed:
        c = np.array(_spin_cycle(params, xs, dt, (0.0, 0.0, 0.0)))
        M = np.column_stack([np.array(_spin_cycle(params, xs, dt, e)) - c for e in np.eye(3)])
        y = tuple(np.linalg.solve(np.eye(3) - M, c))
    else:
        p_plus0, p_z0 = steady_spin_state(spins, params.drive)
        y = (p_plus0.real, p_plus0.imag, p_z0)
    for _ in range(n_settle_cycles):
        y = _spin_cycle(params, xs, dt, y)

    x_loop = xs[::2]
    areas = []
    z_rec = np.empty(n + 1)
    for _ in range(n_measure_cycles):
        z_rec[0] = y[2]
        y = _spin_cycle(params, xs, dt, y, record=z_rec)
        # trapezoidal p_z dx equals minus the counterclockwise shoelace area
        areas.append(float(np.sum(0.5 * (z_rec[1:] + z_rec[:-1]) * np.diff(x_loop))))
    loop = np.column_stack([x_loop, z_rec])
    span = np.ptp(loop, axis=0)
    diameter = math.hypot(*span)
    gap = math.hypot(*(loop[-1] - loop[0]))
    if gap > closure_tol * max(diameter, 1e-300):
        raise SettleError(f"loop not closed after {n_settle_cycles} settle cycles "
                          f"(gap/diameter={gap / max(diameter, 1e-300):.2e}); use more settle cycles")
    return HysteresisResult(loop, float(np.mean(areas)), n_settle_cycles, areas, params.g)


def steady_pz_curve(params: SystemParams, x_a_values) -> np.ndarray:
    """Instantaneous steady ``p_z`` for each cavity displacement; columns ``(x_a, p_z0)``."""
    x = np.asarray(x_a_values, dtype=float)
    pz = steady_pz(params.spins, params.drive.omega_1, params.delta + params.g * x)
    return np.column_stack([x, pz])
