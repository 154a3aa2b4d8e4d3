"""End-to-end acceptance checks, one test per criterion.

Each test gathers every sub-check before asserting so a failure report lists
all of them.  Run alone with ``pytest -m acceptance``; the terminal summary
prints one PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest

from drivenspins import (
    CavityMode, MeanFieldState, Shift, SpinDrive, SpinEnsemble, SpiralDrive, SystemParams,
    build_jacobian, ct1_shift, ct2_shift, determinant_DL, hysteresis_loop, integrate,
    lambda1_closed_form, max_damping_shift, numeric_lambda1, perturbative_lambda1, ringdown,
    spin_susceptibility, thermal_polarization, upsilon_aL, upsilon_ab_total,
)
from drivenspins.sweep import fit_exponent, map_sweep, parse_config, with_overrides

import oracles

TWO_PI = 2 * math.pi
T_A = TWO_PI


def acceptance(criterion, title):
    return pytest.mark.acceptance(criterion=criterion, title=title)


def check(failures, ok, message):
    if not ok:
        failures.append(message)


# ---------------------------------------------------------------- 1

@acceptance(1, "thermal polarization")
def test_thermal_polarization():
    failures = []
    for f_hz, quoted in ((0.173e9, -1.4e-3), (2.00e9, -1.6e-2)):
        p0 = thermal_polarization(TWO_PI * f_hz, 3.1)
        check(failures, abs(p0 / quoted - 1) < 0.05, f"{f_hz:g} Hz: p0={p0:.4g}, quoted {quoted:g}")
    assert not failures, failures


# ---------------------------------------------------------------- 2

@acceptance(2, "maximum damping shift")
def test_maximum_damping_shift():
    failures = []
    g2 = 1e-3
    spins = SpinEnsemble(2 * g2, g2, p0=-0.1)
    cavity = CavityMode(1.0, 0.0, 1e-3)
    start = time.perf_counter()
    res = max_damping_shift(spins, cavity)
    elapsed = time.perf_counter() - start
    check(failures, abs(res.value_normalized / 0.437 - 1) < 0.02,
          f"normalized maximum {res.value_normalized:.5f}, expected 0.437 within 2%")
    check(failures, res.value == pytest.approx(res.value_normalized * cavity.g ** 2 * 0.1 / g2, rel=1e-12),
          "normalization is g^2 |p0| / gamma2")
    for name, loc, target in (("red", res.red_location, (-0.527, 0.425)),
                              ("blue", res.blue_location, (0.527, 0.425))):
        check(failures, max(abs(loc[0] - target[0]), abs(loc[1] - target[1])) <= 0.01,
              f"{name} location {loc}, expected {target} within 0.01")
    check(failures, elapsed < 10, f"runtime {elapsed:.2f} s")
    assert not failures, failures


# ---------------------------------------------------------------- 3

@acceptance(3, "three-way eigenvalue agreement")
def test_three_way_eigenvalue_agreement():
    failures = []
    start = time.perf_counter()
    spins = SpinEnsemble(0.01, 0.005, p0=-0.1)
    drive = SpinDrive.from_detuning(-0.5, 0.4)
    base = SystemParams(CavityMode(1.0, 0.0, 0.0), spins, drive)
    lam_a = base.cavity.eigenvalue
    bound = 5 * (spins.gamma1 + spins.gamma2) / base.cavity.omega

    # one decade of coupling
    gs = np.geomspace(1e-3, 1e-2, 4)
    devs = []
    for g in gs:
        p = base.with_coupling(g)
        v1 = perturbative_lambda1(p)
        v2 = v1.metadata["lambda1_alt"]
        v3 = lambda1_closed_form(p.cavity, p.spins, p.drive)
        devs.append(abs(numeric_lambda1(p) - lam_a - v1.lambda_increment))
        for name, ref in (("V1", v1.lambda_increment), ("V2", v2)):
            rel = abs(v3 - ref) / abs(ref)
            check(failures, rel <= bound, f"g={g:g}: V3 vs {name} relative {rel:.3g} > {bound:.3g}")
    exponent = fit_exponent(gs, devs)
    check(failures, abs(exponent - 3.0) <= 0.3,
          f"|numeric - perturbative| scales as g^{exponent:.3f}, expected g^3.0 within 0.3")
    elapsed = time.perf_counter() - start
    check(failures, elapsed < 30, f"runtime {elapsed:.2f} s")
    assert not failures, failures


# ---------------------------------------------------------------- 4

N_DRAWS = 1000


def _random_spin_point(rng):
    g2 = rng.uniform(1e-3, 0.2)
    spins = SpinEnsemble(rng.uniform(1e-3, 0.4), g2, p0=rng.uniform(-1, 0))
    drive = SpinDrive.from_detuning(rng.uniform(-2, 2), rng.uniform(0, 1))
    omega = rng.uniform(0.1, 3)
    return spins, drive, omega


@acceptance(4, "identity suite")
def test_identity_suite():
    failures = []
    rng = np.random.default_rng(20240601)
    start = time.perf_counter()
    tol = 1e-12

    worst = 0.0
    for _ in range(N_DRAWS):
        spins, drive, omega = _random_spin_point(rng)
        params = SystemParams(CavityMode(omega, 0.0, 0.1), spins, drive)
        J_L = build_jacobian(MeanFieldState(0j, 0j, spins.p0), params).J_L
        chi = spin_susceptibility(omega, params)
        M = J_L - 1j * omega * np.eye(3)
        worst = max(worst, np.max(np.abs(M @ chi - np.eye(3))))
    check(failures, worst <= tol, f"(J_L - i omega) chi = I: worst residual {worst:.3g}")

    worst = 0.0
    for _ in range(N_DRAWS):
        spins, drive, omega = _random_spin_point(rng)
        d = drive.detuning(spins.omega_L)
        M = oracles.spin_block_dense(spins.gamma1, spins.gamma2, d, drive.omega_1) - 1j * omega * np.eye(3)
        ref = np.linalg.det(M)
        got = determinant_DL(spins, drive, omega)
        worst = max(worst, abs(got - ref) / abs(ref))
    check(failures, worst <= tol, f"det(J_L - i omega) = D_L: worst relative {worst:.3g}")

    worst = 0.0
    for _ in range(N_DRAWS):
        wa, wb = rng.uniform(0.1, 2), rng.uniform(1.2, 10)
        gb, wd, scale = rng.uniform(1e-3, 0.5), rng.uniform(-3, 3), rng.uniform(1e-3, 1e3)
        drive = SpiralDrive.from_scale(scale, wd)
        ws = 2 * wb - wa
        # eigenvalue coefficients written out from their defining formulas
        weight = 4 * scale / (wd ** 2 + gb ** 2)
        c1 = 1j * weight * wd / ((1j * (wa - wd) - gb) * (1j * (wa + wd) - gb))
        c2 = weight * (-gb + 1j * ws) / ws ** 2
        total = upsilon_ab_total(drive, gb, wa, wb).upsilon
        ref = -1j * (c1 + c2)
        lib = ct1_shift(drive, gb, wa).upsilon + ct2_shift(drive, gb, ws).upsilon
        worst = max(worst, abs(total - ref) / abs(ref), abs(lib - ref) / abs(ref))
    check(failures, worst <= tol, f"total intermode shift = -i (CT1 + CT2): worst relative {worst:.3g}")

    worst = 0.0
    for _ in range(N_DRAWS):
        spins, drive, _ = _random_spin_point(rng)
        wa = rng.uniform(0.5, 3)
        cav = CavityMode(wa, 0.0, rng.uniform(1e-3, 0.1))
        if drive.omega_1 == 0:
            continue
        v1 = perturbative_lambda1(SystemParams(cav, spins, drive))
        lam3 = lambda1_closed_form(cav, spins, drive)
        ups3 = upsilon_aL(cav, spins, drive).upsilon
        z = complex(*rng.normal(size=2))
        swapped = Shift.from_lambda(1j * z)
        worst = max(
            worst,
            abs(v1.lambda_increment - 1j * v1.upsilon) / abs(v1.upsilon),
            abs(lam3 - 1j * ups3) / abs(ups3),
            abs(swapped.upsilon - z) / abs(z),
            abs(Shift(z).lambda_increment - 1j * z) / abs(z),
        )
    check(failures, worst <= tol, f"Lambda_1 = i upsilon: worst relative {worst:.3g}")

    elapsed = time.perf_counter() - start
    check(failures, elapsed < 30, f"runtime {elapsed:.2f} s")
    assert not failures, failures


# ---------------------------------------------------------------- 5

RINGDOWN_SETS = [(-0.3, 0.2), (0.3, 0.2), (-0.6, 0.3)]


@pytest.mark.slow
@acceptance(5, "time domain vs closed form")
def test_ringdown_matches_closed_form():
    failures = []
    gamma_a, g2 = 1e-4, 0.01
    spins = SpinEnsemble(2 * g2, g2, p0=-0.1)
    for delta, w1 in RINGDOWN_SETS:
        drive = SpinDrive.from_detuning(delta, w1)
        unit = upsilon_aL(CavityMode(1.0, gamma_a, 1.0), spins, drive).upsilon.imag
        # weak coupling: shift is a tenth of the bare damping
        g = math.sqrt(0.1 * gamma_a / abs(unit))
        cavity = CavityMode(1.0, gamma_a, g)
        p = SystemParams(cavity, spins, drive)
        res = ringdown(p, 0.05 * g2 / (4 * g), dt=T_A / 80)
        shift = upsilon_aL(cavity, spins, drive).damping_change
        measured = res.gamma_eff - gamma_a
        check(failures, abs(measured - shift) <= 0.05 * abs(shift),
              f"delta={delta}: measured shift {measured:.4g} vs closed form {shift:.4g}")
        expected_sign = 1 if delta < 0 else -1
        check(failures, np.sign(measured) == expected_sign,
              f"delta={delta}: damping change has sign {np.sign(measured)}")
    assert not failures, failures


# ---------------------------------------------------------------- 6

def _loop_params(delta):
    return SystemParams(CavityMode(1.0, 0.0, 0.1), SpinEnsemble(0.05, 0.025, p0=-0.1),
                        SpinDrive.from_detuning(delta, 0.2))


@pytest.mark.slow
@acceptance(6, "hysteresis mechanism")
def test_hysteresis_mechanism():
    failures = []
    X0, p0 = 0.0025, 0.1
    blue = hysteresis_loop(_loop_params(0.3), X0, 1.0)
    red = hysteresis_loop(_loop_params(-0.3), X0, 1.0)
    check(failures, blue.area > 0, f"blue loop area {blue.area:.3g} is not positive")
    check(failures, red.area < 0, f"red loop area {red.area:.3g} is not negative")
    adiabatic = hysteresis_loop(_loop_params(0.3), X0, 0.05 / 100)
    check(failures, abs(adiabatic.area) < 1e-3 * X0 * p0,
          f"adiabatic loop area {adiabatic.area:.3g} not below {1e-3 * X0 * p0:.3g}")
    assert not failures, failures


# ---------------------------------------------------------------- 7

NORMALIZED_MAP = {
    "mode": "normalized", "gamma_1": 0.05, "gamma_2": 0.025, "g_a": 0.1, "p0": -0.1,
    "axes": [{"name": "delta_pL", "start": -1.0, "stop": 1.0, "count": 201},
             {"name": "omega_1", "start": 0.0, "stop": 0.5, "count": 201}],
}

DEVICE_MAP = {
    "f_a": 0.173e9, "f_b": 2.00e9, "gamma_b": 0.4e6, "f_1": 12e6, "gamma_2": 8.3e6,
    "temperature": 3.1, "g_a": 13e6, "S": 1.0,
    "axes": [{"name": "f_L", "start": 1.95e9, "stop": 2.05e9, "count": 201},
             {"name": "f_p", "start": 1.95e9, "stop": 2.05e9, "count": 201}],
}


def _normalized_map_checks(tmp_path, failures):
    config = parse_config(dict(NORMALIZED_MAP, threads=4))
    start = time.perf_counter()
    grid4 = map_sweep(config)
    grid4.write_csv(tmp_path / "t4.csv")
    elapsed = time.perf_counter() - start
    check(failures, elapsed < 5, f"201x201 normalized map took {elapsed:.2f} s on 4 threads")
    map_sweep(config, threads=1).write_csv(tmp_path / "t1.csv")
    check(failures, (tmp_path / "t1.csv").read_bytes() == (tmp_path / "t4.csv").read_bytes(),
          "map output differs between 1 and 4 threads")

    res = max_damping_shift(config.spins(), config.cavity(), threshold=0.025)
    d_axis, w_axis = config.axes[0].values(), config.axes[1].values()
    steps = (d_axis[1] - d_axis[0], w_axis[1] - w_axis[0])
    damping = np.where(grid4.pole, np.nan, grid4.damping_change)
    for name, pick, loc in (("red", np.nanargmax, res.red_location),
                            ("blue", np.nanargmin, res.blue_location)):
        j, i = np.unravel_index(pick(damping), damping.shape)
        off = (abs(d_axis[i] - loc[0]) / steps[0], abs(w_axis[j] - loc[1]) / steps[1])
        check(failures, max(off) <= 1 + 1e-9,
              f"{name} map extremum at ({d_axis[i]:.4f}, {w_axis[j]:.4f}), search at {loc}")


def _device_map_checks(failures):
    unit = map_sweep(parse_config(DEVICE_MAP))
    # choose S so both features have comparable magnitude
    S = np.max(np.abs(unit.upsilon_aL.imag)) / np.max(np.abs(unit.upsilon_ab.imag))
    config = with_overrides(parse_config(DEVICE_MAP), S=float(S))
    grid = map_sweep(config)
    f_L, f_p = config.axes[0].values(), config.axes[1].values()
    step = f_p[1] - f_p[0]
    damping_aL = -grid.upsilon_aL.imag

    # spin feature: odd in omega_p - omega_L within each column, red side heats the damping
    worst = 0.0
    for i in range(f_L.size):
        k = np.arange(1, min(i, f_p.size - 1 - i) + 1)
        if k.size == 0:
            continue
        above, below = damping_aL[i + k, i], damping_aL[i - k, i]
        worst = max(worst, np.max(np.abs(above + below)) / np.max(np.abs(above)))
        check(failures, np.all(below[np.abs(below) > 0] > 0) or i in (0, f_L.size - 1),
              f"f_L={f_L[i]:g}: red-detuned damping change not positive")
    check(failures, worst < 1e-9, f"spin feature antisymmetry residual {worst:.3g}")

    # spiral feature: same in every column, peaked at f_b, decaying away from it
    ab = grid.upsilon_ab
    check(failures, np.array_equal(ab, np.repeat(ab[:, :1], f_L.size, axis=1)),
          "spiral feature depends on omega_L")
    profile = np.abs(ab[:, 0].imag)
    peak = profile.max()
    check(failures, abs(f_p[np.argmax(profile)] - 2.00e9) <= step * (1 + 1e-9),
          f"spiral peak at {f_p[np.argmax(profile)]:g} Hz, f_b = 2e9")
    far = np.abs(f_p - 2.00e9) > 20 * 0.4e6
    check(failures, profile[far].max() < 0.1 * peak,
          f"spiral feature beyond 20 gamma_b is {profile[far].max() / peak:.3g} of peak")
    check(failures, max(profile[0], profile[-1]) < 0.02 * peak,
          f"spiral feature at the band edge is {max(profile[0], profile[-1]) / peak:.3g} of peak")


@acceptance(7, "map reproduction")
def test_map_reproduction(tmp_path):
    failures = []
    _normalized_map_checks(tmp_path, failures)
    _device_map_checks(failures)
    assert not failures, failures


# ---------------------------------------------------------------- 8

@acceptance(8, "integrator quality")
def test_integrator_quality():
    failures = []
    p = SystemParams(CavityMode(1.0, 1e-3, 0.3), SpinEnsemble(0.2, 0.1, p0=-0.1),
                     SpinDrive.from_detuning(-0.3, 0.5))
    init = MeanFieldState(0.4, 0.1 + 0.1j, 0.2)
    y = oracles.reference_trajectory(p, init, np.array([0.0, 10.0]))[:, -1]
    ref = np.array([complex(y[0], y[1]), complex(y[2], y[3]), y[4]])
    dts = 10.0 / np.array([64, 128, 256])
    errs = []
    for dt in dts:
        f = integrate(init, p, 10.0, dt).final
        errs.append(np.sum(np.abs(np.array([f.a, f.p_plus, f.p_z]) - ref)))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    check(failures, abs(slope - 4.0) <= 0.2, f"RK4 convergence slope {slope:.3f}")

    gamma_a = 0.01
    q = SystemParams(CavityMode(1.0, gamma_a, 0.0), SpinEnsemble(0.02, 0.01, p0=-0.1),
                     SpinDrive.from_detuning(-0.3, 0.2))
    a0 = 1.0 + 0.5j
    tr = integrate(MeanFieldState(a0, 0, -0.1), q, 100.0, T_A / 100, record_every=10)
    rel = np.max(np.abs(np.abs(tr.a) / (abs(a0) * np.exp(-gamma_a * tr.times)) - 1))
    check(failures, rel < 1e-6, f"decoupled decay relative error {rel:.3g}")
    assert not failures, failures
