"""Parameter types and closed-form expressions for the cavity/driven-spin system.

All rates and frequencies are angular (rad/s).  Every function is unit
agnostic as long as the inputs are consistent, so passing ``omega_a = 1``
together with rates expressed in units of the cavity frequency gives the
normalized form used for the detuning/drive maps.

Sign conventions
----------------
Mean-field amplitudes evolve as ``d/dt x = -Theta(x)``, so an eigenvalue
``lam`` of the Jacobian describes ``exp(-lam t)``.  The bare cavity has
``lam_a = i omega_a + gamma_a`` and the effective complex frequency is
``Omega_a = omega_a - i gamma_a + upsilon``.  The two are related by
``lam = i Omega``, hence ``lambda_increment = i * upsilon`` and the damping
change is ``-Im(upsilon)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import numpy as np
from scipy import constants
from scipy.optimize import minimize

from .errors import ConfigError, ConvergenceError, PoleError

HBAR = constants.hbar
K_B = constants.k
# electron spin gyromagnetic ratio, rad/s per tesla
GYROMAGNETIC_RATIO = 2 * math.pi * 28.03e9

# |denominator| of the dimensionless shift formula below which we report a pole
POLE_THRESHOLD = 1e-30


def thermal_polarization(omega_L, temperature):
    """Equilibrium longitudinal polarization ``-tanh(hbar omega_L / 2 k_B T)``.

    Works elementwise on arrays.  The result lies in (-1, 0].
    """
    temperature = np.asarray(temperature, dtype=float)
    omega_L = np.asarray(omega_L, dtype=float)
    if np.any(temperature <= 0):
        raise ConfigError(f"temperature must be positive, got {temperature}")
    if np.any(omega_L < 0):
        raise ConfigError(f"omega_L must be non-negative, got {omega_L}")
    p0 = -np.tanh(HBAR * omega_L / (2 * K_B * temperature))
    return float(p0) if p0.ndim == 0 else p0


@dataclass(frozen=True)
class SpinEnsemble:
    """Spin-1/2 ensemble with relaxation rates and equilibrium polarization.

    ``p0`` is derived from ``omega_L`` and ``temperature`` when omitted.
    """

    gamma1: float
    gamma2: float
    omega_L: float = 0.0
    p0: float | None = None
    temperature: float | None = None
    gamma_g: float = GYROMAGNETIC_RATIO

    def __post_init__(self):
        if not self.gamma1 > 0:
            raise ConfigError(f"gamma1 must be positive, got {self.gamma1}")
        if not self.gamma2 > 0:
            raise ConfigError(f"gamma2 must be positive, got {self.gamma2}")
        if not self.omega_L >= 0:
            raise ConfigError(f"omega_L must be non-negative, got {self.omega_L}")
        if self.temperature is not None and not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.p0 is None:
            if self.temperature is None:
                raise ConfigError("either p0 or temperature must be given")
            object.__setattr__(self, "p0", thermal_polarization(self.omega_L, self.temperature))
        if not -1 < self.p0 <= 0:
            raise ConfigError(f"p0 must lie in (-1, 0], got {self.p0}")

    def with_omega_L(self, omega_L: float) -> "SpinEnsemble":
        """Copy at another Larmor frequency, re-deriving p0 if it came from T."""
        if self.temperature is not None:
            return replace(self, omega_L=omega_L, p0=None)
        return replace(self, omega_L=omega_L)


@dataclass(frozen=True)
class CavityMode:
    omega: float
    gamma: float = 0.0
    g: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ConfigError(f"cavity omega must be positive, got {self.omega}")
        if not self.gamma >= 0:
            raise ConfigError(f"cavity gamma must be non-negative, got {self.gamma}")
        if not self.g >= 0:
            raise ConfigError(f"coupling g must be non-negative, got {self.g}")

    @property
    def eigenvalue(self) -> complex:
        """Bare cavity eigenvalue ``i omega + gamma``."""
        return complex(self.gamma, self.omega)


@dataclass(frozen=True)
class SpinDrive:
    omega_p: float
    omega_1: float

    def __post_init__(self):
        if not self.omega_1 >= 0:
            raise ConfigError(f"omega_1 must be non-negative, got {self.omega_1}")

    @classmethod
    def from_detuning(cls, delta_pL: float, omega_1: float, omega_L: float = 0.0) -> "SpinDrive":
        return cls(omega_p=omega_L + delta_pL, omega_1=omega_1)

    def detuning(self, omega_L: float) -> float:
        return self.omega_p - omega_L


@dataclass(frozen=True)
class Shift:
    """Complex frequency shift.

    ``upsilon`` is stored; the eigenvalue increment ``i * upsilon`` is a view.
    Conversions are done by swapping components so that round trips are
    bit-exact.
    """

    upsilon: complex
    metadata: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "upsilon", complex(self.upsilon))

    @classmethod
    def from_lambda(cls, lambda_increment: complex, metadata=None) -> "Shift":
        lam = complex(lambda_increment)
        return cls(complex(lam.imag, -lam.real), metadata or {})

    @property
    def lambda_increment(self) -> complex:
        u = self.upsilon
        return complex(-u.imag, u.real)

    @property
    def frequency_shift(self) -> float:
        return self.upsilon.real

    @property
    def damping_change(self) -> float:
        return -self.upsilon.imag

    def effective_frequency(self, cavity: CavityMode) -> complex:
        """``Omega = omega - i gamma + upsilon``."""
        return complex(cavity.omega, -cavity.gamma) + self.upsilon

    def __add__(self, other: "Shift") -> "Shift":
        return combine_shifts(self, other)


def combine_shifts(upsilon_aL: Shift, upsilon_ab: Shift) -> Shift:
    return Shift(
        upsilon_aL.upsilon + upsilon_ab.upsilon,
        {"upsilon_aL": upsilon_aL.upsilon, "upsilon_ab": upsilon_ab.upsilon},
    )


def rabi_frequency(omega_1, delta_pL):
    return np.sqrt(4 * np.square(omega_1) + np.square(delta_pL))


def steady_spin_state(spins: SpinEnsemble, drive: SpinDrive) -> tuple[complex, float]:
    """Fixed point ``(p_plus0, p_z0)`` of the spin equations at zero coupling."""
    g1, g2, p0 = spins.gamma1, spins.gamma2, spins.p0
    delta = drive.detuning(spins.omega_L)
    w1 = drive.omega_1
    lorentz = 1 + (delta / g2) ** 2
    saturation = lorentz + 4 * w1 * w1 / (g1 * g2)
    p_plus0 = (w1 / g2) * complex(-delta / g2, -1.0) * p0 / saturation
    p_z0 = lorentz * p0 / saturation
    return p_plus0, p_z0


def steady_pz(spins: SpinEnsemble, omega_1, delta):
    """Steady longitudinal polarization for an arbitrary (array) detuning."""
    g1, g2 = spins.gamma1, spins.gamma2
    lorentz = 1 + np.square(np.asarray(delta) / g2)
    return lorentz * spins.p0 / (lorentz + 4 * omega_1 ** 2 / (g1 * g2))


def eta_coefficient(spins: SpinEnsemble, omega_a: float, omega_1):
    g1, g2 = spins.gamma1, spins.gamma2
    return (2 * g2 / g1) * ((1 - g1 / g2) * 2 * np.square(omega_1) / omega_a ** 2 - 1)


@dataclass(frozen=True)
class CharacteristicFrequencies:
    """``omega_dR`` and ``omega_dI``.

    A negative radicand is reported through the ``*_imaginary`` flags; the
    stored value is then the magnitude of the imaginary root.
    """

    omega_dR: float
    omega_dI: float
    dR_imaginary: bool = False
    dI_imaginary: bool = False


def characteristic_frequencies(spins: SpinEnsemble, omega_a: float, omega_1: float,
                               small_gamma: bool = False) -> CharacteristicFrequencies:
    g1, g2 = spins.gamma1, spins.gamma2
    w = (omega_1 / omega_a) ** 2
    rad_R = 1 + (2 * g2 / g1) * (1 - 2 * w)
    rad_I = 1 - 4 * w
    if not small_gamma:
        rad_R -= (g2 / omega_a) ** 2
        rad_I -= (2 * g1 + g2) * g2 / omega_a ** 2
    return CharacteristicFrequencies(
        omega_dR=omega_a * math.sqrt(abs(rad_R)),
        omega_dI=omega_a * math.sqrt(abs(rad_I)),
        dR_imaginary=rad_R < 0,
        dI_imaginary=rad_I < 0,
    )


def _d_factors(spins: SpinEnsemble, delta, omega):
    d1 = spins.gamma2 + 1j * (delta - omega)
    d2 = spins.gamma2 - 1j * (delta + omega)
    d3 = spins.gamma1 - 1j * omega
    return d1, d2, d3


def determinant_DL(spins: SpinEnsemble, drive: SpinDrive, omega: float) -> complex:
    """``D1 D2 D3 + 2 omega_1^2 (D1 + D2)``, i.e. ``det(J_L - i omega)``."""
    d1, d2, d3 = _d_factors(spins, drive.detuning(spins.omega_L), omega)
    return d1 * d2 * d3 + 2 * drive.omega_1 ** 2 * (d1 + d2)


def validity_flags(cavity: CavityMode, spins: SpinEnsemble, delta: float) -> dict:
    """Ratios that the closed forms assume to be small."""
    return {
        "delta_over_omega_L": abs(delta) / spins.omega_L if spins.omega_L > 0 else math.inf,
        "gamma_a_over_omega_a": cavity.gamma / cavity.omega,
        "gamma1_over_omega_a": spins.gamma1 / cavity.omega,
        "gamma2_over_omega_a": spins.gamma2 / cavity.omega,
    }


def upsilon_aL_terms(omega_a, g, gamma1, gamma2, p0, delta, omega_1):
    """Numerator and (dimensionless) denominator of the spin-induced shift.

    Broadcasts over array arguments; the shift is ``numerator / denominator``.
    """
    w1sq = np.square(omega_1)
    saturation = 1 + np.square(delta / gamma2) + 4 * w1sq / (gamma1 * gamma2)
    numerator = (8 * g ** 2 * w1sq / (omega_a ** 2 * gamma2) * (delta / gamma2)
                 * (1j - 2 * gamma2 / omega_a) / saturation * p0)
    rabi_sq = (4 * w1sq + np.square(delta)) / omega_a ** 2
    eta = (2 * gamma2 / gamma1) * ((1 - gamma1 / gamma2) * 2 * w1sq / omega_a ** 2 - 1)
    denominator = (gamma1 / omega_a) * (rabi_sq + eta - 1) - 1j * (rabi_sq - 1)
    return numerator, denominator


def upsilon_aL(cavity: CavityMode, spins: SpinEnsemble, drive: SpinDrive) -> Shift:
    """Closed-form frequency shift induced by the driven spins.

    Valid for ``|delta| << omega_L`` and ``gamma_a, gamma1, gamma2 << omega_a``;
    these ratios are attached as metadata rather than enforced.
    """
    delta = drive.detuning(spins.omega_L)
    num, den = upsilon_aL_terms(cavity.omega, cavity.g, spins.gamma1, spins.gamma2,
                                spins.p0, delta, drive.omega_1)
    if abs(den) < POLE_THRESHOLD:
        raise PoleError(
            "shift denominator vanishes: omega_R = omega_a together with "
            f"omega_R^2 + eta omega_a^2 = omega_a^2 (delta={delta}, omega_1={drive.omega_1})"
        )
    return Shift(complex(num / den), {"validity": validity_flags(cavity, spins, delta)})


def lambda1_closed_form(cavity: CavityMode, spins: SpinEnsemble, drive: SpinDrive) -> complex:
    """Small-damping eigenvalue increment written in its eigenvalue form.

    Kept separate from :func:`upsilon_aL` so that ``upsilon = -i Lambda`` is a
    genuine cross-check of two transcriptions.
    """
    wa, g = cavity.omega, cavity.g
    g1, g2, p0 = spins.gamma1, spins.gamma2, spins.p0
    delta = drive.detuning(spins.omega_L)
    w1 = drive.omega_1
    rabi = rabi_frequency(w1, delta)
    eta = eta_coefficient(spins, wa, w1)
    sat = 1 + delta ** 2 / g2 ** 2 + 4 * w1 ** 2 / (g1 * g2)
    top = (8 * g ** 2 * w1 ** 2 / (wa ** 3 * g2)) * (delta / g2) * (1 + 2j * g2 / wa) / sat * p0
    bottom = (g1 / wa) * ((rabi ** 2 + eta * wa ** 2) / wa ** 2 - 1) - 1j * (rabi ** 2 / wa ** 2 - 1)
    if abs(bottom) < POLE_THRESHOLD:
        raise PoleError("closed-form eigenvalue denominator vanishes")
    return complex(-wa * top / bottom)


@dataclass(frozen=True)
class MaxShiftResult:
    """Largest damping change and where it occurs (normalized coordinates).

    ``value`` is ``max(-Im upsilon)`` in the units of the cavity frequency;
    ``value_normalized`` divides it by ``g^2 |p0| / gamma2``.  Locations are
    ``(delta/omega_a, omega_1/omega_a)``.
    """

    value: float
    value_normalized: float
    red_location: tuple[float, float]
    blue_location: tuple[float, float]
    blue_value: float


def max_damping_shift(spins: SpinEnsemble, cavity: CavityMode, *, threshold: float = 1e-3,
                      grid: int = 401, rtol: float = 1e-6) -> MaxShiftResult:
    """Locate the extrema of the damping change over (detuning, drive).

    Coarse ``grid x grid`` scan of ``delta/omega_a in [-1, 1]`` and
    ``omega_1/omega_a in (0, 0.5]``, then Nelder-Mead refinement of the best
    cell on each side of zero detuning.
    """
    wa = cavity.omega
    g1, g2 = spins.gamma1 / wa, spins.gamma2 / wa
    if not math.isclose(g1, 2 * g2, rel_tol=1e-9):
        raise ConfigError(f"max_damping_shift requires gamma1 = 2 gamma2, got {spins.gamma1}, {spins.gamma2}")
    if g2 > threshold:
        raise ConfigError(f"gamma2/omega_a = {g2:g} exceeds the small-damping threshold {threshold:g}")
    if spins.p0 == 0 or cavity.g == 0:
        raise ConfigError("damping change vanishes identically (p0 = 0 or g = 0)")
    g, p0 = cavity.g / wa, spins.p0

    def damping(d, w):
        num, den = upsilon_aL_terms(1.0, g, g1, g2, p0, d, w)
        return -(num / den).imag

    d_axis = np.linspace(-1.0, 1.0, grid)
    w_axis = np.linspace(0.5 / grid, 0.5, grid)
    D, W = np.meshgrid(d_axis, w_axis, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        coarse = damping(D, W)
    coarse = np.where(np.isfinite(coarse), coarse, 0.0)
    step = np.array([d_axis[1] - d_axis[0], w_axis[1] - w_axis[0]])

    def refine(sign):
        masked = np.where(sign * D < 0, sign * coarse, -np.inf)
        start = np.array(np.unravel_index(np.argmax(masked), masked.shape))
        x0 = np.array([d_axis[start[0]], w_axis[start[1]]])
        best_x, best_f = x0, float(sign * damping(*x0))
        simplex = np.array([x0, x0 + [step[0], 0.0], x0 + [0.0, step[1]]])
        for _ in range(4):
            res = minimize(lambda x: -sign * damping(x[0], x[1]), best_x, method="Nelder-Mead",
                           options={"initial_simplex": simplex, "xatol": rtol * 1e-2,
                                    "fatol": rtol * abs(best_f), "maxiter": 20000})
            if -res.fun >= best_f:
                best_x, best_f = res.x, float(-res.fun)
            if res.success:
                return best_x, best_f
            simplex = np.array([best_x, best_x + step / 10 * [1, 0], best_x + step / 10 * [0, 1]])
        raise ConvergenceError("extremum refinement did not converge", best=(tuple(best_x), best_f))

    red_x, red_f = refine(+1)
    blue_x, blue_f = refine(-1)
    scale = g * g * abs(p0) / g2
    return MaxShiftResult(
        value=red_f * wa,
        value_normalized=red_f / scale,
        red_location=(float(red_x[0]), float(red_x[1])),
        blue_location=(float(blue_x[0]), float(blue_x[1])),
        blue_value=-blue_f * wa,
    )
