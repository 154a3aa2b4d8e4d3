"""Frequency shift of the low-frequency mode induced by the driven spiral mode.

The two resonators interact through ``K (A_a + A_a^+)(A_b + A_b^+)^2``.  Only
the product ``K^2 |F_bf|^2`` enters the shift, so most callers construct the
drive with :meth:`SpiralDrive.from_scale`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, PoleError, ThresholdError
from .model import Shift

_TINY = 1e-300


@dataclass(frozen=True)
class SpiralDrive:
    """Drive of the spiral mode at ``omega_b + omega_D`` with amplitude ``F_bf``."""

    F_bf: complex
    omega_D: float
    K: float

    @classmethod
    def from_scale(cls, scale: float, omega_D: float) -> "SpiralDrive":
        """Drive with ``K = 1`` and ``|F_bf|^2 = scale``."""
        if scale < 0:
            raise ConfigError(f"scale K^2|F_bf|^2 must be non-negative, got {scale}")
        return cls(F_bf=complex(math.sqrt(scale)), omega_D=omega_D, K=1.0)

    @property
    def scale(self) -> float:
        return self.K ** 2 * abs(self.F_bf) ** 2

    def drive_frequency(self, omega_b: float) -> float:
        return omega_b + self.omega_D


def omega_s(omega_a: float, omega_b: float) -> float:
    return 2 * omega_b - omega_a


def spiral_steady_amplitude(drive: SpiralDrive, gamma_b: float) -> complex:
    """``C_b0 = F_bf / (-i omega_D + gamma_b)``."""
    den = complex(gamma_b, -drive.omega_D)
    if den == 0:
        raise PoleError("undamped resonant spiral drive (omega_D = 0 and gamma_b = 0)")
    return drive.F_bf / den


def _lorentz_weight(drive: SpiralDrive, gamma_b: float) -> float:
    """``4 K^2 |F_bf|^2 / (omega_D^2 + gamma_b^2)`` = ``4 K^2 |C_b0|^2``."""
    den = drive.omega_D ** 2 + gamma_b ** 2
    if den == 0:
        raise PoleError("undamped resonant spiral drive (omega_D = 0 and gamma_b = 0)")
    return 4 * drive.scale / den


def ct1_shift(drive: SpiralDrive, gamma_b: float, omega_a: float) -> Shift:
    """Shift from the sideband of the spiral amplitude at the drive frequency."""
    wd = drive.omega_D
    den = complex(-gamma_b, omega_a - wd) * complex(-gamma_b, omega_a + wd)
    if abs(den) < _TINY:
        raise PoleError(f"CT1 pole at omega_D = +-omega_a with gamma_b = 0 (omega_D={wd})")
    if wd == 0 or drive.scale == 0:
        return Shift(0j)
    c_b0 = spiral_steady_amplitude(drive, gamma_b)
    coefficient = 4j * drive.K ** 2 * abs(c_b0) ** 2 * wd / den
    return Shift.from_lambda(coefficient)


def ct2_shift(drive: SpiralDrive, gamma_b: float, omega_s: float, *, exact: bool = False) -> Shift:
    """Shift from the parametric (idler) term.

    ``exact=True`` keeps ``omega_D`` in the idler detuning and ``gamma_b`` in
    full; the default is the ``gamma_b << omega_s`` limit.
    """
    if omega_s == 0:
        raise ConfigError("degenerate frequencies: omega_s = 2 omega_b - omega_a = 0")
    if drive.scale == 0:
        return Shift(0j)
    if exact:
        alpha = spiral_steady_amplitude(drive, gamma_b)
        coefficient = -4 * drive.K ** 2 * abs(alpha) ** 2 / complex(gamma_b, omega_s + drive.omega_D)
    else:
        weight = _lorentz_weight(drive, gamma_b)
        coefficient = weight * complex(-gamma_b, omega_s) / omega_s ** 2
    return Shift.from_lambda(coefficient)


def parametric_sidebands(drive: SpiralDrive, gamma_b: float, omega_s: float, a_a: complex,
                         *, rtol: float = 1e-12) -> tuple[complex, complex]:
    """Steady amplitudes ``(alpha, beta)`` of the signal and idler components."""
    K, wd = drive.K, drive.omega_D
    signal = complex(gamma_b, -wd)
    idler = complex(gamma_b, omega_s + wd)
    pump = 4 * K ** 2 * abs(a_a) ** 2
    den = signal - pump / idler.conjugate()
    if abs(den) <= rtol * max(abs(signal), pump / abs(idler), _TINY):
        critical = 0.5 * math.sqrt(abs(signal * idler.conjugate()))
        raise ThresholdError(f"parametric threshold reached: K|a_a| = {critical:g}", critical)
    alpha = drive.F_bf / den
    beta = -2j * K * a_a * alpha.conjugate() / idler
    return alpha, beta


def upsilon_ab_total(drive: SpiralDrive, gamma_b: float, omega_a: float, omega_b: float,
                     *, suppression: float = 0.1) -> Shift:
    """Total shift from the driven spiral mode.

    Evaluated directly from the closed form and, independently, as the sum of
    the two coupling terms; both are kept in the metadata.  ``ct1_negligible``
    records whether ``|omega_D| < suppression * omega_a^2 / omega_s``.
    """
    ws = omega_s(omega_a, omega_b)
    if ws == 0:
        raise ConfigError("degenerate frequencies: omega_s = 2 omega_b - omega_a = 0")
    wd, gb = drive.omega_D, gamma_b
    weight = _lorentz_weight(drive, gb)
    if gb > 0:
        first = (wd / gb ** 2) / (complex(-1, (omega_a - wd) / gb) * complex(-1, (omega_a + wd) / gb))
    else:
        first = ct1_shift(drive, gb, omega_a).upsilon / weight if weight else 0j
    direct = weight * (first + complex(1, gb / ws) / ws)
    ct1 = ct1_shift(drive, gb, omega_a)
    ct2 = ct2_shift(drive, gb, ws)
    return Shift(direct, {
        "ct1": ct1.upsilon,
        "ct2": ct2.upsilon,
        "sum_of_terms": ct1.upsilon + ct2.upsilon,
        "ct1_negligible": abs(wd) < suppression * omega_a ** 2 / abs(ws),
    })


def upsilon_ab_array(scale, omega_D, gamma_b: float, omega_a: float, omega_b: float):
    """Vectorized closed form over an array of drive detunings."""
    import numpy as np

    wd = np.asarray(omega_D, dtype=float)
    ws = omega_s(omega_a, omega_b)
    weight = 4 * scale / (wd ** 2 + gamma_b ** 2)
    first = wd / ((1j * (omega_a - wd) - gamma_b) * (1j * (omega_a + wd) - gamma_b))
    return weight * (first + (1 + 1j * gamma_b / ws) / ws)
