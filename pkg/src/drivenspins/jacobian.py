"""Mean-field equations of motion, their Jacobian and the cavity eigenvalue.

Coordinates are ordered ``(a, a*, p+, p+*, p_z)``; conjugate pairs are kept
redundantly so that matrices can be compared entry by entry with their
printed block form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BranchAmbiguityError, ConfigError, ConvergenceError, SingularityError
from .model import CavityMode, Shift, SpinDrive, SpinEnsemble, _d_factors, steady_spin_state


@dataclass(frozen=True)
class SystemParams:
    """Cavity, spin ensemble and spin drive taken together."""

    cavity: CavityMode
    spins: SpinEnsemble
    drive: SpinDrive

    @property
    def delta(self) -> float:
        return self.drive.detuning(self.spins.omega_L)

    @property
    def g(self) -> float:
        return self.cavity.g

    def with_coupling(self, g: float) -> "SystemParams":
        return replace(self, cavity=replace(self.cavity, g=g))

    @property
    def rate_scale(self) -> float:
        return max(self.spins.gamma1, self.spins.gamma2, self.cavity.omega)


@dataclass(frozen=True)
class MeanFieldState:
    """Thermal averages: cavity amplitude, transverse and longitudinal polarization.

    ``p_plus`` lives in the frame rotating with the pump.  Pass
    ``physical=True`` to enforce the Bloch-ball bound.
    """

    a: complex = 0j
    p_plus: complex = 0j
    p_z: float = 0.0
    physical: bool = False

    def __post_init__(self):
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "p_plus", complex(self.p_plus))
        object.__setattr__(self, "p_z", float(self.p_z))
        if self.physical:
            if abs(self.p_z) > 1 or self.p_z ** 2 + 4 * abs(self.p_plus) ** 2 > 1 + 1e-12:
                raise ConfigError(f"state outside the Bloch ball: p_z={self.p_z}, p_plus={self.p_plus}")

    @property
    def x_a(self) -> float:
        return 2 * (self.a + self.a.conjugate()).real

    def as_vector(self) -> np.ndarray:
        return np.array([self.a, self.a.conjugate(), self.p_plus, self.p_plus.conjugate(), self.p_z])

    @classmethod
    def from_vector(cls, v) -> "MeanFieldState":
        return cls(complex(v[0]), complex(v[2]), float(np.real(v[4])))


def theta_rhs(state: MeanFieldState, params: SystemParams) -> tuple[complex, complex, float]:
    """Right-hand sides ``Theta`` with ``d/dt (a, p+, p_z) = -Theta``."""
    cav, spins = params.cavity, params.spins
    g, w1 = cav.g, params.drive.omega_1
    a, pp, pz = state.a, state.p_plus, state.p_z
    theta_a = cav.eigenvalue * a - 1j * g * pz
    theta_plus = complex(spins.gamma2, params.delta) * pp + 1j * w1 * pz + 2j * g * (a + a.conjugate()) * pp
    # 2 i w1 (p - p*) = -4 w1 Im p
    theta_z = spins.gamma1 * (pz - spins.p0) - 4 * w1 * pp.imag
    return theta_a, theta_plus, theta_z


def theta_vector(state: MeanFieldState, params: SystemParams) -> np.ndarray:
    ta, tp, tz = theta_rhs(state, params)
    return np.array([ta, ta.conjugate(), tp, tp.conjugate(), tz])


def effective_detuning(state: MeanFieldState, drive: SpinDrive, g_a: float, omega_L: float = 0.0) -> float:
    """Pump detuning shifted by the cavity field, ``delta + g x_a``."""
    return drive.detuning(omega_L) + g_a * state.x_a


def spin_block(spins: SpinEnsemble, drive: SpinDrive) -> np.ndarray:
    delta = drive.detuning(spins.omega_L)
    w1 = drive.omega_1
    return np.array([
        [complex(spins.gamma2, delta), 0, 1j * w1],
        [0, complex(spins.gamma2, -delta), -1j * w1],
        [2j * w1, -2j * w1, spins.gamma1],
    ])


@dataclass(frozen=True)
class JacobianBundle:
    """``J = J0 + g V`` in the basis ``(a, a*, p+, p+*, p_z)``."""

    J0: np.ndarray
    V: np.ndarray
    g: float

    @property
    def J(self) -> np.ndarray:
        return self.J0 + self.g * self.V

    @property
    def J_L(self) -> np.ndarray:
        return self.J0[2:, 2:]


def coupling_matrix(state: MeanFieldState) -> np.ndarray:
    pp, xa = state.p_plus, state.x_a
    V = np.zeros((5, 5), dtype=complex)
    V[0, 4] = -1j
    V[1, 4] = 1j
    V[2, 0] = V[2, 1] = 2j * pp
    V[2, 2] = 1j * xa
    V[3, 0] = V[3, 1] = -2j * pp.conjugate()
    V[3, 3] = -1j * xa
    return V


def build_jacobian(state: MeanFieldState, params: SystemParams) -> JacobianBundle:
    lam = params.cavity.eigenvalue
    J0 = np.zeros((5, 5), dtype=complex)
    J0[0, 0] = lam
    J0[1, 1] = lam.conjugate()
    J0[2:, 2:] = spin_block(params.spins, params.drive)
    return JacobianBundle(J0=J0, V=coupling_matrix(state), g=params.g)


def spin_susceptibility(omega: float, params: SystemParams, *, rtol: float = 1e-13) -> np.ndarray:
    """Closed-form ``chi_L(omega) = (J_L - i omega)^-1``."""
    spins, w1 = params.spins, params.drive.omega_1
    d1, d2, d3 = _d_factors(spins, params.delta, omega)
    dl = d1 * d2 * d3 + 2 * w1 ** 2 * (d1 + d2)
    scale = max(abs(d1), abs(d2), abs(d3), w1) ** 3
    if abs(dl) <= rtol * scale:
        raise SingularityError(f"spin susceptibility is singular at omega={omega} (|D_L|={abs(dl):.3g})")
    w2 = 2 * w1 ** 2
    return np.array([
        [d2 * d3 + w2, w2, -1j * w1 * d2],
        [w2, d1 * d3 + w2, 1j * w1 * d1],
        [-2j * w1 * d2, 2j * w1 * d1, d1 * d2],
    ]) / dl


def resolvent(omega: float, params: SystemParams) -> np.ndarray:
    """5x5 matrix with the spin susceptibility in the spin block, zero elsewhere."""
    R = np.zeros((5, 5), dtype=complex)
    R[2:, 2:] = spin_susceptibility(omega, params)
    return R


def _zeroth_order_state(params: SystemParams) -> MeanFieldState:
    p_plus0, p_z0 = steady_spin_state(params.spins, params.drive)
    return MeanFieldState(0j, p_plus0, p_z0)


def perturbative_lambda1(params: SystemParams) -> Shift:
    """Second-order cavity eigenvalue increment ``Lambda_1``.

    Evaluated from the susceptibility entries at the zeroth-order fixed
    point.  The real/imaginary-part rewrite is evaluated alongside and
    stored in ``metadata['lambda1_alt']``; the literal ``-g^2 (V R V)_11``
    product is stored in ``metadata['lambda1_matrix']``.
    """
    g, wa = params.g, params.cavity.omega
    state = _zeroth_order_state(params)
    pp = state.p_plus
    if g == 0 or params.drive.omega_1 == 0:
        return Shift(0j, {"lambda1_alt": 0j, "lambda1_matrix": 0j})
    chi = spin_susceptibility(wa, params)
    lam1 = 2 * g ** 2 * (pp.conjugate() * chi[2, 1] - pp * chi[2, 0])

    d1, d2, d3 = _d_factors(params.spins, params.delta, wa)
    w1 = params.drive.omega_1
    dl = d1 * d2 * d3 + 2 * w1 ** 2 * (d1 + d2)
    alt = (8 * g ** 2 * w1 / wa ** 3 * (1j * pp.imag * params.delta / wa
                                        + pp.real * complex(1, params.spins.gamma2 / wa))
           / (dl / wa ** 3)) * wa

    V = coupling_matrix(state)
    matrix = -g ** 2 * (V @ resolvent(wa, params) @ V)[0, 0]
    return Shift.from_lambda(lam1, {"lambda1_alt": complex(alt), "lambda1_matrix": complex(matrix)})


def fixed_point(params: SystemParams, seed: MeanFieldState | None = None, *,
                max_iter: int = 50, rtol: float = 1e-12) -> MeanFieldState:
    """Solve ``Theta = 0`` by damped Newton iteration from the zeroth-order state."""
    zeroth = _zeroth_order_state(params)
    if params.g == 0:
        return zeroth
    state = seed if seed is not None else zeroth
    tol = rtol * params.rate_scale
    r = theta_vector(state, params)
    res = np.linalg.norm(r)
    for _ in range(max_iter):
        if res < tol:
            return state
        step = np.linalg.solve(build_jacobian(state, params).J, r)
        lam = 1.0
        for _ in range(30):
            trial = MeanFieldState.from_vector(state.as_vector() - lam * step)
            r_trial = theta_vector(trial, params)
            res_trial = np.linalg.norm(r_trial)
            if res_trial < res or res_trial < tol:
                break
            lam *= 0.5
        state, r, res = trial, r_trial, res_trial
    if res < tol:
        return state
    raise ConvergenceError(f"Newton iteration did not converge in {max_iter} steps", best=state, residual=res)


def numeric_lambda1(params: SystemParams, steps: int = 16, *, ambiguity: float = 1e-3) -> complex:
    """Cavity eigenvalue of the full Jacobian at the fixed point.

    The branch is followed from ``g = 0`` (where it equals the bare cavity
    eigenvalue) in ``steps`` increments, picking at each step the eigenvector
    with the largest overlap with the previous one.
    """
    if steps < 16:
        raise ConfigError("branch continuation needs at least 16 steps")
    lam_a = params.cavity.eigenvalue
    if params.g == 0:
        return lam_a
    prev = np.zeros(5, dtype=complex)
    prev[0] = 1.0
    state = None
    value = lam_a
    for k in range(1, steps + 1):
        p_k = params.with_coupling(params.g * k / steps)
        state = fixed_point(p_k, seed=state)
        evals, evecs = np.linalg.eig(build_jacobian(state, p_k).J)
        evecs = evecs / np.linalg.norm(evecs, axis=0)
        overlap = np.abs(prev.conj() @ evecs)
        order = np.argsort(overlap)[::-1]
        if overlap[order[0]] - overlap[order[1]] < ambiguity:
            raise BranchAmbiguityError(
                f"eigenvalue branch is ambiguous at g={p_k.g:g}",
                candidates=(evals[order[0]], evals[order[1]]),
            )
        prev = evecs[:, order[0]]
        value = complex(evals[order[0]])
    return value


def conjugation_swap(M: np.ndarray) -> np.ndarray:
    """Conjugate ``M`` and swap the partner coordinates (a<->a*, p+<->p+*)."""
    perm = [1, 0, 3, 2, 4]
    return M.conj()[np.ix_(perm, perm)]


__all__ = [
    "SystemParams", "MeanFieldState", "JacobianBundle", "theta_rhs", "theta_vector",
    "effective_detuning", "build_jacobian", "coupling_matrix", "spin_block",
    "spin_susceptibility", "resolvent", "perturbative_lambda1", "fixed_point",
    "numeric_lambda1", "conjugation_swap",
]

