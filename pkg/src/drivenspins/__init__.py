"""Damping and frequency shifts of a cavity mode coupled to driven spins."""

from .errors import (
    BranchAmbiguityError, ConfigError, ConvergenceError, DivergenceError, DrivenSpinsError,
    InsufficientDataError, NumericalError, PoleError, SettleError, SingularityError, ThresholdError,
)
from .intermode import (
    SpiralDrive, ct1_shift, ct2_shift, omega_s, parametric_sidebands, spiral_steady_amplitude,
    upsilon_ab_total,
)
from .jacobian import (
    MeanFieldState, SystemParams, build_jacobian, fixed_point, numeric_lambda1,
    perturbative_lambda1, spin_susceptibility,
)
from .model import (
    CavityMode, Shift, SpinDrive, SpinEnsemble, combine_shifts, determinant_DL,
    lambda1_closed_form, max_damping_shift, steady_spin_state, thermal_polarization, upsilon_aL,
)
from .sweep import RunConfig, load_config, map_sweep, oracle_compare
from .timedomain import hysteresis_loop, integrate, ringdown, ringdown_damping

__version__ = "0.1.0"
