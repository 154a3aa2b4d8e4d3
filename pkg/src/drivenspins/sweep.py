"""Run configuration, parameter maps, oracle comparison and time-domain drivers.

Configurations are flat JSON objects.  In ``si`` mode every frequency, rate
and coupling is given in Hz and multiplied by 2 pi on use; times are in
seconds.  In ``normalized`` mode values are taken verbatim as angular
quantities (conventionally in units of the cavity frequency, ``f_a = 1``)
and times in the reciprocal unit.  The intermode scale ``S = K^2 |F_bf|^2``
is always taken verbatim in (rad/s)^4.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .intermode import SpiralDrive, upsilon_ab_array, upsilon_ab_total
from .jacobian import SystemParams, numeric_lambda1, perturbative_lambda1
from .model import (
    POLE_THRESHOLD, CavityMode, Shift, SpinDrive, SpinEnsemble, combine_shifts,
    lambda1_closed_form, thermal_polarization, upsilon_aL, upsilon_aL_terms,
)
from .timedomain import HysteresisResult, RingdownResult, hysteresis_loop, ringdown

MODES = ("si", "normalized")
AXIS_NAMES = {"si": ("f_L", "f_p"), "normalized": ("delta_pL", "omega_1")}


@dataclass(frozen=True)
class Axis:
    name: str
    start: float
    stop: float
    count: int
    linear: bool = True

    def values(self) -> np.ndarray:
        if self.linear:
            return np.linspace(self.start, self.stop, self.count)
        return np.geomspace(self.start, self.stop, self.count)

    def to_dict(self) -> dict:
        return {"name": self.name, "start": self.start, "stop": self.stop,
                "count": self.count, "linear": self.linear}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration, stored in the units of the file."""

    gamma_2: float
    mode: str = "si"
    f_a: float = 1.0
    gamma_a: float = 0.0
    f_b: float | None = None
    gamma_b: float | None = None
    f_L: float = 0.0
    f_p: float | None = None
    f_1: float = 0.0
    gamma_1: float | None = None
    temperature: float | None = None
    p0: float | None = None
    g_a: float = 0.0
    S: float | None = None
    axes: tuple[Axis, ...] = ()
    out: str | None = None
    threads: int = 1
    kick: float | None = None
    dt: float | None = None
    t_end: float | None = None
    x_amplitude: float | None = None
    f_osc: float | None = None
    n_settle: int = 20
    n_measure: int = 5
    g_list: tuple[float, ...] = ()

    def __post_init__(self):
        if self.gamma_1 is None:
            object.__setattr__(self, "gamma_1", 2 * self.gamma_2)
        if self.f_p is None:
            object.__setattr__(self, "f_p", self.f_L)

    @property
    def unit(self) -> float:
        return 2 * math.pi if self.mode == "si" else 1.0

    def angular(self, key: str) -> float | None:
        value = getattr(self, key)
        return None if value is None else value * self.unit

    def spins(self, omega_L: float | None = None) -> SpinEnsemble:
        w_L = self.angular("f_L") if omega_L is None else omega_L
        # an explicit p0 takes precedence over the temperature
        temperature = self.temperature if self.p0 is None else None
        return SpinEnsemble(self.angular("gamma_1"), self.angular("gamma_2"), omega_L=w_L,
                            p0=self.p0, temperature=temperature)

    def cavity(self, g: float | None = None) -> CavityMode:
        return CavityMode(self.angular("f_a"), self.angular("gamma_a"),
                          self.angular("g_a") if g is None else g)

    def drive(self) -> SpinDrive:
        return SpinDrive(self.angular("f_p"), self.angular("f_1"))

    def system(self, g: float | None = None) -> SystemParams:
        return SystemParams(self.cavity(g), self.spins(), self.drive())

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"missing required key(s) for this run: {', '.join(missing)}")

    def spiral(self, omega_p: float | None = None) -> SpiralDrive:
        """Spiral-mode drive derived from the pump, ``omega_D = omega_p - omega_b``."""
        self.require("f_b", "gamma_b", "S")
        w_p = self.angular("f_p") if omega_p is None else omega_p
        return SpiralDrive.from_scale(self.S, w_p - self.angular("f_b"))

    def to_dict(self, *, include_runtime: bool = True) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None or value == () or (f.name in ("out", "threads") and not include_runtime):
                continue
            if f.name == "axes":
                value = [a.to_dict() for a in value]
            elif f.name == "g_list":
                value = list(value)
            out[f.name] = value
        return out

    def config_hash(self) -> str:
        """SHA-256 of the canonical config, ignoring output path and thread count."""
        text = json.dumps(self.to_dict(include_runtime=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


_KNOWN_KEYS = {f.name for f in fields(RunConfig)}


def _number(data: dict, key: str, *, lower=None, strict=False, upper=None, upper_strict=False):
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{key}: must be finite, got {value}")
    if lower is not None and (value <= lower if strict else value < lower):
        raise ConfigError(f"{key}: must be {'>' if strict else '>='} {lower}, got {value}")
    if upper is not None and (value >= upper if upper_strict else value > upper):
        raise ConfigError(f"{key}: must be {'<' if upper_strict else '<='} {upper}, got {value}")
    return value


def _integer(data: dict, key: str, lower: int) -> int:
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, int) or value < lower:
        raise ConfigError(f"{key}: expected an integer >= {lower}, got {value!r}")
    return value


def _parse_axes(raw: Any, mode: str) -> tuple[Axis, ...]:
    if not isinstance(raw, list) or len(raw) != 2:
        raise ConfigError("axes: expected a list of two axis objects")
    allowed = AXIS_NAMES[mode]
    axes = []
    for k, item in enumerate(raw):
        where = f"axes[{k}]"
        if not isinstance(item, dict):
            raise ConfigError(f"{where}: expected an object")
        unknown = set(item) - {"name", "start", "stop", "count", "linear"}
        if unknown:
            raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
        if item.get("name") != allowed[k]:
            raise ConfigError(f"{where}.name: expected {allowed[k]!r} in {mode} mode, got {item.get('name')!r}")
        for key in ("start", "stop", "count"):
            if key not in item:
                raise ConfigError(f"{where}.{key}: missing")
        start = _number(item, "start")
        stop = _number(item, "stop")
        count = _integer(item, "count", 2)
        linear = item.get("linear", True)
        if not isinstance(linear, bool):
            raise ConfigError(f"{where}.linear: expected true or false")
        if not start < stop:
            raise ConfigError(f"{where}: start must be below stop ({start} >= {stop})")
        if not linear and start <= 0:
            raise ConfigError(f"{where}: logarithmic axis needs start > 0")
        axes.append(Axis(allowed[k], start, stop, count, linear))
    return tuple(axes)


def parse_config(data: Any) -> RunConfig:
    """Validate a decoded JSON object and build a :class:`RunConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - _KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    mode = data.get("mode", "si")
    if mode not in MODES:
        raise ConfigError(f"mode: expected one of {MODES}, got {mode!r}")
    if "gamma_2" not in data:
        raise ConfigError("gamma_2: missing")

    kw: dict[str, Any] = {"mode": mode}
    bounds = {
        "f_a": dict(lower=0, strict=True), "gamma_a": dict(lower=0), "f_b": dict(lower=0, strict=True),
        "gamma_b": dict(lower=0), "f_L": dict(lower=0), "f_p": {}, "f_1": dict(lower=0),
        "gamma_1": dict(lower=0, strict=True), "gamma_2": dict(lower=0, strict=True),
        "temperature": dict(lower=0, strict=True), "p0": dict(lower=-1, strict=True, upper=0),
        "g_a": dict(lower=0), "S": dict(lower=0), "kick": {}, "dt": dict(lower=0, strict=True),
        "t_end": dict(lower=0, strict=True), "x_amplitude": dict(lower=0),
        "f_osc": dict(lower=0, strict=True),
    }
    for key, rule in bounds.items():
        if key in data:
            kw[key] = _number(data, key, **rule)
    if mode == "si" and "f_a" not in data:
        raise ConfigError("f_a: missing (required in si mode)")
    for key, lower in (("threads", 1), ("n_settle", 0), ("n_measure", 1)):
        if key in data:
            kw[key] = _integer(data, key, lower)
    if "out" in data:
        if not isinstance(data["out"], str) or not data["out"]:
            raise ConfigError("out: expected a non-empty path string")
        kw["out"] = data["out"]
    if "axes" in data:
        kw["axes"] = _parse_axes(data["axes"], mode)
    if "g_list" in data:
        raw = data["g_list"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("g_list: expected a non-empty list of couplings")
        kw["g_list"] = tuple(_number({"g_list": v}, "g_list", lower=0) for v in raw)
    if mode == "normalized" and "temperature" in kw:
        raise ConfigError("temperature: not meaningful in normalized mode, give p0 instead")
    if "p0" not in kw and "temperature" not in kw:
        raise ConfigError("p0: give either p0 or temperature")

    config = RunConfig(**kw)
    # cross-check the physical invariants of the owning types
    try:
        config.spins()
        config.cavity()
        config.drive()
    except ConfigError as exc:
        raise ConfigError(f"invalid parameters: {exc}") from None
    return config


def load_config(path) -> RunConfig:
    """Read and validate a UTF-8 JSON configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8 ({exc.reason})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(data)


def dump_config(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


def default_config_path() -> Path:
    return Path(__file__).parent / "data" / "default_config.json"


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Apply CLI overrides and re-validate."""
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if not overrides:
        return config
    data = config.to_dict()
    if "mode" in overrides and overrides["mode"] != config.mode:
        data.pop("axes", None)
    data.update(overrides)
    return parse_config(data)


# ---------------------------------------------------------------- formatting

def _fmt(x: float) -> str:
    return "%.17g" % x


def write_csv(path, header: list[str], rows) -> None:
    """Comma-separated, LF line endings, 17 significant digits, ``None`` as empty field."""
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join("" if v is None else (v if isinstance(v, str) else _fmt(v)) for v in row))
        buf.write("\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


# ---------------------------------------------------------------- map sweep

MAP_COLUMNS = ["axis1", "axis2", "re_upsilon_aL", "im_upsilon_aL", "re_upsilon_ab",
               "im_upsilon_ab", "re_upsilon_a", "im_upsilon_a", "pole"]


@dataclass
class SweepGrid:
    """Map samples; arrays have shape ``(count2, count1)`` (axis2-major)."""

    axis1: Axis
    axis2: Axis
    upsilon_aL: np.ndarray
    upsilon_ab: np.ndarray
    pole_aL: np.ndarray
    pole_ab: np.ndarray
    config_hash: str

    @property
    def upsilon_a(self) -> np.ndarray:
        return self.upsilon_aL + self.upsilon_ab

    @property
    def pole(self) -> np.ndarray:
        return self.pole_aL | self.pole_ab

    @property
    def damping_change(self) -> np.ndarray:
        return -self.upsilon_a.imag

    def rows(self):
        v1, v2 = self.axis1.values(), self.axis2.values()
        for j, y in enumerate(v2):
            for i, x in enumerate(v1):
                aL = None if self.pole_aL[j, i] else self.upsilon_aL[j, i]
                ab = None if self.pole_ab[j, i] else self.upsilon_ab[j, i]
                total = None if aL is None or ab is None else aL + ab
                yield (x, y, *_parts(aL), *_parts(ab), *_parts(total),
                       "1" if self.pole[j, i] else "0")

    def write_csv(self, path) -> None:
        write_csv(path, MAP_COLUMNS, self.rows())


def _parts(z):
    return (None, None) if z is None else (float(z.real) + 0.0, float(z.imag) + 0.0)


def _map_row(config: RunConfig, axis1: np.ndarray, y: float, with_ab: bool):
    """One row of the map at fixed axis2 value ``y``; returns four arrays."""
    wa, g = config.angular("f_a"), config.angular("g_a")
    g1, g2 = config.angular("gamma_1"), config.angular("gamma_2")
    if config.mode == "si":
        w_L = axis1 * 2 * math.pi
        w_p = np.full_like(w_L, y * 2 * math.pi)
        w1 = np.full_like(w_L, config.angular("f_1"))
        if config.p0 is None:
            p0 = thermal_polarization(w_L, config.temperature)
        else:
            p0 = np.full_like(w_L, config.p0)
    else:
        w_L = np.full_like(axis1, config.angular("f_L"))
        w_p = w_L + axis1 * wa
        w1 = np.full_like(axis1, y * wa)
        p0 = np.full_like(axis1, config.spins().p0)
    num, den = upsilon_aL_terms(wa, g, g1, g2, p0, w_p - w_L, w1)
    pole_aL = np.abs(den) < POLE_THRESHOLD
    with np.errstate(divide="ignore", invalid="ignore"):
        aL = np.where(pole_aL, 0, num / np.where(pole_aL, 1, den))
    if with_ab:
        wd = w_p - config.angular("f_b")
        gb = config.angular("gamma_b")
        pole_ab = (gb == 0) & ((wd == 0) | (np.abs(wd) == wa))
        with np.errstate(divide="ignore", invalid="ignore"):
            ab = upsilon_ab_array(config.S, np.where(pole_ab, 1.0, wd), gb, wa, config.angular("f_b"))
        ab = np.where(pole_ab, 0, ab)
    else:
        ab = np.zeros_like(aL)
        pole_ab = np.zeros(aL.shape, dtype=bool)
    bad = ~np.isfinite(aL)
    pole_aL = pole_aL | bad
    aL = np.where(bad, 0, aL)
    bad = ~np.isfinite(ab)
    return aL, ab, pole_aL, pole_ab | bad


def map_sweep(config: RunConfig, threads: int | None = None) -> SweepGrid:
    """Evaluate the total shift on the configured two-axis grid.

    In si mode the axes are ``(f_L, f_p)`` in Hz and the spiral-mode term is
    always included (``S``, ``f_b`` and ``gamma_b`` are required).  In
    normalized mode the axes are ``(delta_pL, omega_1)`` in units of the
    cavity frequency and the spiral term is added only when ``S`` is given.
    Rows are computed as independent tasks and assembled in axis2 order, so
    the result does not depend on the thread count.
    """
    if len(config.axes) != 2:
        raise ConfigError("axes: map mode needs two axes")
    with_ab = config.mode == "si" or config.S is not None
    if with_ab:
        config.require("f_b", "gamma_b", "S")
    axis1, axis2 = config.axes
    x = axis1.values()
    ys = axis2.values()
    threads = threads or config.threads
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda y: _map_row(config, x, y, with_ab), ys))
    else:
        rows = [_map_row(config, x, y, with_ab) for y in ys]
    aL, ab, p_aL, p_ab = (np.array(r) for r in zip(*rows))
    return SweepGrid(axis1, axis2, aL, ab, p_aL, p_ab, config.config_hash())


def single_point(config: RunConfig) -> Shift:
    """Total shift at the configured working point."""
    aL = upsilon_aL(config.cavity(), config.spins(), config.drive())
    if config.S is None:
        return aL
    ab = upsilon_ab_total(config.spiral(), config.angular("gamma_b"), config.angular("f_a"),
                          config.angular("f_b"))
    return combine_shifts(aL, ab)


# ---------------------------------------------------------------- oracle

@dataclass
class OracleRow:
    g: float
    closed_form: complex
    perturbative: complex
    numeric: complex

    @property
    def numeric_deviation(self) -> float:
        return abs(self.numeric - self.perturbative)

    @property
    def closed_form_deviation(self) -> float:
        if self.perturbative == 0:
            return abs(self.closed_form)
        return abs(self.closed_form - self.perturbative) / abs(self.perturbative)


@dataclass
class OracleReport:
    """Eigenvalue increments from three routes, per coupling.

    ``exponent`` is the log-log slope of ``|numeric - perturbative|``
    against ``g``.  The check passes when the remainder falls off at least
    as fast as ``g^min_exponent`` and the closed form stays inside
    ``regime_bound`` (relative).
    """

    lam_a: complex
    rows: list[OracleRow]
    exponent: float | None
    regime_bound: float
    min_exponent: float = 2.7
    zero_tol: float = 1e-12

    @property
    def scaling_ok(self) -> bool:
        if self.exponent is None:
            return all(r.numeric_deviation <= self.zero_tol * abs(self.lam_a) for r in self.rows)
        return self.exponent >= self.min_exponent

    @property
    def regime_ok(self) -> bool:
        return all(r.closed_form_deviation <= self.regime_bound for r in self.rows if r.g > 0)

    @property
    def passed(self) -> bool:
        return self.scaling_ok

    def table(self) -> str:
        head = ("g", "re_lambda_V3", "im_lambda_V3", "re_lambda_V1", "im_lambda_V1",
                "re_lambda_num", "im_lambda_num", "dev_num_V1", "rel_dev_V3_V1")
        lines = [",".join(head)]
        for r in self.rows:
            vals = [r.g]
            for lam in (r.closed_form, r.perturbative, r.numeric):
                full = self.lam_a + lam
                vals += [full.real, full.imag]
            vals += [r.numeric_deviation, r.closed_form_deviation]
            lines.append(",".join(_fmt(v) for v in vals))
        return "\n".join(lines) + "\n"


def fit_exponent(g, deviation) -> float | None:
    g, deviation = np.asarray(g, float), np.asarray(deviation, float)
    ok = (g > 0) & (deviation > 0)
    if np.count_nonzero(ok) < 2:
        return None
    return float(np.polyfit(np.log(g[ok]), np.log(deviation[ok]), 1)[0])


def oracle_compare(config: RunConfig, g_list=None, *, steps: int = 16) -> OracleReport:
    """Closed-form, perturbative and numeric cavity eigenvalue increments."""
    g_values = [float(g) * config.unit for g in (g_list if g_list is not None else config.g_list)]
    if not g_values:
        raise ConfigError("g_list: at least one coupling is required")
    rows = []
    base = config.system()
    lam_a = base.cavity.eigenvalue
    for g in g_values:
        p = base.with_coupling(g)
        v3 = lambda1_closed_form(p.cavity, p.spins, p.drive)
        v1 = perturbative_lambda1(p).lambda_increment
        num = numeric_lambda1(p, steps) - lam_a
        rows.append(OracleRow(g, v3, v1, num))
    exponent = fit_exponent([r.g for r in rows], [r.numeric_deviation for r in rows])
    spins = base.spins
    bound = 5 * (spins.gamma1 + spins.gamma2) / base.cavity.omega
    return OracleReport(lam_a, rows, exponent, bound)


# ---------------------------------------------------------------- time domain

TRAJECTORY_COLUMNS = ["t", "re_a", "im_a", "re_p_plus", "im_p_plus", "p_z"]
LOOP_COLUMNS = ["x_a", "p_z"]


def default_kick(params: SystemParams) -> float:
    """Kick small enough that the detuning modulation ``4 g |a|`` stays below 5% of ``gamma2``."""
    if params.g == 0:
        return 1e-3
    return 0.05 * params.spins.gamma2 / (4 * params.g)


def ringdown_run(config: RunConfig, out=None) -> RingdownResult:
    params = config.system()
    kick = config.kick if config.kick is not None else default_kick(params)
    result = ringdown(params, kick, dt=config.dt, t_end=config.t_end)
    if out is not None:
        tr = result.trajectory
        write_csv(out, TRAJECTORY_COLUMNS,
                  zip(tr.times, tr.a.real, tr.a.imag, tr.p_plus.real, tr.p_plus.imag, tr.p_z))
    return result


def hysteresis_run(config: RunConfig, out=None) -> HysteresisResult:
    config.require("f_osc")
    params = config.system()
    amplitude = config.x_amplitude
    if amplitude is None:
        if params.g == 0:
            raise ConfigError("x_amplitude: required when g_a = 0")
        amplitude = 0.01 * params.spins.gamma2 / params.g
    result = hysteresis_loop(params, amplitude, config.angular("f_osc"),
                             config.n_settle, config.n_measure)
    if out is not None:
        write_csv(out, LOOP_COLUMNS, result.loop)
    return result


__all__ = [
    "Axis", "RunConfig", "SweepGrid", "OracleRow", "OracleReport", "parse_config", "load_config",
    "dump_config", "default_config_path", "with_overrides", "write_csv", "map_sweep", "single_point",
    "oracle_compare", "fit_exponent", "ringdown_run", "hysteresis_run", "default_kick",
    "MAP_COLUMNS", "TRAJECTORY_COLUMNS", "LOOP_COLUMNS",
]
