"""Command-line entry point: ``drivenspins <command> [--config PATH] ...``.

Exit status is 0 on success, 2 for configuration errors, 3 for numerical
failures (poles, divergence, non-convergence) and 4 when the oracle
comparison fails its scaling check.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, NumericalError
from .model import max_damping_shift, upsilon_aL
from .sweep import (
    default_config_path, hysteresis_run, load_config, map_sweep, oracle_compare,
    ringdown_run, single_point, with_overrides,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INVARIANT = 0, 2, 3, 4

COMMANDS = ("shift", "map", "oracle", "ringdown", "hysteresis", "maxsearch")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drivenspins",
                                     description="Cavity damping shifts induced by driven spins.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration (default: bundled device config)")
    common.add_argument("--out", metavar="PATH", help="output file (overrides 'out' in the config)")
    common.add_argument("--threads", type=int, metavar="N", help="worker threads for map sweeps")
    common.add_argument("--mode", choices=("si", "normalized"), help="unit convention of the config")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("shift", parents=[common], help="total shift at the configured working point")
    sub.add_parser("map", parents=[common], help="two-axis map of the shift, written as CSV")
    sub.add_parser("oracle", parents=[common], help="closed-form vs perturbative vs numeric eigenvalue")
    sub.add_parser("ringdown", parents=[common], help="time-domain ringdown of the cavity mode")
    sub.add_parser("hysteresis", parents=[common], help="(x_a, p_z) loop under a prescribed cavity motion")
    ms = sub.add_parser("maxsearch", parents=[common], help="largest damping change over detuning and drive")
    ms.add_argument("--threshold", type=float, default=1e-3,
                    help="largest admissible gamma2/omega_a (default 1e-3)")
    return parser


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _complex(z: complex) -> dict:
    return {"re": z.real, "im": z.imag}


def run(args: argparse.Namespace) -> int:
    config = load_config(args.config or default_config_path())
    if args.threads is not None and args.threads < 1:
        raise ConfigError("threads: must be at least 1")
    config = with_overrides(config, out=args.out, threads=args.threads, mode=args.mode)
    out = config.out

    if args.command == "shift":
        shift = single_point(config)
        payload = {"upsilon": _complex(shift.upsilon), "damping_change": shift.damping_change + 0.0,
                   "frequency_shift": shift.frequency_shift, "config_hash": config.config_hash()}
        if "upsilon_aL" in shift.metadata:
            payload["upsilon_aL"] = _complex(shift.metadata["upsilon_aL"])
            payload["upsilon_ab"] = _complex(shift.metadata["upsilon_ab"])
        _emit(payload)
        if out:
            with open(out, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
        return EXIT_OK

    if args.command == "map":
        if not out:
            raise ConfigError("out: map needs an output path (--out or 'out' in the config)")
        grid = map_sweep(config)
        grid.write_csv(out)
        dmp = grid.damping_change
        _emit({"rows": int(dmp.size), "poles": int(grid.pole.sum()), "out": out,
               "config_hash": grid.config_hash,
               "max_damping_change": float(dmp[~grid.pole].max()) if (~grid.pole).any() else None,
               "min_damping_change": float(dmp[~grid.pole].min()) if (~grid.pole).any() else None})
        return EXIT_OK

    if args.command == "oracle":
        report = oracle_compare(config)
        table = report.table()
        sys.stdout.write(table)
        if out:
            with open(out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(table)
        print(f"exponent={report.exponent} min_exponent={report.min_exponent} "
              f"regime_bound={report.regime_bound:.3g} regime_ok={report.regime_ok} "
              f"passed={report.passed}")
        return EXIT_OK if report.passed else EXIT_INVARIANT

    if args.command == "ringdown":
        result = ringdown_run(config, out)
        params = config.system()
        predicted = params.cavity.gamma
        if params.g > 0 and params.drive.omega_1 > 0:
            predicted -= upsilon_aL(params.cavity, params.spins, params.drive).upsilon.imag
        _emit({"gamma_eff": result.gamma_eff, "gamma_predicted": predicted,
               "fit_window": list(result.window), "envelope_points": result.n_points, "out": out})
        return EXIT_OK

    if args.command == "hysteresis":
        result = hysteresis_run(config, out)
        _emit({"area": result.area, "work_per_cycle": result.work_per_cycle,
               "cycle_areas": result.cycle_areas, "out": out})
        return EXIT_OK

    if args.command == "maxsearch":
        res = max_damping_shift(config.spins(), config.cavity(), threshold=args.threshold)
        payload = {"value": res.value, "value_normalized": res.value_normalized,
                   "red_location": list(res.red_location), "blue_location": list(res.blue_location),
                   "blue_value": res.blue_value}
        _emit(payload)
        if out:
            with open(out, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
        return EXIT_OK

    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
