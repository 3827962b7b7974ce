"""Command-line entry point.

Exit codes: 0 success, 1 I/O error, 2 config error, 3 numeric failure,
4 partial sweep (some points failed).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import KINDS, ConfigError, default_config, load_config, with_overrides
from .errors import CapacityError, ConvergenceError, NumericError, UnsupportedConfigurationError
from .io import export_plotdata, LAYOUTS
from .runner import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, run

SUBCOMMANDS = ("spectrum", "power-sweep", "multitone", "laser-model", "estimate", "odmr-temp", "export")

# estimator flags -> config keys; values carry units like the file grammar
ESTIMATE_FLAGS = {
    "s_hyper": ("estimate.s_hyper", "hyperpolarized signal integral"),
    "s_thermal": ("estimate.s_thermal", "thermal signal integral"),
    "b_sm": ("estimate.b_sm", "NMR field, e.g. '6 T'"),
    "b_em": ("estimate.b_em", "DNP field, e.g. '17.6 mT'"),
    "t_l": ("estimate.t_l", "laser-heated temperature, e.g. '360 K'"),
    "t_r": ("estimate.t_r", "room temperature, e.g. '297 K'"),
    "gamma_n": ("estimate.gamma_n", "nuclear gyromagnetic ratio, e.g. '10.7084 MHz/T'"),
}
THERMO_FLAGS = {
    "f_minus": ("thermometry.f_minus", "m_s=0 -> -1 resonance, e.g. '2.3703 GHz'"),
    "f_plus": ("thermometry.f_plus", "m_s=0 -> +1 resonance, e.g. '3.3567 GHz'"),
    "d_ref": ("thermometry.d_ref", "reference zero-field splitting"),
    "t_ref": ("thermometry.t_ref", "temperature at d_ref"),
    "input": ("thermometry.odmr_file", "ODMR CSV (frequency_hz, signal) to fit"),
}


def _global_flags(parser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="experiment config file (INI or JSON)")
    parser.add_argument("--out", default=d if suppress else ".", help="output directory")
    parser.add_argument("--workers", type=int, default=d, help="parallel sweep workers (default: all cores)")
    parser.add_argument("--seed", type=int, default=d, help="seed for synthetic noise")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvdnp", description="NV-center optical DNP simulations and analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    helps = {
        "spectrum": "13C polarization vs MW frequency",
        "power-sweep": "13C polarization vs MW Rabi amplitude",
        "multitone": "compare tone subsets",
        "laser-model": "composite laser-density model curve",
        "estimate": "polarization and enhancement from signal integrals",
        "odmr-temp": "diamond temperature from the ODMR doublet",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name == "estimate":
            for flag, (_, h) in ESTIMATE_FLAGS.items():
                p.add_argument("--" + flag.replace("_", "-"), dest=flag, help=h)
        if name == "odmr-temp":
            for flag, (_, h) in THERMO_FLAGS.items():
                p.add_argument("--" + flag.replace("_", "-"), dest=flag, help=h)
    p = sub.add_parser("export", parents=[common], help="write per-figure plot data from a finished run")
    p.add_argument("--run", required=True, help="directory holding the run's manifest.json")
    p.add_argument("--layout", required=True, help=f"one of {', '.join(LAYOUTS)}")
    return parser


def _config_for(args):
    kind = "estimate" if args.command == "odmr-temp" else args.command
    cfg = load_config(args.config, kind) if args.config else default_config(kind)
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError("override must look like section.key=value", item, None, "SECTION.KEY=VALUE")
        overrides[key.strip()] = value.strip()
    flags = ESTIMATE_FLAGS if args.command == "estimate" else THERMO_FLAGS if args.command == "odmr-temp" else {}
    for flag, (key, _) in flags.items():
        if getattr(args, flag, None) is not None:
            overrides[key] = getattr(args, flag)
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    return with_overrides(cfg, overrides) if overrides else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export":
            path = export_plotdata(args.run, args.layout, args.out if args.out != "." else None)
            print(path)
            return EXIT_OK
        cfg = _config_for(args)
        workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
        outcome = run(cfg, args.out, workers=workers, mode=args.command)
    except (ConfigError, CapacityError, UnsupportedConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ConvergenceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for line in outcome.report:
        print(line)
    return outcome.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
