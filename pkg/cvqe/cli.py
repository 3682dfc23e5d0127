"""
Command-line front end.

Usage:
    python -m cvqe scan --config configs/ntau_sweep_q8.toml --out runs/ntau_sweep_q8 --threads 4
    python -m cvqe oracle --config configs/ntau_sweep_q8.toml --scan runs/ntau_sweep_q8/scan.csv
    python -m cvqe compile --config configs/q50_compile.toml --out runs/q50
    python -m cvqe compare-methods --config configs/methods_q4.toml
    python -m cvqe weights --order 3
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
from loguru import logger

from cvqe.config import ScanConfig, load_scan_config, settings
from cvqe.errors import CapacityError, ConfigError, CVQEError, SolverError
from cvqe.fermion import to_hartree
from cvqe.logs import setup_logging
from cvqe.scan import apply_oracle, compare_scan, compile_scan, converge_scan, oracle_energy, run_scan
from cvqe.series import weights_table

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_SOLVER = 4


def _load(args: argparse.Namespace) -> ScanConfig:
    config = load_scan_config(args.config)
    if getattr(args, "seeds", None) is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        sampling = config.sampling.model_copy(update={"seeds": list(range(args.seeds))})
        config = config.model_copy(update={"sampling": sampling})
    return config


def _out_dir(args: argparse.Namespace, config: Optional[ScanConfig] = None) -> Path:
    if args.out is not None:
        return Path(args.out)
    if config is not None:
        return Path(config.output.directory)
    return Path(settings.default_output_path)


def cmd_scan(args: argparse.Namespace) -> int:
    config = _load(args)
    outcome = run_scan(config, _out_dir(args, config), threads=args.threads)
    for name, path in outcome.paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    config = _load(args)
    model = config.model.chain()
    energy = oracle_energy(model)
    method = "free_fermion" if model.is_free() else "ed"
    line = f"E_exact = {energy!r} t ({method}, Q={model.Q}, Ne={model.Ne})"
    if config.units.t_hartree is not None:
        line += f" = {to_hartree(energy, config.units.t_hartree)!r} Ha"
    print(line)

    if args.scan is not None:
        try:
            rows = pd.read_csv(args.scan, dtype={"config_hash": str})
        except (OSError, pd.errors.ParserError) as e:
            raise ConfigError(f"{args.scan}: cannot read scan file ({e})") from e
        rows = apply_oracle(rows, config, energy)
        out_dir = _out_dir(args, config)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "oracle.csv"
        rows.to_csv(path, index=False, na_rep="")
        print(rows[["ntau", "dtau_tau0", "seed", "selection", "E_B", "dE"]].to_string(index=False))
        print(f"oracle: {path}")
    logger.success(f"Oracle energy {energy:.12f} ({method})")
    return EXIT_OK


def cmd_compile(args: argparse.Namespace) -> int:
    config = _load(args)
    out_dir = _out_dir(args, config)
    resources = compile_scan(config, out_dir)
    print(json.dumps(resources, indent=2))
    logger.success(f"Wrote {len(resources)} circuits to {out_dir}")
    return EXIT_OK


def cmd_compare_methods(args: argparse.Namespace) -> int:
    config = _load(args)
    out_dir = _out_dir(args, config) if args.out is not None else None
    report = compare_scan(config, out_dir)
    print(report.to_json())
    return EXIT_OK


def cmd_converge(args: argparse.Namespace) -> int:
    config = _load(args)
    results = converge_scan(config, _out_dir(args, config))
    for rule, result in results.items():
        print(f"{rule}: E_B={result.best.energy!r} at N_tau={result.best.ntau}, dtau={result.best.dtau:g} "
              f"({len(result.trace)} points, stopped early: {result.stopped_early})")
    return EXIT_OK


def cmd_weights(args: argparse.Namespace) -> int:
    table = weights_table(args.order, cumulative=args.cumulative)
    print(table.to_string(index=False))
    if args.out is not None:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / f"weights_order{args.order}.csv"
        table.to_csv(path, index=False)
        print(f"weights: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvqe",
        description="Diabatic state preparation + measurement-defined subspace solver",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # N_tau sweep of the Q=8 chain with three subspace sizes
  %(prog)s scan --config configs/ntau_sweep_q8.toml --out runs/ntau_sweep_q8 --seeds 5 --threads 4

  # Exact reference energy, and dE for an existing scan
  %(prog)s oracle --config configs/ntau_sweep_q8.toml --scan runs/ntau_sweep_q8/scan.csv

  # OpenQASM export of the Q=50 evolution circuit
  %(prog)s compile --config configs/q50_compile.toml --out runs/q50

  # Rotated-basis vs computational-basis shot collection
  %(prog)s compare-methods --config configs/methods_q4.toml

  # Operator-string weight table
  %(prog)s weights --order 3
        """
    )
    parser.add_argument("--log-level", default=settings.log_level, help="Log level (default: %(default)s)")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, required=True, help="TOML scan configuration")
    common.add_argument("--out", type=Path, default=None, help="Output directory (default: [output].directory)")
    common.add_argument("--seeds", type=int, default=None, help="Use seeds 0..N-1 instead of the configured list")
    common.add_argument("--threads", type=int, default=settings.default_threads, help="Worker threads (default: %(default)s)")

    scan = sub.add_parser("scan", parents=[common], help="Run the (N_tau, dtau) grid")
    scan.set_defaults(handler=cmd_scan)

    oracle = sub.add_parser("oracle", parents=[common], help="Exact reference energy")
    oracle.add_argument("--scan", type=Path, default=None, help="Scan CSV to annotate with dE")
    oracle.set_defaults(handler=cmd_oracle)

    compile_ = sub.add_parser("compile", parents=[common], help="Emit OpenQASM circuits and resource counts")
    compile_.set_defaults(handler=cmd_compile)

    compare = sub.add_parser("compare-methods", parents=[common], help="Compare the two shot-collection methods")
    compare.set_defaults(handler=cmd_compare_methods)

    converge = sub.add_parser("converge", parents=[common], help="Walk the grid until E_B stops improving")
    converge.set_defaults(handler=cmd_converge)

    weights = sub.add_parser("weights", help="Operator-string weight table")
    weights.add_argument("--order", type=int, required=True, help="Expansion order (<= 8)")
    weights.add_argument("--cumulative", action="store_true", help="Include every order up to --order")
    weights.add_argument("--out", type=Path, default=None, help="Directory for the CSV export")
    weights.set_defaults(handler=cmd_weights)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level, settings.log_file, stream=sys.stderr)

    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        return EXIT_CONFIG
    except CapacityError as e:
        logger.error(f"Capacity exceeded: {e}")
        return EXIT_CAPACITY
    except SolverError as e:
        logger.error(f"Solver failed: {e} (residual {e.residual})")
        return EXIT_SOLVER
    except (CVQEError, OSError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
