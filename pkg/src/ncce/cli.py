"""Command line entry point: ``ncce <subcommand> [options]``.

Exit codes: 0 success, 1 configuration error, 2 runtime/numerical error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, NcceError
from .experiments import persistence as io
from .experiments.sweeps import find_min_measurements, sweep_array_size, sweep_mcs
from .experiments.trial import TrialConfig, run_trial
from .validation import run_checks

log = logging.getLogger("ncce")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _int_list(text: str) -> list[int]:
    """``"6,8,10"`` or ``"6:24:2"`` (inclusive stop)."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            return list(range(start, stop + 1, step))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="YAML/JSON file with TrialConfig fields")
    parser.add_argument("--seed", type=int, help="base seed (overrides the config)")
    parser.add_argument("--trials", type=int, default=200, help="trials per sweep point")
    parser.add_argument("--out", type=Path, help="output path (default: stdout)")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--plot", action="store_true", help="render a PNG next to --out")
    parser.add_argument("-n", "--n-elements", type=int)
    parser.add_argument("-k", "--k-paths", type=int)
    parser.add_argument("-m", type=int)
    parser.add_argument("--m-cs", type=int)
    parser.add_argument("--estimator", choices=("noncoherent", "coherent"))
    parser.add_argument("--ensemble", choices=("quantized", "gaussian"))
    parser.add_argument("--noise-std", type=float)


def _mcs_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mcs-factor", type=float, default=1.5, help="c in M_CS = c*K*log2(N)")
    parser.add_argument("--mcs-search", action="store_true", help="also try rescaled M_CS at each rung")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncce", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trial", help="run one seeded trial and print its record")
    _common(p)
    p.add_argument("--index", type=int, default=0, help="trial index stored in the record")

    p = sub.add_parser("sweep-mcs", help="beamforming loss versus M_CS at fixed M")
    _common(p)
    p.add_argument("--mcs", type=_int_list, required=True, help="e.g. 6:24:2 or 6,8,12")

    p = sub.add_parser("min-m", help="smallest M meeting the success target")
    _common(p)
    p.add_argument("--target", type=float, default=0.99)
    p.add_argument("--loss-db", type=float, default=1.0)
    p.add_argument("--m-cap", type=int, default=8192)
    _mcs_flags(p)

    p = sub.add_parser("scaling", help="minimal M over a grid of array sizes and path counts")
    _common(p)
    p.add_argument("--n-values", type=_int_list, default=[32, 128, 512])
    p.add_argument("--k-values", type=_int_list, default=[1, 2])
    p.add_argument("--target", type=float, default=0.99)
    p.add_argument("--loss-db", type=float, default=1.0)
    p.add_argument("--m-cap", type=int, default=8192)
    p.add_argument("--compare-coherent", action="store_true")
    _mcs_flags(p)

    sub.add_parser("validate", help="run the invariant suite")
    return parser


def _config(args) -> TrialConfig:
    if args.config is not None:
        cfg = io.load_config(args.config)
    else:
        missing = [f for f in ("n_elements", "k_paths") if getattr(args, f) is None]
        if missing:
            raise ConfigError(f"without --config, pass {', '.join('--' + m.replace('_', '-') for m in missing)}")
        cfg = TrialConfig(n_elements=args.n_elements, k_paths=args.k_paths, m=args.m or 1, m_cs=args.m_cs or 0)
    overrides = {
        "n_elements": args.n_elements,
        "k_paths": args.k_paths,
        "m": args.m,
        "m_cs": args.m_cs,
        "seed": args.seed,
        "estimator": args.estimator,
        "ensemble": args.ensemble,
        "noise_std": args.noise_std,
    }
    return cfg.with_(**{k: v for k, v in overrides.items() if v is not None})


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        log.info("wrote %s", path)


def _figure_path(args, suffix: str = "") -> Path:
    base = args.out if args.out is not None else Path(f"ncce_{args.command}.csv")
    return base.with_name(f"{base.stem}{suffix}.png")


def cmd_trial(args) -> int:
    record = run_trial(_config(args).validate(), trial_index=args.index)
    _emit(io.to_json(record) + "\n", args.out)
    return EXIT_OK


def cmd_sweep_mcs(args) -> int:
    cfg = _config(args)
    sweep = sweep_mcs(cfg.with_(m_cs=min(args.mcs)), args.mcs, args.trials, workers=args.workers)
    if args.format == "json":
        _emit(io.to_json({"points": sweep.points, "records": sweep.records}) + "\n", args.out)
    else:
        _emit(io.records_csv(sweep.records), args.out)
        summary = io.summary_csv(sweep)
        if args.out is None:
            sys.stdout.write("\n" + summary)
        else:
            _emit(summary, io.companion_path(args.out, "summary"))
    if args.plot:
        from .experiments.plotting import plot_mcs_sweep

        plot_mcs_sweep(sweep, _figure_path(args), title=f"N={cfg.n_elements}, K={cfg.k_paths}, M={cfg.m}")
    return EXIT_OK


def cmd_min_m(args) -> int:
    cfg = _config(args)
    ladder = find_min_measurements(
        cfg, args.target, args.loss_db, args.trials, m_cap=args.m_cap,
        mcs_factor=args.mcs_factor, mcs_search=args.mcs_search, workers=args.workers,
    )
    if args.format == "json":
        _emit(io.to_json({"m_star": ladder.m_star, "steps": ladder.steps}) + "\n", args.out)
    else:
        _emit(io.ladder_csv(ladder), args.out)
        if args.out is not None:
            _emit(io.records_csv(ladder.records), io.companion_path(args.out, "trials"))
    print(f"m_star={ladder.m_star if ladder.m_star is not None else 'not-found'}", file=sys.stderr)
    if args.plot:
        from .experiments.plotting import plot_ladder

        plot_ladder(ladder, _figure_path(args))
    return EXIT_OK


def cmd_scaling(args) -> int:
    # n and k are swept, so the template only needs placeholders
    if args.config is None:
        args.n_elements = args.n_elements or args.n_values[0]
        args.k_paths = args.k_paths or args.k_values[0]
    cfg = _config(args)
    if cfg.m < 1:
        cfg = cfg.with_(m=1)
    result = sweep_array_size(
        cfg, args.n_values, args.k_values, args.trials,
        target_rate=args.target, loss_db=args.loss_db, compare_coherent=args.compare_coherent,
        workers=args.workers, m_cap=args.m_cap, mcs_factor=args.mcs_factor, mcs_search=args.mcs_search,
    )
    if args.format == "json":
        _emit(io.to_json({"rows": [dict(r.__dict__, ratio=r.ratio) for r in result.rows]}) + "\n", args.out)
    else:
        _emit(io.scaling_csv(result), args.out)
        if args.out is not None:
            _emit(io.records_csv(result.records), io.companion_path(args.out, "trials"))
    if args.plot:
        from .experiments.plotting import plot_scaling

        plot_scaling(result, _figure_path(args))
    return EXIT_OK


def cmd_validate(args) -> int:
    results = run_checks()
    for res in results:
        print(res.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


COMMANDS = {
    "trial": cmd_trial,
    "sweep-mcs": cmd_sweep_mcs,
    "min-m": cmd_min_m,
    "scaling": cmd_scaling,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NcceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
