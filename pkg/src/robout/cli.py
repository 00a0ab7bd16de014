"""``robout`` command line: detect, simulate, benchmark.

Exit codes: 0 success, 1 usage or data error, 2 every requested variant
infeasible.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .data import load_csv
from .errors import RoboutError
from .evaluation import (
    default_threads,
    format_summary,
    parse_m_grid,
    run_benchmark,
    write_long_csv,
    write_replicates_json,
    write_timings,
    write_wide_tables,
)
from .pipeline import (
    Infeasible,
    detect_all_variants,
    infeasible_to_dict,
    outcome_to_dict,
    parse_variants,
    write_observation_csv,
)
from .simulate import PRESET_IDS, ScenarioConfig, generate, save_instance, scenario_preset

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("robout")


class UsageError(Exception):
    pass


def _k_list(s: str) -> list:
    try:
        ks = [int(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad K list {s!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("K values must be positive integers")
    return ks


def _fraction(s: str) -> float:
    v = float(s)
    if not 0 <= v <= 0.5:
        raise argparse.ArgumentTypeError("alpha must lie in [0, 0.5]")
    return v


def _write_config(out: Path, args, extra=None) -> None:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}
    if extra:
        cfg.update(extra)
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _outdir(path) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise UsageError(f"output path {out} exists and is not a directory")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _safe(name: str) -> str:
    return name.lower().replace("+", "_")


def cmd_detect(args) -> int:
    if not Path(args.input).is_file():
        raise UsageError(f"input file {args.input} not found")
    variants = parse_variants(args.variant)
    out = _outdir(args.out)
    d = load_csv(args.input, args.response, has_header=not args.no_header)
    cells = detect_all_variants(d, args.k, args.alpha, args.seed, variants)
    summary = []
    n_ok = 0
    for (name, K), o in cells.items():
        stem = f"{_safe(name)}_k{K}"
        if isinstance(o, Infeasible):
            summary.append(infeasible_to_dict(o))
            print(f"{name} K={K}: infeasible at {o.stage}: {o.reason}")
            continue
        n_ok += 1
        rec = outcome_to_dict(o, d, include_timings=args.timings)
        summary.append(rec)
        if args.format == "csv":
            write_observation_csv(o, out / f"{stem}.csv")
        (out / f"{stem}.json").write_text(json.dumps(rec, indent=2) + "\n")
        print(f"{name} K={K}: support {list(o.selection.support)}, "
              f"scale {o.fit.scale:.6g}, {o.report.n_flagged} flagged")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _write_config(out, args, {"n": d.n, "p": d.p})
    if n_ok == 0:
        print("all requested variants are infeasible", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _scenario_config(args) -> ScenarioConfig:
    if args.scenario:
        cfg = scenario_preset(args.scenario)
    else:
        if args.n is None or args.p is None:
            raise UsageError("give --scenario or both --n and --p")
        cfg = ScenarioConfig(n=args.n, p=args.p)
    over = {k: getattr(args, k) for k in ("n", "p", "K", "alpha", "gamma", "rho",
                                          "beta_sign", "sigma")
            if getattr(args, k, None) is not None}
    if getattr(args, "mode", None):
        over["outlier_mode"] = args.mode
    if getattr(args, "leverage", None) is not None:
        over["leverage"] = args.leverage
    return replace(cfg, **over) if over else cfg


def cmd_simulate(args) -> int:
    cfg = replace(_scenario_config(args), m=args.m, seed=args.seed)
    out = _outdir(args.out)
    inst = generate(cfg)
    save_instance(inst, out)
    _write_config(out, args, {"resolved": cfg.to_dict()})
    print(f"wrote n={cfg.n}, p={cfg.p} instance with {len(inst.true_outliers)} outliers to {out}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    base = _scenario_config(args)
    variants = parse_variants(args.variants, K=base.K, alpha=base.alpha)
    m_grid = parse_m_grid(args.m_grid)
    out = _outdir(args.out)
    threads = args.threads or default_threads()

    def progress(i, total):
        log.info("replicate job %d/%d", i, total)

    res = run_benchmark(base, variants, m_grid, args.replicates, args.seed, threads,
                        progress=progress)
    if args.scenario:
        # a starred id marks a preset with overridden fields
        res.scenario_id = args.scenario if base == scenario_preset(args.scenario) else args.scenario + "*"
    write_long_csv(res, out / "long.csv")
    write_wide_tables(res, out)
    write_replicates_json(res, out / "replicates.json")
    if args.timings:
        write_timings(res, out / "timings.csv")
    _write_config(out, args, {"resolved": base.to_dict(), "m_grid_values": m_grid,
                              "replicate_seeds": res.seeds})
    print(format_summary(res))
    return EXIT_OK


def _scenario_args(p: argparse.ArgumentParser):
    p.add_argument("--scenario", choices=PRESET_IDS, help="preset scenario id")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--K", "--k", dest="K", type=int, help="true support size (default 3)")
    p.add_argument("--alpha", type=_fraction, help="contamination fraction (default 0.1)")
    p.add_argument("--gamma", type=float, help="zero fraction of the non-predictor block")
    p.add_argument("--rho", type=float, help="equicorrelation of all columns")
    p.add_argument("--mode", choices=("variance", "mean"), help="outlier type")
    p.add_argument("--leverage", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--beta-sign", dest="beta_sign", choices=("positive", "negative"))
    p.add_argument("--sigma", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robout", description="Conditional outlier detection.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="flag conditional outliers in a CSV file")
    d.add_argument("--input", required=True)
    d.add_argument("--response", required=True, help="response column name or 0-based index")
    d.add_argument("--no-header", action="store_true")
    d.add_argument("--variant", default="sncd-h+mm", help="variant name(s), comma separated, or 'all'")
    d.add_argument("--k", type=_k_list, default=[3], help="support size or comma list")
    d.add_argument("--alpha", type=_fraction, default=0.1)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--format", choices=("csv", "json"), default="csv")
    d.add_argument("--timings", action="store_true", help="include stage timings in JSON")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("simulate", help="generate a synthetic instance")
    _scenario_args(s)
    s.add_argument("--m", type=float, default=19.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("benchmark", help="Monte Carlo error rates for variants")
    _scenario_args(b)
    b.add_argument("--variants", default="all")
    b.add_argument("--m-grid", dest="m_grid", default="3:2:19")
    b.add_argument("--replicates", type=int, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--threads", type=int, default=None,
                   help="worker processes (default $ROBOUT_THREADS or 1)")
    b.add_argument("--timings", action="store_true", help="also write timings.csv")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, RoboutError, ValueError, OSError) as e:
        print(f"robout {args.command}: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
