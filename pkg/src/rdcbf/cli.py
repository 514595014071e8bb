"""Command-line entry point.

Subcommands::

    rdcbf run    --scenario a --mode rdcbf --seed 0 --out out/
    rdcbf bench  --scenario b --mode rdcbf,r2cbf,r1cbf,dcbf --runs 50 --jobs 4 --out out/
    rdcbf fuzz   --runs 10000 --seed 0
    rdcbf sweep  --scenario a --mode rdcbf --seed 0 --max-speed 2.0

Exit codes: 0 success, 1 run finished safely without reaching the goal,
2 safety violation (or fuzz tolerance exceeded), 3 configuration error.
Parameter flags override values in the scenario file, which override the
built-in defaults; the effective configuration is echoed into every JSON
summary.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import fuzz, safety, sim
from .io import atomic_write_json

EXIT_OK = 0
EXIT_NOT_REACHED = 1
EXIT_UNSAFE = 2
EXIT_CONFIG = 3

ABLATION_MODES = ("rdcbf", "r2cbf", "r1cbf", "dcbf")
PARAM_FLAGS = ("dt", "period", "gamma", "alpha", "beta", "mu", "activation_h")


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 3), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _float(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _add_common(p, default_mode):
    p.add_argument("--scenario", default="a", help="scenario JSON path, or 'a' / 'b' for the shipped replicas")
    p.add_argument("--mode", default=default_mode,
                   help=f"planner mode ({', '.join(safety.MODES)})")
    p.add_argument("--seed", type=int, default=None, help="run seed (bench: first seed)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--dt", type=_float, help="physics step [s]")
    p.add_argument("--period", type=_float, help="planning period [s]")
    p.add_argument("--gamma", type=_float)
    p.add_argument("--alpha", type=_float, help="observer gain")
    p.add_argument("--beta", type=_float)
    p.add_argument("--mu", type=_float)
    p.add_argument("--activation-h", type=_float, help="prune rows with h above this value ('inf' keeps all)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rdcbf", description="Robust dynamic CBF safety filter: simulation and benchmarks.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate one scenario run")
    _add_common(p, "rdcbf")
    p.add_argument("--debug-qp-dumps", action="store_true",
                   help="write every non-optimal QP as JSON under <out>/qp_dumps/")

    p = sub.add_parser("bench", help="Monte-Carlo batch over seeds and modes")
    _add_common(p, ",".join(ABLATION_MODES))
    p.add_argument("--runs", type=int, default=50, help="seeds per mode")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("fuzz", help="compare geometry queries against sampling oracles")
    p.add_argument("--runs", type=int, default=10000, help="instances per query type")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional directory for a JSON report")

    p = sub.add_parser("sweep", help="bisect the largest obstacle speed a mode survives")
    _add_common(p, "rdcbf")
    p.add_argument("--max-speed", type=_float, default=2.0, help="upper end of the bracket [m/s]")
    p.add_argument("--tol", type=_float, default=0.02, help="bracket width at which bisection stops [m/s]")
    return ap


def _overrides(args) -> dict:
    return {k: getattr(args, k) for k in PARAM_FLAGS if getattr(args, k, None) is not None}


def _modes(text) -> list[str]:
    modes = [m.strip().lower() for m in str(text).split(",") if m.strip()]
    bad = [m for m in modes if m not in safety.MODES]
    if not modes or bad:
        raise sim.ConfigError(f"--mode: unknown mode(s) {bad or [text]}; expected {', '.join(safety.MODES)}")
    return modes


def _single_mode(text, command) -> str:
    modes = _modes(text)
    if len(modes) != 1:
        raise sim.ConfigError(f"--mode: {command} takes a single mode (got {text!r})")
    return modes[0]


def _echo(config: dict, sc: sim.Scenario, ov: dict) -> dict:
    config = dict(config)
    config["scenario_file"] = sc.source
    config["flag_overrides"] = {k: (v if math.isfinite(v) else "inf") for k, v in ov.items()}
    return config


def cmd_run(args) -> int:
    mode = _single_mode(args.mode, "run")
    sc = sim.load_scenario(args.scenario)
    ov = _overrides(args)
    out = Path(args.out)
    seed = sc.seed if args.seed is None else args.seed
    stem = f"{sc.name}_{mode}_seed{seed}"
    dumps = out / "qp_dumps" / stem if args.debug_qp_dumps else None
    rec = sim.run(sc, mode, ov, seed, dump_dir=dumps)
    rec.config = _echo(rec.config, sc, ov)
    csv_path, json_path = sim.write_run(rec, out, stem)
    print(f"{sc.name} {mode} seed={seed}: success={rec.success} reached={rec.reached_goal} "
          f"min_h={rec.min_h:.4g} length={rec.path_length:.3f} m time={rec.total_time:.2f} s "
          f"freq={rec.mean_frequency:.0f} Hz relaxed={rec.n_relaxed} failed={rec.n_failed}")
    print(f"wrote {csv_path} and {json_path}")
    if rec.min_h < 0:
        return EXIT_UNSAFE
    return EXIT_OK if rec.success else EXIT_NOT_REACHED


def format_table(results: dict) -> str:
    head = ("mode", "runs", "success %", "freq Hz", "mean min_h", "worst min_h")
    rows = []
    for mode, agg in results.items():
        worst = agg["min_min_h"]
        mean = agg["mean_min_h"]
        rows.append((mode, str(agg["n_runs"]), f"{100.0 * agg['success_rate']:.1f}", f"{agg['mean_frequency']:.0f}",
                     "-" if mean is None else f"{mean:.4f}", "-" if worst is None else f"{worst:.4f}"))
    widths = [max(len(r[k]) for r in rows + [head]) for k in range(len(head))]
    fmt = lambda r: "  ".join(c.rjust(w) if k else c.ljust(w) for k, (c, w) in enumerate(zip(r, widths)))
    lines = [fmt(head), "  ".join("-" * w for w in widths)] + [fmt(r) for r in rows]
    return "\n".join(lines)


def cmd_bench(args) -> int:
    modes = _modes(args.mode)
    if args.runs < 1:
        raise sim.ConfigError(f"--runs must be >= 1 (got {args.runs})")
    if args.jobs < 1:
        raise sim.ConfigError(f"--jobs must be >= 1 (got {args.jobs})")
    sc = sim.load_scenario(args.scenario)
    ov = _overrides(args)
    seed0 = 0 if args.seed is None else args.seed
    # fail fast on bad parameters before spawning the batch
    for m in modes:
        sim.prepare(sc, m, ov, seed0)
    results = sim.monte_carlo(sc, modes, args.runs, ov, jobs=args.jobs, seed0=seed0)
    out = Path(args.out)
    for mode, agg in results.items():
        agg["scenario"] = sc.name
        agg["mode"] = mode
        agg["seeds"] = [seed0, seed0 + args.runs - 1]
        agg["config"] = agg["runs"][0]["config"] | {"scenario_file": sc.source,
                                                    "flag_overrides": _echo({}, sc, ov)["flag_overrides"]}
        atomic_write_json(out / f"bench_{sc.name}_{mode}.json", agg)
    print(format_table(results))
    print(f"wrote {len(results)} aggregate(s) to {out}")
    return EXIT_OK


def cmd_fuzz(args) -> int:
    if args.runs < 1:
        raise sim.ConfigError(f"--runs must be >= 1 (got {args.runs})")
    reports = fuzz.fuzz_geometry(args.runs, args.seed)
    for r in reports:
        print(f"{r.query:16s} n={r.n:6d}  max_error={r.max_error:.3e}  {r.seconds:6.2f} s  {'ok' if r.ok else 'FAIL'}")
    if args.out:
        atomic_write_json(Path(args.out) / f"fuzz_seed{args.seed}.json",
                          {"seed": args.seed, "n": args.runs, "tolerance": fuzz.TOL_ABS,
                           "reports": [{"query": r.query, "n": r.n, "max_error": r.max_error, "ok": r.ok}
                                       for r in reports]})
    return EXIT_OK if all(r.ok for r in reports) else EXIT_UNSAFE


def cmd_sweep(args) -> int:
    mode = _single_mode(args.mode, "sweep")
    if not (args.max_speed > 0 and args.tol > 0):
        raise sim.ConfigError("--max-speed and --tol must be positive")
    sc = sim.load_scenario(args.scenario)
    ov = _overrides(args)
    seed = sc.seed if args.seed is None else args.seed
    sim.prepare(sc, mode, ov, seed)
    vmax, trials = sim.max_safe_speed(sc, mode, seed, args.max_speed, args.tol, ov)
    for v, ok in trials:
        print(f"  speed {v:.4f} m/s: {'success' if ok else 'fail'}")
    print(f"{sc.name} {mode} seed={seed}: max obstacle speed {vmax:.3f} m/s")
    atomic_write_json(Path(args.out) / f"sweep_{sc.name}_{mode}_seed{seed}.json",
                      {"scenario": sc.name, "mode": mode, "seed": seed, "max_speed": vmax,
                       "trials": [{"speed": v, "success": ok} for v, ok in trials],
                       "config": {"scenario_file": sc.source, "flag_overrides": _echo({}, sc, ov)["flag_overrides"],
                                  "bracket": [0.0, args.max_speed], "tol": args.tol}})
    return EXIT_OK


COMMANDS = {"run": cmd_run, "bench": cmd_bench, "fuzz": cmd_fuzz, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except sim.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
