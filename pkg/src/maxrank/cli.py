"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure
(including failed self-test checks).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import load_config
from .conformal import TABLE_COLUMNS as CONFORMAL_COLUMNS
from .conformal import SyntheticTask, coverage_experiment
from .corrections import Method, correct
from .ranks import ScoreMatrix
from .selftest import format_report, run_all
from .simulation import TABLE_COLUMNS as SIM_COLUMNS
from .simulation import ExperimentGrid, format_table, run_grid

log = logging.getLogger("maxrank")

SEED_ENV = "MAXRANK_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker processes for grids and trials (0 = one per CPU)")
    common.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="only log warnings")

    p = _Parser(prog="maxrank", parents=[common],
                description="Max-rank FWER correction, simulations and conformal demo.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("correct", parents=[common], help="correct a score matrix CSV")
    c.add_argument("scores", help="CSV with header test_1,...,test_m")
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--method", default="max-rank",
                   help="max-rank | bonferroni | independence | uncorrected")
    c.add_argument("--seed", type=int, default=None, help="jitter seed for tied scores")
    c.add_argument("--out", help="write JSON here instead of standard output")
    c.add_argument("--manifest", help="manifest path (default: next to --out)")

    s = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo FWER grid")
    s.add_argument("--grid", help="JSON/TOML grid config or a previous run manifest")
    s.add_argument("--out", required=True, help="output CSV")
    s.add_argument("--rho", dest="rho_list", type=_csv_list(float))
    s.add_argument("--m", dest="m_list", type=_csv_list(int))
    s.add_argument("--n", dest="n_list", type=_csv_list(int))
    s.add_argument("--methods", type=_csv_list(str))
    s.add_argument("--alpha", type=float)
    s.add_argument("--trials", type=int)
    s.add_argument("--fresh-draws", dest="fresh_draws", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--allow-negative-rho", dest="allow_negative", action="store_true",
                   default=None)
    s.add_argument("--manifest")

    d = sub.add_parser("conformal-demo", parents=[common],
                       help="multivariate conformal coverage experiment")
    d.add_argument("--task", help="JSON/TOML task config or a previous run manifest")
    d.add_argument("--out", required=True, help="output CSV")
    d.add_argument("--alpha", type=float)
    d.add_argument("--corrections", type=_csv_list(str))
    d.add_argument("--trials", type=int)
    d.add_argument("--seed", type=int)
    d.add_argument("--manifest")

    t = sub.add_parser("selftest", parents=[common], help="run oracle and invariant checks")
    t.add_argument("--seed", type=int, default=0)
    return p


def _resolve_seed(flag, file_value):
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0 if file_value is None else int(file_value)


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(path, command, config, seed, started, outputs) -> None:
    manifest = {
        "manifest_version": 1,
        "command": command,
        "artifact_version": __version__,
        "seed": seed,
        "config": config,
        "duration_seconds": round(time.perf_counter() - started, 3),
        "outputs": {str(o): _digest(o) for o in outputs},
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("manifest written to %s", path)


def _manifest_path(args, out, command):
    if args.manifest:
        return args.manifest
    if out:
        return f"{out}.manifest.json"
    return f"maxrank-{command}.manifest.json"


def cmd_correct(args, started) -> int:
    S = ScoreMatrix.from_csv(args.scores)
    method = Method.parse(args.method)
    seed = _resolve_seed(args.seed, None)
    res = correct(S, args.alpha, method, seed=seed)
    if res.clamped:
        log.warning("order-statistic index clamped to n=%d; too few samples for alpha=%s",
                    S.n, args.alpha)
    text = json.dumps(res.to_dict(), indent=2) + "\n"
    outputs = []
    if args.out:
        Path(args.out).write_text(text)
        outputs.append(args.out)
    else:
        sys.stdout.write(text)
    config = {"scores": str(args.scores), "scores_sha256": _digest(args.scores),
              "alpha": args.alpha, "method": method.value, "seed": seed}
    _write_manifest(_manifest_path(args, args.out, "correct"), "correct", config, seed,
                    started, outputs)
    return 0


def _merge(base: dict, args, keys) -> dict:
    merged = dict(base)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def cmd_simulate(args, started) -> int:
    base = load_config(args.grid) if args.grid else {}
    cfg = _merge(base, args, ("rho_list", "m_list", "n_list", "methods", "alpha", "trials",
                              "fresh_draws", "allow_negative"))
    cfg["seed"] = _resolve_seed(args.seed, base.get("seed"))
    grid = ExperimentGrid.from_dict(cfg)
    log.info("simulate: %d cells x %d methods, trials=%d fresh_draws=%d n=%s",
             len(grid.cells()), len(grid.methods), grid.trials, grid.fresh_draws,
             list(grid.n_list))
    rows = run_grid(grid, threads=getattr(args, "threads", 1))
    Path(args.out).write_text(format_table(rows, SIM_COLUMNS))
    _write_manifest(_manifest_path(args, args.out, "simulate"), "simulate", grid.to_dict(),
                    grid.seed, started, [args.out])
    failed = sum(1 for r in rows if r["error"])
    if failed:
        log.warning("%d rows failed; see the error column", failed)
    return 0


def cmd_conformal(args, started) -> int:
    base = load_config(args.task) if args.task else {}
    task_keys = set(SyntheticTask.__dataclass_fields__)
    task = SyntheticTask.from_dict({k: v for k, v in base.items() if k in task_keys})
    rest = {k: v for k, v in base.items() if k not in task_keys}
    unknown = set(rest) - {"alpha", "corrections", "trials", "seed"}
    if unknown:
        raise ValueError(f"unknown task config keys: {', '.join(sorted(unknown))}")
    alpha = args.alpha if args.alpha is not None else rest.get("alpha", 0.1)
    corrections = args.corrections or rest.get("corrections",
                                               ["max-rank", "bonferroni", "uncorrected"])
    corrections = [Method.parse(c).value for c in corrections]
    trials = args.trials if args.trials is not None else rest.get("trials", 100)
    seed = _resolve_seed(args.seed, rest.get("seed"))
    rows = coverage_experiment(task, alpha, corrections, trials, seed,
                               threads=getattr(args, "threads", 1))
    Path(args.out).write_text(format_table(rows, CONFORMAL_COLUMNS))
    config = {**task.to_dict(), "alpha": alpha, "corrections": corrections,
              "trials": trials, "seed": seed}
    _write_manifest(_manifest_path(args, args.out, "conformal-demo"), "conformal-demo",
                    config, seed, started, [args.out])
    return 0


def cmd_selftest(args, started) -> int:
    results = run_all(seed=args.seed)
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 2


COMMANDS = {
    "correct": cmd_correct,
    "simulate": cmd_simulate,
    "conformal-demo": cmd_conformal,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    started = time.perf_counter()
    try:
        return COMMANDS[args.command](args, started)
    except (ValueError, OSError) as exc:
        print(f"maxrank {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.exception("runtime failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
