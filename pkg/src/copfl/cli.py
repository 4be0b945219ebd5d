"""Command-line entry point: ``copfl run|sweep|ablate|validate``.

Exit codes: 0 success, 1 runtime failure, 2 bad arguments or configuration.
Errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, apply_overrides, from_dict, load_raw
from .federation import AlgorithmKind, run_experiment
from .reporting import write_csv, write_run_artifacts

log = logging.getLogger("copfl")

P_GRID = [0.01, 0.05, 0.15, 0.25, 0.40, 0.50]
GAMMA_GRID = [0.05, 0.30, 0.50, 0.80]
# (use_grad, use_data) in the row order of the contribution ablation table
ABLATION_VARIANTS = [(False, False), (False, True), (True, False), (True, True)]


class UsageError(ValueError):
    pass


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    field = getattr(exc, "field", None)
    if field:
        payload["field"] = field
    print(json.dumps(payload), file=sys.stderr)
    return code


def resolve_out(args_out, config) -> Path:
    if args_out:
        return Path(args_out)
    if config.output_dir:
        return Path(config.output_dir)
    return Path(os.environ.get("COPFL_OUT", "runs"))


def parse_seeds(text: str | None) -> list[int] | None:
    if not text:
        return None
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"--seeds expects comma-separated integers, got {text!r}") from exc


def parse_grid(items: list[str] | None) -> dict[str, list]:
    if not items:
        return {"p": list(P_GRID), "gamma": list(GAMMA_GRID)}
    grid = {}
    for item in items:
        key, _, text = item.partition("=")
        if not key or not text:
            raise UsageError(f"--grid expects KEY=v1,v2,..., got {item!r}")
        grid[key.strip()] = [json.loads(v) if _is_json(v) else v for v in text.split(",")]
    return grid


def _is_json(text: str) -> bool:
    try:
        json.loads(text)
    except json.JSONDecodeError:
        return False
    return True


def _resolved(args) -> tuple[dict, ExperimentConfig]:
    raw = apply_overrides(load_raw(args.config), args.set or [])
    return raw, from_dict(raw)


def _execute(raw: dict, out_dir: str | None, jobs: int = 1) -> dict:
    config = from_dict(raw)
    t0 = time.perf_counter()
    result = run_experiment(config, jobs=jobs)
    wall = (time.perf_counter() - t0) * 1000.0
    if out_dir is not None:
        return write_run_artifacts(out_dir, config, result, wall)
    last = result.records[-1]
    return {"final_mean_acc": last.mean_acc, "final_std_acc": last.std_acc}


def _task(job: tuple[dict, str | None]) -> tuple[dict | None, str]:
    raw, out_dir = job
    try:
        return _execute(raw, out_dir), ""
    except Exception as exc:  # recorded per row; the batch keeps going
        return None, f"{type(exc).__name__}: {exc}"


def _run_batch(jobs_list, jobs: int):
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_task, jobs_list))
    return [_task(j) for j in jobs_list]


def cmd_run(args) -> int:
    _, config = _resolved(args)
    out = resolve_out(args.out, config)
    t0 = time.perf_counter()
    result = run_experiment(config, jobs=args.jobs)
    wall = (time.perf_counter() - t0) * 1000.0
    summary = write_run_artifacts(out, config, result, wall)
    print(f"final mean accuracy {summary['final_mean_acc']:.4f} -> {out}")
    return 0


def cmd_validate(args) -> int:
    _, config = _resolved(args)
    sys.stdout.write(config.to_json())
    return 0


def cmd_sweep(args) -> int:
    raw, config = _resolved(args)
    out = resolve_out(args.out, config)
    out.mkdir(parents=True, exist_ok=True)
    grid = parse_grid(args.grid)
    seeds = parse_seeds(args.seeds) or [config.seed]
    keys = list(grid)
    points = list(itertools.product(*(grid[k] for k in keys)))
    jobs_list, meta = [], []
    for pi, values in enumerate(points):
        for seed in seeds:
            run_raw = apply_overrides(raw, list(zip(keys, values)) + [("seed", seed)])
            jobs_list.append((run_raw, str(out / "runs" / f"point{pi:03d}_seed{seed}")))
            meta.append((pi, values, seed))
    # validate every grid point up front so bad grids fail before any compute
    for run_raw, _ in jobs_list:
        from_dict(run_raw)
    results = _run_batch(jobs_list, args.jobs)

    rows, per_point = [], {}
    for (pi, values, seed), (summary, err) in zip(meta, results):
        acc = summary["final_mean_acc"] if summary else float("nan")
        std = summary["final_std_acc"] if summary else float("nan")
        rows.append([pi, *values, seed, acc, std, "ok" if summary else "failed", err])
        if summary:
            per_point.setdefault(pi, []).append(acc)
    write_csv(out / "sweep.csv", ["point", *keys, "seed", "final_mean_acc", "final_std_acc", "status", "error"], rows)

    heat = []
    for pi, values in enumerate(points):
        accs = per_point.get(pi, [])
        mean = float(np.mean(accs)) if accs else float("nan")
        std = float(np.std(accs)) if accs else float("nan")
        heat.append([*values, mean, std, len(accs)])
    write_csv(out / "heatmap.csv", [*keys, "mean_acc", "std_acc", "n_seeds"], heat)
    failed = sum(1 for s, _ in results if s is None)
    print(f"{len(rows)} runs ({failed} failed) -> {out}")
    return 0


def cmd_ablate(args) -> int:
    raw, config = _resolved(args)
    if config.algorithm != AlgorithmKind.CO_PFL.value:
        raise ConfigError("ablate needs a co_pfl base config", field="algorithm")
    out = resolve_out(args.out, config)
    out.mkdir(parents=True, exist_ok=True)
    seeds = parse_seeds(args.seeds) or [config.seed]
    jobs_list, meta = [], []
    for seed in seeds:
        for use_grad, use_data in ABLATION_VARIANTS:
            run_raw = apply_overrides(raw, [
                ("seed", seed), ("cowa.enabled", True),
                ("cowa.use_grad", use_grad), ("cowa.use_data", use_data),
            ])
            name = f"seed{seed}_grad{int(use_grad)}_data{int(use_data)}"
            jobs_list.append((run_raw, str(out / "runs" / name)))
            meta.append((seed, use_grad, use_data))
    results = _run_batch(jobs_list, args.jobs)
    rows = []
    for (seed, g, d), (summary, err) in zip(meta, results):
        acc = summary["final_mean_acc"] if summary else float("nan")
        std = summary["final_std_acc"] if summary else float("nan")
        rows.append([seed, int(g), int(d), acc, std, "ok" if summary else "failed", err])
    write_csv(out / "ablation.csv", ["seed", "use_grad", "use_data", "final_mean_acc", "final_std_acc", "status", "error"], rows)
    print(f"{len(rows)} ablation runs -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="copfl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeds=False):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (dotted for sections); repeatable")
        p.add_argument("--out", help="output directory (default: config output_dir, $COPFL_OUT, ./runs)")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers")
        if seeds:
            p.add_argument("--seeds", help="comma-separated seeds, e.g. 0,1,2")

    common(sub.add_parser("run", help="run one experiment"))
    p = sub.add_parser("sweep", help="grid over config keys x seeds")
    common(p, seeds=True)
    p.add_argument("--grid", action="append", metavar="KEY=v1,v2",
                   help="grid axis; repeatable (default: the standard p and gamma grids)")
    common(sub.add_parser("ablate", help="contribution-score component ablation"), seeds=True)
    common(sub.add_parser("validate", help="print the resolved config"))
    return parser


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "ablate": cmd_ablate, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        return _fail(exc, 2)
    except Exception as exc:
        log.debug("run failed", exc_info=True)
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
