"""Grid sweeps over CLI commands.

A sweep config is a JSON object::

    {"command": "learn",
     "args": {"mdp": "tree.json", "beta": 1, "mu": -1.2, "episodes": 2000},
     "grid": {"seed": [0, 1, 2]}}

Each grid cell runs the command in ``<out>/cell_NNN`` and ``sweep.csv``
collects the cells' final metrics plus one aggregate row. Relative paths in
``args`` resolve against the config file's directory. ``ZMDP_THREADS``
caps the number of concurrent cells.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .errors import IoError, NumericalError, ParseError, ValidationError, ZmdpError

PATH_ARGS = ("mdp",)


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _argv(command: str, args: dict, out: Path) -> list[str]:
    argv = [command]
    for key, val in args.items():
        if isinstance(val, bool):
            if val:
                argv.append(_flag(key))
        else:
            argv += [_flag(key), str(val)]
    return argv + ["--out", str(out)]


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or "command" not in doc:
        raise ParseError("sweep config needs a 'command' key")
    if doc["command"] == "sweep":
        raise ValidationError("sweeps cannot nest")
    grid = doc.get("grid") or {}
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise ParseError("'grid' must map parameter names to lists")
    return doc


def cells(grid: dict) -> list[dict]:
    """Cartesian product of the grid, in key order; empty when any list is empty."""
    if not grid:
        return []
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _stats(values: list[float]) -> tuple[float, float, float]:
    vals = [v for v in values if isinstance(v, (int, float)) and not math.isnan(v)]
    if not vals:
        return math.nan, math.nan, math.nan
    std = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return statistics.fmean(vals), statistics.median(vals), std


def run_sweep(config_path, out_dir) -> dict:
    """Run every grid cell and write ``sweep.csv``.

    Returns the aggregate metrics (means). Raises :class:`NumericalError`
    after writing the report if any cell failed.
    """
    from .cli import execute, fmt

    cfg = load_config(config_path)
    base_dir = Path(config_path).resolve().parent
    base = dict(cfg.get("args") or {})
    for key in PATH_ARGS:
        if key in base and not Path(str(base[key])).is_absolute():
            base[key] = str(base_dir / str(base[key]))
    grid = cfg.get("grid") or {}
    jobs = cells(grid)
    if not jobs:
        raise ValidationError("sweep grid is empty")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(str(exc)) from exc

    def run_cell(i: int, params: dict):
        argv = _argv(cfg["command"], {**base, **params}, out / f"cell_{i:03d}")
        try:
            return execute(argv), None
        except ZmdpError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    workers = int(os.environ.get("ZMDP_THREADS", "0") or 0) or (os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda ij: run_cell(*ij), enumerate(jobs)))

    metric_names: list[str] = []
    for metrics, _ in results:
        for k in metrics or {}:
            if k not in metric_names:
                metric_names.append(k)
    params = list(grid)
    header = ["cell", "status", *params, *metric_names]
    header += [f"{m}_{s}" for m in metric_names for s in ("mean", "median", "std")]
    rows = []
    failures = []
    for i, (params_i, (metrics, err)) in enumerate(zip(jobs, results)):
        status = "ok" if err is None else "failed"
        if err is not None:
            failures.append(f"cell_{i:03d} {params_i}: {err}")
        m = metrics or {}
        rows.append(
            [f"cell_{i:03d}", status, *(params_i[p] for p in params), *(m.get(k, math.nan) for k in metric_names)]
            + [""] * (3 * len(metric_names))
        )
    agg = {}
    agg_row = ["aggregate", f"{len(jobs) - len(failures)}/{len(jobs)} ok", *([""] * len(params)), *([""] * len(metric_names))]
    for k in metric_names:
        stats = _stats([(m or {}).get(k, math.nan) for m, _ in results])
        agg[k] = stats[0]
        agg_row += list(stats)
    rows.append(agg_row)
    try:
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(x) if x != "" else "" for x in row])
        if failures:
            (out / "failures.txt").write_text("\n".join(failures) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if failures:
        raise NumericalError(f"{len(failures)} of {len(jobs)} sweep cells failed: " + "; ".join(failures))
    return agg
