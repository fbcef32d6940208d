"""Command-line front end.

Commands ``run``, ``validity``, ``compare`` and ``sweep`` read a YAML scenario
(``--config path`` or ``--config builtin:NAME``), write CSV files plus a
``manifest.txt`` into ``--out``, and exit with 0 on success, 2 on a config or
usage error and 3 on an I/O error.

Every CSV starts with ``schema_version`` and ``run_id`` columns; ``run_id`` is
also recorded in the manifest, so each file points back to the run that made it.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .config import (
    apply_overrides,
    builtin_config,
    builtin_config_names,
    dump_config,
    load_config,
    scenario_from_dict,
    validity_ranges_from_dict,
)
from .sim import (
    ConfigError,
    SamplingError,
    SimulationTrace,
    run_episode,
    run_fixed_alpha_comparison,
    run_validity_batch,
)

CSV_SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
BUILTIN_PREFIX = "builtin:"
DEFAULT_CONFIG = {
    "run": "builtin:single_merge",
    "validity": "builtin:validity",
    "compare": "builtin:stress",
    "sweep": "builtin:single_merge",
}
HIST_BIN_M = 1.0

log = logging.getLogger("safemerge")


class UsageError(ConfigError):
    pass


# --- serialization -----------------------------------------------------------


def fmt(x) -> str:
    """9 significant digits for floats; ``true``/``false`` for bools."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".9g")
    return "" if x is None else str(x)


def atomic_write(path: Path, text: str) -> None:
    """Write to a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence], run_id: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema_version", "run_id", *header])
    for r in rows:
        w.writerow([CSV_SCHEMA_VERSION, run_id, *(fmt(v) for v in r)])
    return buf.getvalue()


def trace_header(n_merge: int) -> list[str]:
    cols = ["step", "time_s", "ego_x_m", "ego_y_m", "ego_speed_mps"]
    for k in range(1, n_merge + 1):
        cols += [f"distance_m_{k}", f"h_m2_{k}"]
    return cols + ["u_mps2", "alpha", "alpha_next", "interval_lo_mps2", "interval_hi_mps2", "status"]


def trace_rows(tr: SimulationTrace):
    dt = tr.cfg.dt
    speed = np.hypot(tr.ego_v[:, 0], tr.ego_v[:, 1])
    for t in range(len(tr)):
        row = [int(tr.t[t]), tr.t[t] * dt, tr.ego_x[t, 0], tr.ego_x[t, 1], speed[t]]
        for k in range(tr.distance.shape[1]):
            row += [tr.distance[t, k], tr.h[t, k]]
        row += [tr.u[t], tr.alpha[t], tr.alpha_next[t], tr.lo[t], tr.hi[t], tr.status[t]]
        yield row


SUMMARY_HEADER = [
    "label", "alpha_nominal", "alpha_first", "adaptive", "min_distance_m", "collision",
    "infeasible_steps", "violated_steps", "first_deviation_step", "outcome", "merge_step",
]


def summary_row(label: str, tr: SimulationTrace) -> list:
    c = tr.cfg.controller
    oc = tr.outcome()
    return [
        label, c.alpha_nominal, tr.alpha[0], c.adaptive, tr.min_distance, tr.collision,
        tr.n_infeasible, tr.n_violated, tr.first_deviation_index(), oc.slot, oc.step,
    ]


# --- manifest ----------------------------------------------------------------


def _flatten(d: dict, prefix: str = "") -> list[tuple[str, str]]:
    out = []
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out += _flatten(v, key + ".")
        else:
            out.append((key, json.dumps(v, separators=(",", ":"))))
    return out


def run_id_for(command: str, resolved: dict) -> str:
    blob = json.dumps({"command": command, "config": resolved}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def manifest_text(command: str, config_path: str, resolved: dict, run_id: str, outputs: list[str]) -> str:
    lines = [
        f"command={command}",
        f"config_path={config_path}",
        f"seed={resolved['seed']}",
        f"tool_version={__version__}",
        f"csv_schema_version={CSV_SCHEMA_VERSION}",
        f"run_id={run_id}",
        "resolved_config=resolved_config.yaml",
    ]
    lines += [f"output.{i}={name}" for i, name in enumerate(outputs)]
    lines += [f"config.{k}={v}" for k, v in _flatten(resolved)]
    return "\n".join(lines) + "\n"


# --- commands ----------------------------------------------------------------


def _load(args) -> tuple[str, dict]:
    src = args.config or DEFAULT_CONFIG[args.command]
    if src.startswith(BUILTIN_PREFIX):
        name = src[len(BUILTIN_PREFIX):]
        if name not in builtin_config_names():
            raise ConfigError(f"no builtin config '{name}'; available: {', '.join(builtin_config_names())}")
        d = builtin_config(name)
    else:
        d = load_config(src)
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.fixed_alpha:
        overrides.append("controller.adaptive=false")
    if args.paper_coefficient:
        overrides.append("controller.paper_coefficient=true")
    if getattr(args, "trials", None) is not None:
        overrides.append(f"validity.trials={args.trials}")
    return src, apply_overrides(d, overrides)


def _cmd_run(d: dict, run_id: str) -> dict[str, str]:
    tr = run_episode(scenario_from_dict(d))
    return {
        "trace.csv": csv_text(trace_header(len(tr.cfg.merges)), trace_rows(tr), run_id),
        "summary.csv": csv_text(SUMMARY_HEADER, [summary_row("run", tr)], run_id),
    }


def _histogram(values: np.ndarray) -> list[list]:
    if values.size == 0:
        return []
    lo = math.floor(values.min() / HIST_BIN_M) * HIST_BIN_M
    hi = max(math.floor(values.max() / HIST_BIN_M) * HIST_BIN_M + HIST_BIN_M, lo + HIST_BIN_M)
    edges = np.arange(lo, hi + 0.5 * HIST_BIN_M, HIST_BIN_M)
    counts, _ = np.histogram(values, edges)
    return [[edges[i], edges[i + 1], int(c)] for i, c in enumerate(counts)]


def _cmd_validity(d: dict, run_id: str, workers: int) -> dict[str, str]:
    n = int(d["validity"]["trials"])
    if n < 1:
        raise UsageError(f"trials must be >= 1, got {n}")
    try:
        ranges = validity_ranges_from_dict(d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid validity ranges: {e}") from None
    base = scenario_from_dict(d)
    rep = run_validity_batch(base, n, ranges, fixed_alpha=not base.controller.adaptive, workers=workers)
    trial_header = [
        "trial", "gap_m", "rel_speed_mps", "alpha_nominal", "attempts", "min_distance_m",
        "collision", "infeasible_steps", "violated_steps", "outcome", "curve",
    ]
    trial_rows = [
        [t.trial, t.gap_m, t.rel_speed_mps, t.alpha_nominal, t.attempts, t.min_distance,
         t.collision, t.n_infeasible, t.n_violated, t.slot, t.curve]
        for t in rep.trials
    ]
    md = rep.min_distances
    agg = [
        ["n_trials", rep.n_trials],
        ["r_safe_m", rep.r_safe],
        ["collision_rate", rep.collision_rate],
        ["collisions", sum(t.collision for t in rep.trials)],
        ["min_distance_m", float(md.min())],
        ["median_min_distance_m", float(np.median(md))],
        ["fallback_steps_total", rep.total_infeasible],
        ["trials_with_fallback", sum(t.n_infeasible > 0 for t in rep.trials)],
        ["rejected_draws", rep.n_rejected],
        ["outcome_front", sum(t.slot == "front" for t in rep.trials)],
        ["outcome_behind", sum(t.slot == "behind" for t in rep.trials)],
    ]
    return {
        "trials.csv": csv_text(trial_header, trial_rows, run_id),
        "aggregate.csv": csv_text(["metric", "value"], agg, run_id),
        "min_distance_hist.csv": csv_text(["bin_lo_m", "bin_hi_m", "count"], _histogram(md), run_id),
    }


def _cmd_compare(d: dict, run_id: str) -> dict[str, str]:
    r = run_fixed_alpha_comparison(scenario_from_dict(d))
    header = trace_header(len(r.adaptive.cfg.merges))
    zones = [["adaptive", "adaptation", int(s)] for s in r.adaptation_steps]
    zones += [["fixed", "infeasible", int(s)] for s in r.fixed_infeasible_steps]
    return {
        "trace_adaptive.csv": csv_text(header, trace_rows(r.adaptive), run_id),
        "trace_fixed.csv": csv_text(header, trace_rows(r.fixed), run_id),
        "zones.csv": csv_text(["run", "kind", "step"], zones, run_id),
        "summary.csv": csv_text(
            SUMMARY_HEADER,
            [summary_row("adaptive", r.adaptive), summary_row("fixed", r.fixed)],
            run_id,
        ),
    }


def _cmd_sweep(d: dict, run_id: str) -> dict[str, str]:
    alphas = d["sweep"]["alpha_nominal"]
    if not isinstance(alphas, list) or not alphas:
        raise ConfigError("sweep.alpha_nominal must be a non-empty list")
    base = scenario_from_dict(d)
    files, summary = {}, []
    for a in alphas:
        a = float(a)
        if not a >= 0:
            raise ConfigError(f"sweep alpha must be non-negative, got {a}")
        tr = run_episode(base.with_controller(alpha_nominal=a))
        files[f"trace_alpha_{fmt(a)}.csv"] = csv_text(trace_header(len(base.merges)), trace_rows(tr), run_id)
        summary.append(summary_row(f"alpha={fmt(a)}", tr))
    files["summary.csv"] = csv_text(SUMMARY_HEADER, summary, run_id)
    return files


def execute(args) -> int:
    try:
        src, d = _load(args)
        run_id = run_id_for(args.command, d)
        if args.command == "run":
            files = _cmd_run(d, run_id)
        elif args.command == "validity":
            files = _cmd_validity(d, run_id, args.workers)
        elif args.command == "compare":
            files = _cmd_compare(d, run_id)
        else:
            files = _cmd_sweep(d, run_id)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, SamplingError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files["resolved_config.yaml"] = dump_config(d)
        for name, text in files.items():
            atomic_write(out / name, text)
        # manifest last: its presence means the run completed
        atomic_write(out / "manifest.txt", manifest_text(args.command, src, d, run_id, sorted(files)))
    except OSError as e:
        print(f"error: cannot write to {out}: {e}", file=sys.stderr)
        return EXIT_IO
    log.info("wrote %d files to %s", len(files) + 1, out)
    return EXIT_OK


def _positive_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safemerge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "run": "simulate one episode and write its trace",
        "validity": "randomized batch with per-trial and aggregate reports",
        "compare": "adaptive vs fixed alpha on the same seed",
        "sweep": "one episode per alpha in sweep.alpha_nominal",
    }
    for name, h in helps.items():
        sp = sub.add_parser(name, help=h)
        sp.add_argument("--config", help="YAML file or builtin:NAME (default: %s)" % DEFAULT_CONFIG[name])
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value; repeatable")
        sp.add_argument("--fixed-alpha", action="store_true", help="keep alpha at alpha_nominal")
        sp.add_argument(
            "--paper-coefficient", action="store_true", help="use coefficient 1 on the chance tightening"
        )
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "validity":
            sp.add_argument("--trials", type=_positive_int, help="number of trials (default: from config)")
            sp.add_argument("--workers", type=_positive_int, default=1, help="worker processes")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return execute(args)


if __name__ == "__main__":
    sys.exit(main())
