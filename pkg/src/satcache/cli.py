"""Sweep runner: scenario + demand in, plot-ready CSV reports out.

Example::

    python -m satcache --sweep chr=0.1..0.9 --schemes joint,ref1,ref2 --out runs/toy

Axes:

* ``chr``: target cache hit ratio; each scheme minimizes the feeding time.
* ``cache``: cache size in GB; each scheme maximizes hits at ``--tau``.
* ``tau``: feeding time in seconds; each scheme maximizes hits.

List values are comma separated or a range ``a..b[:step]``; without a step
the range advances by ``a`` (``0.1..0.9`` is 0.1, 0.2, ..., 0.9).

Outputs in ``--out``: ``report.csv``, ``split.csv`` (wide vs spot volumes),
one ``solution_*.csv`` per point and scheme, SCA traces for feeding-time
points, and ``summary.json``.  With the default node-limited branch and bound
every CSV is byte-identical across reruns with the same seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

from .baselines import (
    HitsObjective,
    InfeasibleTargets,
    best_reference3,
    reference1_multibeam,
    reference2_widebeam,
)
from .feedtime import InfeasibleAfterRounding, minimize_feeding_time
from .hits import (
    BranchAndBound,
    MbipConfig,
    RelaxRoundRepair,
    maximize_hits,
    write_solution_csv,
)
from .ingest import UnreadableSource
from .model import MULTICARRIER, MULTISPOT, JointSolution, SatCacheError, ScenarioError
from .scenario_io import Problem, load_problem
from .synthetic import east_coast_scenario, reuse_scenario, toy_paths

log = logging.getLogger("satcache")

AXES = {"chr": "target_chr", "cache": "cache_gb", "tau": "tau_s"}
SCHEMES = ("joint", "ref1", "ref2", "ref3")
REPORT_COLUMNS = ("axis_value", "scheme", "tau_s", "hits", "chr", "wide_bits", "spot_bits",
                  "solver_status", "gap")


class UsageError(SatCacheError, ValueError):
    pass


def parse_values(text: str) -> list[float]:
    """``"5,10,15"`` or ``"a..b[:step]"`` to a strictly increasing list."""
    text = text.strip()
    if ".." in text:
        lo, _, rest = text.partition("..")
        hi, _, step = rest.partition(":")
        a, b = Decimal(lo), Decimal(hi)
        d = Decimal(step) if step else a
        if d <= 0:
            raise UsageError(f"range {text!r} needs a positive step")
        vals, v = [], a
        while v <= b:
            vals.append(float(v))
            v += d
    else:
        vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise UsageError(f"empty value list {text!r}")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise UsageError(f"values must be strictly increasing: {text!r}")
    return vals


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple[float, ...]
    schemes: tuple[str, ...]
    compare_reuse: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.axis not in AXES:
            raise UsageError(f"unknown axis {self.axis!r}; expected one of {sorted(AXES)}")
        if not self.values:
            raise UsageError("axis list is empty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise UsageError("axis values must be strictly increasing")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise UsageError(f"unknown schemes {bad}; expected a subset of {SCHEMES}")


@dataclass(frozen=True)
class Options:
    method: str = "bnb"
    node_limit: int = 5000
    time_limit: float | None = None
    tau: float | None = None


@dataclass
class Point:
    axis_value: float
    scheme: str
    status: str
    solution: JointSolution | None = None
    hits: float = math.nan
    chr: float = math.nan
    gap: float = math.nan
    trace: list | None = None

    @property
    def tau(self) -> float:
        return self.solution.tau if self.solution is not None else math.nan


def _point_problem(problem: Problem, axis: str, value: float, opts: Options) -> tuple[Problem, float]:
    tau = opts.tau if opts.tau is not None else problem.tau
    if axis == "chr":
        return problem.with_targets(value), tau
    if axis == "cache":
        return problem.with_cache(value), tau
    return problem, value


def run_point(problem: Problem, axis: str, value: float, scheme: str, opts: Options) -> Point:
    """Solve one sweep point with one scheme."""
    p, tau = _point_problem(problem, axis, value, opts)
    sc, cat, dem = p.scenario, p.catalog, p.demand
    total = float(dem.demands.sum())
    try:
        if axis == "chr":
            if scheme == "ref3":
                return Point(value, scheme, "NotApplicable")
            if scheme == "joint":
                res = minimize_feeding_time(sc, cat, dem)
                sol = res.solution
                status = "Converged" if res.converged else "IterationLimit"
                trace = [(r.iteration, r.tau, r.binarity_gap, r.status) for r in res.trace.rows]
                h = sol.hits(dem)
                return Point(value, scheme, status, sol, h, h / total if total else 0.0, math.nan, trace)
            fn = reference1_multibeam if scheme == "ref1" else reference2_widebeam
            sol = fn(sc, cat, dem)
            status, gap = "Heuristic", math.nan
        else:
            if scheme == "joint":
                method = RelaxRoundRepair() if opts.method == "relax" else \
                    BranchAndBound(node_limit=opts.node_limit, time_limit=opts.time_limit)
                res = maximize_hits(sc, cat, dem, MbipConfig(tau, method))
                return Point(value, scheme, res.status, res.solution, res.hits, res.chr, res.gap)
            if scheme == "ref1":
                sol = reference1_multibeam(sc, cat, dem, HitsObjective(tau))
            elif scheme == "ref2":
                sol = reference2_widebeam(sc, cat, dem, HitsObjective(tau))
            else:
                sol = best_reference3(sc, cat, dem, tau)
            status, gap = "Heuristic", math.nan
    except (InfeasibleTargets, InfeasibleAfterRounding) as exc:
        log.info("%s at %s=%s: %s", scheme, axis, value, exc)
        return Point(value, scheme, "Infeasible")
    h = sol.hits(dem)
    return Point(value, scheme, status, sol, h, h / total if total else 0.0, gap)


def _run_job(job):
    problem, axis, value, scheme, opts = job
    return run_point(problem, axis, value, scheme, opts)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else f"{v:.10g}"


def report_rows(points: list[Point], catalog) -> list[list[str]]:
    rows = []
    for pt in points:
        sol = pt.solution
        wide = sol.wide_bits(catalog) if sol is not None else math.nan
        spot = sol.spot_bits(catalog) if sol is not None else math.nan
        rows.append([_fmt(pt.axis_value), pt.scheme, _fmt(pt.tau), _fmt(pt.hits), _fmt(pt.chr),
                     _fmt(wide), _fmt(spot), pt.status, _fmt(pt.gap)])
    return rows


def split_rows(points: list[Point], catalog) -> list[list[str]]:
    """Wide-beam and spot-beam data volumes (bits) per axis point and scheme."""
    rows = []
    for pt in points:
        if pt.solution is None:
            continue
        wide = pt.solution.wide_bits(catalog)
        spot = pt.solution.spot_bits(catalog)
        share = wide / (wide + spot) if wide + spot > 0 else math.nan
        rows.append([_fmt(pt.axis_value), pt.scheme, _fmt(wide), _fmt(spot), _fmt(share)])
    return rows


def emit_split_report(points: list[Point], catalog, path) -> None:
    """Write ``axis_value,scheme,wide_bits,spot_bits,wide_share`` rows."""
    _write_csv(path, ("axis_value", "scheme", "wide_bits", "spot_bits", "wide_share"),
               split_rows(points, catalog))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run_sweep(problem: Problem, spec: SweepSpec, opts: Options, out: Path, jobs: int = 1) -> dict:
    """Run every (point, scheme) pair and write the reports under ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    variants = [("", problem)]
    if spec.compare_reuse:
        variants = [(f"[{m}]", problem.with_reuse(m)) for m in (MULTICARRIER, MULTISPOT)]
    work = [(p, spec.axis, v, s, opts) for v in spec.values for tag, p in variants for s in spec.schemes]
    labels = [f"{s}{tag}" for v in spec.values for tag, _ in variants for s in spec.schemes]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(_run_job, work))
    else:
        points = [_run_job(job) for job in work]
    for pt, label in zip(points, labels):
        pt.scheme = label

    cat = problem.catalog
    _write_csv(out / "report.csv", REPORT_COLUMNS, report_rows(points, cat))
    emit_split_report(points, cat, out / "split.csv")
    files = ["report.csv", "split.csv"]
    for pt in points:
        if pt.solution is None:
            continue
        stem = f"{spec.axis}_{_fmt(pt.axis_value)}_{pt.scheme.replace('[', '_').replace(']', '')}"
        name = f"solution_{stem}.csv"
        write_solution_csv(out / name, pt.solution, problem.cdn_ids, problem.item_ids)
        files.append(name)
        if pt.trace:
            tname = f"trace_{stem}.csv"
            _write_csv(out / tname, ("iter", "tau", "binarity_gap", "status"),
                       [[i, _fmt(t), _fmt(g), s] for i, t, g, s in pt.trace])
            files.append(tname)
    statuses: dict[str, int] = {}
    for pt in points:
        statuses[pt.status] = statuses.get(pt.status, 0) + 1
    summary = {
        "axis": spec.axis,
        "values": list(spec.values),
        "schemes": list(spec.schemes),
        "compare_reuse": spec.compare_reuse,
        "seed": spec.seed,
        "method": opts.method,
        "node_limit": opts.node_limit,
        "time_limit": opts.time_limit,
        "tau_s": opts.tau if opts.tau is not None else problem.tau,
        "n_cdns": problem.scenario.n_cdns,
        "n_files": problem.catalog.n_files,
        "rows": len(points),
        "status_counts": dict(sorted(statuses.items())),
        "files": files,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="python -m satcache",
        description="Joint caching and bandwidth allocation sweeps for multibeam satellites.")
    ap.add_argument("--scenario", default="toy",
                    help="scenario JSON, or one of: toy (bundled), east-coast (synthetic 9 CDNs), "
                         "reuse (synthetic 4 CDNs)")
    ap.add_argument("--demand", help="demand CSV (cdn_id,item_id,count); overrides any demand in "
                                     "the scenario file (the toy scenario uses the bundled one)")
    ap.add_argument("--sweep", nargs="+", metavar="AXIS=LIST",
                    help="axis and values, e.g. chr=0.1..0.9, cache=5,10,30 or tau 20..200")
    ap.add_argument("--feeding-time", metavar="LIST", help="shorthand for --sweep tau=LIST")
    ap.add_argument("--schemes", default="joint,ref1,ref2,ref3",
                    help="comma-separated subset of joint,ref1,ref2,ref3")
    ap.add_argument("--seed", type=int, default=0, help="seed for file sizes and synthetic data")
    ap.add_argument("--out", default="satcache-out", help="output directory")
    ap.add_argument("--compare-reuse", action="store_true",
                    help="run every point under multicarrier and multispot reuse")
    ap.add_argument("--tau", type=float, help="feeding time (s) for the hits problem")
    ap.add_argument("--method", choices=("bnb", "relax"), default="bnb",
                    help="exact branch and bound or the relax/round/repair heuristic")
    ap.add_argument("--node-limit", type=int, default=5000, help="branch-and-bound node budget")
    ap.add_argument("--time-limit", type=float,
                    help="branch-and-bound wall-clock limit (s); results then depend on machine speed")
    ap.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return ap


def _parse_sweep(args) -> tuple[str, list[float]]:
    if args.feeding_time:
        if args.sweep:
            raise UsageError("use either --sweep or --feeding-time")
        return "tau", parse_values(args.feeding_time)
    if not args.sweep:
        raise UsageError("--sweep is required (or --feeding-time)")
    if len(args.sweep) == 1 and "=" in args.sweep[0]:
        axis, _, values = args.sweep[0].partition("=")
    elif len(args.sweep) == 2:
        axis, values = args.sweep
    else:
        raise UsageError("--sweep takes AXIS=LIST or AXIS LIST")
    return axis.strip(), parse_values(values)


def _load(args) -> Problem:
    if args.scenario == "east-coast":
        return east_coast_scenario(args.seed)
    if args.scenario == "reuse":
        return reuse_scenario(args.seed)
    paths = toy_paths()
    scenario = paths["scenario.json"] if args.scenario == "toy" else args.scenario
    demand = args.demand
    if demand is None and args.scenario == "toy":
        demand = paths["demand.csv"]
    for label, path in (("scenario", scenario), ("demand", demand)):
        if path is not None and not os.path.isfile(path):
            raise UnreadableSource(f"{label} file not found: {path}")
    return load_problem(scenario, demand, seed=args.seed)


def _error(exc: Exception, code: int) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    issues = getattr(exc, "issues", None)
    if issues:
        doc["issues"] = [{"kind": i.kind.__name__, "where": i.where, "message": i.message} for i in issues]
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SATCACHE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        axis, values = _parse_sweep(args)
        schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
        spec = SweepSpec(axis, tuple(values), schemes, args.compare_reuse, args.seed)
        problem = _load(args)
        opts = Options(args.method, args.node_limit, args.time_limit, args.tau)
        summary = run_sweep(problem, spec, opts, Path(args.out), max(1, args.jobs))
    except (UsageError, UnreadableSource, ScenarioError) as exc:
        return _error(exc, 2)
    except SatCacheError as exc:
        return _error(exc, 3)
    print(json.dumps({"out": str(args.out), "rows": summary["rows"],
                      "status_counts": summary["status_counts"]}, sort_keys=True))
    return 0
