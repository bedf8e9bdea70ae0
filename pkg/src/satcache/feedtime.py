"""Cache feeding-time minimization by successive convex approximation.

Each iteration solves the convex inner problem around the previous
``(w, tau)`` and re-anchors on its solution.  Because the tangent is exact at
the anchor, the previous iterate stays feasible and the ``tau`` sequence is
non-increasing.  The relaxed caching decisions are then rounded, repaired and
re-timed against the exact bilinear capacity constraints.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .baselines import (
    InfeasibleTargets,
    density_order,
    greedy_broadcast_until_targets,
    reference1_multibeam,
    reference2_widebeam,
    retime,
)
from .model import (
    CONSTRAINT_FAMILIES,
    ContentCatalog,
    DemandMatrix,
    JointSolution,
    NetworkScenario,
    SatCacheError,
    check_feasible,
    link_usage,
    min_feeding_time,
    spectrum_usage,
    validate_scenario,
)
from .subproblem import (
    EPS_FEAS,
    EPS_OPT,
    MinimizeTau,
    Scaling,
    Status,
    build_inner_problem,
    solve_convex,
)

log = logging.getLogger(__name__)

ANCHOR_FLOOR = 1e-9  # fraction of W_tot / of the time unit


class InfeasibleAfterRounding(SatCacheError, ValueError):
    pass


@dataclass(frozen=True)
class Round:
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("rounding threshold must lie in (0, 1)")


@dataclass(frozen=True)
class PenaltyDriven:
    """Penalize ``v (1 - v)`` during the SCA loop, then round at ``threshold``.

    The weight starts at ``initial`` times the objective scale and grows by
    ``growth`` each iteration until every relaxed binary is within
    ``binarity_tol`` of 0 or 1, but never past ``max_weight`` times the
    objective scale (larger weights only make the inner solves ill-posed).
    """

    initial: float = 1e-3
    growth: float = 10.0
    max_weight: float = 1e3
    binarity_tol: float = 1e-3
    threshold: float = 0.5


@dataclass(frozen=True)
class ScaConfig:
    eps: float = 1e-4
    max_iters: int = 50
    recovery: Round | PenaltyDriven = Round()
    anchor_margin: float = 1.1
    balanced: bool = True
    polish: bool = True
    seed_baselines: bool = True
    eps_opt: float = EPS_OPT
    eps_feas: float = EPS_FEAS

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    tau: float
    w: np.ndarray
    binarity_gap: float
    status: str
    penalty: float = 0.0


@dataclass
class ScaTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    @property
    def taus(self) -> np.ndarray:
        return np.array([r.tau for r in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["iter", "tau", "binarity_gap", "status"])
            for r in self.rows:
                wr.writerow([r.iteration, repr(r.tau), repr(r.binarity_gap), r.status])


@dataclass
class FeedTimeResult:
    solution: JointSolution
    trace: ScaTrace
    relaxed: JointSolution | None = None
    converged: bool = True

    def __iter__(self):
        return iter((self.solution, self.trace))


def binarity_gap(*arrays) -> float:
    """Largest distance of any entry from {0, 1}."""
    vals = [np.minimum(np.abs(a), np.abs(1 - a)).max() for a in arrays if np.size(a)]
    return float(max(vals)) if vals else 0.0


def initial_anchor(scenario, catalog, demand, margin: float = 1.1) -> tuple[np.ndarray, float]:
    """Uniform widths and the greedy broadcast feeding time under them.

    The greedy scheme broadcasts files by global density until every CDN
    reaches its target keeping what fits by local density.  If that fails
    the fallback broadcasts the whole catalog, which the relaxed problem can
    always use to meet attainable targets fractionally.
    """
    n = scenario.n_cdns
    W = float(scenario.total_bandwidth)
    w_bar = np.full(n + 1, W / (n + 1))
    try:
        x, _ = greedy_broadcast_until_targets(scenario, catalog, demand)
        load = float(catalog.sizes @ x)
    except InfeasibleTargets:
        load = float(catalog.sizes.sum())
    load = max(load, float(catalog.sizes.min()))
    tau = margin * load / (w_bar[0] * scenario.wide_beam.spectral_efficiency)
    return w_bar, tau


def check_targets_attainable(scenario, catalog, demand) -> None:
    """Raise :class:`InfeasibleTargets` if some CDN cannot reach its target
    with any set of files that fits its cache (an exact 0/1 knapsack)."""
    q = catalog.sizes
    for k in range(scenario.n_cdns):
        eta = scenario.hit_targets[k]
        if eta <= 0:
            continue
        best = demand.demands[k] @ _knapsack_repair(demand.demands[k], q, scenario.cache_sizes[k],
                                                    np.zeros(q.size, dtype=bool))
        if best < eta - 1e-9:
            raise InfeasibleTargets(f"CDN {k + 1}: target {eta} exceeds reachable {best:.6g} hits")


def minimize_feeding_time(scenario: NetworkScenario, catalog: ContentCatalog, demand: DemandMatrix,
                          config: ScaConfig = ScaConfig()) -> FeedTimeResult:
    """Jointly choose caching and bandwidth to minimize the feeding time.

    Returns a :class:`FeedTimeResult` (iterable as ``solution, trace``).  The
    solution is binary and satisfies the exact capacity constraints.  If
    ``max_iters`` is reached first, the last iterate is used and
    ``converged`` is False.
    """
    validate_scenario(scenario, catalog, demand)
    n, f = demand.shape
    if np.all(scenario.hit_targets <= 0):
        return FeedTimeResult(JointSolution.empty(n, f), ScaTrace())
    check_targets_attainable(scenario, catalog, demand)

    w_bar, tau_bar = initial_anchor(scenario, catalog, demand, config.anchor_margin)
    penalized = isinstance(config.recovery, PenaltyDriven)
    trace = ScaTrace()
    t_old = None
    v_prev = None
    lam = 0.0
    best = None
    converged = False
    unit = Scaling.of(scenario, catalog).seconds
    if penalized:
        lam = config.recovery.initial * tau_bar / unit
        lam_cap = config.recovery.max_weight * tau_bar / unit
    for it in range(1, config.max_iters + 1):
        prog = build_inner_problem(scenario, catalog, demand, (w_bar, tau_bar), MinimizeTau(),
                                   penalty=lam or None, previous=v_prev, balanced=config.balanced)
        res = solve_convex(prog, config.eps_opt, config.eps_feas)
        sc = prog.scaling
        if res.status != Status.OPTIMAL:
            trace.rows.append(TraceRow(it, np.nan, np.full(n + 1, np.nan), np.nan, res.status.value, lam))
            if best is None:
                if res.status == Status.INFEASIBLE:
                    raise InfeasibleTargets("relaxed feeding-time problem is infeasible")
                raise SatCacheError(f"inner solve failed on first iteration: {res.status.value}")
            log.warning("inner solve %s at iteration %d; keeping previous iterate", res.status.value, it)
            break
        x, xn, yn, w, t = prog.layout.split(res.x)
        if t_old is not None and not penalized and t > t_old + config.eps_opt * max(1.0, t_old):
            # the previous iterate is feasible here, so this only happens on inaccurate solves
            log.warning("tau rose at iteration %d; keeping previous iterate", it)
            break
        gap = binarity_gap(x, xn, yn)
        tau = t * sc.seconds
        trace.rows.append(TraceRow(it, tau, w * sc.hz, gap, res.status.value, lam))
        best = (x, xn, yn, w * sc.hz, tau)
        v_prev = res.x
        error = abs(t - t_old) if t_old is not None else np.inf
        t_old = t
        w_bar = np.maximum(w, ANCHOR_FLOOR) * sc.hz
        tau_bar = max(t, ANCHOR_FLOOR) * sc.seconds
        done = error <= config.eps
        if penalized:
            done = done and gap < config.recovery.binarity_tol
            if gap >= config.recovery.binarity_tol:
                lam = min(lam * config.recovery.growth, lam_cap)
        if done:
            converged = True
            break
    if not converged:
        log.warning("SCA stopped after %d iterations without converging", len(trace))

    x, xn, yn, w, tau = best
    relaxed = JointSolution(x, xn, yn, w, tau, {"iterations": len(trace)})
    policy = Round(config.recovery.threshold)
    sol = recover_binaries(relaxed, scenario, catalog, demand, policy, polish=config.polish)
    if config.seed_baselines:
        sol = _beat_baselines(sol, scenario, catalog, demand, config.polish)
    diag = dict(sol.diagnostics)
    diag.update(iterations=len(trace), objective_trace=trace.taus.tolist(), converged=converged,
                relaxed_tau=tau, relaxation_residual=binarity_gap(x, xn, yn))
    sol = JointSolution(sol.x, sol.xn, sol.yn, sol.w, sol.tau, diag)
    return FeedTimeResult(sol, trace, relaxed, converged)


def _beat_baselines(sol, scenario, catalog, demand, polish):
    # Rounding is a heuristic; the single-mode schemes are cheap to build,
    # and starting from them guarantees the joint design is never slower.
    for ref in (reference1_multibeam, reference2_widebeam):
        try:
            cand = retime(scenario, catalog, ref(scenario, catalog, demand))
        except InfeasibleTargets:
            continue
        if cand.tau < sol.tau * (1 - 1e-9):
            label = f"{cand.diagnostics['scheme']} start"
            if polish:
                cand = polish_feeding_time(cand, scenario, catalog, demand)
            diag = dict(cand.diagnostics, recovery=label)
            sol = JointSolution(cand.x, cand.xn, cand.yn, cand.w, cand.tau, diag)
    return sol


def recover_binaries(relaxed: JointSolution, scenario: NetworkScenario, catalog: ContentCatalog,
                     demand: DemandMatrix, policy: Round | PenaltyDriven = Round(),
                     tau_fixed: float | None = None, enforce_targets: bool = True,
                     polish: bool = False) -> JointSolution:
    """Round relaxed decisions to a binary point and repair feasibility.

    Steps: threshold every variable; clear ``x_n`` where ``x`` is 0 and
    ``y_n`` where ``x_n`` is 1; evict cached files of lowest ``l/q`` until each
    cache fits; if a hit target is missed, add unserved files of highest
    ``l/q`` that fit the cache (kept from the broadcast when available,
    multicast otherwise).  Broadcasts no CDN keeps are dropped.

    Without ``tau_fixed`` the widths are then re-split to minimize the
    feeding time for the recovered loads, and with ``polish`` the result is
    improved by :func:`polish_feeding_time`.  With ``tau_fixed`` the feeding
    time is held and the lowest-value transfers (hits per unit of spectrum)
    are dropped until the loads fit the band.
    """
    thr = policy.threshold
    q = catalog.sizes
    L = demand.demands
    n, f = L.shape
    x = np.asarray(relaxed.x) >= thr
    xn = (np.asarray(relaxed.xn) >= thr) & x[None, :]
    yn = (np.asarray(relaxed.yn) >= thr) & ~xn
    for k in range(n):
        # ascending density, ties to the lower index
        order = np.lexsort((np.arange(f), L[k] / q))
        used = q @ (xn[k] | yn[k])
        for j in order:
            if used <= scenario.cache_sizes[k] * (1 + 1e-12):
                break
            if xn[k, j] or yn[k, j]:
                xn[k, j] = yn[k, j] = False
                used -= q[j]
        if enforce_targets:
            hits = L[k] @ (xn[k] | yn[k])
            if hits < scenario.hit_targets[k] - 1e-9:
                for j in density_order(L[k], q):
                    if xn[k, j] or yn[k, j]:
                        continue
                    if q[j] <= (scenario.cache_sizes[k] - used) * (1 + 1e-12):
                        if x[j]:
                            xn[k, j] = True
                        else:
                            yn[k, j] = True
                        used += q[j]
                        hits += L[k, j]
                        if hits >= scenario.hit_targets[k] - 1e-9:
                            break
                if hits < scenario.hit_targets[k] - 1e-9:
                    keep = _knapsack_repair(L[k], q, scenario.cache_sizes[k], xn[k] | yn[k])
                    hits = L[k] @ keep
                    if hits < scenario.hit_targets[k] - 1e-9:
                        raise InfeasibleAfterRounding(
                            f"CDN {k + 1}: {hits} hits after repair, target {scenario.hit_targets[k]}")
                    xn[k] = keep & x
                    yn[k] = keep & ~x
    x &= xn.any(axis=0)

    if tau_fixed is None:
        sol = JointSolution(x.astype(float), xn.astype(float), yn.astype(float),
                            np.zeros(n + 1), 0.0)
        tau, w = min_feeding_time(scenario, sol.loads(catalog))
        sol = JointSolution(sol.x, sol.xn, sol.yn, w, tau, {"recovery": "round"})
        if polish and enforce_targets:
            sol = polish_feeding_time(sol, scenario, catalog, demand)
        return sol
    return fit_to_band(scenario, catalog, demand, x, xn, yn, tau_fixed)


def _cheapest_multicast(demand_row, sizes, capacity, target, bcast):
    """Storage set meeting ``target`` with the least multicast load.

    Broadcast files cost nothing to store; the rest must come over the spot
    link.  Returns ``(stored, multicast_bits)`` or ``None`` if unreachable.
    """
    if target <= 0:
        return np.zeros(sizes.size, dtype=bool), 0.0
    qmax = float(sizes.max())
    # tiny pull towards more hits among equally cheap choices
    c = np.where(bcast, 0.0, sizes / qmax) - 1e-7 * demand_row / max(float(demand_row.sum()), 1.0)
    A = np.vstack([sizes / capacity, -demand_row / target])
    res = milp(c, constraints=LinearConstraint(A, -np.inf, [1.0, -1.0 + 1e-12]),
               integrality=np.ones(sizes.size), bounds=Bounds(0, 1))
    if res.x is None:
        return None
    z = res.x > 0.5
    if demand_row @ z < target - 1e-9 or sizes @ z > capacity * (1 + 1e-9):
        return None
    return z, float(sizes @ (z & ~bcast))


def _assign(scenario, catalog, demand, x):
    """Best storage per CDN for broadcast set ``x``; ``None`` if a target fails."""
    n, f = demand.shape
    xn = np.zeros((n, f), dtype=bool)
    yn = np.zeros((n, f), dtype=bool)
    for k in range(n):
        got = _cheapest_multicast(demand.demands[k], catalog.sizes, scenario.cache_sizes[k],
                                  scenario.hit_targets[k], x)
        if got is None:
            return None
        z, _ = got
        xn[k] = z & x
        yn[k] = z & ~x
    x = x & xn.any(axis=0)
    sol = JointSolution(x.astype(float), xn.astype(float), yn.astype(float), np.zeros(n + 1), 0.0)
    tau, w = min_feeding_time(scenario, sol.loads(catalog))
    return JointSolution(sol.x, sol.xn, sol.yn, w, tau, {"recovery": "round+polish"})


def polish_feeding_time(sol: JointSolution, scenario, catalog, demand, max_passes: int = 3
                        ) -> JointSolution:
    """Local search on the broadcast set, keeping feasibility.

    For a fixed broadcast set each CDN independently picks the storage set
    with the least multicast load that still meets its target (a small
    exact 0/1 program).  Single-file toggles of the broadcast set are then
    tried in density order and kept when the feeding time drops.
    """
    x = np.asarray(sol.x) > 0.5
    best = _assign(scenario, catalog, demand, x)
    if best is None or best.tau >= sol.tau:
        best = sol
    else:
        x = np.asarray(best.x) > 0.5
    order = density_order(demand.demands.sum(axis=0), catalog.sizes)
    for _ in range(max_passes):
        improved = False
        for j in order:
            trial = x.copy()
            trial[j] = not trial[j]
            cand = _assign(scenario, catalog, demand, trial)
            if cand is not None and cand.tau < best.tau * (1 - 1e-9):
                best, x, improved = cand, np.asarray(cand.x) > 0.5, True
        if not improved:
            break
    return best


def _knapsack_repair(demand_row, sizes, capacity, current) -> np.ndarray:
    """Most hits within ``capacity``, preferring files already chosen on ties.

    Used when the density-ordered repair falls short of a target that a
    different file mix could still reach.
    """
    scale = max(float(demand_row.max()), 1.0)
    # the bonus is below the smallest hit difference of 1 request
    bonus = 0.5 / (len(sizes) + 1) * current
    c = -(demand_row + bonus) / scale
    res = milp(c, constraints=LinearConstraint(sizes[None, :] / capacity, -np.inf, 1.0),
               integrality=np.ones(len(sizes)), bounds=Bounds(0, 1))
    if res.x is None:
        return current.copy()
    return res.x > 0.5


def fit_to_band(scenario, catalog, demand, x, xn, yn, tau) -> JointSolution:
    """Drop lowest-value transfers until the loads fit in ``tau``; spread widths."""
    q = catalog.sizes
    L = demand.demands
    gam = scenario.efficiencies
    W = float(scenario.total_bandwidth)
    x, xn, yn = x.copy(), xn.copy(), yn.copy()

    def loads():
        return np.concatenate([[q @ x], yn @ q])

    while link_usage(scenario, loads(), tau) > W * (1 + 1e-9):
        best = None
        # broadcast j: value = hits from keeping it, cost = q_j / gamma_0
        for j in np.flatnonzero(x):
            val = float(L[:, j] @ xn[:, j]) / (q[j] / gam[0])
            if best is None or val < best[0]:
                best = (val, "x", -1, j)
        for k, j in zip(*np.nonzero(yn)):
            val = L[k, j] / (q[j] / gam[k + 1])
            if best is None or val < best[0]:
                best = (val, "y", k, j)
        _, kind, k, j = best
        if kind == "x":
            x[j] = False
            xn[:, j] = False
        else:
            yn[k, j] = False
    need = loads() / (gam * tau) if tau > 0 else np.zeros(len(gam))
    used = spectrum_usage(scenario, need)
    w = need * (W / used) if used > 0 else np.full(len(gam), W / len(gam))
    return JointSolution(x.astype(float), xn.astype(float), yn.astype(float), w, tau,
                         {"recovery": "round"})


def is_feasible(sol, scenario, catalog, demand, with_targets=True, tol=1e-6) -> bool:
    fam = [k for k in CONSTRAINT_FAMILIES if with_targets or k != "targets"]
    return check_feasible(sol, scenario, catalog, demand, tol, fam).feasible
