"""Cache-hits maximization at a fixed feeding time.

With ``tau`` fixed the capacity constraints ``q @ x <= gamma_0 tau w_0`` and
``q @ y_n <= gamma_n tau w_n`` are linear, so the problem is a mixed-binary
LP.  Hit targets play no role here.  Two solution paths are offered: an exact
best-first branch and bound over HiGHS LP relaxations, and a cheap
relax/round/repair heuristic finished by a swap hill-climb.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field

import highspy
import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .baselines import best_reference3, density_order
from .feedtime import Round, fit_to_band, recover_binaries
from .model import (
    MULTISPOT,
    ContentCatalog,
    DemandMatrix,
    JointSolution,
    NetworkScenario,
    SatCacheError,
    validate_scenario,
)
from .subproblem import Scaling, layout_for, linear_constraints

log = logging.getLogger(__name__)


class Infeasible(SatCacheError, ValueError):
    pass


@dataclass(frozen=True)
class BranchAndBound:
    """Best-first search; ``seed_baselines`` starts from the best fixed-split
    scheme (hill-climbed) when it beats the rounded root relaxation."""

    node_limit: int = 100_000
    gap_tol: float = 1e-6
    time_limit: float | None = None
    seed_baselines: bool = True


@dataclass(frozen=True)
class RelaxRoundRepair:
    pass


@dataclass(frozen=True)
class MbipConfig:
    tau: float
    method: BranchAndBound | RelaxRoundRepair = BranchAndBound()

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError("tau must be non-negative")
        if isinstance(self.method, BranchAndBound) and self.method.gap_tol < 0:
            raise ValueError("gap_tol must be >= 0")


@dataclass
class HitsResult:
    solution: JointSolution
    hits: float
    chr: float
    gap: float
    bound: float
    status: str
    nodes: int = 0
    stats: dict = field(default_factory=dict)

    def summary(self) -> str:
        """One line: hits, CHR, gap and solver status."""
        return f"hits={self.hits:g} chr={self.chr:.6f} gap={self.gap:.3g} status={self.status}"


def bound_gap(incumbent: float, bound: float) -> float:
    """Relative gap ``(bound - incumbent) / max(1, bound)`` of a maximization.

    A bound that sits below the incumbent only through LP round-off gives 0.
    """
    return max(0.0, (bound - incumbent) / max(1.0, bound))


@dataclass
class HitsLP:
    """The LP relaxation in normalized units; objective is raw hits."""

    scenario: NetworkScenario
    catalog: ContentCatalog
    demand: DemandMatrix
    tau: float
    c: np.ndarray = field(init=False)
    A_ub: sp.csr_matrix = field(init=False)
    b_ub: np.ndarray = field(init=False)
    lb: np.ndarray = field(init=False)
    ub: np.ndarray = field(init=False)

    def __post_init__(self):
        sc = Scaling.of(self.scenario, self.catalog)
        lay = layout_for(self.scenario, self.catalog)
        self.layout = lay
        self.scaling = sc
        A, b, _ = linear_constraints(self.scenario, self.catalog, self.demand, lay, sc, with_targets=False)
        n, f = lay.n_cdns, lay.n_files
        q = self.catalog.sizes / sc.bits
        gam = self.scenario.efficiencies / sc.gamma
        t = self.tau / sc.seconds
        rows, cols, vals = [], [], []
        for k in range(n + 1):
            start = lay.x.start if k == 0 else lay.yn_index(k - 1, 0)
            rows += [k] * (f + 1)
            cols += list(range(start, start + f)) + [lay.w.start + k]
            vals += list(q) + [-gam[k] * t]
        cap = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, lay.size))
        self.A_ub = sp.vstack([cap, A], format="csr")
        self.b_ub = np.concatenate([np.zeros(n + 1), b])
        L = self.demand.demands.ravel()
        self.c = np.zeros(lay.size)
        self.c[lay.xn] = -L
        self.c[lay.yn] = -L
        self.lb = np.zeros(lay.size)
        self.ub = np.full(lay.size, np.inf)
        self.ub[lay.binaries] = 1.0
        self.lb[lay.tau] = self.ub[lay.tau] = t
        # branching priority: demand carried by each binary
        pri = np.zeros(lay.binaries.stop)
        pri[lay.x] = self.demand.demands.sum(axis=0)
        pri[lay.xn] = L
        pri[lay.yn] = L
        self.priority = pri

        self._highs = None

    def _model(self):
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        lp = highspy.HighsLp()
        A = self.A_ub.tocsc()
        lp.num_col_, lp.num_row_ = A.shape[1], A.shape[0]
        lp.col_cost_ = self.c
        lp.col_lower_ = self.lb
        lp.col_upper_ = np.where(np.isfinite(self.ub), self.ub, highspy.kHighsInf)
        lp.row_lower_ = np.full(A.shape[0], -highspy.kHighsInf)
        lp.row_upper_ = self.b_ub
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        h.passModel(lp)
        self._highs = h
        self._cur_lb = self.lb.copy()
        self._cur_ub = self.ub.copy()
        return h

    def solve(self, lb=None, ub=None):
        """LP optimum under the given bounds: ``(v, hits)`` or ``(None, -inf)``.

        One HiGHS instance is kept and re-solved after bound changes, so the
        simplex warm-starts from the previous basis.
        """
        h = self._highs or self._model()
        lb = self.lb if lb is None else lb
        ub = self.ub if ub is None else ub
        diff = np.flatnonzero((lb != self._cur_lb) | (ub != self._cur_ub))
        if diff.size:
            h.changeColsBounds(diff.size, diff.astype(np.int32), lb[diff],
                               np.where(np.isfinite(ub[diff]), ub[diff], highspy.kHighsInf))
            self._cur_lb, self._cur_ub = lb.copy(), ub.copy()
        h.run()
        st = h.getModelStatus()
        if st == highspy.HighsModelStatus.kInfeasible:
            return None, -np.inf
        if st != highspy.HighsModelStatus.kOptimal:
            # fall back to a fresh solve before giving up
            self._highs = None
            res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, bounds=np.column_stack([lb, ub]),
                          method="highs")
            if res.status == 2:
                return None, -np.inf
            if res.status != 0:
                raise SatCacheError(f"LP relaxation failed: {res.message}")
            return res.x, -float(res.fun)
        v = np.clip(np.asarray(h.getSolution().col_value), lb, ub)
        return v, -float(h.getInfo().objective_function_value)

    def to_solution(self, v) -> JointSolution:
        x, xn, yn, w, _ = self.layout.split(v)
        return JointSolution(x, xn, yn, w * self.scaling.hz, self.tau)


def maximize_hits(scenario: NetworkScenario, catalog: ContentCatalog, demand: DemandMatrix,
                  config: MbipConfig) -> HitsResult:
    """Best caching and bandwidth split for a fixed feeding time ``config.tau``.

    Reported CHR is hits divided by total requests over all CDNs.
    """
    validate_scenario(scenario, catalog, demand)
    n, f = demand.shape
    total = float(demand.demands.sum())
    t0 = time.perf_counter()
    if config.tau == 0:
        sol = JointSolution.empty(n, f, 0.0, _spread(scenario))
        return HitsResult(sol, 0.0, 0.0, 0.0, 0.0, "Optimal")
    lp = HitsLP(scenario, catalog, demand, config.tau)
    if isinstance(config.method, RelaxRoundRepair):
        v, bound = lp.solve()
        if v is None:
            raise Infeasible("hits LP relaxation is infeasible")
        sol = _relax_round_repair(lp, v)
        h = sol.hits(demand)
        return HitsResult(sol, h, h / total if total else 0.0, bound_gap(h, bound), bound,
                          "Heuristic", 1, {"time": time.perf_counter() - t0})
    return _branch_and_bound(lp, config.method, t0)


def _spread(scenario) -> np.ndarray:
    n = scenario.n_cdns
    return np.full(n + 1, scenario.total_bandwidth / (n + 1))


def _integral_demand(demand) -> bool:
    d = demand.demands
    return bool(np.all(d == np.round(d)))


def _branch_and_bound(lp: HitsLP, cfg: BranchAndBound, t0: float) -> HitsResult:
    demand = lp.demand
    total = float(demand.demands.sum())
    lay = lp.layout
    nb = lay.binaries.stop
    integral = _integral_demand(demand)

    def tighten(b):
        return np.floor(b + 1e-6) if integral else b

    v, root = lp.solve()
    if v is None:
        raise Infeasible("hits LP relaxation is infeasible")
    inc_sol = _relax_round_repair(lp, v)
    inc = inc_sol.hits(demand)
    if cfg.seed_baselines:
        ref = best_reference3(lp.scenario, lp.catalog, demand, lp.tau)
        ref = swap_hill_climb(lp.scenario, lp.catalog, demand, _binarize(ref))
        if ref.hits(demand) > inc:
            inc_sol, inc = ref, ref.hits(demand)
    counter = itertools.count()
    heap = [(-tighten(root), next(counter), lp.lb.copy(), lp.ub.copy(), v)]
    nodes = 1
    status = "Optimal"
    while heap:
        top = -heap[0][0]
        if top <= inc + 1e-9:
            heap = []
            break
        if bound_gap(inc, top) <= cfg.gap_tol:
            break
        if nodes >= cfg.node_limit:
            status = "NodeLimit"
            break
        if cfg.time_limit is not None and time.perf_counter() - t0 > cfg.time_limit:
            status = "TimeLimit"
            break
        _, _, lb, ub, v = heapq.heappop(heap)
        vb = v[:nb]
        frac = np.minimum(vb, 1 - vb)
        cand = np.flatnonzero(frac > 1e-6)
        if cand.size == 0:
            sol = _binarize(lp.to_solution(v))
            h = sol.hits(demand)
            if h > inc:
                inc, inc_sol = h, sol
            continue
        key = np.lexsort((cand, -lp.priority[cand], -np.round(frac[cand], 9)))
        j = cand[key[0]]
        for val in (1.0, 0.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = val
            if val == 1.0 and lay.xn.start <= j < lay.xn.stop:
                clb[(j - lay.xn.start) % lay.n_files] = 1.0  # x_n = 1 forces x = 1
            cv, cb = lp.solve(clb, cub)
            nodes += 1
            if cv is None:
                continue
            cb = tighten(cb)
            if cb <= inc + 1e-9:
                continue
            cand_sol = _round_quick(lp, cv)
            h = cand_sol.hits(demand)
            if h > inc:
                inc, inc_sol = h, cand_sol
            if cb > inc + 1e-9:
                heapq.heappush(heap, (-cb, next(counter), clb, cub, cv))
    best_bound = max(inc, -heap[0][0]) if heap else inc
    gap = bound_gap(inc, best_bound)
    if status == "Optimal" and gap > cfg.gap_tol:
        status = "GapLimit"
    stats = {"time": time.perf_counter() - t0, "root_bound": root}
    log.debug("B&B %s: hits=%s bound=%s nodes=%d", status, inc, best_bound, nodes)
    return HitsResult(inc_sol, inc, inc / total if total else 0.0, gap, best_bound, status, nodes, stats)


def _binarize(sol: JointSolution) -> JointSolution:
    r = np.round
    return JointSolution(r(sol.x), r(sol.xn), r(sol.yn), sol.w, sol.tau, sol.diagnostics)


def _round_quick(lp: HitsLP, v) -> JointSolution:
    sol = recover_binaries(lp.to_solution(v), lp.scenario, lp.catalog, lp.demand, Round(0.5),
                           tau_fixed=lp.tau, enforce_targets=False)
    return greedy_complete(lp.scenario, lp.catalog, lp.demand, sol)


def _relax_round_repair(lp: HitsLP, v) -> JointSolution:
    sol = _round_quick(lp, v)
    return swap_hill_climb(lp.scenario, lp.catalog, lp.demand, sol)


class _State:
    """Binary caching state with incremental load bookkeeping."""

    def __init__(self, scenario, catalog, demand, sol: JointSolution):
        self.sc = scenario
        self.catalog = catalog
        self.demand = demand
        self.q = catalog.sizes
        self.L = demand.demands
        self.tau = sol.tau
        self.x = sol.x > 0.5
        self.xn = (sol.xn > 0.5) & self.x[None, :]
        self.yn = (sol.yn > 0.5) & ~self.xn
        self.W = float(scenario.total_bandwidth)
        self.gam = scenario.efficiencies
        self.cidx = scenario.color_index() if scenario.reuse_mode == MULTISPOT else None

    def loads(self):
        return np.concatenate([[self.q @ self.x], self.yn @ self.q])

    def used(self, k):
        return self.q @ (self.xn[k] | self.yn[k])

    def spectrum(self, loads):
        """Vectorized over the leading axis of ``loads`` (shape ``(m, N+1)``)."""
        need = np.atleast_2d(loads) / (self.gam * self.tau)
        if self.cidx is None:
            return need.sum(axis=1)
        per = np.zeros((need.shape[0], int(self.cidx.max()) + 1))
        for c in range(per.shape[1]):
            per[:, c] = need[:, 1:][:, self.cidx == c].max(axis=1)
        return need[:, 0] + per.sum(axis=1)

    def fits(self, loads):
        return self.spectrum(loads) <= self.W * (1 + 1e-9)

    def solution(self) -> JointSolution:
        x = self.x & self.xn.any(axis=0)
        return fit_to_band(self.sc, self.catalog, self.demand, x, self.xn, self.yn, self.tau)


def greedy_complete(scenario, catalog, demand, sol: JointSolution) -> JointSolution:
    """Add files by local density wherever cache and spectrum still allow.

    A file already broadcast is kept for free; otherwise it is multicast on
    the CDN's spot link.
    """
    if sol.tau <= 0:
        return sol
    st = _State(scenario, catalog, demand, sol)
    for k in range(st.L.shape[0]):
        room = scenario.cache_sizes[k] - st.used(k)
        for j in density_order(st.L[k], st.q):
            if st.xn[k, j] or st.yn[k, j] or st.q[j] > room * (1 + 1e-12) or st.L[k, j] <= 0:
                continue
            if st.x[j]:
                st.xn[k, j] = True
                room -= st.q[j]
                continue
            ld = st.loads()
            ld[k + 1] += st.q[j]
            if st.fits(ld)[0]:
                st.yn[k, j] = True
                room -= st.q[j]
    return st.solution()


def swap_hill_climb(scenario, catalog, demand, sol: JointSolution, max_passes: int = 1000) -> JointSolution:
    """Best-improvement local search over single add / swap moves.

    A move at CDN ``k`` drops at most one stored file and adds one unstored
    file, either kept from the broadcast, multicast on the spot link, or
    newly broadcast.  Dropping a file the CDN kept from the broadcast also
    stops that broadcast if no other CDN keeps it.  A move is taken only if
    hits strictly increase and every cache and the band still fit.
    """
    if sol.tau <= 0:
        return sol
    st = _State(scenario, catalog, demand, sol)
    q, L = st.q, st.L
    n = L.shape[0]
    M = scenario.cache_sizes
    for _ in range(max_passes):
        base = st.loads()
        best = None
        for k in range(n):
            stored = st.xn[k] | st.yn[k]
            used = q @ stored
            drops = [-1] + list(np.flatnonzero(stored))
            free = ~stored & (L[k] > 0)
            if not free.any():
                continue
            g = np.flatnonzero(free)
            for j in drops:
                lose = L[k, j] if j >= 0 else 0.0
                gain = L[k, g] - lose
                ok_gain = gain > 1e-9
                if not ok_gain.any():
                    continue
                room = M[k] - used + (q[j] if j >= 0 else 0.0)
                ok = ok_gain & (q[g] <= room * (1 + 1e-12))
                if not ok.any():
                    continue
                ld = base.copy()
                if j >= 0:
                    if st.yn[k, j]:
                        ld[k + 1] -= q[j]
                    elif st.xn[:, j].sum() == 1:
                        ld[0] -= q[j]
                gg = g[ok]
                for mode in ("keep", "spot", "bcast"):
                    if mode == "keep":
                        sel = gg[st.x[gg]]
                        if sel.size == 0:
                            continue
                        loads = np.repeat(ld[None, :], sel.size, axis=0)
                    elif mode == "spot":
                        sel = gg[~st.x[gg]]
                        if sel.size == 0:
                            continue
                        loads = np.repeat(ld[None, :], sel.size, axis=0)
                        loads[:, k + 1] += q[sel]
                    else:
                        sel = gg[~st.x[gg]]
                        if sel.size == 0:
                            continue
                        loads = np.repeat(ld[None, :], sel.size, axis=0)
                        loads[:, 0] += q[sel]
                    feas = st.fits(loads)
                    if not feas.any():
                        continue
                    cand = sel[feas]
                    gains = L[k, cand] - lose
                    i = int(np.argmax(gains))
                    if best is None or gains[i] > best[0] + 1e-12:
                        best = (gains[i], k, j, int(cand[i]), mode)
        if best is None:
            break
        _, k, j, g, mode = best
        if j >= 0:
            if st.yn[k, j]:
                st.yn[k, j] = False
            else:
                st.xn[k, j] = False
                if not st.xn[:, j].any():
                    st.x[j] = False
        if mode == "keep":
            st.xn[k, g] = True
        elif mode == "spot":
            st.yn[k, g] = True
        else:
            st.x[g] = True
            st.xn[k, g] = True
    return st.solution()


def write_solution_csv(path, sol: JointSolution, cdn_ids=None, item_ids=None) -> None:
    """``cdn_id,item_id,via`` rows, ``via`` being ``wide`` or ``spot``."""
    n, f = sol.xn.shape
    cdn_ids = list(cdn_ids) if cdn_ids is not None else [str(k + 1) for k in range(n)]
    item_ids = list(item_ids) if item_ids is not None else [str(j) for j in range(f)]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["cdn_id", "item_id", "via"])
        for k in range(n):
            for j in range(f):
                if sol.xn[k, j] > 0.5:
                    wr.writerow([cdn_ids[k], item_ids[j], "wide"])
                elif sol.yn[k, j] > 0.5:
                    wr.writerow([cdn_ids[k], item_ids[j], "spot"])
