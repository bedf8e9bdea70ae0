"""Convex inner problem of the SCA loop.

The bilinear capacity constraint ``q @ x <= gamma * w * tau`` is rewritten
with ``w*tau = ((w + tau)**2 - w**2 - tau**2) / 2`` as

    2 q @ x / gamma + w**2 + tau**2 <= (w + tau)**2,

a difference of convex functions.  Replacing the right-hand side by its
tangent at an anchor ``(w_bar, tau_bar)``,

    2 q @ x / gamma + w**2 + tau**2 <= 2 (w + tau) S - S**2,   S = w_bar + tau_bar,

gives a convex constraint whose feasible set lies inside the original one
(a convex function dominates its tangent).  Binary decisions are relaxed to
``[0, 1]``.

The same identity holds for ``(alpha w) * (tau / alpha)`` with any
``alpha > 0``.  By default each row uses ``alpha = sqrt(tau_bar / w_bar)`` so
that both factors are equal at the anchor.  The tangent is still exact there,
but the approximation error now grows evenly in ``w`` and ``tau``, which lets
``tau`` move by a sizeable fraction per iteration instead of by about ``w``.

All data are normalized so that ``W_tot = 1``, ``max(q) = 1`` and time is
measured in units of ``max(q) / (W_tot * min(gamma))``.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .model import (
    ContentCatalog,
    DemandMatrix,
    NetworkScenario,
    SatCacheError,
    bandwidth_budget_constraints,
)

log = logging.getLogger(__name__)

EPS_OPT = 1e-6
EPS_FEAS = 1e-7
ALPHA_WIDTH_FLOOR = 1e-3  # normalized width below which balancing stops growing


class InvalidAnchor(SatCacheError, ValueError):
    pass


class NumericalFailure(SatCacheError, RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class Scaling:
    """Unit conversion between SI quantities and normalized program data."""

    bits: float  # max file size
    hz: float  # total bandwidth
    gamma: float  # min spectral efficiency

    @property
    def seconds(self) -> float:
        return self.bits / (self.hz * self.gamma)

    @classmethod
    def of(cls, scenario: NetworkScenario, catalog: ContentCatalog) -> Scaling:
        return cls(float(catalog.sizes.max()), float(scenario.total_bandwidth),
                   float(scenario.efficiencies.min()))


@dataclass(frozen=True)
class VarLayout:
    """Positions of x, x_n, y_n, w, tau and the per-color sub-bands in one vector."""

    n_cdns: int
    n_files: int
    n_colors: int = 0

    @property
    def x(self) -> slice:
        return slice(0, self.n_files)

    @property
    def xn(self) -> slice:
        f, n = self.n_files, self.n_cdns
        return slice(f, f + n * f)

    @property
    def yn(self) -> slice:
        f, n = self.n_files, self.n_cdns
        return slice(f + n * f, f + 2 * n * f)

    @property
    def binaries(self) -> slice:
        return slice(0, self.n_files * (1 + 2 * self.n_cdns))

    @property
    def w(self) -> slice:
        s = self.binaries.stop
        return slice(s, s + self.n_cdns + 1)

    @property
    def tau(self) -> int:
        return self.w.stop

    @property
    def band(self) -> slice:
        return slice(self.tau + 1, self.tau + 1 + self.n_colors)

    @property
    def size(self) -> int:
        return self.band.stop

    def xn_index(self, n: int, f: int) -> int:
        """Index of x_{n,f}, with ``n`` zero-based over CDNs."""
        return self.xn.start + n * self.n_files + f

    def yn_index(self, n: int, f: int) -> int:
        return self.yn.start + n * self.n_files + f

    def split(self, v: np.ndarray):
        n, f = self.n_cdns, self.n_files
        return (v[self.x], v[self.xn].reshape(n, f), v[self.yn].reshape(n, f),
                v[self.w], float(v[self.tau]))


@dataclass(frozen=True)
class MinimizeTau:
    pass


@dataclass(frozen=True)
class MaximizeHitsFixedTau:
    tau: float


@dataclass(frozen=True)
class QuadConstraints:
    """Rows ``k`` of ``u**2 + s**2 + (A @ v)_k - 2 S_k (u + s) + S_k**2 <= 0``
    with ``u = alpha_k v[w_idx_k]`` and ``s = v[tau] / alpha_k``."""

    w_idx: np.ndarray
    tau_idx: int
    A: sp.csr_matrix
    S: np.ndarray
    alpha: np.ndarray | None = None

    @property
    def scale(self) -> np.ndarray:
        return np.ones(len(self.S)) if self.alpha is None else np.asarray(self.alpha, dtype=float)

    def residual(self, v: np.ndarray) -> np.ndarray:
        a = self.scale
        u = a * v[self.w_idx]
        t = v[self.tau_idx] / a
        return u ** 2 + t ** 2 + self.A @ v - 2 * self.S * (u + t) + self.S ** 2


@dataclass(frozen=True)
class ConvexProgram:
    """minimize ``c @ v + c0`` subject to ``A_ub @ v <= b_ub``, bounds and ``quad``."""

    layout: VarLayout
    c: np.ndarray
    c0: float
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    quad: QuadConstraints
    scaling: Scaling
    objective: MinimizeTau | MaximizeHitsFixedTau
    labels: tuple[str, ...] = ()
    objective_scale: float = 1.0

    def violation(self, v: np.ndarray) -> float:
        """Largest constraint violation at ``v`` (0 when feasible).

        Quadratic rows are measured relative to their size ``max(1, S**2)``.
        """
        quad = self.quad.residual(v) / np.maximum(1.0, self.quad.S ** 2)
        parts = [np.zeros(1), self.A_ub @ v - self.b_ub, self.lb - v, v - self.ub, quad]
        return float(max(np.max(p) for p in parts if p.size))


def build_inner_problem(scenario: NetworkScenario, catalog: ContentCatalog, demand: DemandMatrix,
                        anchor: tuple[np.ndarray, float], objective=MinimizeTau(),
                        penalty: float | None = None, previous: np.ndarray | None = None,
                        balanced: bool = True) -> ConvexProgram:
    """Assemble the convexified problem around ``anchor = (w_bar, tau_bar)`` (SI units).

    ``balanced`` picks the per-row factor ``alpha = sqrt(tau_bar / w_bar)``;
    otherwise ``alpha = 1``, the plain split.

    With ``penalty`` set, ``penalty * sum(v * (1 - v))`` over the relaxed
    binaries, linearized at ``previous`` (a normalized program vector), is
    added to the minimized objective to push them towards {0, 1}.
    """
    n, f = scenario.n_cdns, catalog.n_files
    w_bar = np.asarray(anchor[0], dtype=float).ravel()
    tau_bar = float(anchor[1])
    if w_bar.size != n + 1:
        raise InvalidAnchor(f"anchor has {w_bar.size} widths, expected {n + 1}")
    if not (np.all(w_bar > 0) and tau_bar > 0):
        raise InvalidAnchor("anchor must be strictly positive componentwise")

    sc = Scaling.of(scenario, catalog)
    q = catalog.sizes / sc.bits
    gam = scenario.efficiencies / sc.gamma
    L = demand.demands
    lay = layout_for(scenario, catalog)
    nv = lay.size
    fidx = np.arange(f)

    A_ub, b_ub, labels = linear_constraints(scenario, catalog, demand, lay, sc,
                                            with_targets=isinstance(objective, MinimizeTau))

    lb = np.zeros(nv)
    ub = np.full(nv, np.inf)
    ub[lay.binaries] = 1.0
    if isinstance(objective, MaximizeHitsFixedTau):
        t = objective.tau / sc.seconds
        lb[lay.tau] = ub[lay.tau] = t

    # convexified capacity constraints: wide beam, then each spot link
    wn, tn = w_bar / sc.hz, tau_bar / sc.seconds
    # widths near zero would make alpha explode; any positive alpha keeps tangency
    alpha = np.sqrt(tn / np.maximum(wn, ALPHA_WIDTH_FLOOR)) if balanced else np.ones(n + 1)
    S = alpha * wn + tn / alpha
    qr, qc, qv = [], [], []
    for k in range(n + 1):
        idx = fidx + (lay.x.start if k == 0 else lay.yn_index(k - 1, 0))
        qr.extend([k] * f)
        qc.extend(idx)
        qv.extend(2.0 * q / gam[k])
    Aq = sp.csr_matrix((qv, (qr, qc)), shape=(n + 1, nv))
    quad = QuadConstraints(np.arange(lay.w.start, lay.w.stop), lay.tau, Aq, S, alpha)

    c = np.zeros(nv)
    c0 = 0.0
    obj_scale = 1.0
    if isinstance(objective, MinimizeTau):
        c[lay.tau] = 1.0
        obj_scale = max(tau_bar / sc.seconds, 1e-9)
    else:
        tot = max(float(L.sum()), 1.0)
        c[lay.xn] = -L.ravel() / tot
        c[lay.yn] = -L.ravel() / tot
    if penalty:
        vb = np.clip(np.asarray(previous, dtype=float)[lay.binaries], 0, 1) if previous is not None \
            else np.full(lay.binaries.stop, 0.5)
        # v(1-v) <= vb(1-vb) + (1-2vb)(v-vb); only the slope matters to the minimizer
        c[lay.binaries] += penalty * (1 - 2 * vb)
        c0 += penalty * float(np.sum(vb ** 2))
    return ConvexProgram(lay, c, c0, A_ub, b_ub, lb, ub, quad, sc, objective, labels, obj_scale)


def layout_for(scenario: NetworkScenario, catalog: ContentCatalog) -> VarLayout:
    n_colors = bandwidth_budget_constraints(scenario)[0].band_coef.size
    return VarLayout(scenario.n_cdns, catalog.n_files, n_colors)


def linear_constraints(scenario: NetworkScenario, catalog: ContentCatalog, demand: DemandMatrix,
                       lay: VarLayout, sc: Scaling, with_targets: bool = True):
    """Normalized rows for hit targets (optional), cache sizes, exclusivity,
    wide-storage and spectrum.  Returns ``(A_ub, b_ub, labels)``."""
    n, f = lay.n_cdns, lay.n_files
    q = catalog.sizes / sc.bits
    M = scenario.cache_sizes / sc.bits
    L = demand.demands
    blocks, rhs, labels = [], [], []
    fidx = np.arange(f)
    eye_nf = sp.identity(n * f, format="csr")

    def cols(start, width):
        return sp.csr_matrix((np.ones(width), (np.arange(width), start + np.arange(width))),
                             shape=(width, lay.size))

    xn_sel = cols(lay.xn.start, n * f)
    yn_sel = cols(lay.yn.start, n * f)
    # per-CDN sums over files: kron(I_n, row)
    if with_targets:
        tot = L.sum(axis=1)
        scale = np.where(tot > 0, tot, 1.0)
        R = sp.kron(sp.identity(n), sp.csr_matrix(np.ones((1, f)))).multiply(
            -(L / scale[:, None]).ravel()[None, :]).tocsr()
        blocks.append(R @ xn_sel + R @ yn_sel)
        rhs.append(-scenario.hit_targets / scale)
        labels += [f"targets[{k + 1}]" for k in range(n)]
    Q = sp.kron(sp.identity(n), sp.csr_matrix(q[None, :])).tocsr()
    blocks.append(Q @ xn_sel + Q @ yn_sel)
    rhs.append(M)
    labels += [f"cache[{k + 1}]" for k in range(n)]
    blocks.append(eye_nf @ xn_sel + eye_nf @ yn_sel)
    rhs.append(np.ones(n * f))
    labels += [f"single_copy[{k + 1},{j}]" for k in range(n) for j in fidx]
    tile = sp.kron(sp.csr_matrix(np.ones((n, 1))), sp.identity(f)).tocsr()
    blocks.append(xn_sel - tile @ cols(lay.x.start, f))
    rhs.append(np.zeros(n * f))
    labels += [f"wide_storage[{k + 1},{j}]" for k in range(n) for j in fidx]
    for c in bandwidth_budget_constraints(scenario):
        row = np.zeros(lay.size)
        row[lay.w] = c.w_coef
        row[lay.band] = c.band_coef
        blocks.append(sp.csr_matrix(row[None, :]))
        rhs.append([c.rhs / sc.hz])
        labels.append(f"spectrum:{c.label}")
    return sp.vstack(blocks, format="csr"), np.concatenate([np.ravel(r) for r in rhs]), tuple(labels)


@dataclass
class SolverResult:
    status: Status
    x: np.ndarray | None
    objective: float | None
    stats: dict = field(default_factory=dict)


def solve_convex(program: ConvexProgram, eps_opt: float = EPS_OPT, eps_feas: float = EPS_FEAS,
                 max_iter: int = 200) -> SolverResult:
    """Solve with a conic interior-point engine (Clarabel through cvxpy).

    The quadratic constraints are passed as exact second-order cones.  An
    ``Optimal`` result is re-checked against every constraint; if the worst
    violation exceeds ``eps_feas`` the solve is repeated with tighter
    tolerances and, failing that, reported as ``NumericalFailure``.  A point
    the engine flags as inaccurate is still returned as ``Optimal`` when it
    passes the feasibility check, with ``stats["inaccurate"]`` set.
    """
    import cvxpy as cp

    p = program
    v = cp.Variable(p.layout.size)
    qc = p.quad
    a = qc.scale
    wq = cp.multiply(a, v[qc.w_idx])
    tq = v[qc.tau_idx] * (1 / a)
    cons = [
        p.A_ub @ v <= p.b_ub,
        cp.square(wq) + cp.square(tq) + qc.A @ v - 2 * cp.multiply(qc.S, wq + tq)
        + qc.S ** 2 <= 0,
    ]
    finite_lb = np.isfinite(p.lb)
    finite_ub = np.isfinite(p.ub)
    fixed = finite_lb & finite_ub & (p.lb == p.ub)
    if np.any(fixed):
        cons.append(v[np.flatnonzero(fixed)] == p.lb[fixed])
    if np.any(finite_lb & ~fixed):
        i = np.flatnonzero(finite_lb & ~fixed)
        cons.append(v[i] >= p.lb[i])
    if np.any(finite_ub & ~fixed):
        i = np.flatnonzero(finite_ub & ~fixed)
        cons.append(v[i] <= p.ub[i])
    prob = cp.Problem(cp.Minimize(p.c @ v / p.objective_scale), cons)

    t0 = time.perf_counter()
    result = None
    for tighten in (1.0, 1e-2):
        opts = dict(tol_gap_rel=eps_opt * tighten, tol_gap_abs=eps_opt * tighten,
                    tol_feas=eps_feas * 0.1 * tighten, max_iter=max_iter)
        try:
            with warnings.catch_warnings():
                # inaccurate results are checked against eps_feas below
                warnings.filterwarnings("ignore", message="Solution may be inaccurate")
                prob.solve(solver="CLARABEL", **opts)
        except cp.SolverError as exc:
            log.debug("Clarabel failed: %s", exc)
            return SolverResult(Status.NUMERICAL_FAILURE, None, None,
                                {"message": str(exc), "solve_time": time.perf_counter() - t0})
        st = prob.status
        if st in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SolverResult(Status.INFEASIBLE, None, None, {"solve_time": time.perf_counter() - t0})
        if v.value is None:
            status = Status.ITERATION_LIMIT if "iteration" in str(prob.solver_stats.extra_stats or "").lower() \
                else Status.NUMERICAL_FAILURE
            return SolverResult(status, None, None, {"cvxpy_status": st, "solve_time": time.perf_counter() - t0})
        x = np.clip(np.asarray(v.value, dtype=float), p.lb, p.ub)
        viol = p.violation(x)
        stats = {"cvxpy_status": st, "iterations": prob.solver_stats.num_iters,
                 "solve_time": time.perf_counter() - t0, "max_violation": viol}
        result = SolverResult(Status.OPTIMAL, x, float(p.c @ x + p.c0), stats)
        if st == cp.OPTIMAL and viol <= eps_feas:
            return result
    if viol <= eps_feas:
        # inaccurate but verified feasible: usable, flagged for the caller
        result.stats["inaccurate"] = True
        return result
    result.status = Status.NUMERICAL_FAILURE
    return result


def write_cbf(program: ConvexProgram, path) -> None:
    """Dump the program in Conic Benchmark Format (version 3) for debugging.

    Each convexified capacity constraint is written as a rotated cone
    ``2 * (t/2) * 1 >= (alpha w)**2 + (tau / alpha)**2`` with ``t`` affine in the
    variables.
    """
    p = program
    nv = p.layout.size
    acoord: list[tuple[int, int, float]] = []
    bcoord: list[tuple[int, float]] = []
    cones: list[tuple[str, int]] = []
    r = 0
    A = p.A_ub.tocoo()
    # A v - b <= 0  ->  b - A v in L+
    for i, j, a in zip(A.row, A.col, A.data):
        acoord.append((r + i, j, -a))
    for i, b in enumerate(p.b_ub):
        if b:
            bcoord.append((r + i, b))
    cones.append(("L+", A.shape[0]))
    r += A.shape[0]
    for j in range(nv):
        for bound, sign in ((p.lb[j], 1.0), (p.ub[j], -1.0)):
            if np.isfinite(bound):
                acoord.append((r, j, sign))
                if bound:
                    bcoord.append((r, -sign * bound))
                cones.append(("L+", 1))
                r += 1
    qc = p.quad
    Aq = qc.A.tocsr()
    scale = qc.scale
    for k in range(len(qc.S)):
        S, a = qc.S[k], scale[k]
        wi, ti = int(qc.w_idx[k]), qc.tau_idx
        # t/2 = S (a w + tau / a) - S^2/2 - (A v)/2
        acoord += [(r, wi, S * a), (r, ti, S / a)]
        row = Aq.getrow(k).tocoo()
        acoord += [(r, j, -val / 2) for j, val in zip(row.col, row.data)]
        bcoord.append((r, -S * S / 2))
        bcoord.append((r + 1, 1.0))
        acoord += [(r + 2, wi, a), (r + 3, ti, 1.0 / a)]
        cones.append(("QR", 4))
        r += 4
    merged: list[tuple[str, int]] = []
    for name, k in cones:
        if merged and merged[-1][0] == name and name == "L+":
            merged[-1] = (name, merged[-1][1] + k)
        else:
            merged.append((name, k))
    with open(path, "w") as fh:
        fh.write("VER\n3\n\nOBJSENSE\nMIN\n\n")
        fh.write(f"VAR\n{nv} 1\nF {nv}\n\n")
        fh.write(f"CON\n{r} {len(merged)}\n")
        fh.writelines(f"{name} {k}\n" for name, k in merged)
        nz = [(j, c) for j, c in enumerate(p.c) if c]
        fh.write(f"\nOBJACOORD\n{len(nz)}\n")
        fh.writelines(f"{j} {c!r}\n" for j, c in nz)
        if p.c0:
            fh.write(f"\nOBJBCOORD\n{p.c0!r}\n")
        fh.write(f"\nACOORD\n{len(acoord)}\n")
        fh.writelines(f"{i} {j} {a!r}\n" for i, j, a in acoord)
        fh.write(f"\nBCOORD\n{len(bcoord)}\n")
        fh.writelines(f"{i} {b!r}\n" for i, b in bcoord)
