"""Reference caching schemes under the same total bandwidth.

* Reference 1: spot beams only, equal spectrum per CDN, local popularity.
* Reference 2: wide beam only, global popularity, each CDN keeps what fits.
* Reference 3: fixed split ``rho`` between broadcast and per-CDN multicast.

All greedy fills rank files by demand density ``l / q`` (requests per bit),
ties going to the lower file index.  A file that does not fit is skipped and
the fill continues with the next one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    MULTISPOT,
    ContentCatalog,
    DemandMatrix,
    JointSolution,
    NetworkScenario,
    SatCacheError,
    min_feeding_time,
    validate_scenario,
)


class InfeasibleTargets(SatCacheError, ValueError):
    """The hit targets cannot be met by the scheme."""


@dataclass(frozen=True)
class HitsObjective:
    tau: float


@dataclass(frozen=True)
class TimeObjective:
    pass


def density_order(demand_row: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """File indices by descending ``l / q``, ties by ascending index."""
    dens = np.asarray(demand_row, dtype=float) / sizes
    return np.lexsort((np.arange(dens.size), -dens))


def greedy_fill(order, sizes, capacity, chosen=None, link_capacity=np.inf, allowed=None):
    """Walk ``order`` adding every file that still fits both capacities.

    Returns a boolean selection (``chosen`` is updated in place if given).
    """
    sel = np.zeros(sizes.size, dtype=bool) if chosen is None else chosen
    room = capacity - sizes[sel].sum()
    link = link_capacity
    for f in order:
        if sel[f] or (allowed is not None and not allowed[f]):
            continue
        if sizes[f] <= room * (1 + 1e-12) and sizes[f] <= link * (1 + 1e-12):
            sel[f] = True
            room -= sizes[f]
            link -= sizes[f]
    return sel


def greedy_until(order, sizes, demand_row, capacity, target, allowed=None):
    """Add files in ``order`` (skipping misfits) until hits reach ``target``.

    Returns ``(selection, reached)``.
    """
    sel = np.zeros(sizes.size, dtype=bool)
    hits = 0.0
    room = capacity
    if hits >= target:
        return sel, True
    for f in order:
        if allowed is not None and not allowed[f]:
            continue
        if sizes[f] <= room * (1 + 1e-12):
            sel[f] = True
            room -= sizes[f]
            hits += demand_row[f]
            if hits >= target - 1e-9:
                return sel, True
    return sel, False


def spot_widths(scenario: NetworkScenario, spot_total: float) -> np.ndarray:
    """Equal split of the spot spectrum: per CDN, or per color under reuse."""
    n = scenario.n_cdns
    if scenario.reuse_mode == MULTISPOT:
        n_colors = len(scenario.colors())
        return np.full(n, spot_total / n_colors)
    return np.full(n, spot_total / n)


def _hybrid(scenario, catalog, demand, rho: float, tau: float, label: str) -> JointSolution:
    q = catalog.sizes
    L = demand.demands
    n, f = L.shape
    W = float(scenario.total_bandwidth)
    gam = scenario.efficiencies
    w = np.concatenate([[rho * W], spot_widths(scenario, (1 - rho) * W)])
    x = greedy_fill(density_order(L.sum(axis=0), q), q, np.inf, link_capacity=w[0] * gam[0] * tau)
    xn = np.zeros((n, f), dtype=bool)
    yn = np.zeros((n, f), dtype=bool)
    for k in range(n):
        order = density_order(L[k], q)
        greedy_fill(order, q, scenario.cache_sizes[k], chosen=xn[k], allowed=x)
        link_cap = w[k + 1] * gam[k + 1] * tau
        if link_cap > 0:
            both = xn[k].copy()
            greedy_fill(order, q, scenario.cache_sizes[k], chosen=both, link_capacity=link_cap,
                        allowed=~xn[k])
            yn[k] = both & ~xn[k]
    return JointSolution(x.astype(float), xn.astype(float), yn.astype(float), w, tau,
                         {"scheme": label, "rho": rho})


def reference1_multibeam(scenario: NetworkScenario, catalog: ContentCatalog, demand: DemandMatrix,
                         objective=TimeObjective()) -> JointSolution:
    """Spot-beam multicast only, equal spectrum per CDN.

    Hits objective: fill each cache by local density within the cache and
    the link's ``w_n gamma_n tau`` capacity.  Time objective: fill until the
    CDN's hit target is met; the feeding time is set by the slowest CDN.
    """
    validate_scenario(scenario, catalog, demand)
    if isinstance(objective, HitsObjective):
        return _hybrid(scenario, catalog, demand, 0.0, objective.tau, "ref1")
    q = catalog.sizes
    L = demand.demands
    n, f = L.shape
    W = float(scenario.total_bandwidth)
    gam = scenario.efficiencies
    w = np.concatenate([[0.0], spot_widths(scenario, W)])
    yn = np.zeros((n, f))
    for k in range(n):
        sel, ok = greedy_until(density_order(L[k], q), q, L[k], scenario.cache_sizes[k],
                               scenario.hit_targets[k])
        if not ok:
            raise InfeasibleTargets(f"reference 1: CDN {k + 1} cannot reach {scenario.hit_targets[k]} hits")
        yn[k] = sel
    load = yn @ q
    tau = float(np.max(load / (w[1:] * gam[1:])))
    return JointSolution(np.zeros(f), np.zeros((n, f)), yn, w, tau, {"scheme": "ref1"})


def broadcast_storage(scenario, catalog, demand, x: np.ndarray):
    """Each CDN keeps broadcast files by local density within its cache.

    Returns ``(xn, hits_per_cdn)``.
    """
    q = catalog.sizes
    L = demand.demands
    xn = np.zeros(L.shape, dtype=bool)
    for k in range(L.shape[0]):
        greedy_fill(density_order(L[k], q), q, scenario.cache_sizes[k], chosen=xn[k], allowed=x)
    return xn, np.sum(L * xn, axis=1)


def greedy_broadcast_until_targets(scenario, catalog, demand):
    """Grow the broadcast set by global density until every hit target is met.

    Returns ``(x, xn)`` as booleans or raises :class:`InfeasibleTargets`.
    """
    q = catalog.sizes
    L = demand.demands
    eta = scenario.hit_targets
    x = np.zeros(q.size, dtype=bool)
    xn, hits = broadcast_storage(scenario, catalog, demand, x)
    if np.all(hits >= eta - 1e-9):
        return x, xn
    for f in density_order(L.sum(axis=0), q):
        x[f] = True
        xn, hits = broadcast_storage(scenario, catalog, demand, x)
        if np.all(hits >= eta - 1e-9):
            return x, xn
    raise InfeasibleTargets("broadcasting every file does not meet all hit targets by local ranking")


def reference2_widebeam(scenario: NetworkScenario, catalog: ContentCatalog, demand: DemandMatrix,
                        objective=TimeObjective()) -> JointSolution:
    """Wide-beam broadcast only, using the whole band."""
    validate_scenario(scenario, catalog, demand)
    if isinstance(objective, HitsObjective):
        return _hybrid(scenario, catalog, demand, 1.0, objective.tau, "ref2")
    n, f = demand.shape
    x, xn = greedy_broadcast_until_targets(scenario, catalog, demand)
    W = float(scenario.total_bandwidth)
    w = np.zeros(n + 1)
    w[0] = W
    tau = float(catalog.sizes @ x) / (W * scenario.wide_beam.spectral_efficiency)
    return JointSolution(x.astype(float), xn.astype(float), np.zeros((n, f)), w, tau, {"scheme": "ref2"})


def reference3_hybrid(scenario: NetworkScenario, catalog: ContentCatalog, demand: DemandMatrix,
                      rho: float, tau: float) -> JointSolution:
    """Fixed split: ``rho * W_tot`` broadcasts global favourites, the rest
    multicasts local favourites.  Hits objective only."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    validate_scenario(scenario, catalog, demand)
    return _hybrid(scenario, catalog, demand, float(rho), tau, "ref3")


RHO_GRID = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))


def best_reference3(scenario, catalog, demand, tau: float, grid=RHO_GRID) -> JointSolution:
    """Reference 3 at the best split on ``grid`` (first one on ties)."""
    best, best_hits = None, -np.inf
    for rho in grid:
        sol = reference3_hybrid(scenario, catalog, demand, rho, tau)
        h = sol.hits(demand)
        if h > best_hits:
            best, best_hits = sol, h
    return best


def retime(scenario: NetworkScenario, catalog: ContentCatalog, sol: JointSolution) -> JointSolution:
    """Same caching decisions, widths re-split to minimize the feeding time."""
    tau, w = min_feeding_time(scenario, sol.loads(catalog))
    return JointSolution(sol.x, sol.xn, sol.yn, w, tau, dict(sol.diagnostics))
