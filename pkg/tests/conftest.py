"""Shared fixtures and brute-force oracles for the test suite."""

from __future__ import annotations

import itertools
import warnings

import numpy as np
import pytest

from satcache import (GB, MULTICARRIER, BeamLink, ContentCatalog, DemandMatrix,
                      NetworkScenario, load_problem, toy_paths)
from satcache.model import link_usage, min_feeding_time

warnings.filterwarnings("ignore", message="Solution may be inaccurate")


def make_instance(rng, n: int, f: int, *, reuse: str = MULTICARRIER, bandwidth: float = 1e8,
                  cache_files: tuple[float, float] = (0.8, 2.5), chr_target: float = 0.0):
    """Small random instance: sizes in [0.5, 1] GB, caches holding about
    ``cache_files`` files, SNRs in [2.5, 9.3] dB and integer demand."""
    sizes = rng.uniform(0.5, 1.0, f) * GB
    caches = rng.uniform(*cache_files, n) * GB
    demand = rng.integers(0, 21, (n, f)).astype(float)
    colors = ["A", "B"]
    wide = BeamLink.from_snr("wide", float(rng.uniform(4.1, 9.2)))
    spots = [BeamLink.from_snr(k + 1, float(rng.uniform(2.5, 9.3)), color=colors[k % 2])
             for k in range(n)]
    scenario = NetworkScenario(wide, spots, caches, chr_target * demand.sum(axis=1), bandwidth, reuse)
    return scenario, ContentCatalog(sizes), DemandMatrix(demand)


def _assignments(scenario, catalog, demand):
    """Every binary point worth considering, as ``(x, stored, loads)``.

    For a broadcast set ``x`` a CDN stores a set ``S``; files of ``S`` in
    ``x`` are kept from the broadcast and the rest come over its spot link.
    Sending a broadcast file again on the spot link never helps, so these
    points cover all optima.
    """
    n, f = demand.shape
    q = catalog.sizes
    subsets = [np.array(s, dtype=bool) for s in itertools.product((0, 1), repeat=f)]
    fits = [[s for s in subsets if q @ s <= scenario.cache_sizes[k] * (1 + 1e-12)] for k in range(n)]
    for x in subsets:
        for stored in itertools.product(*fits):
            stored = np.array(stored)
            spot = stored & ~x[None, :]
            loads = np.concatenate([[q @ x], spot @ q])
            yield x, stored, loads


def brute_force_hits(scenario, catalog, demand, tau: float) -> float:
    """Most hits over all binary points whose loads fit the band in ``tau``."""
    W = scenario.total_bandwidth
    best = 0.0
    for _, stored, loads in _assignments(scenario, catalog, demand):
        h = float(np.sum(demand.demands * stored))
        if h > best and link_usage(scenario, loads, tau) <= W * (1 + 1e-9):
            best = h
    return best


def brute_force_time(scenario, catalog, demand) -> float:
    """Least feeding time over all binary points meeting every hit target."""
    best = np.inf
    for _, stored, loads in _assignments(scenario, catalog, demand):
        if np.all(np.sum(demand.demands * stored, axis=1) >= scenario.hit_targets - 1e-9):
            best = min(best, min_feeding_time(scenario, loads)[0])
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy():
    return load_problem(toy_paths()["scenario.json"])


@pytest.fixture
def single_file():
    """One CDN, one file of 1 Gbit, gamma = 2 on both links, 100 MHz."""
    link = BeamLink("wide", 2.0)
    spot = BeamLink(1, 2.0, color="A")
    scenario = NetworkScenario(link, [spot], [2e9], [1.0], 1e8, MULTICARRIER)
    return scenario, ContentCatalog([1e9]), DemandMatrix([[10.0]])



_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def emit(criterion: str, ok: bool, detail: str) -> bool:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
