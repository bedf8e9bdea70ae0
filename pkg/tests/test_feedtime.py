from __future__ import annotations

import numpy as np
import pytest
from conftest import brute_force_time, make_instance

from satcache import (BeamLink, ContentCatalog, DemandMatrix, InfeasibleTargets, JointSolution,
                      NetworkScenario, PenaltyDriven, Round, ScaConfig, minimize_feeding_time,
                      recover_binaries, reference1_multibeam, reference2_widebeam)
from satcache.feedtime import InfeasibleAfterRounding, is_feasible
from satcache.subproblem import EPS_OPT


def test_single_file_closed_form(single_file):
    sc, cat, dem = single_file
    sol = minimize_feeding_time(sc, cat, dem).solution
    assert sol.tau == pytest.approx(5.0, rel=1e-3)
    assert sol.hits(dem) == 10
    assert is_feasible(sol, sc, cat, dem)


def test_zero_targets_send_nothing(single_file):
    sc, cat, dem = single_file
    sol = minimize_feeding_time(sc.with_(hit_targets=[0.0]), cat, dem).solution
    assert sol.tau == 0.0
    assert not np.any(sol.x) and not np.any(sol.xn) and not np.any(sol.yn)


def test_unreachable_targets(single_file):
    sc, cat, dem = single_file
    with pytest.raises(InfeasibleTargets):
        minimize_feeding_time(sc.with_(hit_targets=[11.0]), cat, dem)


def test_cache_too_small_for_target():
    sc = NetworkScenario(BeamLink("w", 2.0), [BeamLink(1, 2.0)], [0.5e9], [5.0], 1e8)
    with pytest.raises(InfeasibleTargets):
        minimize_feeding_time(sc, ContentCatalog([1e9]), DemandMatrix([[10.0]]))


def test_config_validation():
    with pytest.raises(ValueError):
        ScaConfig(eps=0.0)
    with pytest.raises(ValueError):
        ScaConfig(max_iters=0)
    with pytest.raises(ValueError):
        Round(1.0)


@pytest.mark.parametrize("seed", range(6))
def test_trace_is_non_increasing_and_result_feasible(seed):
    rng = np.random.default_rng(100 + seed)
    sc, cat, dem = make_instance(rng, 3, 6, chr_target=0.4, cache_files=(2.5, 4.0))
    res = minimize_feeding_time(sc, cat, dem)
    taus = res.trace.taus
    assert len(res.trace) <= ScaConfig().max_iters
    assert np.all(np.diff(taus) <= EPS_OPT * np.maximum(1.0, taus[:-1]))
    assert is_feasible(res.solution, sc, cat, dem)
    # rounding can only cost time relative to the relaxation
    assert res.solution.tau >= res.relaxed.tau * (1 - 1e-6)


def test_deterministic():
    rng = np.random.default_rng(9)
    sc, cat, dem = make_instance(rng, 2, 5, chr_target=0.5, cache_files=(2.5, 4.0))
    a = minimize_feeding_time(sc, cat, dem)
    b = minimize_feeding_time(sc, cat, dem)
    assert np.array_equal(a.trace.taus, b.trace.taus)
    for name in ("x", "xn", "yn", "w"):
        assert np.array_equal(getattr(a.solution, name), getattr(b.solution, name))
    assert a.solution.tau == b.solution.tau


@pytest.mark.parametrize("seed", range(8))
def test_never_slower_than_single_mode_schemes(seed):
    rng = np.random.default_rng(200 + seed)
    sc, cat, dem = make_instance(rng, 3, 6, chr_target=0.5, cache_files=(2.5, 4.0))
    sol = minimize_feeding_time(sc, cat, dem).solution
    for ref in (reference1_multibeam, reference2_widebeam):
        try:
            r = ref(sc, cat, dem)
        except InfeasibleTargets:
            continue
        assert sol.tau <= r.tau * (1 + 1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_two_file_recovery_matches_brute_force(seed):
    rng = np.random.default_rng(300 + seed)
    sc, cat, dem = make_instance(rng, 1, 2, chr_target=rng.uniform(0.2, 0.8), cache_files=(1.0, 2.2))
    best = brute_force_time(sc, cat, dem)
    if not np.isfinite(best):
        with pytest.raises(InfeasibleTargets):
            minimize_feeding_time(sc, cat, dem)
        return
    res = minimize_feeding_time(sc, cat, dem, ScaConfig(seed_baselines=False))
    rec = recover_binaries(res.relaxed, sc, cat, dem, polish=True)
    assert rec.tau == pytest.approx(best, rel=1e-9)
    assert rec.hits(dem) >= sc.hit_targets[0] - 1e-9


def test_binary_input_is_unchanged():
    rng = np.random.default_rng(4)
    sc, cat, dem = make_instance(rng, 2, 4)
    x = np.array([1, 0, 1, 0.0])
    xn = np.array([[1, 0, 0, 0], [0, 0, 1, 0.0]])
    yn = np.array([[0, 1, 0, 0], [0, 0, 0, 0.0]])
    sol = JointSolution(x, xn, yn, np.full(3, 1e7), 100.0)
    if np.any((xn + yn) @ cat.sizes > sc.cache_sizes):
        sc = sc.with_(cache_sizes=np.full(2, 1e12))
    out = recover_binaries(sol, sc, cat, dem)
    for name in ("x", "xn", "yn"):
        assert np.array_equal(getattr(out, name), getattr(sol, name))


def test_stored_copy_follows_broadcast_decision():
    sc = NetworkScenario(BeamLink("w", 2.0), [BeamLink(1, 2.0)], [8e9], [0.0], 1e8)
    cat, dem = ContentCatalog([1e9]), DemandMatrix([[1.0]])
    relaxed = JointSolution([0.4], [[0.6]], [[0.0]], [5e7, 5e7], 10.0)
    out = recover_binaries(relaxed, sc, cat, dem)
    assert out.x[0] == 0 and out.xn[0, 0] == 0


def test_eviction_by_density():
    # cache fits two of three files; the least requested per bit is evicted
    sc = NetworkScenario(BeamLink("w", 2.0), [BeamLink(1, 2.0)], [2e9], [0.0], 1e8)
    cat, dem = ContentCatalog([1e9, 1e9, 1e9]), DemandMatrix([[5.0, 1.0, 3.0]])
    relaxed = JointSolution(np.zeros(3), np.zeros((1, 3)), [[0.9, 0.8, 0.7]], [5e7, 5e7], 10.0)
    out = recover_binaries(relaxed, sc, cat, dem)
    assert out.yn[0].tolist() == [1, 0, 1]


def test_repair_adds_densest_missing_file():
    sc = NetworkScenario(BeamLink("w", 2.0), [BeamLink(1, 2.0)], [3e9], [8.0], 1e8)
    cat, dem = ContentCatalog([1e9, 1e9, 1e9]), DemandMatrix([[5.0, 1.0, 3.0]])
    relaxed = JointSolution(np.zeros(3), np.zeros((1, 3)), [[0.9, 0.2, 0.3]], [5e7, 5e7], 10.0)
    out = recover_binaries(relaxed, sc, cat, dem)
    assert out.yn[0].tolist() == [1, 0, 1]


def test_infeasible_after_rounding():
    sc = NetworkScenario(BeamLink("w", 2.0), [BeamLink(1, 2.0)], [1e9], [8.0], 1e8)
    cat, dem = ContentCatalog([1e9, 1e9]), DemandMatrix([[5.0, 3.0]])
    relaxed = JointSolution(np.zeros(2), np.zeros((1, 2)), [[0.5, 0.5]], [5e7, 5e7], 10.0)
    with pytest.raises(InfeasibleAfterRounding):
        recover_binaries(relaxed, sc, cat, dem)


def test_penalty_recovery_runs():
    rng = np.random.default_rng(21)
    sc, cat, dem = make_instance(rng, 2, 4, chr_target=0.4, cache_files=(2.5, 4.0))
    res = minimize_feeding_time(sc, cat, dem, ScaConfig(recovery=PenaltyDriven(), max_iters=15))
    assert is_feasible(res.solution, sc, cat, dem)
    pen = [r.penalty for r in res.trace.rows]
    assert pen[0] > 0 and np.all(np.diff(pen) >= 0)


def test_iteration_limit_flags_result():
    rng = np.random.default_rng(22)
    sc, cat, dem = make_instance(rng, 3, 6, chr_target=0.5, cache_files=(2.5, 4.0))
    res = minimize_feeding_time(sc, cat, dem, ScaConfig(max_iters=1))
    assert len(res.trace) == 1
    assert not res.converged
    assert is_feasible(res.solution, sc, cat, dem)


def test_trace_csv(tmp_path, single_file):
    sc, cat, dem = single_file
    res = minimize_feeding_time(sc, cat, dem)
    path = tmp_path / "trace.csv"
    res.trace.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,tau,binarity_gap,status"
    assert len(lines) == len(res.trace) + 1
