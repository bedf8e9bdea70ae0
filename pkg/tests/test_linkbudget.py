from __future__ import annotations

import math

import numpy as np
import pytest

from satcache import SHANNON, BeamLink, EfficiencyMap, NetworkScenario, efficiency_from_snr
from satcache.linkbudget import BelowMinimumModcod, snr_range_check


def test_shannon_zero_db():
    assert efficiency_from_snr(0.0) == pytest.approx(1.0)


def test_shannon_weakest_wide_beam_site():
    assert efficiency_from_snr(4.08) == pytest.approx(math.log2(1 + 10 ** 0.408))
    # log2(1 + 10**0.408) = 1.83130...
    assert efficiency_from_snr(4.08) == pytest.approx(1.83130, abs=1e-5)


def test_table_is_a_step_function():
    table = EfficiencyMap.table([(0.0, 0.5), (5.0, 1.0)])
    assert efficiency_from_snr(4.9, table) == 0.5
    assert efficiency_from_snr(5.0, table) == 1.0
    assert efficiency_from_snr(30.0, table) == 1.0


def test_below_first_threshold():
    with pytest.raises(BelowMinimumModcod):
        efficiency_from_snr(-1.0, EfficiencyMap.table([(0.0, 0.5)]))


def test_table_must_increase():
    with pytest.raises(ValueError):
        EfficiencyMap.table([(0.0, 1.0), (5.0, 0.5)])
    with pytest.raises(ValueError):
        EfficiencyMap("shannon", ((0.0, 1.0),))


def test_table_from_csv(tmp_path):
    p = tmp_path / "modcod.csv"
    p.write_text("min_snr_db,efficiency\n1.0,0.8\n-2.0,0.4\n")
    table = EfficiencyMap.from_csv(p)
    assert table.entries == ((-2.0, 0.4), (1.0, 0.8))


@pytest.mark.parametrize("mapping", [SHANNON, EfficiencyMap.table([(-3, 0.4), (0, 0.9), (4, 1.4), (8, 2.2)])])
def test_monotone(mapping):
    snr = np.linspace(-3, 20, 400)
    eff = [efficiency_from_snr(s, mapping) for s in snr]
    assert np.all(np.diff(eff) >= 0)


def test_doubling_snr_gains_under_one_bit():
    for s in np.linspace(0.01, 30, 200):
        assert efficiency_from_snr(s + 3.0103) < efficiency_from_snr(s) + 1


def _scenario(*snrs):
    spots = [BeamLink.from_snr(k, s) for k, s in enumerate(snrs[1:], 1)]
    return NetworkScenario(BeamLink.from_snr("wide", snrs[0]), spots, [1e9] * len(spots),
                           [0.0] * len(spots), 1e8)


def test_reported_ranges_not_flagged():
    assert snr_range_check(_scenario(4.08, 2.48, 9.33, 6.0)) == []


def test_implausible_snr_flagged():
    flags = snr_range_check(_scenario(5.0, 40.0))
    assert [f.beam for f in flags] == ["spot1"]


def test_missing_snr_flagged():
    sc = NetworkScenario(BeamLink("wide", 2.0), [BeamLink(1, 2.0, 3.0)], [1e9], [0.0], 1e8)
    assert [f.beam for f in snr_range_check(sc)] == ["wide"]
