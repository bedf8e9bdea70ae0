"""SNR to spectral efficiency.

Transmit power is taken proportional to allocated bandwidth (constant power
spectral density), so a location's SNR, and hence its efficiency, does not
depend on how the spectrum is split between links.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .model import NetworkScenario, SatCacheError


class BelowMinimumModcod(SatCacheError, ValueError):
    """SNR below the first table threshold: the location cannot be served."""


@dataclass(frozen=True)
class EfficiencyMap:
    mode: Literal["shannon", "table"] = "shannon"
    entries: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        entries = tuple((float(s), float(e)) for s, e in self.entries)
        object.__setattr__(self, "entries", entries)
        if self.mode == "shannon":
            if entries:
                raise ValueError("Shannon mapping takes no table entries")
        elif self.mode == "table":
            if not entries:
                raise ValueError("tabular mapping needs at least one entry")
            snr = np.array([s for s, _ in entries])
            eff = np.array([e for _, e in entries])
            if np.any(np.diff(snr) <= 0) or np.any(np.diff(eff) <= 0):
                raise ValueError("table entries must be strictly increasing in SNR and efficiency")
            if eff[0] <= 0:
                raise ValueError("table efficiencies must be positive")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def table(cls, entries: Iterable[tuple[float, float]]) -> EfficiencyMap:
        return cls("table", tuple(sorted(entries)))

    @classmethod
    def from_csv(cls, path) -> EfficiencyMap:
        """Read a MODCOD table with columns ``min_snr_db,efficiency``."""
        with open(path, newline="") as fh:
            rows = [(float(r["min_snr_db"]), float(r["efficiency"])) for r in csv.DictReader(fh)]
        return cls.table(rows)


SHANNON = EfficiencyMap()


def efficiency_from_snr(snr_db: float, mapping: EfficiencyMap = SHANNON) -> float:
    """Spectral efficiency (bits/s/Hz) at ``snr_db``.

    Shannon mode returns ``log2(1 + 10**(snr_db/10))``.  Table mode returns
    the efficiency of the largest threshold not above ``snr_db`` and raises
    :class:`BelowMinimumModcod` below the first threshold.
    """
    snr_db = float(snr_db)
    if not math.isfinite(snr_db):
        raise ValueError(f"SNR must be finite, got {snr_db}")
    if mapping.mode == "shannon":
        return math.log2(1.0 + 10.0 ** (snr_db / 10.0))
    thresholds = [s for s, _ in mapping.entries]
    k = int(np.searchsorted(thresholds, snr_db, side="right")) - 1
    if k < 0:
        raise BelowMinimumModcod(f"SNR {snr_db} dB below minimum threshold {thresholds[0]} dB")
    return mapping.entries[k][1]


@dataclass(frozen=True)
class SnrFlag:
    beam: str
    snr_db: float | None
    reason: str


def snr_range_check(scenario: NetworkScenario, window: tuple[float, float] = (-5.0, 25.0)
                    ) -> list[SnrFlag]:
    """Flag links whose SNR is missing or outside a plausibility window.

    Advisory only.  A scenario always has at least one spot link, so the
    report covers the wide beam plus ``N >= 1`` spot links.
    """
    lo, hi = window
    flags = []
    links = [("wide", scenario.wide_beam)] + [(f"spot{k}", b) for k, b in enumerate(scenario.spot_beams, 1)]
    for name, b in links:
        if b.snr_db is None:
            flags.append(SnrFlag(name, None, "no SNR recorded"))
        elif not lo <= b.snr_db <= hi:
            flags.append(SnrFlag(name, b.snr_db, f"outside [{lo}, {hi}] dB"))
    return flags
