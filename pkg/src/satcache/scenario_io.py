"""Scenario files: a JSON description of the network plus a demand CSV.

Layout of the JSON document (sizes in decimal GB, bandwidth in Hz)::

    {
      "total_bandwidth_hz": 1e8,
      "reuse_mode": "multicarrier",          # or "multispot"
      "efficiency_map": "shannon",           # or {"table": [[min_snr_db, eff], ...]}
      "wide_beam": {"snr_db": 5.0},          # or {"spectral_efficiency": 1.9}
      "cdns": [{"id": "north", "beam": 1, "snr_db": 6.0, "color": "A", "cache_gb": 3,
                "lat": 42.4, "lon": -71.1, "radius_km": 150}],
      "wide_footprint": {"lat": 40.0, "lon": -75.0, "radius_km": 900},
      "target_chr": 0.0,                     # or "hit_targets": [...]
      "tau_s": 100,
      "items": {"ids": ["1", "2"], "sizes_gb": [0.7, 0.9]},
      "size_range_gb": [0.5, 1.0],
      "demand_csv": "demand.csv"             # or "demand": [[12, 3], ...]
    }

``items`` is optional.  Without it the catalog is the set of items in the
demand file and sizes are drawn uniformly from ``size_range_gb`` with the
caller's seed, so the same seed always gives the same sizes.

Demand comes from, in order of precedence, the ``demand_path`` argument,
an inline ``demand`` matrix (one row per CDN in ``cdns`` order, one column
per entry of ``items``, which is then required) or a ``demand_csv`` path
relative to the JSON file.  The
footprint fields are only needed to turn a ratings corpus into demand
(:func:`geo_from_scenario`).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .ingest import Footprint, GeoIndex, UnreadableSource, _item_key, read_demand_csv
from .linkbudget import SHANNON, EfficiencyMap, efficiency_from_snr
from .model import (
    GB,
    MULTICARRIER,
    BeamLink,
    ContentCatalog,
    DemandMatrix,
    NetworkScenario,
    validate_scenario,
)


@dataclass(frozen=True)
class Problem:
    """Everything a solver needs, plus the ids to label its output."""

    scenario: NetworkScenario
    catalog: ContentCatalog
    demand: DemandMatrix
    cdn_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    tau: float = 100.0
    meta: dict = field(default_factory=dict)

    def with_targets(self, chr_target: float) -> Problem:
        """Uniform hit targets ``eta_n = chr * sum_f l_nf``."""
        eta = chr_target * self.demand.totals()
        return replace(self, scenario=self.scenario.with_(hit_targets=eta),
                       meta=dict(self.meta, target_chr=chr_target))

    def with_cache(self, gb: float) -> Problem:
        caches = np.full(self.scenario.n_cdns, gb * GB)
        return replace(self, scenario=self.scenario.with_(cache_sizes=caches),
                       meta=dict(self.meta, cache_gb=gb))

    def with_reuse(self, mode: str) -> Problem:
        return replace(self, scenario=self.scenario.with_(reuse_mode=mode),
                       meta=dict(self.meta, reuse_mode=mode))

    def with_bandwidth(self, hz: float) -> Problem:
        return replace(self, scenario=self.scenario.with_(total_bandwidth=hz),
                       meta=dict(self.meta, total_bandwidth=hz))


def _efficiency_map(doc) -> EfficiencyMap:
    if doc in (None, "shannon"):
        return SHANNON
    if isinstance(doc, dict) and "table" in doc:
        return EfficiencyMap.table(tuple(map(tuple, doc["table"])))
    raise UnreadableSource(f"unrecognized efficiency_map {doc!r}")


def _link(doc: dict, beam_id, emap: EfficiencyMap, color=None) -> BeamLink:
    if "spectral_efficiency" in doc:
        return BeamLink(beam_id, float(doc["spectral_efficiency"]), doc.get("snr_db"), color)
    return BeamLink(beam_id, efficiency_from_snr(float(doc["snr_db"]), emap), float(doc["snr_db"]), color)


def load_problem(scenario_path, demand_path=None, seed: int = 0) -> Problem:
    """Read a scenario JSON and its demand into a validated :class:`Problem`.

    Raises :class:`UnreadableSource` when a file is missing or malformed or
    when no demand is given at all.
    """
    try:
        with open(scenario_path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UnreadableSource(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise UnreadableSource(f"{scenario_path}: {exc}") from exc
    emap = _efficiency_map(doc.get("efficiency_map"))
    cdns = doc["cdns"]
    cdn_ids = [str(c["id"]) for c in cdns]
    items = doc.get("items")
    if demand_path is None and "demand" not in doc:
        if "demand_csv" not in doc:
            raise UnreadableSource(f"{scenario_path}: no demand given (inline, demand_csv or separate file)")
        demand_path = os.path.join(os.path.dirname(os.path.abspath(scenario_path)), doc["demand_csv"])
    if demand_path is None:
        if not items:
            raise UnreadableSource(f"{scenario_path}: an inline demand matrix needs an items list")
        item_ids = [str(i) for i in items["ids"]]
        mat = np.asarray(doc["demand"], dtype=float)
        if mat.shape != (len(cdn_ids), len(item_ids)):
            raise UnreadableSource(f"{scenario_path}: demand is {mat.shape}, "
                                   f"expected {(len(cdn_ids), len(item_ids))}")
        demand = DemandMatrix(mat)
        sizes = np.asarray(items["sizes_gb"], dtype=float) * GB
    elif items:
        item_ids = [str(i) for i in items["ids"]]
        demand, _, _ = read_demand_csv(demand_path, cdn_ids, item_ids)
        sizes = np.asarray(items["sizes_gb"], dtype=float) * GB
    else:
        _, _, found = read_demand_csv(demand_path, cdn_ids)
        item_ids = sorted(found, key=_item_key)
        demand, _, _ = read_demand_csv(demand_path, cdn_ids, item_ids)
        lo, hi = doc.get("size_range_gb", (0.5, 1.0))
        sizes = np.random.default_rng(seed).uniform(lo, hi, len(item_ids)) * GB
    wide = _link(doc["wide_beam"], doc["wide_beam"].get("id", "wide"), emap)
    spots = [_link(c, c.get("beam", c["id"]), emap, c.get("color")) for c in cdns]
    caches = np.array([float(c["cache_gb"]) * GB for c in cdns])
    if "hit_targets" in doc:
        eta = np.asarray(doc["hit_targets"], dtype=float)
    else:
        eta = float(doc.get("target_chr", 0.0)) * demand.totals()
    scenario = NetworkScenario(wide, spots, caches, eta, float(doc["total_bandwidth_hz"]),
                               doc.get("reuse_mode", MULTICARRIER))
    catalog = ContentCatalog(sizes, tuple(item_ids))
    validate_scenario(scenario, catalog, demand)
    meta = {"seed": seed, "scenario_path": str(scenario_path),
            "demand_path": str(demand_path) if demand_path is not None else "inline"}
    return Problem(scenario, catalog, demand, tuple(cdn_ids), tuple(item_ids),
                   float(doc.get("tau_s", 100.0)), meta)


def problem_to_json(problem: Problem) -> dict:
    """JSON document that :func:`load_problem` reads back to the same problem."""
    sc = problem.scenario
    cdns = []
    for cid, link, cache in zip(problem.cdn_ids, sc.spot_beams, sc.cache_sizes):
        d = {"id": cid, "beam": link.beam_id, "spectral_efficiency": link.spectral_efficiency,
             "cache_gb": cache / GB}
        if link.snr_db is not None:
            d["snr_db"] = link.snr_db
        if link.color is not None:
            d["color"] = link.color
        cdns.append(d)
    wide = {"id": sc.wide_beam.beam_id, "spectral_efficiency": sc.wide_beam.spectral_efficiency}
    if sc.wide_beam.snr_db is not None:
        wide["snr_db"] = sc.wide_beam.snr_db
    return {
        "total_bandwidth_hz": sc.total_bandwidth,
        "reuse_mode": sc.reuse_mode,
        "wide_beam": wide,
        "cdns": cdns,
        "hit_targets": sc.hit_targets.tolist(),
        "tau_s": problem.tau,
        "items": {"ids": list(problem.item_ids), "sizes_gb": (problem.catalog.sizes / GB).tolist()},
        "demand": problem.demand.demands.tolist(),
    }


def geo_from_scenario(scenario_path, zips_csv) -> GeoIndex:
    """Footprints from the scenario's CDN entries plus a ``zip,lat,lon`` table."""
    with open(scenario_path) as fh:
        doc = json.load(fh)
    fps = {str(c["id"]): Footprint(float(c["lat"]), float(c["lon"]), float(c["radius_km"]))
           for c in doc["cdns"]}
    wf = doc.get("wide_footprint")
    wide = Footprint(float(wf["lat"]), float(wf["lon"]), float(wf["radius_km"])) if wf else None
    return GeoIndex.from_csv(zips_csv, fps, wide)
