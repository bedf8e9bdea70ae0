"""Seeded synthetic corpora and ready-made scenarios.

The real ratings data and beam contours are not shipped, so this module
generates look-alikes: users clustered around CDN cities on the US east
coast (plus a share elsewhere, outside coverage), and item popularity that
is Zipf-like globally but perturbed per region so local favourites differ.
The corpus goes through the same ingest path as real data.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .ingest import DemandResult, Footprint, GeoIndex, build_demand, parse_ratings
from .linkbudget import SHANNON, EfficiencyMap, efficiency_from_snr
from .model import GB, MULTICARRIER, MULTISPOT, BeamLink, NetworkScenario
from .scenario_io import Problem

# CDN sites: name, lat, lon, spot beam
EAST_COAST_CDNS = (
    ("boston", 42.36, -71.06, 1),
    ("hartford", 41.76, -72.68, 1),
    ("new_york", 40.71, -74.01, 2),
    ("philadelphia", 39.95, -75.17, 2),
    ("pittsburgh", 40.44, -80.00, 2),
    ("baltimore", 39.29, -76.61, 3),
    ("washington", 38.91, -77.04, 3),
    ("richmond", 37.54, -77.44, 4),
    ("raleigh", 35.78, -78.64, 4),
)
# metro populations (millions), used as relative user weights
SITE_POPULATION = {"boston": 4.9, "hartford": 1.2, "new_york": 19.8, "philadelphia": 6.2,
                   "pittsburgh": 2.4, "baltimore": 2.8, "washington": 6.3, "richmond": 1.3,
                   "raleigh": 1.4}
# beams 1 and 3 share one sub-band, 2 and 4 the other
BEAM_COLOR = {1: "A", 2: "B", 3: "A", 4: "B"}
OUTSIDE_SITES = ((34.05, -118.24), (41.88, -87.63), (29.76, -95.37), (47.61, -122.33), (39.74, -104.99))

# SNR ranges at CDN sites (dB)
WIDE_SNR_DB = (4.08, 9.22)
SPOT_SNR_DB = (2.48, 9.33)


@dataclass
class Corpus:
    ratings: str  # legacy ``user::item::rating::ts`` lines
    users: dict[str, str]  # user -> zip
    geo: GeoIndex
    sites: tuple = EAST_COAST_CDNS

    def parse(self):
        return parse_ratings(io.StringIO(self.ratings), self.users)


def synthetic_corpus(seed: int = 0, *, sites=EAST_COAST_CDNS, n_users: int = 2000, n_items: int = 600,
                     ratings_per_user: int = 60, zipf: float = 0.9, locality: float = 3.5,
                     outside_share: float = 0.25, spread_km: float = 40.0, radius_km: float = 120.0,
                     zips_per_site: int = 40, population_weighted: bool = True) -> Corpus:
    """Generate a ratings corpus with regional popularity differences.

    Item ``i`` has global weight ``rank**-zipf``; each site multiplies it by
    ``exp(locality * z)`` with ``z`` standard normal, drawn per site and item.
    Users pick their home site in proportion to :data:`SITE_POPULATION`
    (uniformly when ``population_weighted`` is off or a site is unknown).
    """
    rng = np.random.default_rng(seed)
    n_sites = len(sites)
    zips: dict[str, tuple[float, float]] = {}
    site_zips: list[list[str]] = []
    deg_per_km = 1 / 111.0
    code = 10000
    for name, lat, lon, _ in sites:
        codes = []
        for _ in range(zips_per_site):
            d = rng.normal(0, spread_km * deg_per_km, 2)
            zips[str(code)] = (lat + d[0], lon + d[1] / np.cos(np.radians(lat)))
            codes.append(str(code))
            code += 1
        site_zips.append(codes)
    out_zips = []
    for lat, lon in OUTSIDE_SITES:
        for _ in range(zips_per_site // 2):
            d = rng.normal(0, 0.5, 2)
            zips[str(code)] = (lat + d[0], lon + d[1])
            out_zips.append(str(code))
            code += 1
    # a few users with ZIPs absent from the geo table
    ghost = [str(code + i) for i in range(3)]

    base = np.arange(1, n_items + 1, dtype=float) ** -zipf
    base = base[rng.permutation(n_items)]
    regional = base[None, :] * np.exp(locality * rng.standard_normal((n_sites + 1, n_items)))
    regional /= regional.sum(axis=1, keepdims=True)
    if population_weighted:
        pop = np.array([SITE_POPULATION.get(name, 1.0) for name, *_ in sites])
    else:
        pop = np.ones(n_sites)
    pop = pop / pop.sum()

    users: dict[str, str] = {}
    lines = []
    ts = 978300000
    for u in range(1, n_users + 1):
        r = rng.random()
        if r < outside_share:
            region = n_sites
            z = out_zips[rng.integers(len(out_zips))]
        elif r < outside_share + 0.002:
            region = n_sites
            z = ghost[rng.integers(len(ghost))]
        else:
            region = int(rng.choice(n_sites, p=pop))
            z = site_zips[region][rng.integers(zips_per_site)]
        users[str(u)] = z
        k = max(1, int(rng.poisson(ratings_per_user)))
        k = min(k, n_items)
        items = rng.choice(n_items, size=k, replace=False, p=regional[region])
        for i in np.sort(items):
            ts += int(rng.integers(1, 600))
            lines.append(f"{u}::{i + 1}::{int(rng.integers(1, 6))}::{ts}")
    footprints = {name: Footprint(lat, lon, radius_km) for name, lat, lon, _ in sites}
    lat_c = float(np.mean([s[1] for s in sites]))
    lon_c = float(np.mean([s[2] for s in sites]))
    geo = GeoIndex(zips, footprints, Footprint(lat_c, lon_c, 1200.0))
    return Corpus("\n".join(lines) + "\n", users, geo, tuple(sites))


@dataclass(frozen=True)
class EastCoastScenario(Problem):
    """A :class:`Problem` that remembers how its demand was ingested."""

    ingest: DemandResult | None = None


def uniform_sizes(n: int, rng, low_gb: float = 0.5, high_gb: float = 1.0) -> np.ndarray:
    return rng.uniform(low_gb, high_gb, n) * GB


def east_coast_scenario(seed: int = 2022, *, sites=EAST_COAST_CDNS, n_items: int = 100,
                        min_ratings: int = 100, cache_gb: float = 30.0, total_bandwidth: float = 1e9,
                        target_chr: float = 0.0, reuse_mode: str = MULTICARRIER,
                        efficiency_map: EfficiencyMap = SHANNON, corpus_kw: dict | None = None,
                        tau: float = 100.0) -> EastCoastScenario:
    """Nine CDNs under four spot beams and one wide beam, 100 items.

    Spot SNRs are drawn per CDN site from the multibeam range and wide-beam
    SNRs from the monobeam range; a broadcast must be decodable everywhere,
    so the wide beam runs at the lowest wide-beam SNR over the sites.
    """
    rng = np.random.default_rng(seed)
    corpus = synthetic_corpus(seed, sites=sites, **(corpus_kw or {}))
    parsed = corpus.parse()
    res = build_demand(parsed.records, corpus.geo, min_ratings=min_ratings, top_k=n_items, seed=seed)
    catalog = res.catalog(uniform_sizes(n_items, rng))
    n = len(res.cdn_ids)
    wide_snr = rng.uniform(*WIDE_SNR_DB, n)
    spot_snr = rng.uniform(*SPOT_SNR_DB, n)
    beam_of = {name: beam for name, _, _, beam in sites}
    spots = [BeamLink(beam_of[c], efficiency_from_snr(s, efficiency_map), float(s),
                      BEAM_COLOR.get(beam_of[c])) for c, s in zip(res.cdn_ids, spot_snr)]
    wsnr = float(wide_snr.min())
    wide = BeamLink("wide", efficiency_from_snr(wsnr, efficiency_map), wsnr)
    scenario = NetworkScenario(wide, spots, np.full(n, cache_gb * GB),
                               target_chr * res.demand.totals(), total_bandwidth, reuse_mode)
    meta = {"seed": seed, "cache_gb": cache_gb, "target_chr": target_chr,
            "wide_snr_db": wide_snr.tolist(), "spot_snr_db": spot_snr.tolist(), "reuse_mode": reuse_mode}
    return EastCoastScenario(scenario, catalog, res.demand, tuple(res.cdn_ids), tuple(res.item_ids),
                             tau, meta, res)


def reuse_scenario(seed: int = 2022, **kw) -> EastCoastScenario:
    """Four CDNs, one per spot beam, frequency reuse factor 2, 30 GB caches."""
    sites = tuple(s for s in EAST_COAST_CDNS if s[0] in ("boston", "new_york", "washington", "raleigh"))
    kw.setdefault("reuse_mode", MULTISPOT)
    kw.setdefault("cache_gb", 30.0)
    return east_coast_scenario(seed, sites=sites, **kw)


def toy_paths() -> dict[str, str]:
    """Paths of the bundled toy corpus (3 beams, 12 items)."""
    base = resources.files("satcache") / "data" / "toy"
    return {name: str(base / name) for name in
            ("ratings.dat", "users.dat", "zips.csv", "scenario.json", "demand.csv")}
