"""Ratings corpus + geography -> per-CDN demand.

Every rating counts as one request.  Only users whose ZIP maps inside a
service footprint contribute; everything else is accounted for as dropped so
that ``counted + dropped == parsed`` always holds.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .model import ContentCatalog, DemandMatrix, SatCacheError

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088


class UnreadableSource(SatCacheError, OSError):
    pass


class EmptyCorpus(SatCacheError, ValueError):
    pass


class InsufficientItems(SatCacheError, ValueError):
    pass


class UnknownZip(SatCacheError, KeyError):
    pass


class OutsideCoverage(SatCacheError, LookupError):
    pass


@dataclass(frozen=True)
class RatingsRecord:
    user_id: str
    item_id: str
    timestamp: int
    zip_code: str


@dataclass(frozen=True)
class Footprint:
    lat: float
    lon: float
    radius_km: float

    def __post_init__(self):
        if not self.radius_km > 0:
            raise ValueError("footprint radius must be positive")


@dataclass(frozen=True)
class GeoIndex:
    """ZIP coordinates and circular service footprints keyed by area id."""

    zips: Mapping[str, tuple[float, float]]
    footprints: Mapping[str, Footprint]
    wide: Footprint | None = None

    @classmethod
    def from_csv(cls, zip_file, footprints, wide=None) -> GeoIndex:
        """Load ``zip,lat,lon`` rows; duplicate ZIPs are rejected."""
        zips: dict[str, tuple[float, float]] = {}
        with _open(zip_file) as fh:
            for row in csv.DictReader(fh):
                z = row["zip"].strip()
                if z in zips:
                    raise ValueError(f"duplicate zip {z!r}")
                zips[z] = (float(row["lat"]), float(row["lon"]))
        return cls(zips, dict(footprints), wide)


def haversine_km(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(a))


@dataclass
class ParseResult:
    records: list[RatingsRecord]
    malformed: int = 0
    unknown_users: int = 0

    @property
    def parsed(self) -> int:
        return len(self.records)


def _open(src):
    if hasattr(src, "read"):
        return _NoClose(src)
    try:
        return open(src, newline="", encoding="latin-1")
    except OSError as exc:
        raise UnreadableSource(str(exc)) from exc


class _NoClose:
    def __init__(self, fh):
        self.fh = fh

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        return False


def _read_users(src) -> dict[str, str]:
    # users.dat layout: user::gender::age::occupation::zip
    users = {}
    with _open(src) as fh:
        for line in fh:
            parts = line.strip().split("::")
            if len(parts) >= 5 and parts[0]:
                users[parts[0]] = parts[4].split("-")[0].strip()
    return users


def parse_ratings(stream: str | os.PathLike | IO[str], users=None) -> ParseResult:
    """Parse a ratings corpus.

    Two layouts are accepted.  The legacy one is ``user::item::rating::ts``
    lines plus a ``users`` table (path, stream, or ``{user_id: zip}``) that
    supplies ZIP codes.  The flat one is a CSV with header
    ``user_id,item_id,timestamp,zip``.  Malformed lines are counted and
    skipped.
    """
    with _open(stream) as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmptyCorpus("ratings source is empty")
    out = ParseResult([])
    if "::" in lines[0]:
        if users is None:
            raise UnreadableSource("legacy ratings layout needs a users table for ZIP codes")
        zip_of = users if isinstance(users, Mapping) else _read_users(users)
        for ln in lines:
            parts = ln.strip().split("::")
            if len(parts) != 4 or not parts[0] or not parts[1]:
                out.malformed += 1
                continue
            try:
                ts = int(parts[3])
                float(parts[2])
            except ValueError:
                out.malformed += 1
                continue
            z = zip_of.get(parts[0])
            if z is None or ts < 0:
                out.malformed += 1
                out.unknown_users += z is None
                continue
            out.records.append(RatingsRecord(parts[0], parts[1], ts, z))
    else:
        reader = csv.reader(io.StringIO("\n".join(lines)))
        header = [h.strip() for h in next(reader)]
        if header != ["user_id", "item_id", "timestamp", "zip"]:
            raise UnreadableSource(f"unrecognized ratings header {header}")
        for row in reader:
            if len(row) != 4 or not row[0].strip() or not row[1].strip():
                out.malformed += 1
                continue
            try:
                ts = int(row[2])
            except ValueError:
                out.malformed += 1
                continue
            if ts < 0:
                out.malformed += 1
                continue
            out.records.append(RatingsRecord(row[0].strip(), row[1].strip(), ts, row[3].strip()))
    if not out.records:
        raise EmptyCorpus(f"no well-formed records ({out.malformed} malformed)")
    if out.malformed:
        log.info("skipped %d malformed rating lines", out.malformed)
    return out


def assign_to_beam(zip_code: str, geo: GeoIndex) -> str:
    """Footprint id serving ``zip_code``; the nearest center wins on overlap.

    Raises :class:`UnknownZip` or :class:`OutsideCoverage`.
    """
    try:
        lat, lon = geo.zips[zip_code]
    except KeyError:
        raise UnknownZip(zip_code) from None
    best, best_d = None, math.inf
    for key, fp in geo.footprints.items():
        d = float(haversine_km(lat, lon, fp.lat, fp.lon))
        if d <= fp.radius_km and d < best_d:
            best, best_d = key, d
    if best is None:
        raise OutsideCoverage(zip_code)
    return best


@dataclass
class DemandResult:
    demand: DemandMatrix
    item_ids: list[str]
    cdn_ids: list[str]
    parsed: int
    counted: int
    dropped: Counter = field(default_factory=Counter)

    @property
    def dropped_total(self) -> int:
        return sum(self.dropped.values())

    def catalog(self, sizes) -> ContentCatalog:
        return ContentCatalog(np.asarray(sizes, dtype=float), tuple(self.item_ids))


def build_demand(records: Iterable[RatingsRecord], geo: GeoIndex, *, min_ratings: int = 100,
                 top_k: int | None = 100, seed: int = 0,
                 cdn_of_area: Mapping[str, str] | None = None) -> DemandResult:
    """Count in-coverage requests per CDN and item.

    Items with fewer than ``min_ratings`` in-coverage requests are removed,
    then ``top_k`` survivors are sampled with a seeded generator (all of them
    when ``top_k`` is None).  ``cdn_of_area`` maps footprint ids onto CDN ids
    (identity by default).  Selected items keep ascending id order.
    """
    records = list(records)
    if not records:
        raise EmptyCorpus("no records")
    cdn_of_area = dict(cdn_of_area) if cdn_of_area else {k: k for k in geo.footprints}
    cdn_ids = list(dict.fromkeys(cdn_of_area[k] for k in geo.footprints))
    dropped: Counter = Counter()
    area_cache: dict[str, str | None] = {}
    counts: Counter = Counter()
    for r in records:
        if r.zip_code not in area_cache:
            try:
                area_cache[r.zip_code] = assign_to_beam(r.zip_code, geo)
            except UnknownZip:
                area_cache[r.zip_code] = "?unknown"
            except OutsideCoverage:
                area_cache[r.zip_code] = "?outside"
        area = area_cache[r.zip_code]
        if area.startswith("?"):
            dropped["unknown_zip" if area == "?unknown" else "outside_coverage"] += 1
            continue
        counts[(cdn_of_area[area], r.item_id)] += 1

    per_item: Counter = Counter()
    for (_, item), c in counts.items():
        per_item[item] += c
    eligible = sorted((i for i, c in per_item.items() if c >= min_ratings), key=_item_key)
    if top_k is None:
        chosen = eligible
    else:
        if len(eligible) < top_k:
            raise InsufficientItems(f"{len(eligible)} items with >= {min_ratings} requests, need {top_k}")
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(eligible), size=top_k, replace=False)
        chosen = [eligible[i] for i in sorted(pick)]
    col = {item: j for j, item in enumerate(chosen)}
    row = {c: i for i, c in enumerate(cdn_ids)}
    mat = np.zeros((len(cdn_ids), len(chosen)))
    counted = 0
    for (cdn, item), c in counts.items():
        if item in col:
            mat[row[cdn], col[item]] += c
            counted += c
        else:
            dropped["item_filtered"] += c
    return DemandResult(DemandMatrix(mat), chosen, cdn_ids, len(records), counted, dropped)


def _item_key(item: str):
    return (0, int(item), "") if item.isdigit() else (1, 0, item)


def write_demand_csv(path, demand: DemandMatrix, cdn_ids=None, item_ids=None) -> None:
    """Write ``cdn_id,item_id,count`` rows (zero counts omitted)."""
    n, f = demand.shape
    cdn_ids = list(cdn_ids) if cdn_ids is not None else [str(i + 1) for i in range(n)]
    item_ids = list(item_ids) if item_ids is not None else [str(j) for j in range(f)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cdn_id", "item_id", "count"])
        for i in range(n):
            for j in range(f):
                v = demand.demands[i, j]
                if v:
                    w.writerow([cdn_ids[i], item_ids[j], _num(v)])


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def read_demand_csv(path, cdn_ids=None, item_ids=None) -> tuple[DemandMatrix, list[str], list[str]]:
    """Read a ``cdn_id,item_id,count`` file.

    Row/column order follows ``cdn_ids``/``item_ids`` when given, else first
    appearance.  Missing pairs are zero demand.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise UnreadableSource(str(exc)) from exc
    with fh:
        rows = list(csv.DictReader(fh))
    if rows and set(rows[0]) != {"cdn_id", "item_id", "count"}:
        raise UnreadableSource(f"bad demand header in {path}")
    cdns = [str(c) for c in cdn_ids] if cdn_ids is not None else list(dict.fromkeys(r["cdn_id"] for r in rows))
    items = [str(i) for i in item_ids] if item_ids is not None else list(dict.fromkeys(r["item_id"] for r in rows))
    ri = {c: i for i, c in enumerate(cdns)}
    ci = {c: j for j, c in enumerate(items)}
    mat = np.zeros((len(cdns), len(items)))
    for r in rows:
        try:
            mat[ri[r["cdn_id"]], ci[r["item_id"]]] += float(r["count"])
        except KeyError as exc:
            raise UnreadableSource(f"demand row references unknown id {exc}") from None
    return DemandMatrix(mat), cdns, items
