"""From a ratings log to a per-CDN demand matrix.

Each rating is treated as one request.  The user's zip code places it under
a spot beam footprint (the nearest center wins on overlap), and items with
too few ratings are dropped.  Every parsed record is either counted or
dropped for a named reason.

Run with ``python demos/04_ratings_to_demand.py``.
"""

from __future__ import annotations

from satcache import build_demand, parse_ratings, toy_paths
from satcache.scenario_io import geo_from_scenario

paths = toy_paths()
parsed = parse_ratings(paths["ratings.dat"], paths["users.dat"])
geo = geo_from_scenario(paths["scenario.json"], paths["zips.csv"])
result = build_demand(parsed.records, geo, min_ratings=1, top_k=None)

print(f"parsed {result.parsed} records ({parsed.malformed} malformed lines skipped)")
print(f"counted {result.counted}")
for reason, n in sorted(result.dropped.items()):
    print(f"dropped {n} ({reason})")

print("\nrequests per CDN:")
for cdn, total in zip(result.cdn_ids, result.demand.totals()):
    print(f"  {cdn:10s} {total:g}")
