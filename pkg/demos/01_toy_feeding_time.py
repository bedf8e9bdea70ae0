"""How long must the satellite transmit to reach a target hit ratio?

The bundled toy network has three CDNs under three spot beams and one wide
beam.  For each target cache hit ratio we compare the jointly optimized
feeding time against the two single-mode schemes: every file on its CDN's
spot beam with spectrum split evenly, or every file broadcast on the wide
beam.

Run with ``python demos/01_toy_feeding_time.py``.
"""

from __future__ import annotations

from satcache import (InfeasibleTargets, load_problem, minimize_feeding_time, reference1_multibeam,
                      reference2_widebeam, toy_paths)

problem = load_problem(toy_paths()["scenario.json"])
print(f"{problem.scenario.n_cdns} CDNs, {problem.catalog.n_files} files, "
      f"{problem.demand.demands.sum():g} requests\n")
print(f"{'target':>6} {'joint s':>9} {'spot s':>9} {'wide s':>9} {'wide share':>10}")

for target in (0.2, 0.4, 0.6, 0.8):
    p = problem.with_targets(target)
    sc, cat, dem = p.scenario, p.catalog, p.demand
    joint = minimize_feeding_time(sc, cat, dem).solution
    times = []
    for scheme in (reference1_multibeam, reference2_widebeam):
        try:
            times.append(f"{scheme(sc, cat, dem).tau:9.2f}")
        except InfeasibleTargets:
            times.append(f"{'-':>9}")
    wide = joint.wide_bits(cat)
    share = wide / (wide + joint.spot_bits(cat))
    print(f"{target:6.1f} {joint.tau:9.2f} {times[0]} {times[1]} {share:10.2f}")

# On this small network the broadcast is almost always the better medium:
# the three CDNs request similar files, so one copy on the wide beam serves
# all of them at once.
