"""Domain types and the constraint system shared by both caching problems.

Units are fixed throughout the package: sizes and cache capacities in bits,
bandwidth in Hz, time in seconds, spectral efficiency in bits/s/Hz.  A link
of width ``w`` and efficiency ``gamma`` delivers ``w * gamma * tau`` bits in
a feeding window of length ``tau``.

Index 0 of every bandwidth vector is the wide beam; indices ``1..N`` are the
per-CDN spot links.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

GB = 8e9  # bits per (decimal) gigabyte

MULTICARRIER = "multicarrier"
MULTISPOT = "multispot"
# constraint families reported by check_feasible
CONSTRAINT_FAMILIES = ("targets", "wide_link", "spot_link", "cache", "single_copy", "wide_storage",
                       "spectrum", "binary", "nonneg")
ReuseMode = Literal["multicarrier", "multispot"]


class SatCacheError(Exception):
    """Base class for every error raised by this package."""


@dataclass(frozen=True)
class Issue:
    kind: type
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind.__name__} at {self.where}: {self.message}"


class ScenarioError(SatCacheError, ValueError):
    """Invalid scenario; ``issues`` lists every violated invariant."""

    def __init__(self, issues: Sequence[Issue] | str = ()):
        if isinstance(issues, str):
            issues = [Issue(type(self), "-", issues)]
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


class DimensionMismatch(ScenarioError):
    pass


class NonPositiveQuantity(ScenarioError):
    pass


class MissingColor(ScenarioError):
    pass


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ContentCatalog:
    """File sizes (bits) and identifiers of the ``F`` candidate files."""

    sizes: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sizes", _frozen(np.ravel(self.sizes)))
        ids = tuple(self.ids) if len(self.ids) else tuple(range(len(self.sizes)))
        object.__setattr__(self, "ids", ids)
        issues = []
        if self.sizes.size == 0:
            issues.append(Issue(DimensionMismatch, "sizes", "catalog is empty"))
        for f in np.flatnonzero(~(self.sizes > 0)):
            issues.append(Issue(NonPositiveQuantity, f"sizes[{f}]", "file size must be > 0"))
        if len(ids) != self.sizes.size:
            issues.append(Issue(DimensionMismatch, "ids", f"{len(ids)} ids for {self.sizes.size} sizes"))
        if len(set(ids)) != len(ids):
            issues.append(Issue(ScenarioError, "ids", "content ids are not unique"))
        _raise(issues)

    @property
    def n_files(self) -> int:
        return int(self.sizes.size)


@dataclass(frozen=True)
class DemandMatrix:
    """Expected request counts, one row per CDN and one column per file."""

    demands: np.ndarray

    def __post_init__(self):
        d = _frozen(np.atleast_2d(self.demands))
        object.__setattr__(self, "demands", d)
        bad = np.argwhere(~(d >= 0))
        _raise([Issue(NonPositiveQuantity, f"demands[{i},{j}]", "demand must be >= 0") for i, j in bad])

    @property
    def shape(self) -> tuple[int, int]:
        return self.demands.shape

    def totals(self) -> np.ndarray:
        """Total requests per CDN."""
        return self.demands.sum(axis=1)


@dataclass(frozen=True)
class BeamLink:
    """One satellite link: its SNR (dB) and the resulting spectral efficiency.

    ``color`` is the frequency sub-band index used under multi-spot reuse.
    """

    beam_id: str | int
    spectral_efficiency: float
    snr_db: float | None = None
    color: int | str | None = None

    @classmethod
    def from_snr(cls, beam_id, snr_db: float, efficiency_map=None, color=None) -> BeamLink:
        from .linkbudget import SHANNON, efficiency_from_snr

        gamma = efficiency_from_snr(snr_db, efficiency_map or SHANNON)
        return cls(beam_id, gamma, snr_db, color)


@dataclass(frozen=True)
class NetworkScenario:
    wide_beam: BeamLink
    spot_beams: tuple[BeamLink, ...]
    cache_sizes: np.ndarray
    hit_targets: np.ndarray
    total_bandwidth: float
    reuse_mode: ReuseMode = MULTICARRIER

    def __post_init__(self):
        object.__setattr__(self, "spot_beams", tuple(self.spot_beams))
        object.__setattr__(self, "cache_sizes", _frozen(np.ravel(self.cache_sizes)))
        object.__setattr__(self, "hit_targets", _frozen(np.ravel(self.hit_targets)))

    @property
    def n_cdns(self) -> int:
        return len(self.spot_beams)

    @property
    def efficiencies(self) -> np.ndarray:
        """gamma_0 followed by gamma_1..gamma_N."""
        return np.array([self.wide_beam.spectral_efficiency]
                        + [b.spectral_efficiency for b in self.spot_beams])

    def colors(self) -> list:
        """Distinct spot-beam colors in first-seen order."""
        seen: list = []
        for b in self.spot_beams:
            if b.color is not None and b.color not in seen:
                seen.append(b.color)
        return seen

    def color_index(self) -> np.ndarray:
        """Per-spot-link index into :meth:`colors`."""
        if self.reuse_mode != MULTISPOT:
            raise ScenarioError("color_index is only defined under multi-spot reuse")
        cols = self.colors()
        missing = [n for n, b in enumerate(self.spot_beams, start=1) if b.color is None]
        if missing:
            raise MissingColor([Issue(MissingColor, f"spot_beams[{n}]", "beam has no color")
                                for n in missing])
        return np.array([cols.index(b.color) for b in self.spot_beams], dtype=int)

    def with_(self, **changes) -> NetworkScenario:
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class JointSolution:
    """Caching decisions, bandwidth split and feeding time.

    Decision arrays may hold relaxed values in [0, 1]; :func:`check_feasible`
    reports whether they are binary.
    """

    x: np.ndarray
    xn: np.ndarray
    yn: np.ndarray
    w: np.ndarray
    tau: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("x", "w"):
            object.__setattr__(self, name, _frozen(np.ravel(getattr(self, name))))
        for name in ("xn", "yn"):
            object.__setattr__(self, name, _frozen(np.atleast_2d(getattr(self, name))))
        object.__setattr__(self, "tau", float(self.tau))

    @classmethod
    def empty(cls, n_cdns: int, n_files: int, tau: float = 0.0, w=None) -> JointSolution:
        z = np.zeros((n_cdns, n_files))
        w = np.zeros(n_cdns + 1) if w is None else w
        return cls(np.zeros(n_files), z, z, w, tau)

    def hits(self, demand: DemandMatrix) -> float:
        return float(np.sum(demand.demands * (self.xn + self.yn)))

    def chr(self, demand: DemandMatrix) -> float:
        total = float(demand.demands.sum())
        return self.hits(demand) / total if total > 0 else 0.0

    def wide_bits(self, catalog: ContentCatalog) -> float:
        return float(catalog.sizes @ self.x)

    def spot_bits(self, catalog: ContentCatalog) -> float:
        return float(np.sum(self.yn @ catalog.sizes))

    def loads(self, catalog: ContentCatalog) -> np.ndarray:
        """Bits carried by each link: wide beam first, then each spot link."""
        return np.concatenate([[catalog.sizes @ self.x], self.yn @ catalog.sizes])


def _raise(issues: list[Issue]) -> None:
    if not issues:
        return
    kinds = {i.kind for i in issues}
    cls = kinds.pop() if len(kinds) == 1 else ScenarioError
    if not issubclass(cls, ScenarioError):
        cls = ScenarioError
    raise cls(issues)


def validate_scenario(scenario: NetworkScenario, catalog: ContentCatalog,
                      demand: DemandMatrix) -> NetworkScenario:
    """Check every scenario invariant against the catalog and demand.

    Returns the scenario unchanged when valid.  Otherwise raises the
    :class:`ScenarioError` subclass of the violations (or the base class if
    they are of mixed kinds) with all of them listed in ``issues``.
    """
    issues: list[Issue] = []
    n = scenario.n_cdns
    f = catalog.n_files
    if n < 1:
        issues.append(Issue(DimensionMismatch, "spot_beams", "need at least one spot link"))
    for name in ("cache_sizes", "hit_targets"):
        arr = getattr(scenario, name)
        if arr.size != n:
            issues.append(Issue(DimensionMismatch, name, f"length {arr.size}, expected N={n}"))
    for i in np.flatnonzero(~(scenario.cache_sizes > 0)):
        issues.append(Issue(NonPositiveQuantity, f"cache_sizes[{i}]", "cache size must be > 0"))
    for i in np.flatnonzero(~(scenario.hit_targets >= 0)):
        issues.append(Issue(NonPositiveQuantity, f"hit_targets[{i}]", "hit target must be >= 0"))
    if not scenario.total_bandwidth > 0:
        issues.append(Issue(NonPositiveQuantity, "total_bandwidth", "must be > 0"))
    links = [("wide_beam", scenario.wide_beam)] + [
        (f"spot_beams[{k}]", b) for k, b in enumerate(scenario.spot_beams, start=1)]
    for where, b in links:
        if not b.spectral_efficiency > 0:
            issues.append(Issue(NonPositiveQuantity, where, "spectral efficiency must be > 0"))
    if scenario.reuse_mode == MULTISPOT:
        for k, b in enumerate(scenario.spot_beams, start=1):
            if b.color is None:
                issues.append(Issue(MissingColor, f"spot_beams[{k}]", "beam has no color"))
    elif scenario.reuse_mode != MULTICARRIER:
        issues.append(Issue(ScenarioError, "reuse_mode", f"unknown mode {scenario.reuse_mode!r}"))
    if demand.shape != (n, f):
        issues.append(Issue(DimensionMismatch, "demand", f"shape {demand.shape}, expected ({n}, {f})"))
    _raise(issues)
    return scenario


@dataclass(frozen=True)
class BandwidthConstraint:
    """``w_coef @ w + band_coef @ W_c <= rhs`` over link widths and sub-bands."""

    w_coef: np.ndarray
    band_coef: np.ndarray
    rhs: float
    label: str = ""


def bandwidth_budget_constraints(scenario: NetworkScenario) -> list[BandwidthConstraint]:
    """Linear spectrum constraints over ``w`` (and per-color sub-bands).

    Multicarrier: ``sum(w) <= W_tot``.  Multi-spot reuse: one sub-band width
    ``W_c`` per color with ``w_0 + sum(W_c) <= W_tot`` and ``w_n <= W_color(n)``.
    """
    n = scenario.n_cdns
    W = float(scenario.total_bandwidth)
    if scenario.reuse_mode != MULTISPOT:
        return [BandwidthConstraint(np.ones(n + 1), np.zeros(0), W, "total")]
    cidx = scenario.color_index()
    n_colors = int(cidx.max()) + 1
    total_w = np.zeros(n + 1)
    total_w[0] = 1.0
    out = [BandwidthConstraint(total_w, np.ones(n_colors), W, "total")]
    for k in range(1, n + 1):
        wc = np.zeros(n + 1)
        wc[k] = 1.0
        bc = np.zeros(n_colors)
        bc[cidx[k - 1]] = -1.0
        out.append(BandwidthConstraint(wc, bc, 0.0, f"beam{k}<=band{cidx[k - 1]}"))
    return out


def spectrum_usage(scenario: NetworkScenario, w: np.ndarray) -> float:
    """Spectrum consumed by a width vector under the scenario's reuse mode.

    Under reuse each color needs only as much as its widest beam.
    """
    w = np.asarray(w, dtype=float)
    if scenario.reuse_mode != MULTISPOT:
        return float(w.sum())
    cidx = scenario.color_index()
    per_color = np.zeros(int(cidx.max()) + 1)
    np.maximum.at(per_color, cidx, w[1:])
    return float(w[0] + per_color.sum())


def min_feeding_time(scenario: NetworkScenario, loads: np.ndarray) -> tuple[float, np.ndarray]:
    """Smallest tau (and widths achieving it) that carries the given link loads.

    For fixed caching decisions the width LP has a closed form: every link
    gets width proportional to ``load / gamma``, and under reuse all beams of
    one color share that color's widest requirement.
    """
    loads = np.asarray(loads, dtype=float)
    gam = scenario.efficiencies
    need = loads / gam  # Hz*s per link
    usage = spectrum_usage(scenario, need)
    W = float(scenario.total_bandwidth)
    if usage <= 0:
        return 0.0, np.zeros_like(need)
    tau = usage / W
    return tau, need / tau


def link_usage(scenario: NetworkScenario, loads: np.ndarray, tau: float) -> float:
    """Spectrum needed to carry ``loads`` in time ``tau`` (inf if tau <= 0 and loads > 0)."""
    loads = np.asarray(loads, dtype=float)
    if tau <= 0:
        return 0.0 if not np.any(loads > 0) else np.inf
    return spectrum_usage(scenario, loads / (scenario.efficiencies * tau))


@dataclass
class FeasibilityReport:
    """Per-constraint-family slacks (>= 0 means satisfied) and the verdict."""

    slacks: dict[str, np.ndarray]
    tol: float
    feasible: bool = False

    def worst(self) -> dict[str, float]:
        return {k: float(v.min()) if v.size else np.inf for k, v in self.slacks.items()}

    def violated(self) -> list[str]:
        return [k for k, v in self.slacks.items() if v.size and v.min() < -self._tol(k)]

    def _tol(self, key: str) -> float:
        return self.tol * self._scale.get(key, 1.0)

    _scale: dict = field(default_factory=dict, repr=False)


def check_feasible(solution: JointSolution, scenario: NetworkScenario, catalog: ContentCatalog,
                   demand: DemandMatrix, tol: float = 1e-6, families: Sequence[str] | None = None
                   ) -> FeasibilityReport:
    """Evaluate constraints (hit targets, link capacity, cache, exclusivity,
    wide-storage, spectrum, binarity) at a point.

    Link capacity uses the exact bilinear form ``q @ x <= w_0 gamma_0 tau``.
    Slacks are in natural units; ``tol`` is relative to each family's scale.
    ``families`` restricts the verdict (e.g. drop ``"targets"`` for the hits problem).
    """
    n, f = scenario.n_cdns, catalog.n_files
    if solution.x.size != f or solution.xn.shape != (n, f) or solution.yn.shape != (n, f) \
            or solution.w.size != n + 1 or demand.shape != (n, f):
        raise DimensionMismatch("solution dimensions do not match the scenario")
    q = catalog.sizes
    gam = scenario.efficiencies
    x, xn, yn, w, tau = solution.x, solution.xn, solution.yn, solution.w, solution.tau
    stored = xn + yn
    slacks = {
        "targets": np.sum(demand.demands * stored, axis=1) - scenario.hit_targets,
        "wide_link": np.array([w[0] * gam[0] * tau - q @ x]),
        "spot_link": w[1:] * gam[1:] * tau - yn @ q,
        "cache": scenario.cache_sizes - stored @ q,
        "single_copy": (1.0 - stored).ravel(),
        "wide_storage": (x[None, :] - xn).ravel(),
        "spectrum": np.array([scenario.total_bandwidth - spectrum_usage(scenario, w)]),
        "binary": -np.concatenate([np.minimum(np.abs(v), np.abs(1 - v)).ravel() for v in (x, xn, yn)]),
        "nonneg": np.append(w, tau),
    }
    scale = {
        "targets": max(1.0, float(demand.demands.sum())),
        "wide_link": max(1.0, float(q.sum())),
        "spot_link": max(1.0, float(q.sum())),
        "cache": max(1.0, float(q.sum())),
        "spectrum": float(scenario.total_bandwidth),
        "nonneg": float(scenario.total_bandwidth),
    }
    rep = FeasibilityReport(slacks, tol, _scale=scale)
    keys = list(families) if families is not None else list(slacks)
    rep.feasible = not any(k in keys for k in rep.violated())
    return rep
