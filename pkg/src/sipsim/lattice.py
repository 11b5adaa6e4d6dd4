"""Site ranges and particle configurations on one-dimensional lattices.

Three boundary conventions cover every model in the package: a finite window
of the integer line (used for finite-particle runs that live on Z), a segment
whose two extra end sites act as reservoir/absorber slots, and a ring.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class BoundaryKind(enum.Enum):
    OPEN_LINE_WINDOW = "open_line_window"
    SEGMENT_WITH_RESERVOIRS = "segment_with_reservoirs"
    RING = "ring"


class LatticeRangeError(ValueError):
    """A site fell outside the range it is required to live on."""


class WindowAbortError(RuntimeError):
    """A particle touched the guard edge of an open window.

    Windows are sized so this has negligible probability; when it does
    happen the replica is abandoned loudly instead of reflecting the
    particle, which would bias the law.
    """


@dataclass(frozen=True)
class SiteRange:
    """Contiguous sites lo..hi (inclusive) with a boundary convention."""

    lo: int
    hi: int
    kind: BoundaryKind = BoundaryKind.OPEN_LINE_WINDOW

    def __post_init__(self):
        if not isinstance(self.lo, int) or not isinstance(self.hi, int):
            raise LatticeRangeError("site range endpoints must be integers")
        if self.hi < self.lo:
            raise LatticeRangeError(f"empty site range [{self.lo}, {self.hi}]")
        if self.kind is BoundaryKind.RING and self.size < 3:
            raise LatticeRangeError("a ring needs at least 3 sites")
        if self.kind is BoundaryKind.SEGMENT_WITH_RESERVOIRS and self.size < 3:
            raise LatticeRangeError("a reservoir segment needs at least 1 interior site")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def sites(self) -> range:
        return range(self.lo, self.hi + 1)

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    def require(self, x: int) -> int:
        if x not in self:
            raise LatticeRangeError(f"site {x} outside range [{self.lo}, {self.hi}]")
        return x

    # Segment convention: interior sites are lo+1..hi-1, the end slots only
    # hold absorbed/reservoir bookkeeping and never carry bulk dynamics.
    @property
    def interior_lo(self) -> int:
        if self.kind is not BoundaryKind.SEGMENT_WITH_RESERVOIRS:
            raise LatticeRangeError("interior endpoints only exist for reservoir segments")
        return self.lo + 1

    @property
    def interior_hi(self) -> int:
        if self.kind is not BoundaryKind.SEGMENT_WITH_RESERVOIRS:
            raise LatticeRangeError("interior endpoints only exist for reservoir segments")
        return self.hi - 1

    def neighbors(self, i: int) -> tuple[int, ...]:
        """Nearest neighbors of i that belong to the range."""
        self.require(i)
        if self.kind is BoundaryKind.RING:
            n = self.size
            left = self.lo + (i - self.lo - 1) % n
            right = self.lo + (i - self.lo + 1) % n
            return (left, right)
        out = []
        if i - 1 >= self.lo:
            out.append(i - 1)
        if i + 1 <= self.hi:
            out.append(i + 1)
        return tuple(out)

    def step(self, i: int, e: int) -> int:
        """Site reached from i by one step e in {-1,+1}, wrapping on rings."""
        if e not in (-1, 1):
            raise LatticeRangeError(f"step must be -1 or +1, got {e}")
        if self.kind is BoundaryKind.RING:
            return self.lo + (i - self.lo + e) % self.size

        return i + e


def ring(n_sites: int, lo: int = 0) -> SiteRange:
    return SiteRange(lo, lo + n_sites - 1, BoundaryKind.RING)


def segment(n_interior: int) -> SiteRange:
    """Sites 0..N+1 where 1..N are interior and 0, N+1 are reservoir slots."""
    return SiteRange(0, n_interior + 1, BoundaryKind.SEGMENT_WITH_RESERVOIRS)


def window(lo: int, hi: int) -> SiteRange:
    return SiteRange(lo, hi, BoundaryKind.OPEN_LINE_WINDOW)


def window_margin(m: float, t_max: float) -> int:
    """Guard margin for open-window runs of duration t_max.

    Eight standard deviations of a rate m/2 (per direction) walk plus a
    flat floor, so edge contact is an astronomically rare event that is
    treated as an error rather than reflected.
    """
    if m <= 0 or t_max < 0:
        raise ValueError("need m > 0 and t_max >= 0")
    return int(math.ceil(8.0 * math.sqrt(m * t_max))) + 64


def window_for(starts, m: float, t_max: float) -> SiteRange:
    """Open window holding every start position with the guard margin."""
    starts = list(starts)
    if not starts:
        raise LatticeRangeError("need at least one start position")
    pad = window_margin(m, t_max)
    return window(min(starts) - pad, max(starts) + pad)


@dataclass(frozen=True)
class LabeledPositions:
    """Positions of distinguishable particles; labels are the tuple index."""

    positions: tuple[int, ...]

    def __post_init__(self):
        if len(self.positions) == 0:
            raise LatticeRangeError("need at least one particle")
        if not all(isinstance(p, (int, np.integer)) for p in self.positions):
            raise LatticeRangeError("positions must be integers")
        object.__setattr__(self, "positions", tuple(int(p) for p in self.positions))

    @property
    def n(self) -> int:
        return len(self.positions)

    def array(self) -> np.ndarray:
        return np.array(self.positions, dtype=np.int64)


@dataclass
class OccupationConfig:
    """Occupation counts on a site range; zero-count sites are dropped."""

    sites: SiteRange
    counts: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for site, c in self.counts.items():
            site = int(site)
            c = int(c)
            self.sites.require(site)
            if c < 0:
                raise LatticeRangeError(f"negative count {c} at site {site}")
            if c > 0:
                clean[site] = c
        self.counts = clean

    def count(self, i: int) -> int:
        self.sites.require(i)
        return self.counts.get(i, 0)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.sites.size, dtype=np.int64)
        for site, c in self.counts.items():
            out[site - self.sites.lo] = c
        return out

    @classmethod
    def from_dense(cls, arr, sites: SiteRange) -> "OccupationConfig":
        arr = np.asarray(arr)
        if arr.shape != (sites.size,):
            raise LatticeRangeError(
                f"dense array length {arr.shape} does not match range size {sites.size}"
            )
        return cls(sites, {sites.lo + i: int(c) for i, c in enumerate(arr) if c != 0})

    def copy(self) -> "OccupationConfig":
        return OccupationConfig(self.sites, dict(self.counts))

    def key(self) -> tuple:
        """Hashable identity, used by exact state indexing."""
        return tuple(sorted(self.counts.items()))

    def __eq__(self, other):
        return (
            isinstance(other, OccupationConfig)
            and self.sites == other.sites
            and self.counts == other.counts
        )


def occupation_of(positions: LabeledPositions, sites: SiteRange) -> OccupationConfig:
    """Forget labels: counts per site of a labeled configuration."""
    counts: dict[int, int] = {}
    for p in positions.positions:
        sites.require(p)
        counts[p] = counts.get(p, 0) + 1
    return OccupationConfig(sites, counts)


def delta_config(x: int, sites: SiteRange) -> OccupationConfig:
    """Single particle at x."""
    sites.require(x)
    return OccupationConfig(sites, {x: 1})
