"""Event-driven simulation of the inclusion process and its relatives.

The simulators here are the readable reference implementations: plain
Python, exact continuous-time sampling, optional event recording. The
experiment modules run the compiled loops in _kernels instead; both layers
draw randomness the same way (one uniform for the holding time via
-log1p(-u)/total, one for the event, channels scanned in a fixed order),
so for labeled processes the two produce bit-identical paths from the same
generator state, which the tests exploit.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import EVENT_CAP
from .lattice import (
    BoundaryKind,
    LabeledPositions,
    OccupationConfig,
    WindowAbortError,
    window_for,
)
from .measures import ReservoirParams
from .rngs import as_generator


class EventKind(str, enum.Enum):
    RW_JUMP = "rw_jump"
    INCLUSION_JUMP = "inclusion_jump"
    RESERVOIR_BIRTH = "reservoir_birth"
    RESERVOIR_DEATH = "reservoir_death"
    ABSORPTION = "absorption"


@dataclass(frozen=True)
class JumpEvent:
    time: float
    kind: EventKind
    src: int
    dst: int
    label: int | None = None


@dataclass(frozen=True)
class Trajectory:
    """A completed run: initial state, ordered events, horizon, final state."""

    initial: object
    events: tuple[JumpEvent, ...]
    horizon: float
    final: object

    @property
    def event_count(self) -> int:
        return len(self.events)

    def to_rows(self):
        """Event-log rows (time, kind, from, to, label) for CSV dumps."""
        return [
            (e.time, e.kind.value, e.src, e.dst, "" if e.label is None else e.label)
            for e in self.events
        ]


def sip_bulk_rate(eta: OccupationConfig, i: int, j: int, m: float) -> float:
    """Rate of moving one particle from i to a neighboring site j."""
    if j not in eta.sites.neighbors(i):
        raise ValueError(f"sites {i} and {j} are not neighbors")
    return eta.count(i) * (0.5 * m + eta.count(j))


def labeled_sip_rates(p: LabeledPositions, i: int, e: int, m: float) -> float:
    """Hop rate of labeled particle i by e: m/2 plus occupancy of the target."""
    if e not in (-1, 1):
        raise ValueError("step must be -1 or +1")
    target = p.positions[i] + e
    return 0.5 * m + sum(1 for y in p.positions if y == target)


def _draw_holding(rng, total: float) -> float:
    return -math.log1p(-rng.random()) / total


def _simulate_labeled(positions, m, T, rng, inclusion, record):
    """Shared loop for labeled SIP (inclusion=True) and free walkers."""
    pos = list(positions)
    n = len(pos)
    win = window_for(positions, m, T)
    m_half = 0.5 * m
    t = 0.0
    events = []
    rates = [[0.0, 0.0] for _ in range(n)]
    while True:
        total = 0.0
        for i in range(n):
            for d in range(2):
                e = -1 if d == 0 else 1
                r = m_half
                if inclusion:
                    tgt = pos[i] + e
                    for k in range(n):
                        if k != i and pos[k] == tgt:
                            r += 1.0
                rates[i][d] = r
                total += r
        dt = _draw_holding(rng, total)
        if t + dt >= T:
            break
        t += dt
        v = rng.random() * total
        sel = None
        for i in range(n):
            for d in range(2):
                if v < rates[i][d]:
                    sel = (i, -1 if d == 0 else 1, v)
                    break
                v -= rates[i][d]
            if sel is not None:
                break
        if sel is None:  # guard against terminal rounding
            sel = (n - 1, 1, rates[n - 1][1])
        i, e, within = sel
        src = pos[i]
        dst = src + e
        if dst < win.lo or dst > win.hi:
            raise WindowAbortError(
                f"particle {i} reached the window edge at t={t:.6g}"
            )
        pos[i] = dst
        if record:
            kind = (
                EventKind.RW_JUMP
                if (not inclusion or within < m_half)
                else EventKind.INCLUSION_JUMP
            )
            events.append(JumpEvent(t, kind, src, dst, i))
    init = LabeledPositions(tuple(positions))
    return Trajectory(init, tuple(events), T, LabeledPositions(tuple(pos)))


def _simulate_occupation_closed(initial: OccupationConfig, m, T, rng, record):
    """Occupation-field SIP on a ring or plain window (no reservoirs)."""
    sites = initial.sites
    counts = dict(initial.counts)
    m_half = 0.5 * m
    t = 0.0
    events = []
    site_list = list(sites.sites())
    while True:
        channels = []
        total = 0.0
        for i in site_list:
            ci = counts.get(i, 0)
            if ci == 0:
                continue
            for e in (-1, 1):
                j = sites.step(i, e)
                if j is None:
                    continue
                r_rw = ci * m_half
                r_inc = float(ci * counts.get(j, 0))
                channels.append((r_rw, EventKind.RW_JUMP, i, j))
                channels.append((r_inc, EventKind.INCLUSION_JUMP, i, j))
                total += r_rw + r_inc
        if total <= 0.0:
            break
        dt = _draw_holding(rng, total)
        if t + dt >= T:
            break
        t += dt
        v = rng.random() * total
        chosen = channels[-1]
        for ch in channels:
            if v < ch[0]:
                chosen = ch
                break
            v -= ch[0]
        _, kind, i, j = chosen
        counts[i] -= 1
        counts[j] = counts.get(j, 0) + 1
        if counts[i] == 0:
            del counts[i]
        if record:
            events.append(JumpEvent(t, kind, i, j))
    return Trajectory(
        initial, tuple(events), T, OccupationConfig(sites, counts)
    )


def simulate_sip(initial, m: float, T: float, rng, record: bool = True) -> Trajectory:
    """Exact SIP(m) sample path up to horizon T.

    Labeled input runs the n-particle process on an auto-sized window and
    raises WindowAbortError if a particle reaches the edge; an occupation
    configuration runs the occupation field on its own site range.
    """
    rng = as_generator(rng)
    if isinstance(initial, LabeledPositions):
        return _simulate_labeled(initial.positions, m, T, rng, True, record)
    if isinstance(initial, OccupationConfig):
        if initial.sites.kind is BoundaryKind.SEGMENT_WITH_RESERVOIRS:
            raise ValueError("use simulate_boundary_driven for reservoir segments")
        return _simulate_occupation_closed(initial, m, T, rng, record)
    raise TypeError("initial must be LabeledPositions or OccupationConfig")


def simulate_irw(initial: LabeledPositions, m: float, T: float, rng,
                 record: bool = True) -> Trajectory:
    """Independent rate-m/2-per-direction walkers."""
    rng = as_generator(rng)
    return _simulate_labeled(initial.positions, m, T, rng, False, record)


def simulate_boundary_driven(
    initial: OccupationConfig,
    res: ReservoirParams,
    m: float,
    T: float,
    rng,
    record: bool = True,
) -> Trajectory:
    """Open segment with particle exchange at both ends.

    Channel order matches the compiled segment loop: bulk site-major with
    left then right, then the four reservoir channels.
    """
    rng = as_generator(rng)
    sites = initial.sites
    if sites.kind is not BoundaryKind.SEGMENT_WITH_RESERVOIRS:
        raise ValueError("initial must live on a reservoir segment")
    first, last = sites.interior_lo, sites.interior_hi
    if any(not first <= s <= last for s in initial.counts):
        raise ValueError("initial mass must sit on interior sites")
    m_half = 0.5 * m
    counts = dict(initial.counts)
    t = 0.0
    events = []
    while True:
        channels = []
        total = 0.0
        for i in range(first, last + 1):
            ci = counts.get(i, 0)
            for j in (i - 1, i + 1):
                if not first <= j <= last:
                    continue
                r_rw = ci * m_half
                r_inc = float(ci * counts.get(j, 0))
                channels.append((r_rw, EventKind.RW_JUMP, i, j, 0))
                channels.append((r_inc, EventKind.INCLUSION_JUMP, i, j, 0))
                total += r_rw + r_inc
        c_first = counts.get(first, 0)
        c_last = counts.get(last, 0)
        boundary = [
            (res.alpha * (m_half + c_first), EventKind.RESERVOIR_BIRTH,
             sites.lo, first, 1),
            (res.gamma * c_first, EventKind.RESERVOIR_DEATH, first, sites.lo, -1),
            (res.sigma * (m_half + c_last), EventKind.RESERVOIR_BIRTH,
             sites.hi, last, 1),
            (res.beta * c_last, EventKind.RESERVOIR_DEATH, last, sites.hi, -1),
        ]
        for ch in boundary:
            channels.append(ch)
            total += ch[0]
        dt = _draw_holding(rng, total)
        if t + dt >= T:
            break
        t += dt
        v = rng.random() * total
        chosen = channels[-1]
        for ch in channels:
            if v < ch[0]:
                chosen = ch
                break
            v -= ch[0]
        _, kind, src, dst, delta = chosen
        if kind in (EventKind.RW_JUMP, EventKind.INCLUSION_JUMP):
            counts[src] -= 1
            if counts[src] == 0:
                del counts[src]
            counts[dst] = counts.get(dst, 0) + 1
        elif kind is EventKind.RESERVOIR_BIRTH:
            counts[dst] = counts.get(dst, 0) + 1
        else:
            counts[src] -= 1
            if counts[src] == 0:
                del counts[src]
        if record:
            events.append(JumpEvent(t, kind, src, dst))
    return Trajectory(initial, tuple(events), T, OccupationConfig(sites, counts))


@dataclass(frozen=True)
class DualAbsorptionResult:
    """Where each dual particle ended up, and how the run got there."""

    final: tuple[int, ...]
    absorption_time: float
    event_count: int
    trajectory: Trajectory | None = None

    def left_right_split(self, n_sites: int) -> tuple[int, int]:
        k = sum(1 for p in self.final if p == 0)
        l = sum(1 for p in self.final if p == n_sites + 1)
        return k, l


def simulate_dual_absorbing(
    initial: LabeledPositions,
    n_sites: int,
    m: float,
    rng,
    res: ReservoirParams | None = None,
    record: bool = False,
    event_cap: int = EVENT_CAP,
) -> DualAbsorptionResult:
    """Run the labeled dual on 1..N until every particle is absorbed.

    Canonical parameters (edge absorption rate m/2) when res is None.
    Particles already at 0 or N+1 stay put. Raises RuntimeError if the
    event cap is hit.
    """
    rng = as_generator(rng)
    N = n_sites
    m_half = 0.5 * m
    absorb_l = m_half if res is None else res.absorb_left
    absorb_r = m_half if res is None else res.absorb_right
    pos = list(initial.positions)
    for p in pos:
        if not 0 <= p <= N + 1:
            raise ValueError(f"dual position {p} outside 0..{N + 1}")
    n = len(pos)
    t = 0.0
    n_events = 0
    events = []
    rates = [[0.0, 0.0] for _ in range(n)]
    while True:
        total = 0.0
        for i in range(n):
            p = pos[i]
            if p < 1 or p > N:
                rates[i][0] = 0.0
                rates[i][1] = 0.0
                continue
            for d in range(2):
                tgt = p + (-1 if d == 0 else 1)
                if tgt == 0:
                    r = absorb_l
                elif tgt == N + 1:
                    r = absorb_r
                else:
                    r = m_half
                    for k in range(n):
                        if k != i and pos[k] == tgt:
                            r += 1.0
                rates[i][d] = r
                total += r
        if total <= 0.0:
            break
        t += _draw_holding(rng, total)
        v = rng.random() * total
        sel_i, sel_e = n - 1, 1
        found = False
        for i in range(n):
            for d in range(2):
                if v < rates[i][d]:
                    sel_i, sel_e = i, (-1 if d == 0 else 1)
                    found = True
                    break
                v -= rates[i][d]
            if found:
                break
        src = pos[sel_i]
        dst = src + sel_e
        pos[sel_i] = dst
        n_events += 1
        if record:
            kind = (
                EventKind.ABSORPTION
                if dst == 0 or dst == N + 1
                else EventKind.RW_JUMP
            )
            events.append(JumpEvent(t, kind, src, dst, sel_i))
        if n_events >= event_cap:
            raise RuntimeError(f"dual run exceeded the {event_cap}-event cap")
    traj = None
    if record:
        traj = Trajectory(initial, tuple(events), t, LabeledPositions(tuple(pos)))
    return DualAbsorptionResult(tuple(pos), t, n_events, traj)
