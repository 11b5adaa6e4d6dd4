"""Basic coupling of inclusion particles with independent walkers.

Each label carries a pair (Y_i, W_i) started at the same site. Shared
clocks of rate m/2 per direction move both members of a pair together;
attraction clocks move Y_i alone, so Y is a labeled inclusion process, W
is a set of free walkers, and the discrepancy Y_i - W_i changes only at
attraction events. The diagnostics exported here (adjacency occupation
times, drift integrals, quadratic-variation clocks) are what the scaling
experiments and the martingale tests consume.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import coupled_kernel, z_chain_kernel
from .dynamics import EventKind, JumpEvent, Trajectory, _draw_holding
from .lattice import LabeledPositions, WindowAbortError, window_for
from .rngs import EstimateWithError, RngStream, as_generator, replica_map

# The difference of two coupled inclusion particles steps off +-1 toward 0
# at this extra rate; 1.0 reproduces the plain written form of the chain.
DEFAULT_ORIGIN_PULL = 2.0


@dataclass(frozen=True)
class CoupledState:
    sip: LabeledPositions
    irw: LabeledPositions

    def __post_init__(self):
        if self.sip.n != self.irw.n:
            raise ValueError("coupled halves must have the same particle count")

    @property
    def n(self) -> int:
        return self.sip.n

    def discrepancies(self) -> tuple[int, ...]:
        return tuple(
            y - w for y, w in zip(self.sip.positions, self.irw.positions)
        )


@dataclass(frozen=True)
class CoupledChannel:
    """One Poisson clock of the coupled process."""

    label: int
    step: int
    joint: bool
    rate: float


def coupled_rates(state: CoupledState, m: float) -> list[CoupledChannel]:
    """Active clocks: joint pair moves at m/2, plus nonzero attraction moves."""
    y = state.sip.positions
    out = []
    for i in range(state.n):
        for e in (-1, 1):
            out.append(CoupledChannel(i, e, True, 0.5 * m))
    for i in range(state.n):
        for e in (-1, 1):
            cnt = sum(1 for p in y if p == y[i] + e)
            if cnt > 0:
                out.append(CoupledChannel(i, e, False, float(cnt)))
    return out


@dataclass(frozen=True)
class CouplingDiagnostics:
    """Path functionals of one coupled run, integrated exactly.

    additive[i, k] is the drift integral of sign(Y_k - Y_i) over times the
    pair (i, k) is adjacent; quad_var[i] is its absolute-value companion,
    the quadratic-variation clock of the compensated discrepancy.
    """

    horizon: float
    sq_discrepancy: tuple[float, ...]
    occ_delta: float
    occ_binary: float
    additive: np.ndarray
    quad_var: np.ndarray
    events: int

    @property
    def occ_nonbinary(self) -> float:
        return self.occ_delta - self.occ_binary


def collision_time_report(diag: CouplingDiagnostics, T: float | None = None) -> dict:
    horizon = diag.horizon if T is None else T
    return {
        "frac_delta": diag.occ_delta / horizon,
        "frac_nonbinary": diag.occ_nonbinary / horizon,
    }


def _coupling_python(start, m, T, rng):
    """Recording twin of the compiled loop, same draw order, same floats."""
    n = start.n
    win = window_for(start.positions, m, T)
    m_half = 0.5 * m
    y = list(start.positions)
    w = list(start.positions)
    A = np.zeros((n, n))
    qv = np.zeros(n)
    occ_delta = 0.0
    occ_binary = 0.0
    rates = [[0.0, 0.0] for _ in range(n)]
    t = 0.0
    events = []
    while True:
        total_sip = 0.0
        for i in range(n):
            for d in range(2):
                e = -1 if d == 0 else 1
                tgt = y[i] + e
                cnt = 0.0
                for k in range(n):
                    if y[k] == tgt:
                        cnt += 1.0
                rates[i][d] = cnt
                total_sip += cnt
        total = 2.0 * n * m_half + total_sip
        dt = _draw_holding(rng, total)
        seg = dt if t + dt < T else T - t
        adj = 0
        clean = True
        for a in range(n):
            for b in range(a + 1, n):
                dz = abs(y[b] - y[a])
                if dz == 1:
                    adj += 1
                elif dz < 2:
                    clean = False
        if adj > 0:
            occ_delta += seg
            if adj == 1 and clean:
                occ_binary += seg
        for i in range(n):
            for k in range(n):
                dz = y[k] - y[i]
                if dz == 1:
                    A[i, k] += seg
                    qv[i] += seg
                elif dz == -1:
                    A[i, k] -= seg
                    qv[i] += seg
        if t + dt >= T:
            break
        t += dt
        v = rng.random() * total
        if v < 2.0 * n * m_half:
            lab = int(v // (2.0 * m_half))
            if lab >= n:
                lab = n - 1
            rem = v - lab * 2.0 * m_half
            e = -1 if rem < m_half else 1
            ny = y[lab] + e
            nw = w[lab] + e
            if ny < win.lo or ny > win.hi or nw < win.lo or nw > win.hi:
                raise WindowAbortError(f"coupled pair {lab} hit the window edge")
            events.append(JumpEvent(t, EventKind.RW_JUMP, y[lab], ny, lab))
            y[lab] = ny
            w[lab] = nw
        else:
            v -= 2.0 * n * m_half
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
            ny = y[sel_i] + sel_e
            if ny < win.lo or ny > win.hi:
                raise WindowAbortError(f"particle {sel_i} hit the window edge")
            events.append(JumpEvent(t, EventKind.INCLUSION_JUMP, y[sel_i], ny, sel_i))
            y[sel_i] = ny
    state = CoupledState(LabeledPositions(tuple(y)), LabeledPositions(tuple(w)))
    diag = CouplingDiagnostics(
        horizon=T,
        sq_discrepancy=tuple(float((a - b) ** 2) for a, b in zip(y, w)),
        occ_delta=occ_delta,
        occ_binary=occ_binary,
        additive=A,
        quad_var=qv,
        events=len(events),
    )
    return state, diag, tuple(events)


def simulate_coupling(
    start: LabeledPositions, m: float, T: float, rng, record: bool = False
):
    """Exact coupled run over [0, T] from Y(0) = W(0) = start.

    Returns (CoupledState, CouplingDiagnostics); with record=True the
    diagnostics come from the recording twin and the SIP-side event log is
    attached as a third return value.
    """
    rng = as_generator(rng)
    if start.n == 0:
        raise ValueError("need at least one particle")
    if record:
        return _coupling_python(start, m, T, rng)
    win = window_for(start.positions, m, T)
    y = start.array()
    w = start.array()
    n = start.n
    A = np.zeros((n, n))
    qv = np.zeros(n)
    occ_delta, occ_binary, events, aborted = coupled_kernel(
        y, w, 0.5 * m, win.lo, win.hi, T, rng, A, qv
    )
    if aborted:
        raise WindowAbortError("coupled run hit the window edge")
    state = CoupledState(
        LabeledPositions(tuple(int(p) for p in y)),
        LabeledPositions(tuple(int(p) for p in w)),
    )
    diag = CouplingDiagnostics(
        horizon=T,
        sq_discrepancy=tuple(float(d * d) for d in (y - w)),
        occ_delta=float(occ_delta),
        occ_binary=float(occ_binary),
        additive=A,
        quad_var=qv,
        events=int(events),
    )
    return state, diag


def simulate_z_chain(
    z0: int,
    m: float,
    T: float,
    rng,
    origin_pull: float = DEFAULT_ORIGIN_PULL,
) -> Trajectory:
    """Recorded difference walk: rate m both ways, extra pull from +-1 to 0."""
    rng = as_generator(rng)
    z = int(z0)
    t = 0.0
    events = []
    while True:
        r_left = float(m)
        r_right = float(m)
        if z == 1:
            r_left += origin_pull
        elif z == -1:
            r_right += origin_pull
        total = r_left + r_right
        dt = _draw_holding(rng, total)
        if t + dt >= T:
            break
        t += dt
        step = -1 if rng.random() * total < r_left else 1
        events.append(JumpEvent(t, EventKind.RW_JUMP, z, z + step))
        z += step
    return Trajectory(int(z0), tuple(events), T, z)


def z_chain_scaling(
    m: float,
    T_list,
    replicas: int,
    stream: RngStream,
    origin_pull: float = DEFAULT_ORIGIN_PULL,
    z0: int = 0,
    threads: int = 1,
):
    """Occupation of {-1,+1} and A(T)^2/T estimates across horizons.

    Returns rows (T, occupation estimate, additive estimate); every
    horizon uses its own family of replica streams.
    """
    rows = []
    for ti, T in enumerate(T_list):
        def fn(r, gen, T=T):
            _, occ, a_int, _ = z_chain_kernel(
                np.int64(z0), float(m), float(origin_pull), float(T), gen
            )
            return occ, a_int * a_int / T

        out = replica_map(fn, replicas, stream.split(ti), threads=threads, width=2)
        rows.append(
            (
                T,
                EstimateWithError.from_samples(out[:, 0]),
                EstimateWithError.from_samples(out[:, 1]),
            )
        )
    return rows


def estimate_additive_functional(
    m: float,
    T: float,
    replicas: int,
    stream: RngStream,
    origin_pull: float = DEFAULT_ORIGIN_PULL,
    z0: int = 0,
    threads: int = 1,
) -> EstimateWithError:
    """E[A(T)^2]/T for the difference walk, A(t) = int 1{|z|=1} z ds."""
    if replicas < 2:
        raise ValueError("need at least two replicas for a standard error")
    (_, _, est) = z_chain_scaling(
        m, [T], replicas, stream, origin_pull=origin_pull, z0=z0, threads=threads
    )[0]
    return est


def discrepancy_scaling(
    start: LabeledPositions,
    m: float,
    T_list,
    replicas: int,
    stream: RngStream,
    threads: int = 1,
):
    """Estimates of sum_i (Y_i - W_i)^2 / T at each horizon."""
    rows = []
    for ti, T in enumerate(T_list):
        win = window_for(start.positions, m, T)
        y0 = start.array()
        n = start.n

        def fn(r, gen, T=T, win=win, y0=y0, n=n):
            y = y0.copy()
            w = y0.copy()
            A = np.zeros((n, n))
            qv = np.zeros(n)
            _, _, _, aborted = coupled_kernel(
                y, w, 0.5 * m, win.lo, win.hi, float(T), gen, A, qv
            )
            if aborted:
                raise WindowAbortError("coupled replica hit the window edge")
            d = y - w
            return float(d.dot(d)) / T

        samples = replica_map(fn, replicas, stream.split(ti), threads=threads)
        rows.append((T, EstimateWithError.from_samples(samples)))
    return rows


def collision_occupation_scaling(
    start: LabeledPositions,
    m: float,
    T_list,
    replicas: int,
    stream: RngStream,
    threads: int = 1,
):
    """Occupation times of the adjacency sets across horizons.

    Returns rows (T, occupation(some pair adjacent), occupation(adjacent
    but not a clean binary collision)); raw times, not fractions.
    """
    rows = []
    for ti, T in enumerate(T_list):
        win = window_for(start.positions, m, T)
        y0 = start.array()
        n = start.n

        def fn(r, gen, T=T, win=win, y0=y0, n=n):
            y = y0.copy()
            w = y0.copy()
            A = np.zeros((n, n))
            qv = np.zeros(n)
            occ_delta, occ_binary, _, aborted = coupled_kernel(
                y, w, 0.5 * m, win.lo, win.hi, float(T), gen, A, qv
            )
            if aborted:
                raise WindowAbortError("coupled replica hit the window edge")
            return occ_delta, occ_delta - occ_binary

        out = replica_map(fn, replicas, stream.split(ti), threads=threads, width=2)
        rows.append(
            (
                T,
                EstimateWithError.from_samples(out[:, 0]),
                EstimateWithError.from_samples(out[:, 1]),
            )
        )
    return rows
