"""Exact finite-state machinery: generators, duality residuals, solves.

Everything here is deterministic linear algebra on explicitly enumerated
state spaces. It provides the ground truth that the Monte Carlo layers are
tested against: generator-level duality residuals, absorption probabilities,
stationary laws, and transient expectations via uniformization.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu, spsolve

from .lattice import (
    LabeledPositions,
    OccupationConfig,
    SiteRange,
    ring,
    segment,
)
from .measures import (
    ConvergenceError,
    ReservoirParams,
    boundary_duality_fn,
    duality_fn,
    duality_poly_table,
)

TRANSIENT_TOL = 1e-9


def enumerate_occupations(n_sites: int, total: int) -> np.ndarray:
    """All occupation vectors of n_sites sites with the given particle total.

    Rows are ordered lexicographically, which fixes the state indexing used
    everywhere else.
    """
    if n_sites < 1 or total < 0:
        raise ValueError("need n_sites >= 1 and total >= 0")
    rows = []

    def rec(prefix, remaining, parts):
        if parts == 1:
            rows.append(prefix + [remaining])
            return
        for first in range(remaining + 1):
            rec(prefix + [first], remaining - first, parts - 1)

    rec([], total, n_sites)
    return np.array(rows, dtype=np.int64)


class StateIndex:
    """Bijection between configuration rows and dense state indices."""

    def __init__(self, configs: np.ndarray, lo: int = 0):
        self.configs = np.asarray(configs, dtype=np.int64)
        self.lo = lo
        self._lookup = {tuple(map(int, row)): i for i, row in enumerate(self.configs)}

    @property
    def size(self) -> int:
        return self.configs.shape[0]

    def index_of(self, config) -> int:
        if isinstance(config, OccupationConfig):
            key = tuple(int(c) for c in config.to_dense())
        else:
            key = tuple(int(c) for c in config)
        try:
            return self._lookup[key]
        except KeyError:
            raise KeyError(f"configuration {key} not in this state space") from None

    def config(self, i: int) -> np.ndarray:
        return self.configs[i].copy()


def _to_csr(n: int, rows, cols, vals) -> sp.csr_matrix:
    off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()


def _build_sip_ring(n_sites: int, n_particles: int, m: float):
    half = 0.5 * m
    idx = StateIndex(enumerate_occupations(n_sites, n_particles))
    rows, cols, vals = [], [], []
    for s in range(idx.size):
        c = idx.configs[s]
        for i in range(n_sites):
            if c[i] == 0:
                continue
            for j in ((i - 1) % n_sites, (i + 1) % n_sites):
                rate = c[i] * (half + c[j])
                t = c.copy()
                t[i] -= 1
                t[j] += 1
                rows.append(s)
                cols.append(idx.index_of(t))
                vals.append(rate)
    return _to_csr(idx.size, rows, cols, vals), idx


def _build_segment_reservoirs(
    n_sites: int, res: ReservoirParams, m: float, occupancy_cap: int
):
    """Interior sites 1..N with reservoir birth/death at both ends.

    Occupancies are truncated at occupancy_cap: birth or bulk moves that
    would exceed the cap are dropped (reflecting truncation), which is an
    approximation flagged to callers through the cap-doubling driver below.
    """
    half = 0.5 * m
    N = n_sites
    cap = occupancy_cap
    configs = np.array(
        list(itertools.product(range(cap + 1), repeat=N)), dtype=np.int64
    )
    idx = StateIndex(configs, lo=1)
    rows, cols, vals = [], [], []

    def add(s, t, rate):
        rows.append(s)
        cols.append(idx.index_of(t))
        vals.append(rate)

    for s in range(idx.size):
        c = idx.configs[s]
        if c[0] < cap:
            t = c.copy()
            t[0] += 1
            add(s, t, res.alpha * (half + c[0]))
        if c[0] > 0:
            t = c.copy()
            t[0] -= 1
            add(s, t, res.gamma * c[0])
        if c[N - 1] < cap:
            t = c.copy()
            t[N - 1] += 1
            add(s, t, res.sigma * (half + c[N - 1]))
        if c[N - 1] > 0:
            t = c.copy()
            t[N - 1] -= 1
            add(s, t, res.beta * c[N - 1])
        for i in range(N - 1):
            for a, b in ((i, i + 1), (i + 1, i)):
                if c[a] > 0 and c[b] < cap:
                    t = c.copy()
                    t[a] -= 1
                    t[b] += 1
                    add(s, t, c[a] * (half + c[b]))
    return _to_csr(idx.size, rows, cols, vals), idx


def _build_dual_absorbing(
    n_sites: int, n_particles: int, m: float, res: ReservoirParams | None
):
    """Dual particles on 0..N+1; 0 and N+1 absorb and stay put."""
    half = 0.5 * m
    N = n_sites
    absorb_l = half if res is None else res.absorb_left
    absorb_r = half if res is None else res.absorb_right
    idx = StateIndex(enumerate_occupations(N + 2, n_particles))
    rows, cols, vals = [], [], []
    for s in range(idx.size):
        c = idx.configs[s]
        for i in range(1, N + 1):
            if c[i] == 0:
                continue
            for j in (i - 1, i + 1):
                if 1 <= j <= N:
                    rate = c[i] * (half + c[j])
                elif j == 0:
                    rate = absorb_l * c[i]
                else:
                    rate = absorb_r * c[i]
                t = c.copy()
                t[i] -= 1
                t[j] += 1
                rows.append(s)
                cols.append(idx.index_of(t))
                vals.append(rate)
    return _to_csr(idx.size, rows, cols, vals), idx


class TupleIndex:
    """Dense indexing of labeled position tuples in {0..base-1}^length."""

    def __init__(self, base: int, length: int):
        self.base = base
        self.length = length

    @property
    def size(self) -> int:
        return self.base**self.length

    def index_of(self, tup) -> int:
        out = 0
        for p in tup:
            p = int(p)
            if not 0 <= p < self.base:
                raise KeyError(f"position {p} outside 0..{self.base - 1}")
            out = out * self.base + p
        return out

    def config(self, i: int) -> tuple:
        out = []
        for _ in range(self.length):
            out.append(i % self.base)
            i //= self.base
        return tuple(reversed(out))


def _build_labeled_ring(ring_size: int, n_particles: int, m: float, inclusion: bool):
    half = 0.5 * m
    L = ring_size
    idx = TupleIndex(L, n_particles)
    rows, cols, vals = [], [], []
    for s in range(idx.size):
        pos = idx.config(s)
        for i in range(n_particles):
            for e in (-1, 1):
                target = (pos[i] + e) % L
                rate = half
                if inclusion:
                    rate += sum(1 for k in range(n_particles) if k != i and pos[k] == target)
                t = list(pos)
                t[i] = target
                rows.append(s)
                cols.append(idx.index_of(t))
                vals.append(rate)
    return _to_csr(idx.size, rows, cols, vals), idx


def _build_coupled_ring(ring_size: int, n_particles: int, m: float):
    """Joint generator of the paired processes on a ring.

    State is (y_1..y_n, w_1..w_n). Walk moves are performed by both copies
    of a label at rate m/2 per direction; inclusion moves are performed by
    the y copy alone at rate equal to the number of y particles sitting on
    the target site.
    """
    half = 0.5 * m
    L = ring_size
    n = n_particles
    idx = TupleIndex(L, 2 * n)
    rows, cols, vals = [], [], []
    for s in range(idx.size):
        state = idx.config(s)
        y = state[:n]
        w = state[n:]
        for i in range(n):
            for e in (-1, 1):
                t = list(state)
                t[i] = (y[i] + e) % L
                t[n + i] = (w[i] + e) % L
                rows.append(s)
                cols.append(idx.index_of(t))
                vals.append(half)
                target = (y[i] + e) % L
                pull = sum(1 for k in range(n) if k != i and y[k] == target)
                if pull > 0:
                    t2 = list(state)
                    t2[i] = target
                    rows.append(s)
                    cols.append(idx.index_of(t2))
                    vals.append(float(pull))
    return _to_csr(idx.size, rows, cols, vals), idx


def build_generator(model: str, **kw):
    """Rate matrix and state index for one of the finite model families.

    model is one of 'sip_ring', 'sip_segment_reservoirs', 'dual_absorbing',
    'coupled', 'irw', 'sip_labeled_ring'. Rows sum to zero.
    """
    builders = {
        "sip_ring": lambda: _build_sip_ring(kw["n_sites"], kw["n_particles"], kw["m"]),
        "sip_segment_reservoirs": lambda: _build_segment_reservoirs(
            kw["n_sites"], kw["res"], kw["m"], kw["occupancy_cap"]
        ),
        "dual_absorbing": lambda: _build_dual_absorbing(
            kw["n_sites"], kw["n_particles"], kw["m"], kw.get("res")
        ),
        "coupled": lambda: _build_coupled_ring(kw["ring_size"], kw["n_particles"], kw["m"]),
        "irw": lambda: _build_labeled_ring(
            kw["ring_size"], kw["n_particles"], kw["m"], inclusion=False
        ),
        "sip_labeled_ring": lambda: _build_labeled_ring(
            kw["ring_size"], kw["n_particles"], kw["m"], inclusion=True
        ),
    }
    try:
        builder = builders[model]
    except KeyError:
        raise ValueError(f"unknown model '{model}'") from None
    return builder()


def collapse_marginal(Q, idx: TupleIndex, coords: tuple[int, ...]):
    """Aggregate a labeled product-space generator onto a coordinate block.

    Sums rates over transitions of the dropped coordinates for each fixed
    source state; returns a dict mapping (source_full_state) ->
    {target_subtuple: rate}. Used to verify that each side of the pairing
    moves with its own marginal law.
    """
    Q = Q.tocoo()
    out: dict[tuple, dict[tuple, float]] = {}
    for s, t, v in zip(Q.row, Q.col, Q.data):
        if s == t or v == 0.0:
            continue
        src = idx.config(s)
        dst = idx.config(t)
        sub_src = tuple(src[c] for c in coords)
        sub_dst = tuple(dst[c] for c in coords)
        if sub_src == sub_dst:
            continue
        out.setdefault(src, {})
        out[src][sub_dst] = out[src].get(sub_dst, 0.0) + float(v)
    return out


# ---------------------------------------------------------------------------
# Duality residuals
# ---------------------------------------------------------------------------

def _ordered_neighbor_pairs(sites: SiteRange):
    for i in sites.sites():
        for j in sites.neighbors(i):
            yield i, j


def _moved(config: OccupationConfig, i: int, j: int) -> OccupationConfig:
    counts = dict(config.counts)
    counts[i] = counts.get(i, 0) - 1
    counts[j] = counts.get(j, 0) + 1
    return OccupationConfig(config.sites, counts)


def intertwining_check(xi: OccupationConfig, eta: OccupationConfig, m: float) -> float:
    """Generator-level self-duality residual on a closed finite graph.

    Applies the process generator to the duality function in the bulk slot
    and in the dual slot and returns the absolute difference. Zero (to
    rounding) for every pair of configurations.
    """
    half = 0.5 * m
    base = duality_fn(xi, eta, m)
    lhs = 0.0
    rhs = 0.0
    for i, j in _ordered_neighbor_pairs(eta.sites):
        ci = eta.count(i)
        if ci > 0:
            rate = ci * (half + eta.count(j))
            lhs += rate * (duality_fn(xi, _moved(eta, i, j), m) - base)
        ki = xi.count(i)
        if ki > 0:
            rate = ki * (half + xi.count(j))
            rhs += rate * (duality_fn(_moved(xi, i, j), eta, m) - base)
    return abs(lhs - rhs)


def max_intertwining_residual(
    n_sites: int, max_dual_total: int, max_occ: int, m: float
) -> float:
    """Exhaustive self-duality residual scan on a ring, vectorized.

    Covers every dual configuration with at most max_dual_total particles
    against every bulk configuration with per-site occupancy at most
    max_occ, for all ordered neighbor pairs of the ring.
    """
    L = n_sites
    half = 0.5 * m
    X = np.vstack([enumerate_occupations(L, j) for j in range(max_dual_total + 1)])
    E = np.array(list(itertools.product(range(max_occ + 1), repeat=L)), dtype=np.int64)
    # Bulk occupancies reach max_occ + 1 after a move and dual site counts
    # reach max_dual_total + 1 in dropped (rate zero) branches of the gather.
    dt = duality_poly_table(max_dual_total + 1, max_occ + 1, m)
    F = dt[X[:, None, :], E[None, :, :]]  # (nx, ne, L) per-site factors
    D = F.prod(axis=2)
    lhs = np.zeros_like(D)
    rhs = np.zeros_like(D)
    pairs = [(i, (i + 1) % L) for i in range(L)] + [(i, (i - 1) % L) for i in range(L)]
    for i, j in pairs:
        mask = np.ones(L, dtype=bool)
        mask[i] = False
        mask[j] = False
        P = F[:, :, mask].prod(axis=2)
        ei, ej = E[:, i], E[:, j]
        xi_, xj = X[:, i], X[:, j]
        rate_e = ei * (half + ej)
        d_i = dt[xi_[:, None], np.maximum(ei - 1, 0)[None, :]]
        d_j = dt[xj[:, None], (ej + 1)[None, :]]
        lhs += rate_e[None, :] * (P * d_i * d_j - D)
        rate_x = xi_ * (half + xj)
        dx_i = dt[np.maximum(xi_ - 1, 0)[:, None], ei[None, :]]
        dx_j = dt[(xj + 1)[:, None], ej[None, :]]
        rhs += rate_x[:, None] * (P * dx_i * dx_j - D)
    return float(np.abs(lhs - rhs).max())


def boundary_intertwining_check(
    xi: OccupationConfig,
    eta: OccupationConfig,
    res: ReservoirParams,
    m: float,
) -> float:
    """Duality residual for the open segment with reservoirs.

    The bulk side applies birth, death, and bulk moves to the boundary
    duality function; the dual side applies bulk moves plus one-way
    absorption into the end slots. Valid for any nonnegative rates with
    gamma > alpha and beta > sigma, canonical or not.
    """
    sites = xi.sites
    half = 0.5 * m
    lo, hi = sites.lo, sites.hi
    first, last = sites.interior_lo, sites.interior_hi
    base = boundary_duality_fn(xi, eta, res, m)

    def grown(cfg: OccupationConfig, site: int) -> OccupationConfig:
        counts = dict(cfg.counts)
        counts[site] = counts.get(site, 0) + 1
        return OccupationConfig(cfg.sites, counts)

    e1 = eta.count(first)
    eN = eta.count(last)
    lhs = 0.0
    # Death removes the particle entirely rather than parking it on the
    # reservoir slot, so the moved configuration is rebuilt by hand.
    moves = []
    moves.append((res.alpha * (half + e1), grown(eta, first)))
    if e1 > 0:
        shrunk = dict(eta.counts)
        shrunk[first] -= 1
        moves.append((res.gamma * e1, OccupationConfig(sites, shrunk)))
    moves.append((res.sigma * (half + eN), grown(eta, last)))
    if eN > 0:
        shrunk = dict(eta.counts)
        shrunk[last] -= 1
        moves.append((res.beta * eN, OccupationConfig(sites, shrunk)))
    for i in range(first, last):
        for a, b in ((i, i + 1), (i + 1, i)):
            ca = eta.count(a)
            if ca > 0:
                moves.append((ca * (half + eta.count(b)), _moved(eta, a, b)))
    for rate, moved_eta in moves:
        if rate > 0:
            lhs += rate * (boundary_duality_fn(xi, moved_eta, res, m) - base)

    rhs = 0.0
    k1 = xi.count(first)
    kN = xi.count(last)
    if k1 > 0:
        rhs += res.absorb_left * k1 * (
            boundary_duality_fn(_moved(xi, first, lo), eta, res, m) - base
        )
    if kN > 0:
        rhs += res.absorb_right * kN * (
            boundary_duality_fn(_moved(xi, last, hi), eta, res, m) - base
        )
    for i in range(first, last):
        for a, b in ((i, i + 1), (i + 1, i)):
            ka = xi.count(a)
            if ka > 0:
                rate = ka * (half + xi.count(b))
                rhs += rate * (boundary_duality_fn(_moved(xi, a, b), eta, res, m) - base)
    return abs(lhs - rhs)


def max_boundary_intertwining_residual(
    n_sites: int,
    max_dual_total: int,
    max_occ: int,
    res: ReservoirParams,
    m: float,
) -> float:
    """Exhaustive residual over all small segment configurations."""
    sites = segment(n_sites)
    duals = np.vstack(
        [enumerate_occupations(n_sites + 2, j) for j in range(max_dual_total + 1)]
    )
    worst = 0.0
    for xi_row in duals:
        xi = OccupationConfig.from_dense(xi_row, sites)
        for eta_tuple in itertools.product(range(max_occ + 1), repeat=n_sites):
            eta = OccupationConfig(
                sites, {i + 1: c for i, c in enumerate(eta_tuple) if c}
            )
            worst = max(worst, boundary_intertwining_check(xi, eta, res, m))
    return worst


# ---------------------------------------------------------------------------
# Absorption and stationary solves
# ---------------------------------------------------------------------------

def absorption_solve_single(
    n_sites: int, m: float, res: ReservoirParams | None = None
) -> np.ndarray:
    """Right-absorption probabilities of a lone dual particle.

    Returns h indexed by site 0..N+1 with h[0] = 0 and h[N+1] = 1; interior
    values solve the harmonic (tridiagonal) system of the dual walk. Under
    canonical rates h[i] = i / (N+1) exactly.
    """
    N = n_sites
    half = 0.5 * m
    left = np.full(N, half)
    right = np.full(N, half)
    if res is not None:
        left[0] = res.absorb_left
        right[-1] = res.absorb_right
    else:
        left[0] = half
        right[-1] = half
    # Rows i = 1..N: (l_i + r_i) h_i - l_i h_{i-1} - r_i h_{i+1} = 0,
    # boundary values folded into the right-hand side.
    ab = np.zeros((3, N))
    ab[1, :] = left + right
    ab[0, 1:] = -right[:-1]  # superdiagonal
    ab[2, :-1] = -left[1:]  # subdiagonal
    b = np.zeros(N)
    b[-1] = right[-1] * 1.0
    h = solve_banded((1, 1), ab, b)
    return np.concatenate(([0.0], h, [1.0]))


def _dual_start_vector(start, n_sites: int) -> np.ndarray:
    if isinstance(start, LabeledPositions):
        vec = np.zeros(n_sites + 2, dtype=np.int64)
        for p in start.positions:
            if not 1 <= p <= n_sites:
                raise ValueError(f"dual start site {p} outside 1..{n_sites}")
            vec[p] += 1
        return vec
    if isinstance(start, OccupationConfig):
        return start.to_dense()
    vec = np.zeros(n_sites + 2, dtype=np.int64)
    for p in start:
        vec[int(p)] += 1
    return vec


def dual_absorption_solve(
    start, n_sites: int, m: float, res: ReservoirParams | None = None
) -> dict[tuple[int, int], float]:
    """Exact law of the final absorbed split (left count, right count).

    start gives the dual particle positions on 1..N (labeled positions,
    an occupation configuration on the segment, or an iterable of sites).
    Solved by one sparse LU factorization of the transient block.
    """
    vec = _dual_start_vector(start, n_sites)
    n = int(vec.sum())
    Q, idx = build_generator(
        "dual_absorbing", n_sites=n_sites, n_particles=n, m=m, res=res
    )
    interior = idx.configs[:, 1 : n_sites + 1].sum(axis=1)
    transient = np.where(interior > 0)[0]
    absorbing = np.where(interior == 0)[0]
    if vec[1 : n_sites + 1].sum() == 0:
        return {(int(vec[0]), int(vec[-1])): 1.0}
    tpos = {s: i for i, s in enumerate(transient)}
    Qc = Q.tocsc()
    QTT = Qc[transient][:, transient]
    R = Qc[transient][:, absorbing].toarray()
    phi = splu((-QTT).tocsc()).solve(R)
    row = phi[tpos[idx.index_of(vec)]]
    out = {}
    for p, s in zip(row, absorbing):
        c = idx.configs[s]
        out[(int(c[0]), int(c[-1]))] = float(p)
    return out


def labeled_dual_absorption_solve(
    start: tuple[int, ...], n_sites: int, m: float, res: ReservoirParams | None = None
) -> dict[tuple[int, ...], float]:
    """Joint absorption law with labels kept distinct.

    Returns probabilities over tuples of final sites, each 0 or N+1. The
    dual dynamics treats absorbed particles as frozen and non-interacting.
    """
    half = 0.5 * m
    N = n_sites
    absorb_l = half if res is None else res.absorb_left
    absorb_r = half if res is None else res.absorb_right
    n = len(start)
    idx = TupleIndex(N + 2, n)
    rows, cols, vals = [], [], []
    live = []
    for s in range(idx.size):
        pos = idx.config(s)
        interior = [p for p in pos if 1 <= p <= N]
        if interior:
            live.append(s)
        for i in range(n):
            p = pos[i]
            if not 1 <= p <= N:
                continue
            for e in (-1, 1):
                target = p + e
                if 1 <= target <= N:
                    rate = half + sum(
                        1
                        for k in range(n)
                        if k != i and pos[k] == target
                    )
                elif target == 0:
                    rate = absorb_l
                else:
                    rate = absorb_r
                t = list(pos)
                t[i] = target
                rows.append(s)
                cols.append(idx.index_of(t))
                vals.append(float(rate))
    Q = _to_csr(idx.size, rows, cols, vals)
    for p in start:
        if not 1 <= p <= N:
            raise ValueError(f"dual start site {p} outside 1..{N}")
    live = np.array(live, dtype=np.int64)
    livepos = {s: i for i, s in enumerate(live)}
    dead_mask = np.ones(idx.size, dtype=bool)
    dead_mask[live] = False
    dead = np.where(dead_mask)[0]
    Qc = Q.tocsc()
    QTT = Qc[live][:, live]
    R = Qc[live][:, dead].toarray()
    phi = splu((-QTT).tocsc()).solve(R)
    row = phi[livepos[idx.index_of(start)]]
    out = {}
    for p, s in zip(row, dead):
        if p > 0:
            out[idx.config(s)] = float(p)
    return out


def stationary_solve(Q) -> np.ndarray:
    """Stationary law pi of an irreducible conservative rate matrix.

    Solves pi Q = 0 with sum(pi) = 1 by replacing one balance equation with
    the normalization; raises if the rate graph is not strongly connected.
    """
    n = Q.shape[0]
    structure = (sp.csr_matrix(Q) != 0).astype(np.int8)
    ncomp, _ = connected_components(structure, directed=True, connection="strong")
    if ncomp != 1:
        raise ValueError("rate matrix is reducible; no unique stationary law")
    M = sp.csr_matrix(Q).T.tolil()
    M[0, :] = 1.0
    b = np.zeros(n)
    b[0] = 1.0
    pi = spsolve(M.tocsc(), b)
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    return pi


def transient_expectation(
    Q, f, t: float, start=None, tol: float = TRANSIENT_TOL
):
    """E[f(X_t)] for the finite chain with generator Q, by uniformization.

    The Poisson series is truncated with a rigorous sup-norm tail bound of
    tol; long horizons are split into segments so the Poisson weights stay
    representable. Returns the full vector of expectations over start
    states, or the single entry when start (a state index) is given.
    """
    f = np.asarray(f, dtype=np.float64)
    n = Q.shape[0]
    if f.shape != (n,):
        raise ValueError("observable must have one value per state")
    if t < 0:
        raise ValueError("time must be nonnegative")
    rate = float(np.max(-Q.diagonal())) if n else 0.0
    v = f.copy()
    if t == 0.0 or rate == 0.0:
        return v if start is None else float(v[start])
    n_seg = max(1, int(math.ceil(rate * t / 200.0)))
    tau = t / n_seg
    P = sp.eye(n, format="csr") + sp.csr_matrix(Q) / rate
    fbound = float(np.max(np.abs(f))) or 1.0
    seg_tol = tol / n_seg
    kmax = int(rate * tau + 50.0 * math.sqrt(rate * tau + 1.0) + 200.0)
    for _ in range(n_seg):
        w = math.exp(-rate * tau)
        cumw = w
        term = v
        acc = w * term
        k = 0
        while (1.0 - cumw) * fbound > seg_tol:
            k += 1
            if k > kmax:
                raise ConvergenceError("uniformization series failed to converge")
            term = P @ term
            w *= rate * tau / k
            cumw += w
            acc = acc + w * term
        v = acc
    return v if start is None else float(v[start])


def boundary_stationary_profile(
    n_sites: int,
    res: ReservoirParams,
    m: float,
    tol: float = 1e-6,
    cap_start: int = 8,
    cap_max: int = 512,
):
    """Stationary density profile of the truncated open segment.

    Doubles the occupancy cap until every reported observable moves by less
    than tol, then returns (profile, cap). The profile is in dual-moment
    units, mean occupation divided by m/2.
    """
    half = 0.5 * m
    cap = cap_start
    prev = None
    while cap <= cap_max:
        Q, idx = build_generator(
            "sip_segment_reservoirs", n_sites=n_sites, res=res, m=m, occupancy_cap=cap
        )
        pi = stationary_solve(Q)
        profile = (pi[:, None] * idx.configs).sum(axis=0) / half
        if prev is not None and np.max(np.abs(profile - prev)) < tol:
            return profile, cap
        prev = profile
        cap *= 2
    raise ConvergenceError(
        f"occupancy cap {cap_max} reached without stabilizing the profile"
    )
