"""Boundary-driven steady-state experiments on the open segment.

Two independent routes to the same stationary quantities: absorbing dual
particles read against the boundary densities, and long-run time averages
of the driven occupation chain itself. Estimates are reported in
dual-scale density units, i.e. site means divided by m/2, so the linear
profile runs from rho_left to rho_right with no extra normalization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import (
    EVENT_CAP,
    absorbing_coupled_kernel,
    dual_absorbing_kernel,
    occupation_kernel,
)
from .measures import ReservoirParams
from .rngs import EstimateWithError, RngStream, replica_map

DIRECT_BATCHES = 20
FACTOR_BATCHES = 50


@dataclass(frozen=True)
class NesExperiment:
    """One steady-state run of the boundary-driven segment."""

    N: int
    rho_left: float
    rho_right: float
    m: float
    points: tuple[float, ...]
    replicas: int
    mode: str = "dual_mc"

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.m <= 0:
            raise ValueError("m must be positive")
        if self.rho_left < 0 or self.rho_right < 0:
            raise ValueError("boundary densities must be nonnegative")
        if self.mode not in ("dual_mc", "direct_stationary"):
            raise ValueError(f"unknown mode '{self.mode}'")
        if any(not 0.0 <= x <= 1.0 for x in self.points):
            raise ValueError("macro points must lie in [0, 1]")
        if self.replicas < 2:
            raise ValueError("need at least two replicas")

    def sites(self) -> tuple[int, ...]:
        return tuple(math.floor(x * self.N) for x in self.points)


def _boundary_density(pos: np.ndarray, n_sites: int,
                      rho_left: float, rho_right: float) -> float:
    val = 1.0
    for p in pos:
        val *= rho_left if p == 0 else rho_right
    return val


def nes_correlation_dual(
    sites,
    n_sites: int,
    rho_left: float,
    rho_right: float,
    m: float,
    replicas: int,
    stream: RngStream,
    threads: int = 1,
    event_cap: int = EVENT_CAP,
) -> EstimateWithError:
    """Stationary duality moment at `sites` via absorbed dual particles.

    Each replica runs the dual until every particle is parked on a
    boundary slot and reports the product of boundary densities read
    there. Canonical reservoir rates are assumed, so both absorption
    rates equal m/2.
    """
    start = np.asarray(sites, dtype=np.int64)
    if start.ndim != 1 or start.size == 0:
        raise ValueError("need a nonempty flat list of start sites")
    if np.any(start < 0) or np.any(start > n_sites + 1):
        raise ValueError("dual start sites must lie in 0..N+1")
    m_half = 0.5 * m

    def fn(r, gen):
        pos = start.copy()
        _, _, capped = dual_absorbing_kernel(
            pos, np.int64(n_sites), m_half, m_half, m_half, gen,
            np.int64(event_cap),
        )
        if capped:
            raise RuntimeError("dual replica exceeded the event cap")
        return _boundary_density(pos, n_sites, rho_left, rho_right)

    samples = replica_map(fn, replicas, stream, threads=threads)
    return EstimateWithError.from_samples(samples)


def nes_profile_dual(
    n_sites: int,
    rho_left: float,
    rho_right: float,
    m: float,
    replicas: int,
    stream: RngStream,
    threads: int = 1,
) -> list[EstimateWithError]:
    """Site-by-site stationary density profile from single dual walkers."""
    out = []
    for i in range(1, n_sites + 1):
        out.append(
            nes_correlation_dual(
                [i], n_sites, rho_left, rho_right, m, replicas,
                stream.split(i), threads=threads,
            )
        )
    return out


def nes_profile_direct(
    n_sites: int,
    rho_left: float,
    rho_right: float,
    m: float,
    stream: RngStream,
    t_burn: float | None = None,
    t_avg: float | None = None,
    batches: int = DIRECT_BATCHES,
) -> list[EstimateWithError]:
    """Stationary profile from one long driven trajectory, batch-averaged.

    Defaults follow the diffusive relaxation scale: burn-in 10 N^2 and
    averaging window 20 N^2 time units split into `batches` batches.
    Returns dual-scale densities (site mean / (m/2)) per interior site.
    """
    if t_burn is None:
        t_burn = 10.0 * n_sites * n_sites
    if t_avg is None:
        t_avg = 20.0 * n_sites * n_sites
    if batches < 2:
        raise ValueError("need at least two batches")
    res = ReservoirParams.canonical(rho_left, rho_right, m)
    m_half = 0.5 * m
    gen = stream.generator()
    # Start from the product guess matching the linear profile; the burn-in
    # then only has to build up correlations, not bulk density.
    ramp = rho_left + (rho_right - rho_left) * (
        np.arange(1, n_sites + 1) / (n_sites + 1.0)
    )
    lam = ramp / (1.0 + ramp)
    counts = np.empty(n_sites, dtype=np.int64)
    for i in range(n_sites):
        counts[i] = gen.negative_binomial(m_half, 1.0 - lam[i]) if lam[i] > 0 else 0
    occupation_kernel(counts, m_half, res.alpha, res.gamma, res.sigma, res.beta,
                      np.int64(0), float(t_burn), gen)
    t_batch = t_avg / batches
    means = np.empty((batches, n_sites))
    for b in range(batches):
        acc, _ = occupation_kernel(
            counts, m_half, res.alpha, res.gamma, res.sigma, res.beta,
            np.int64(0), float(t_batch), gen,
        )
        means[b] = acc / (t_batch * m_half)
    return [EstimateWithError.from_batch_means(means[:, i]) for i in range(n_sites)]


@dataclass(frozen=True)
class FactorRow:
    """Joint-vs-product absorption comparison for one boundary pattern."""

    N: int
    sites: tuple[int, ...]
    pattern: tuple[str, ...]
    joint: float
    product: float
    gap: float
    gap_se: float


def factorization_check(
    points,
    n_sites: int,
    m: float,
    replicas: int,
    stream: RngStream,
    threads: int = 1,
    batches: int = FACTOR_BATCHES,
) -> list[FactorRow]:
    """Dependence of dual absorption sides, one row per side pattern.

    The gap joint - product(marginals) is the absorption-side covariance
    signature; it vanishes as the particles start further apart on larger
    segments. SE of each gap comes from batch means over `batches`
    batches.
    """
    sites = [math.floor(x * n_sites) for x in points]
    start = np.asarray(sites, dtype=np.int64)
    n = start.size
    if n < 2:
        raise ValueError("factorization needs at least two particles")
    if replicas < 2 * batches:
        raise ValueError("too few replicas for the batch count")
    m_half = 0.5 * m

    def fn(r, gen):
        pos = start.copy()
        _, _, capped = dual_absorbing_kernel(
            pos, np.int64(n_sites), m_half, m_half, m_half, gen,
            np.int64(EVENT_CAP),
        )
        if capped:
            raise RuntimeError("dual replica exceeded the event cap")
        return tuple(1.0 if p == n_sites + 1 else 0.0 for p in pos)

    bits = replica_map(fn, replicas, stream, threads=threads, width=n)
    per = replicas // batches
    bits = bits[: per * batches].reshape(batches, per, n)
    rows = []
    for code in range(2**n):
        pat = tuple((code >> (n - 1 - i)) & 1 for i in range(n))
        match = np.ones((batches, per), dtype=bool)
        for i, a in enumerate(pat):
            match &= bits[:, :, i] == a
        joint_b = match.mean(axis=1)
        marg_b = np.stack(
            [(bits[:, :, i] == a).mean(axis=1) for i, a in enumerate(pat)]
        )
        gap_b = joint_b - marg_b.prod(axis=0)
        rows.append(
            FactorRow(
                N=n_sites,
                sites=tuple(int(s) for s in sites),
                pattern=tuple("R" if a else "L" for a in pat),
                joint=float(joint_b.mean()),
                product=float(marg_b.mean(axis=1).prod()),
                gap=float(gap_b.mean()),
                gap_se=float(gap_b.std(ddof=1) / math.sqrt(batches)),
            )
        )
    return rows


def coupled_absorption_check(
    points,
    n_sites: int,
    m: float,
    replicas: int,
    stream: RngStream,
    threads: int = 1,
) -> EstimateWithError:
    """Fraction of coupled dual/walker replicas ending on different sides.

    Both systems start at floor(x N) for the macro points and run under
    the basic coupling until all particles of both copies are absorbed
    (canonical rates). The estimate is the probability that any label
    disagrees on its final boundary slot.
    """
    sites = [math.floor(x * n_sites) for x in points]
    start = np.asarray(sites, dtype=np.int64)
    if np.any(start < 0) or np.any(start > n_sites + 1):
        raise ValueError("start sites must lie in 0..N+1")
    m_half = 0.5 * m

    def fn(r, gen):
        s_pos = start.copy()
        w_pos = start.copy()
        _, discrepant, capped = absorbing_coupled_kernel(
            s_pos, w_pos, np.int64(n_sites), m_half, gen, np.int64(EVENT_CAP)
        )
        if capped:
            raise RuntimeError("coupled dual replica exceeded the event cap")
        return float(discrepant)

    samples = replica_map(fn, replicas, stream, threads=threads)
    return EstimateWithError.from_samples(samples)
