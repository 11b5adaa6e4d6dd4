"""Hydrodynamic-limit experiments under diffusive space-time scaling.

A macroscopic profile pi fixes per-site scale parameters lambda_N(i) =
pi(i/N); product negative-binomial initial states are evolved for time
N^2 t and duality-moment observables are compared with the discrete heat
equation run on the same lattice. The finite simulation window stands in
for the full line by freezing the exterior through matched equilibrium
reservoirs at both edges, which keeps the edge effect exponentially small
at the observation sites.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ive

from ._kernels import coupled_kernel, occupation_kernel
from .lattice import LabeledPositions, WindowAbortError, window_for
from .measures import (
    ReservoirParams,
    ScaleProfile,
    duality_poly,
    negbin_sample_profile,
)
from .rngs import EstimateWithError, RngStream, replica_map

HEAT_TOL = 1e-10
# Duality moments of the negative binomial blow up as lambda -> 1; this cap
# keeps single- and two-point estimator variances manageable.
LAMBDA_SUP_EXPERIMENT = 0.8


@dataclass(frozen=True)
class MacroProfile:
    """Smooth macroscopic scale profile from a small built-in family."""

    family: str
    params: tuple[float, ...]

    @classmethod
    def constant(cls, value: float) -> "MacroProfile":
        return cls("constant", (float(value),))

    @classmethod
    def smoothed_step(
        cls, left: float, right: float, center: float = 0.5, width: float = 0.1
    ) -> "MacroProfile":
        if width <= 0:
            raise ValueError("width must be positive")
        return cls("smoothed_step", (float(left), float(right), float(center),
                                     float(width)))

    @classmethod
    def gaussian_bump(
        cls, base: float, amplitude: float, center: float = 0.5, width: float = 0.1
    ) -> "MacroProfile":
        if width <= 0:
            raise ValueError("width must be positive")
        return cls("gaussian_bump", (float(base), float(amplitude), float(center),
                                     float(width)))

    def __post_init__(self):
        known = {"constant": 1, "smoothed_step": 4, "gaussian_bump": 4}
        if self.family not in known:
            raise ValueError(f"unknown profile family '{self.family}'")
        if len(self.params) != known[self.family]:
            raise ValueError(f"{self.family} takes {known[self.family]} parameters")
        if self.sup() >= 1.0 or self.inf() < 0.0:
            raise ValueError("profile values must stay inside [0, 1)")

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        if self.family == "constant":
            out = np.full_like(y, self.params[0])
        elif self.family == "smoothed_step":
            left, right, center, width = self.params
            out = left + (right - left) * 0.5 * (1.0 + np.tanh((y - center) / width))
        else:
            base, amp, center, width = self.params
            out = base + amp * np.exp(-((y - center) ** 2) / (2.0 * width * width))
        if out.ndim == 0:
            return float(out)
        return out

    def sup(self) -> float:
        if self.family == "constant":
            return self.params[0]
        if self.family == "smoothed_step":
            return max(self.params[0], self.params[1])
        base, amp = self.params[0], self.params[1]
        return max(base, base + amp)

    def inf(self) -> float:
        if self.family == "constant":
            return self.params[0]
        if self.family == "smoothed_step":
            return min(self.params[0], self.params[1])
        base, amp = self.params[0], self.params[1]
        return min(base, base + amp)


def profile_discretize(pi: MacroProfile, N: int) -> ScaleProfile:
    """Per-site scale parameters lambda_N(i) = pi(i/N)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return ScaleProfile.from_callable(lambda i: pi(np.asarray(i) / N))


def _heat_weights(m: float, t: float, tol: float = HEAT_TOL) -> np.ndarray:
    """Walk kernel p_t(k) = exp(-mt) I_k(mt) for k = 0..K, mass 1 - tol."""
    x = m * t
    guess = int(x + 12.0 * math.sqrt(x + 1.0) + 30.0)
    while True:
        w = ive(np.arange(guess + 1), x)
        mass = w[0] + 2.0 * w[1:].sum()
        if 1.0 - mass <= tol:
            break
        guess *= 2
        if guess > 10**8:
            raise RuntimeError("heat kernel cutoff failed to converge")
    keep = guess
    # Trim to the smallest K that still holds the mass bound.
    cum = w[0] + 2.0 * np.cumsum(w[1:])
    enough = np.where(1.0 - cum <= tol)[0]
    if enough.size:
        keep = int(enough[0]) + 1
    return w[: keep + 1]


def heat_solve_discrete(psi0, m: float, t: float, sites=None,
                        left: float = 0.0, right: float = 0.0) -> dict:
    """Discrete heat evolution with diffusion m/2 on the integer lattice.

    psi0 is a site->value mapping (dict) or a callable on sites. For a
    dict, sites below/above its key range take the `left`/`right`
    constants. Returns {site: psi(t, site)} evaluated at `sites` (default:
    the dict's own sites), with truncation error at most 1e-10 of the sup.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if callable(psi0):
        lookup = psi0
        if sites is None:
            raise ValueError("callable psi0 needs explicit evaluation sites")
    else:
        data = dict(psi0)
        if not data:
            raise ValueError("psi0 is empty")
        lo_key = min(data)
        hi_key = max(data)

        def lookup(y):
            if y < lo_key:
                return left
            if y > hi_key:
                return right
            return data.get(y, 0.0)

        if sites is None:
            sites = sorted(data)
    sites = [int(s) for s in sites]
    if t == 0:
        return {s: float(lookup(s)) for s in sites}
    w = _heat_weights(m, t)
    K = w.size - 1
    out = {}
    for s in sites:
        val = w[0] * float(lookup(s))
        for k in range(1, K + 1):
            val += w[k] * (float(lookup(s - k)) + float(lookup(s + k)))
        out[s] = float(val)
    return out


def vee_estimate(
    profile: ScaleProfile,
    start: LabeledPositions,
    t: float,
    m: float,
    replicas: int,
    stream: RngStream,
    threads: int = 1,
) -> EstimateWithError:
    """Common-random-number estimate of the interaction correction.

    One coupled replica yields prod_i lambda/(1-lambda) read along the
    inclusion particles minus the same product along the walkers; the mean
    over replicas estimates the gap between the two semigroups acting on
    the product observable. Exactly zero pathwise for one particle.
    """
    if start.n == 0:
        raise ValueError("need at least one particle")
    win = window_for(start.positions, m, t)
    y0 = start.array()
    n = start.n

    def fn(r, gen):
        y = y0.copy()
        w = y0.copy()
        A = np.zeros((n, n))
        qv = np.zeros(n)
        _, _, _, aborted = coupled_kernel(
            y, w, 0.5 * m, win.lo, win.hi, float(t), gen, A, qv
        )
        if aborted:
            raise WindowAbortError("coupled replica hit the window edge")
        return float(np.prod(profile.rho(y)) - np.prod(profile.rho(w)))

    samples = replica_map(fn, replicas, stream, threads=threads)
    return EstimateWithError.from_samples(samples)


@dataclass(frozen=True)
class HydroExperiment:
    """One diffusive-scaling run: scale N, profile, macro time, observables."""

    pi: MacroProfile
    m: float
    N: int
    t: float
    points: tuple[float, ...]
    replicas: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.t <= 0:
            raise ValueError("macro time must be positive")
        if not self.points:
            raise ValueError("need at least one observation point")
        if self.replicas < 2:
            raise ValueError("need at least two replicas")
        if self.m <= 0:
            raise ValueError("m must be positive")
        if self.pi.sup() > LAMBDA_SUP_EXPERIMENT:
            raise ValueError(
                f"profile sup {self.pi.sup():.3f} exceeds the experiment cap "
                f"{LAMBDA_SUP_EXPERIMENT}"
            )


@dataclass(frozen=True)
class LepRow:
    """One observable of a local-equilibrium check."""

    N: int
    ys: tuple[float, ...]
    sites: tuple[int, ...]
    estimate: float
    stderr: float
    pde_value: float


def _window_span(exp: HydroExperiment):
    meas = [math.floor(exp.N * y) for y in exp.points]
    margin = math.ceil(8.0 * math.sqrt(exp.m * exp.N * exp.N * exp.t))
    return min(meas) - margin, max(meas) + margin, meas


def lep_check(exp: HydroExperiment, stream: RngStream, threads: int = 1):
    """Duality-moment observables at time N^2 t against the heat reference.

    Single-point rows for every observation point; with exactly two points
    a product-observable row is appended. Estimates are in duality-moment
    units so the heat reference applies with no further scaling.
    """
    lo, hi, meas = _window_span(exp)
    lam = profile_discretize(exp.pi, exp.N)
    W = hi - lo + 1
    T = exp.N * exp.N * exp.t
    m = exp.m
    m_half = 0.5 * m
    lam_window = lam.lam(np.arange(lo, hi + 1))
    # Exterior sites frozen at their initial law act as equilibrium
    # reservoirs; canonical rates with the matching dual-scale density
    # keep a constant-profile product measure exactly stationary.
    lam_l = float(lam.lam(lo - 1))
    lam_r = float(lam.lam(hi + 1))
    res = ReservoirParams.canonical(lam_l / (1.0 - lam_l), lam_r / (1.0 - lam_r), m)
    offsets = [x - lo for x in meas]
    pair = len(exp.points) == 2
    width = len(exp.points) + (1 if pair else 0)

    def fn(r, gen):
        counts = negbin_sample_profile(lam_window, m, gen)
        occupation_kernel(
            counts, m_half, res.alpha, res.gamma, res.sigma, res.beta,
            np.int64(0), float(T), gen,
        )
        vals = [counts[off] / m_half for off in offsets]
        if pair:
            a, b = offsets
            if a == b:
                vals.append(duality_poly(2, int(counts[a]), m))
            else:
                vals.append(vals[0] * vals[1])
        return tuple(vals)

    out = replica_map(fn, exp.replicas, stream, threads=threads, width=width)
    out = out.reshape(exp.replicas, width)

    def psi0(s):
        return float(lam.rho(s))

    pde = heat_solve_discrete(psi0, m, T, sites=sorted(set(meas)))
    rows = []
    for j, y in enumerate(exp.points):
        est = EstimateWithError.from_samples(out[:, j])
        rows.append(
            LepRow(exp.N, (float(y),), (meas[j],), est.mean, est.stderr,
                   pde[meas[j]])
        )
    if pair:
        est = EstimateWithError.from_samples(out[:, -1])
        ref = pde[meas[0]] * pde[meas[1]]
        rows.append(
            LepRow(exp.N, tuple(float(y) for y in exp.points), tuple(meas),
                   est.mean, est.stderr, ref)
        )
    return rows
