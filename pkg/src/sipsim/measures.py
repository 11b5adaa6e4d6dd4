"""Duality polynomials, reversible product measures, and reservoir data.

Conventions used throughout the package:

- The inclusion process with parameter m > 0 moves a particle from site i to
  a nearest neighbor j at rate eta_i * (m/2 + eta_j).
- The single-site duality polynomial is

      d(k, n) = n! / (n-k)! * Gamma(m/2) / Gamma(m/2 + k)   for k <= n,
      d(k, n) = 0                                           for k > n,

  and the duality function of two configurations is the product of d over
  sites, dual counts in the first slot.
- The reversible single-site law with scale lambda in [0, 1) is

      nu_lambda(n) = (1 - lambda)^(m/2) * lambda^n / n!
                     * Gamma(m/2 + n) / Gamma(m/2),

  with mean occupation (the density) rho = (m/2) * lambda / (1 - lambda).
- Expectations of dual observables under nu_lambda close on the scale ratio:
  sum_n d(k, n) nu_lambda(n) = (lambda / (1 - lambda))^k.

All Gamma ratios go through log-Gamma differences; nothing here evaluates a
raw Gamma function.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .lattice import BoundaryKind, OccupationConfig

# Scales are kept strictly below 1; values this close to 1 already mean a
# divergent density, so the cutoff is a validation guard, not a tuning knob.
LAMBDA_MAX = 1.0 - 1e-9

# Hard cap on adaptive series truncation.
SERIES_CAP = 100_000


class ConvergenceError(RuntimeError):
    """An adaptive truncation failed to reach its tolerance under the cap."""


def _check_m(m: float) -> float:
    m = float(m)
    if not m > 0:
        raise ValueError(f"need m > 0, got {m}")
    return m


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= LAMBDA_MAX:
        raise ValueError(f"scale must lie in [0, {LAMBDA_MAX}], got {lam}")
    return lam


def duality_poly(k: int, n: int, m: float) -> float:
    """Single-site duality polynomial d(k, n).

    Falling factorial of the occupation over a rising-factorial
    normalization: d(k, n) = n (n-1) ... (n-k+1) / [(m/2)(m/2+1)...(m/2+k-1)].
    d(0, n) = 1 and d(k, n) = 0 when k > n.
    """
    m = _check_m(m)
    k = int(k)
    n = int(n)
    if k < 0 or n < 0:
        raise ValueError("occupation numbers must be nonnegative")
    if k > n:
        return 0.0
    if k == 0:
        return 1.0
    half = 0.5 * m
    logval = (
        gammaln(n + 1.0)
        - gammaln(n - k + 1.0)
        + gammaln(half)
        - gammaln(half + k)
    )
    return float(np.exp(logval))


def duality_poly_table(max_k: int, max_n: int, m: float) -> np.ndarray:
    """Array D with D[k, n] = d(k, n) for 0 <= k <= max_k, 0 <= n <= max_n."""
    m = _check_m(m)
    half = 0.5 * m
    k = np.arange(max_k + 1)[:, None]
    n = np.arange(max_n + 1)[None, :]
    with np.errstate(invalid="ignore"):
        logval = gammaln(n + 1.0) - gammaln(n - k + 1.0) + gammaln(half) - gammaln(half + k)
    table = np.exp(logval)
    table[k > n] = 0.0
    return table


def duality_fn(xi: OccupationConfig, eta: OccupationConfig, m: float) -> float:
    """Product over sites of d(xi_i, eta_i); xi holds the dual counts."""
    if xi.sites != eta.sites:
        raise ValueError("dual and bulk configurations must share one site range")
    out = 1.0
    for site, k in xi.counts.items():
        out *= duality_poly(k, eta.count(site), m)
        if out == 0.0:
            return 0.0
    return out


@dataclass(frozen=True)
class ReservoirParams:
    """Boundary rates for the open segment.

    Left end: birth alpha * (m/2 + eta_1), death gamma * eta_1.
    Right end: birth sigma * (m/2 + eta_N), death beta * eta_N.
    The reservoir scales rho_left = alpha / (gamma - alpha) and
    rho_right = sigma / (beta - sigma) require gamma > alpha, beta > sigma.
    """

    alpha: float
    gamma: float
    sigma: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "gamma", "sigma", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.gamma > self.alpha:
            raise ValueError("need gamma > alpha for a well-defined left reservoir")
        if not self.beta > self.sigma:
            raise ValueError("need beta > sigma for a well-defined right reservoir")

    @property
    def rho_left(self) -> float:
        return self.alpha / (self.gamma - self.alpha)

    @property
    def rho_right(self) -> float:
        return self.sigma / (self.beta - self.sigma)

    @property
    def absorb_left(self) -> float:
        """Dual absorption rate into the left slot."""
        return self.gamma - self.alpha

    @property
    def absorb_right(self) -> float:
        return self.beta - self.sigma

    @classmethod
    def canonical(cls, rho_left: float, rho_right: float, m: float) -> "ReservoirParams":
        """The choice that makes a lone dual particle a plain rate-m/2 walk.

        alpha = rho_L m/2, gamma = (rho_L + 1) m/2, sigma = rho_R m/2,
        beta = (rho_R + 1) m/2, so both absorption rates equal m/2.
        """
        m = _check_m(m)
        if rho_left < 0 or rho_right < 0:
            raise ValueError("reservoir scales must be nonnegative")
        half = 0.5 * m
        return cls(
            alpha=rho_left * half,
            gamma=(rho_left + 1.0) * half,
            sigma=rho_right * half,
            beta=(rho_right + 1.0) * half,
        )


def boundary_duality_fn(
    xi: OccupationConfig, eta: OccupationConfig, res: ReservoirParams, m: float
) -> float:
    """Duality function for the open segment.

    rho_left^(xi_0) * prod_{i=1..N} d(xi_i, eta_i) * rho_right^(xi_{N+1});
    xi lives on 0..N+1, eta only on the interior 1..N.
    """
    sites = xi.sites
    if sites.kind is not BoundaryKind.SEGMENT_WITH_RESERVOIRS:
        raise ValueError("boundary duality needs segment configurations")
    if eta.sites != sites:
        raise ValueError("dual and bulk configurations must share one site range")
    if eta.count(sites.lo) or eta.count(sites.hi):
        raise ValueError("bulk configuration cannot occupy reservoir slots")
    out = res.rho_left ** xi.count(sites.lo) * res.rho_right ** xi.count(sites.hi)
    for site, k in xi.counts.items():
        if site == sites.lo or site == sites.hi:
            continue
        out *= duality_poly(k, eta.count(site), m)
        if out == 0.0:
            return 0.0
    return float(out)


def negbin_logpmf(n, lam: float, m: float):
    """Log pmf of nu_lambda; n may be an array."""
    lam = _check_lambda(lam)
    m = _check_m(m)
    half = 0.5 * m
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("occupation numbers must be nonnegative")
    if lam == 0.0:
        out = np.where(n == 0, 0.0, -np.inf)
        return out if out.ndim else float(out)
    out = (
        half * np.log1p(-lam)
        + n * np.log(lam)
        - gammaln(n + 1.0)
        + gammaln(half + n)
        - gammaln(half)
    )
    return out if out.ndim else float(out)


def negbin_pmf(n, lam: float, m: float):
    out = np.exp(negbin_logpmf(n, lam, m))
    return out if np.ndim(out) else float(out)


def negbin_sample(lam: float, m: float, rng: np.random.Generator, size=None):
    """Exact draw from nu_lambda (Gamma-Poisson mixture via the library)."""
    lam = _check_lambda(lam)
    m = _check_m(m)
    if lam == 0.0:
        if size is None:
            return 0
        return np.zeros(size, dtype=np.int64)
    return rng.negative_binomial(0.5 * m, 1.0 - lam, size=size)


def negbin_sample_profile(lams, m: float, rng: np.random.Generator) -> np.ndarray:
    """Independent draws, one per entry of the scale array lams."""
    lams = np.asarray(lams, dtype=np.float64)
    if np.any(lams < 0) or np.any(lams > LAMBDA_MAX):
        raise ValueError("scales must lie in [0, 1)")
    out = np.zeros(lams.shape, dtype=np.int64)
    pos = lams > 0
    if np.any(pos):
        out[pos] = rng.negative_binomial(0.5 * m, 1.0 - lams[pos])
    return out


def detailed_balance_max_relerr(
    lam: float, m: float, max_n: int = 30, max_k: int = 30
) -> float:
    """Worst relative error of the pair detailed-balance identity.

    For a bond carrying (n, k) particles under the product of nu_lambda
    marginals, flow n -> n-1, k -> k+1 at rate n(m/2+k) must balance the
    reverse flow at rate (k+1)(m/2+n-1). Checked over 1 <= n <= max_n,
    0 <= k <= max_k in log space.
    """
    lam = _check_lambda(lam)
    m = _check_m(m)
    if lam == 0.0:
        return 0.0
    half = 0.5 * m
    n = np.arange(1, max_n + 1)[:, None].astype(np.float64)
    k = np.arange(0, max_k + 1)[None, :].astype(np.float64)
    log_fwd = (
        negbin_logpmf(n, lam, m)
        + negbin_logpmf(k, lam, m)
        + np.log(n)
        + np.log(half + k)
    )
    log_bwd = (
        negbin_logpmf(n - 1, lam, m)
        + negbin_logpmf(k + 1, lam, m)
        + np.log(k + 1)
        + np.log(half + n - 1)
    )
    return float(np.max(np.abs(np.expm1(log_fwd - log_bwd))))


def density_of_lambda(lam: float, m: float) -> float:
    """Mean occupation under nu_lambda: (m/2) lambda / (1 - lambda)."""
    lam = _check_lambda(lam)
    m = _check_m(m)
    return 0.5 * m * lam / (1.0 - lam)


def lambda_of_density(rho: float, m: float) -> float:
    """Inverse of density_of_lambda: rho / (rho + m/2)."""
    m = _check_m(m)
    rho = float(rho)
    if rho < 0:
        raise ValueError("density must be nonnegative")
    lam = rho / (rho + 0.5 * m)
    if lam > LAMBDA_MAX:
        raise ValueError("density corresponds to a scale too close to 1")
    return lam


def scale_ratio(lam: float) -> float:
    """lambda / (1 - lambda), the closed form of the k = 1 dual moment."""
    lam = _check_lambda(lam)
    return lam / (1.0 - lam)


def moment_identity_lhs(k: int, lam: float, m: float, tol: float = 1e-10) -> float:
    """sum_n d(k, n) nu_lambda(n), summed adaptively.

    Terms are built by recurrence; the loop stops once the geometric tail
    bound drops below tol. Exceeding the series cap raises ConvergenceError.
    The closed form of this sum is (lambda / (1 - lambda))^k.
    """
    k = int(k)
    if k < 0:
        raise ValueError("k must be nonnegative")
    lam = _check_lambda(lam)
    m = _check_m(m)
    half = 0.5 * m
    if lam == 0.0:
        return 1.0 if k == 0 else 0.0
    # First nonzero term sits at n = k, where the Gamma ratios cancel:
    # a_k = d(k,k) nu(k) = (1-lam)^(m/2) * lam^k.
    a = float(np.exp(half * np.log1p(-lam) + k * np.log(lam)))
    total = a
    n = k
    while n < SERIES_CAP:
        ratio = lam * (half + n) / (n + 1.0 - k)
        a *= ratio
        n += 1
        total += a
        # Ratios are monotone in n with limit lam, so from here on every
        # successive ratio is at most rbar.
        rbar = max(ratio, lam * (half + n) / (n + 1.0 - k), lam)
        if rbar < 1.0:
            tail = a * rbar / (1.0 - rbar)
            if tail < tol:
                return float(total)
    raise ConvergenceError(
        f"dual moment series did not reach tol={tol} within {SERIES_CAP} terms"
    )


class ScaleProfile:
    """Site-indexed scale values lambda(i) in [0, 1).

    Wraps a vectorized callable on integer sites; constructors cover the
    constant case and dense arrays. Values are validated on evaluation.
    """

    def __init__(self, fn, label: str = "profile"):
        self._fn = fn
        self.label = label

    @classmethod
    def constant(cls, lam: float) -> "ScaleProfile":
        lam = _check_lambda(lam)
        return cls(lambda i: np.full(np.shape(i), lam, dtype=np.float64), f"constant({lam})")

    @classmethod
    def from_callable(cls, fn, label: str = "profile") -> "ScaleProfile":
        return cls(lambda i: np.asarray(fn(np.asarray(i)), dtype=np.float64), label)

    @classmethod
    def from_array(cls, values, lo: int, label: str = "array") -> "ScaleProfile":
        values = np.asarray(values, dtype=np.float64)

        def fn(i):
            idx = np.asarray(i) - lo
            if np.any(idx < 0) or np.any(idx >= values.size):
                raise ValueError("site outside the tabulated profile")
            return values[idx]

        return cls(fn, label)

    def lam(self, i):
        out = np.asarray(self._fn(np.asarray(i)), dtype=np.float64)
        if np.any(out < 0) or np.any(out > LAMBDA_MAX):
            raise ValueError("profile produced a scale outside [0, 1)")
        if out.ndim == 0:
            return float(out)
        return out

    def rho(self, i):
        """Scale ratio lambda/(1-lambda) at sites i (the dual moment value)."""
        lam = np.asarray(self.lam(i))
        out = lam / (1.0 - lam)
        if out.ndim == 0:
            return float(out)
        return out
