"""Reproducible random streams and standard-error bookkeeping.

Streams are counter-based: a (seed, key) pair names a stream, children are
named by extending the key, and the Philox generator underneath advances a
counter rather than mutating shared state. Two streams with different keys
are statistically independent, and the same (seed, key) always reproduces
the same draws, which is what makes replica-parallel runs exactly
repeatable regardless of scheduling.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

ENV_SEED = "SIPSIM_SEED"
DEFAULT_SEED = 20260819


def resolve_seed(explicit: int | None = None) -> int:
    """Seed policy: explicit value, else SIPSIM_SEED env var, else default."""
    if explicit is not None:
        return int(explicit)
    env = os.environ.get(ENV_SEED)
    if env is not None:
        return int(env)
    return DEFAULT_SEED


@dataclass(frozen=True)
class RngStream:
    """Name of a random stream: 64-bit master seed plus a split key.

    The draw counter itself lives inside the Philox state of the generator
    returned by generator(); fresh calls restart the stream from counter 0.
    """

    seed: int
    key: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))

    def split(self, index: int) -> "RngStream":
        """Independent child stream; same (seed, key, index) is the same child."""
        return RngStream(self.seed, self.key + (int(index),))


def split_stream(master: RngStream, index: int) -> RngStream:
    return master.split(index)


def as_generator(src) -> np.random.Generator:
    """Accept an RngStream or a ready Generator wherever randomness is needed."""
    if isinstance(src, RngStream):
        return src.generator()
    if isinstance(src, np.random.Generator):
        return src
    raise TypeError(f"expected RngStream or numpy Generator, got {type(src).__name__}")


@dataclass(frozen=True)
class EstimateWithError:
    """Monte Carlo mean with enough state to merge partial results exactly.

    m2 is the sum of squared deviations from the mean (Welford's statistic),
    so merging two estimates reproduces the single-pass pooled result.
    """

    mean: float
    count: int
    m2: float = 0.0

    @property
    def variance(self) -> float:
        if self.count < 2:
            return float("nan")
        return self.m2 / (self.count - 1)

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return float("nan")
        return math.sqrt(self.variance / self.count)

    @classmethod
    def from_samples(cls, xs) -> "EstimateWithError":
        xs = np.asarray(xs, dtype=np.float64)
        if xs.size == 0:
            raise ValueError("no samples")
        mean = float(xs.mean())
        m2 = float(((xs - mean) ** 2).sum())
        return cls(mean=mean, count=int(xs.size), m2=m2)

    @classmethod
    def from_batch_means(cls, batch_means) -> "EstimateWithError":
        """Estimate from batch means; stderr then reflects batch scatter."""
        return cls.from_samples(batch_means)


def merge_estimates(a: EstimateWithError, b: EstimateWithError) -> EstimateWithError:
    """Pooled estimate of two disjoint replica sets (Chan's update)."""
    if a.count == 0:
        return b
    if b.count == 0:
        return a
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    return EstimateWithError(mean=mean, count=n, m2=m2)


def merge_many(estimates) -> EstimateWithError:
    out = EstimateWithError(mean=0.0, count=0, m2=0.0)
    for e in estimates:
        out = merge_estimates(out, e)
    return out


def replica_map(fn, replicas: int, stream: RngStream, threads: int = 1, width: int = 1):
    """Run fn(replica_index, generator) for every replica.

    Each replica draws from its own child stream keyed by the absolute
    replica index, and results land in a preallocated array slot, so the
    output is bit-identical for any thread count. fn returns a float or a
    tuple of width floats.

    Returns an array of shape (replicas,) when width == 1, else
    (replicas, width).
    """
    if replicas <= 0:
        raise ValueError("need replicas >= 1")
    out = np.empty((replicas, width), dtype=np.float64)

    def run_range(lo: int, hi: int):
        for r in range(lo, hi):
            res = fn(r, stream.split(r).generator())
            out[r] = res

    if threads <= 1:
        run_range(0, replicas)
    else:
        chunk = max(1, math.ceil(replicas / (4 * threads)))
        spans = [(lo, min(lo + chunk, replicas)) for lo in range(0, replicas, chunk)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_range, lo, hi) for lo, hi in spans]
            for f in futures:
                f.result()
    if width == 1:
        return out[:, 0]
    return out
