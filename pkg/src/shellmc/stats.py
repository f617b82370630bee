"""Running moments for per-history samples and the figure of merit."""
from __future__ import annotations

import numpy as np

from .errors import DomainError, InsufficientSamples


class SampleAccumulator:
    """Welford mean/variance with an order-preserving merge.

    Merging chunk accumulators in a fixed order gives the same answer no
    matter how many workers produced the chunks.
    """

    __slots__ = ("count", "mean", "m2")

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def add_many(self, xs):
        other = SampleAccumulator.from_samples(xs)
        self.merge(other)

    def merge(self, other: "SampleAccumulator"):
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / n
        self.m2 += other.m2 + delta * delta * self.count * other.count / n
        self.count = n
        return self

    @classmethod
    def from_samples(cls, xs):
        xs = np.asarray(xs, dtype=float)
        acc = cls()
        if xs.size:
            acc.count = int(xs.size)
            acc.mean = float(xs.mean())
            acc.m2 = float(np.sum((xs - acc.mean) ** 2))
        return acc

    def finalize(self):
        """Return ``(mean, sample variance, variance of the mean)``."""
        if self.count < 2:
            raise InsufficientSamples(f"need at least 2 samples, have {self.count}")
        var = self.m2 / (self.count - 1)
        return self.mean, var, var / self.count


def figure_of_merit(mean_variance, seconds):
    """``1 / (Sigma^2 * T)`` with ``Sigma^2`` the variance of the mean."""
    if not seconds > 0.0:
        raise DomainError("run time must be positive")
    if not mean_variance > 0.0:
        raise DomainError("variance of the mean must be positive")
    return 1.0 / (mean_variance * seconds)
