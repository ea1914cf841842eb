"""Soft region membership: Gaussian mass of a hyper-rectangle around a point."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .data import Dataset
from .regions import Region

_SQRT2 = np.sqrt(2.0)


def normal_cdf(t):
    """Standard normal CDF via the complementary error function.

    erfc keeps full relative accuracy in the far tails, where the naive
    1 - Phi(t) form cancels catastrophically for |t| > 8.
    """
    return 0.5 * erfc(-np.asarray(t, dtype=float) / _SQRT2)


def interval_mass(x: np.ndarray, a: float, b: float, sigma: float) -> np.ndarray:
    """Mass a N(x, sigma^2) variable places in (a, b], per element of x.

    sigma = 0 degenerates to the half-open indicator 1{a < x <= b}.
    Infinite bounds contribute CDF values of exactly 0 or 1.
    """
    x = np.asarray(x, dtype=float)
    if sigma == 0.0:
        return ((x > a) & (x <= b)).astype(float)
    hi = np.ones_like(x) if b == np.inf else normal_cdf((b - x) / sigma)
    lo = np.zeros_like(x) if a == -np.inf else normal_cdf((a - x) / sigma)
    return hi - lo


def membership_column(X: np.ndarray, region: Region, sigma: np.ndarray) -> np.ndarray:
    """Soft membership of every row of X in `region`: the product over
    coordinates of per-coordinate interval masses."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.ones(X.shape[0])
    for j in range(region.p):
        out *= interval_mass(X[:, j], region.lower[j], region.upper[j], sigma[j])
    return out


def psi(x: np.ndarray, r: Region, sigma: np.ndarray) -> float:
    """Soft membership of a single point in a region; a value in [0, 1]."""
    x = np.asarray(x, dtype=float)
    if x.shape != (r.p,):
        raise ValueError("point dimension does not match the region")
    return float(membership_column(x[None, :], r, np.asarray(sigma, dtype=float))[0])


@dataclass(frozen=True)
class MembershipMatrix:
    """n x K matrix of soft assignments of rows to leaf regions.

    Entries lie in [0, 1]; rows sum to 1 whenever the regions partition R^p.
    """

    values: np.ndarray
    regions: tuple[Region, ...]

    def __post_init__(self):
        V = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", V)
        object.__setattr__(self, "regions", tuple(self.regions))
        if V.ndim != 2 or V.shape[1] != len(self.regions):
            raise ValueError("values must have one column per region")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


def build_membership(d: Dataset, regions, sigma) -> MembershipMatrix:
    """Assemble the membership matrix of a dataset over a list of regions."""
    regions = tuple(regions)
    if not regions:
        raise ValueError("at least one region is required")
    sigma = np.asarray(sigma, dtype=float)
    cols = [membership_column(d.features, r, sigma) for r in regions]
    return MembershipMatrix(np.column_stack(cols), regions)


def split_membership_column(
    P: MembershipMatrix, k: int, j: int, s: float, d: Dataset, sigma
) -> MembershipMatrix:
    """Replace column k by the two columns of its children split at s on
    coordinate j. Child columns are evaluated fresh, so for every row they
    sum to the parent value up to roundoff (Gaussian mass is additive over
    a partition of the parent region)."""
    sigma = np.asarray(sigma, dtype=float)
    left, right = P.regions[k].split(j, s)
    lcol = membership_column(d.features, left, sigma)
    rcol = membership_column(d.features, right, sigma)
    values = np.column_stack([P.values[:, :k], lcol, rcol, P.values[:, k + 1 :]])
    regions = P.regions[:k] + (left, right) + P.regions[k + 1 :]
    return MembershipMatrix(values, regions)
