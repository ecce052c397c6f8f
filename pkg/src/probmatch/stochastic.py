"""Random-variable primitives used throughout the matching pipeline.

A study variable is represented by a :class:`StochasticScalar`: a point mass
when it is observed exactly, a finite discrete distribution when it comes out
of a probabilistic classifier, or an empirical sample when only draws are
available.  Everything downstream (quantile distances, absolute-difference and
ratio distributions, tail probabilities) is built from these three forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_SUM_TOL = 1e-9

__all__ = [
    "StochasticScalar",
    "MonteCarloConfig",
    "mean",
    "quantiles",
    "quantile_levels",
    "quantile_matrix",
    "prob_less_than",
    "prob_greater_than",
    "diff_abs_distribution",
    "ratio_distribution",
    "pairwise_prob_diff_less",
]


def _frozen_f64(x) -> np.ndarray:
    arr = np.array(x, dtype=np.float64).ravel()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class StochasticScalar:
    """A scalar known exactly or only through a finite probability distribution.

    ``kind`` is one of ``'point'``, ``'discrete'``, ``'empirical'``.  For a
    point mass ``values`` holds the single value; for a discrete distribution
    ``values`` is the strictly increasing support and ``probs`` the matching
    probabilities (summing to 1 within ``PROB_SUM_TOL``); for an empirical
    distribution ``values`` holds the raw samples, each carrying weight 1/n.
    Instances are immutable and safe to share across threads.
    """

    kind: str
    values: np.ndarray
    probs: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("point", "discrete", "empirical"):
            raise ValueError(f"unknown StochasticScalar kind {self.kind!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite value in distribution")
        if self.kind == "point":
            if self.values.size != 1 or self.probs is not None:
                raise ValueError("point mass must hold exactly one value and no probs")
        elif self.kind == "discrete":
            if self.probs is None or self.probs.size != self.values.size:
                raise ValueError("discrete distribution needs matching support and probs")
            if self.values.size == 0:
                raise ValueError("empty support")
            if np.any(np.diff(self.values) <= 0):
                raise ValueError("support must be strictly increasing")
            if np.any(self.probs < 0):
                raise ValueError("negative probability")
            total = float(np.sum(self.probs))
            if abs(total - 1.0) > PROB_SUM_TOL:
                raise ValueError(f"unnormalized distribution (sum={total!r})")
        else:
            if self.values.size < 1:
                raise ValueError("empirical distribution needs at least one sample")
            if self.probs is not None:
                raise ValueError("empirical distribution carries no probs")

    # -- constructors ------------------------------------------------------

    @classmethod
    def point_mass(cls, value: float) -> "StochasticScalar":
        return cls("point", _frozen_f64([value]))

    @classmethod
    def discrete(cls, support, probs) -> "StochasticScalar":
        """Build a discrete distribution, sorting and merging duplicate atoms."""
        support = np.asarray(support, dtype=np.float64).ravel()
        probs = np.asarray(probs, dtype=np.float64).ravel()
        if support.size != probs.size:
            raise ValueError("support and probs length mismatch")
        if np.any(probs < 0):
            # tolerate tiny negative rounding from upstream products
            if np.any(probs < -1e-12):
                raise ValueError("negative probability")
            probs = np.clip(probs, 0.0, None)
        uniq, inv = np.unique(support, return_inverse=True)
        if uniq.size != support.size:
            probs = np.bincount(inv, weights=probs, minlength=uniq.size)
            support = uniq
        else:
            order = np.argsort(support, kind="stable")
            support = support[order]
            probs = probs[order]
        if support.size == 1:
            return cls.point_mass(float(support[0]))
        return cls("discrete", _frozen_f64(support), _frozen_f64(probs))

    @classmethod
    def empirical(cls, samples) -> "StochasticScalar":
        return cls("empirical", _frozen_f64(samples))

    # -- views -------------------------------------------------------------

    @property
    def is_point(self) -> bool:
        return self.kind == "point"

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Distribution as (sorted support, probabilities), merging equal samples."""
        if self.kind == "point":
            return self.values, np.ones(1)
        if self.kind == "discrete":
            return self.values, self.probs
        uniq, counts = np.unique(self.values, return_counts=True)
        return uniq, counts / self.values.size

    def support_size(self) -> int:
        return 1 if self.kind == "point" else int(np.unique(self.values).size)


@dataclass(frozen=True)
class MonteCarloConfig:
    """Policy for derived distributions: exact enumeration below
    ``exact_limit`` support-product points, seeded sampling otherwise.

    Sub-streams for individual unit pairs are derived from the seed and the
    pair key, so parallel and serial evaluation orders agree.
    """

    seed: int
    exact_limit: int = 10_000
    n_samples: int = 2_000

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.exact_limit < 1 or self.n_samples < 1:
            raise ValueError("exact_limit and n_samples must be positive")

    def substream(self, *key: int) -> "MonteCarloConfig":
        child = int(np.random.SeedSequence((self.seed, *key)).generate_state(1)[0])
        return MonteCarloConfig(child, self.exact_limit, self.n_samples)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def mean(s: StochasticScalar) -> float:
    """Expectation of the distribution (sample mean for empirical data)."""
    if s.kind == "point":
        return float(s.values[0])
    if s.kind == "discrete":
        return float(s.values @ s.probs)
    return float(np.mean(s.values))


def quantile_levels(k_count: int) -> np.ndarray:
    """Interior probability levels k/(K+1), k = 1..K."""
    if k_count < 1:
        raise ValueError("k_count must be >= 1")
    return np.arange(1, k_count + 1) / (k_count + 1)


def quantiles(s: StochasticScalar, k_count: int) -> np.ndarray:
    """K quantiles at levels k/(K+1) via the left-continuous generalized inverse.

    The quantile at level p is the smallest support (or sample) value whose
    cumulative probability reaches p.  For a point mass every entry equals the
    value.  The result is nondecreasing.
    """
    levels = quantile_levels(k_count)
    if s.kind == "point":
        return np.full(k_count, s.values[0])
    vals, probs = s.atoms()
    cum = np.cumsum(probs)
    idx = np.searchsorted(cum, levels, side="left")
    idx = np.minimum(idx, vals.size - 1)
    return vals[idx]


def quantile_matrix(scalars, k_count: int) -> np.ndarray:
    """Stack quantile vectors of several scalars into an (n, K) matrix."""
    return np.stack([quantiles(s, k_count) for s in scalars])


def prob_less_than(s: StochasticScalar, t: float) -> float:
    """Pr(S < t), strict; exact for point/discrete, a fraction for samples."""
    if s.kind == "point":
        return 1.0 if s.values[0] < t else 0.0
    if s.kind == "discrete":
        return float(np.sum(s.probs[s.values < t]))
    return float(np.mean(s.values < t))


def prob_greater_than(s: StochasticScalar, t: float) -> float:
    """Pr(S > t), strict."""
    if s.kind == "point":
        return 1.0 if s.values[0] > t else 0.0
    if s.kind == "discrete":
        return float(np.sum(s.probs[s.values > t]))
    return float(np.mean(s.values > t))


def _exact_combine(a: StochasticScalar, b: StochasticScalar, fn) -> StochasticScalar:
    av, ap = a.atoms()
    bv, bp = b.atoms()
    vals = fn(av[:, None], bv[None, :]).ravel()
    probs = (ap[:, None] * bp[None, :]).ravel()
    uniq, inv = np.unique(vals, return_inverse=True)
    agg = np.bincount(inv, weights=probs, minlength=uniq.size)
    if uniq.size == 1:
        return StochasticScalar.point_mass(float(uniq[0]))
    return StochasticScalar.discrete(uniq, agg)


def _draw(s: StochasticScalar, rng: np.random.Generator, n: int) -> np.ndarray:
    if s.kind == "point":
        return np.full(n, s.values[0])
    if s.kind == "discrete":
        return rng.choice(s.values, size=n, p=s.probs)
    return rng.choice(s.values, size=n)


def _combine(a: StochasticScalar, b: StochasticScalar, fn, mc: MonteCarloConfig) -> StochasticScalar:
    if a.support_size() * b.support_size() <= mc.exact_limit:
        return _exact_combine(a, b, fn)
    rng = mc.rng()
    da = _draw(a, rng, mc.n_samples)
    db = _draw(b, rng, mc.n_samples)
    return StochasticScalar.empirical(fn(da, db))


def diff_abs_distribution(a: StochasticScalar, b: StochasticScalar,
                          mc: MonteCarloConfig) -> StochasticScalar:
    """Distribution of |A - B| for independent A, B."""
    return _combine(a, b, lambda x, y: np.abs(x - y), mc)


def ratio_distribution(num: StochasticScalar, den: StochasticScalar,
                       epsilon: float, mc: MonteCarloConfig) -> StochasticScalar:
    """Distribution of NUM / max(DEN, epsilon) for independent nonneg NUM, DEN.

    The clamp keeps the ratio finite when the denominator carries mass at or
    near zero.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if num.values.min() < 0 or den.values.min() < 0:
        raise ValueError("ratio_distribution expects nonnegative-valued inputs")
    return _combine(num, den, lambda x, y: x / np.maximum(y, epsilon), mc)


def _common_grid(scalars) -> tuple[np.ndarray, np.ndarray] | None:
    """Embed point/discrete scalars on a shared support grid, if small enough.

    Returns (grid, pmf matrix) or None when any scalar is empirical or the
    union support is too large for the dense pairwise computation to pay off.
    """
    parts = []
    for s in scalars:
        if s.kind == "empirical":
            return None
        parts.append(s.atoms()[0])
    grid = np.unique(np.concatenate(parts))
    if grid.size > 512:
        return None
    pmf = np.zeros((len(scalars), grid.size))
    for i, s in enumerate(scalars):
        vals, probs = s.atoms()
        pos = np.searchsorted(grid, vals)
        if not np.array_equal(grid[pos], vals):  # pragma: no cover - grid is a superset
            return None
        pmf[i, pos] = probs
    return grid, pmf


def pairwise_prob_diff_less(scalars, threshold: float,
                            mc: MonteCarloConfig | None = None,
                            greater: bool = False) -> np.ndarray:
    """Matrix of Pr(|S_u - S_v| < t) (or > t) over all unit pairs.

    Uses a dense common-support computation when every scalar has a small
    finite support; otherwise falls back to per-pair difference distributions
    with sub-streams keyed by the pair indices.
    """
    scalars = list(scalars)
    n = len(scalars)
    grid_pmf = _common_grid(scalars)
    if grid_pmf is not None:
        grid, pmf = grid_pmf
        gaps = np.abs(grid[:, None] - grid[None, :])
        band = (gaps > threshold) if greater else (gaps < threshold)
        out = pmf @ band.astype(np.float64) @ pmf.T
        np.clip(out, 0.0, 1.0, out=out)
    else:
        if mc is None:
            mc = MonteCarloConfig(seed=0)
        out = np.zeros((n, n))
        for u in range(n):
            for v in range(u + 1, n):
                d = diff_abs_distribution(scalars[u], scalars[v], mc.substream(u, v))
                p = prob_greater_than(d, threshold) if greater else prob_less_than(d, threshold)
                out[u, v] = out[v, u] = p
    # a unit is never matched with itself; pin the diagonal to the
    # same-variable (zero difference) convention on both code paths
    np.fill_diagonal(out, 0.0 if greater else (1.0 if threshold > 0 else 0.0))
    return out
