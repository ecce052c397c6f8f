"""Distances between units: quantile distance between random variables,
covariance-normalized weighted Mahalanobis forms, and the per-pair distance
that drives the matching.

Two parallel formulations are provided.  The probabilistic path compares
random variables through their quantile vectors; the deterministic path is
the classical signed-delta weighted Mahalanobis on point values.  On
point-mass data the quantile distance of two values a, b equals |a-b|/sqrt(K),
so the deterministic path expresses its distances on the same 1/sqrt(K) scale;
the epsilon guard then acts identically in both paths and rankings agree
wherever the two quadratic forms coincide (P = 1 or a diagonal covariance
transform).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .core import StudyDataset
from .stochastic import (MonteCarloConfig, StochasticScalar,
                         diff_abs_distribution, quantile_matrix, quantiles,
                         ratio_distribution)

__all__ = [
    "WeightMatrix",
    "CovarianceTransform",
    "PairDistanceCache",
    "rv_distance",
    "covariance_sqrt",
    "mahalanobis_weighted",
    "prob_mahalanobis",
    "unit_distance",
    "pair_distance_matrix",
    "det_confounder_distance_matrix",
    "det_pair_distance_matrix",
]


@dataclass(frozen=True)
class WeightMatrix:
    """Diagonal of the positive-definite weight matrix searched by the GA."""

    diag: np.ndarray

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=np.float64).ravel()
        if diag.size == 0 or np.any(diag <= 0) or not np.all(np.isfinite(diag)):
            raise ValueError("weights must be positive and finite")
        diag.flags.writeable = False
        object.__setattr__(self, "diag", diag)

    @classmethod
    def identity(cls, p: int) -> "WeightMatrix":
        return cls(np.ones(p))


@dataclass(frozen=True)
class CovarianceTransform:
    """Lower-triangular factor F with F^T F equal to the inverse sample covariance."""

    factor: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.factor, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise ValueError("factor must be square")
        f = np.ascontiguousarray(f)
        f.flags.writeable = False
        object.__setattr__(self, "factor", f)

    @classmethod
    def identity(cls, p: int) -> "CovarianceTransform":
        return cls(np.eye(p))

    @classmethod
    def from_variances(cls, variances) -> "CovarianceTransform":
        """Diagonal transform 1/sd, ignoring cross-covariances."""
        v = np.asarray(variances, dtype=np.float64)
        if np.any(v <= 0):
            raise ValueError("variances must be positive")
        return cls(np.diag(1.0 / np.sqrt(v)))


class SingularCovarianceError(ValueError):
    """Sample covariance is not invertible even after ridge regularization."""


def covariance_sqrt(dataset: StudyDataset, ridge_scale: float = 1e-8) -> CovarianceTransform:
    """Inverse Cholesky factor of the sample covariance of the confounders.

    The covariance is computed over per-unit means, the one moment available
    for every cell kind; for point-mass data this is the classical sample
    covariance.  A small ridge (ridge_scale * trace / P) is added before
    factorization to survive near-singular draws.
    """
    means = dataset.confounder_means
    p, n = means.shape
    if n <= p:
        raise SingularCovarianceError(f"need more units than confounders (N={n}, P={p})")
    variances = np.var(means, axis=1, ddof=1)
    if np.any(variances == 0.0):
        idx = int(np.flatnonzero(variances == 0.0)[0])
        raise SingularCovarianceError(f"confounder {idx} is constant (zero variance)")
    cov = np.cov(means, ddof=1)
    cov = np.atleast_2d(cov)
    cov = cov + np.eye(p) * (ridge_scale * np.trace(cov) / p)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(f"singular covariance: {exc}") from exc
    factor = solve_triangular(chol, np.eye(p), lower=True)
    return CovarianceTransform(factor)


def rv_distance(qa: np.ndarray, qb: np.ndarray) -> float:
    """Root-mean-square gap of two quantile vectors, scaled by 1/K.

    For point masses this reduces to |a - b| / sqrt(K); the common factor
    never changes which candidate pair attains a minimum.
    """
    qa = np.asarray(qa, dtype=np.float64)
    qb = np.asarray(qb, dtype=np.float64)
    if qa.shape != qb.shape:
        raise ValueError(f"quantile count mismatch: {qa.shape} vs {qb.shape}")
    k = qa.size
    return float(np.sqrt(np.sum((qa - qb) ** 2)) / k)


def _quadratic_form(vec: np.ndarray, w: WeightMatrix, s: CovarianceTransform) -> float:
    y = s.factor @ vec
    return float(np.sum(w.diag * y * y))


def mahalanobis_weighted(delta, w: WeightMatrix, s: CovarianceTransform) -> float:
    """Weighted Mahalanobis distance of a signed confounder delta."""
    delta = np.asarray(delta, dtype=np.float64).ravel()
    if delta.size != w.diag.size or delta.size != s.factor.shape[0]:
        raise ValueError("dimension mismatch")
    return float(np.sqrt(max(_quadratic_form(delta, w, s), 0.0)))


def prob_mahalanobis(dvec, w: WeightMatrix, s: CovarianceTransform) -> float:
    """Weighted Mahalanobis form applied to a vector of quantile distances."""
    dvec = np.asarray(dvec, dtype=np.float64).ravel()
    if np.any(dvec < 0):
        raise ValueError("quantile distances must be nonnegative")
    if dvec.size != w.diag.size or dvec.size != s.factor.shape[0]:
        raise ValueError("dimension mismatch")
    return float(np.sqrt(max(_quadratic_form(dvec, w, s), 0.0)))


def _quantile_dist_matrix(q: np.ndarray) -> np.ndarray:
    """Pairwise quantile distances from an (N, K) quantile matrix."""
    k = q.shape[1]
    d = cdist(q, q) / k
    np.fill_diagonal(d, 0.0)
    return d


@dataclass(eq=False)
class PairDistanceCache:
    """Weight-independent pairwise quantities, built once per dataset.

    ``treat_dist`` and ``conf_dist`` hold quantile distances between the
    treatment and confounder variables of every unit pair.  Quantile vectors
    of the per-pair ratio variable (confounder gap over treatment gap) are
    computed lazily and memoized: only pairs that actually get matched during
    the weight search need them.
    """

    k_count: int
    epsilon: float
    mc: MonteCarloConfig
    treat_dist: np.ndarray
    conf_dist: np.ndarray
    treatment: tuple
    confounders: tuple
    _ratio_memo: dict = field(default_factory=dict)

    @classmethod
    def build(cls, dataset: StudyDataset, k_count: int = 100,
              mc: MonteCarloConfig | None = None,
              epsilon: float = 1e-6) -> "PairDistanceCache":
        if mc is None:
            mc = MonteCarloConfig(seed=0)
        qx = quantile_matrix(dataset.treatment, k_count)
        treat = _quantile_dist_matrix(qx)
        conf = np.stack([_quantile_dist_matrix(quantile_matrix(row, k_count))
                         for row in dataset.confounders])
        return cls(k_count, epsilon, mc, treat, conf,
                   dataset.treatment, dataset.confounders)

    @property
    def n_units(self) -> int:
        return self.treat_dist.shape[0]

    @property
    def n_confounders(self) -> int:
        return self.conf_dist.shape[0]

    def ratio_quantile_vector(self, p: int, u: int, v: int) -> np.ndarray:
        """Quantiles of |Z_u - Z_v| / max(|X_u - X_v|, eps) for one pair."""
        if u > v:
            u, v = v, u
        key = (p, u, v)
        hit = self._ratio_memo.get(key)
        if hit is None:
            num = diff_abs_distribution(self.confounders[p][u], self.confounders[p][v],
                                        self.mc.substream(p, u, v, 0))
            den = diff_abs_distribution(self.treatment[u], self.treatment[v],
                                        self.mc.substream(p, u, v, 1))
            ratio = ratio_distribution(num, den, self.epsilon,
                                       self.mc.substream(p, u, v, 2))
            hit = quantiles(ratio, self.k_count)
            self._ratio_memo[key] = hit
        return hit

    def mean_ratio_quantiles(self, p: int, pairs) -> np.ndarray:
        """Average the per-pair ratio quantile vectors over a set of pairs."""
        acc = np.zeros(self.k_count)
        count = 0
        for u, v in pairs:
            acc += self.ratio_quantile_vector(p, u, v)
            count += 1
        if count == 0:
            raise ValueError("no pairs to average over")
        return acc / count


def _numerator_matrix(conf_dist: np.ndarray, w: WeightMatrix,
                      s: CovarianceTransform) -> np.ndarray:
    """Pairwise prob_mahalanobis values from stacked per-confounder distances."""
    m = s.factor.T @ np.diag(w.diag) @ s.factor
    sq = np.einsum("pq,pij,qij->ij", m, conf_dist, conf_dist, optimize=True)
    return np.sqrt(np.clip(sq, 0.0, None))


def unit_distance(u: int, v: int, cache: PairDistanceCache, w: WeightMatrix,
                  s: CovarianceTransform, epsilon: float) -> float:
    """Per-pair matching distance: confounder dissimilarity over treatment gap.

    The numerator carries the epsilon so that pairs with identical confounders
    still order by treatment gap; the denominator is clamped at epsilon to
    keep the distance finite for coincident treatments.
    """
    if u == v:
        raise ValueError("a unit has no distance to itself")
    dvec = cache.conf_dist[:, u, v]
    num = prob_mahalanobis(dvec, w, s)
    return (num + epsilon) / max(cache.treat_dist[u, v], epsilon)


def pair_distance_matrix(cache: PairDistanceCache, w: WeightMatrix,
                         s: CovarianceTransform, epsilon: float) -> np.ndarray:
    """All-pairs unit_distance as an (N, N) matrix (diagonal is +inf)."""
    num = _numerator_matrix(cache.conf_dist, w, s)
    out = (num + epsilon) / np.maximum(cache.treat_dist, epsilon)
    np.fill_diagonal(out, np.inf)
    return out


def det_confounder_distance_matrix(means: np.ndarray, w: WeightMatrix,
                                   s: CovarianceTransform) -> np.ndarray:
    """Pairwise signed-delta weighted Mahalanobis distances of point values.

    ``means`` is the (P, N) matrix of per-unit confounder values.
    """
    y = (np.sqrt(w.diag)[:, None] * (s.factor @ means)).T
    d = cdist(y, y)
    np.fill_diagonal(d, 0.0)
    return d


def det_pair_distance_matrix(means: np.ndarray, treatment_values: np.ndarray,
                             w: WeightMatrix, s: CovarianceTransform,
                             epsilon: float, k_count: int) -> np.ndarray:
    """Deterministic continuous-treatment matching distance on point values.

    Both the confounder distance and the treatment gap are divided by
    sqrt(K), putting them on the quantile-distance scale so the epsilon
    guard matches the probabilistic path exactly.
    """
    scale = np.sqrt(k_count)
    num = det_confounder_distance_matrix(means, w, s) / scale
    gaps = np.abs(treatment_values[:, None] - treatment_values[None, :]) / scale
    out = (num + epsilon) / np.maximum(gaps, epsilon)
    np.fill_diagonal(out, np.inf)
    return out
