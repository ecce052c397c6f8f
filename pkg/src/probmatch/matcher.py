"""Greedy pair construction under binary-bipartite and continuous-nonbipartite
regimes, with probabilistic admissibility constraints.

Both matchers are deterministic: treated units are processed in ascending
index order (bipartite), candidate pairs in ascending distance with
lexicographic tie-breaking (nonbipartite).  Without replacement a matched unit
is removed from the pool; with replacement a pair is accepted whenever at
least one of its endpoints is still unmatched, which gives every unit its
nearest admissible partner while keeping the pair set small.
"""

from __future__ import annotations

from enum import Enum

import numpy as np
from numba import njit

from .core import MatchConstraints, MatchedPairSet, StudyDataset
from .stochastic import (MonteCarloConfig, diff_abs_distribution,
                         pairwise_prob_diff_less, prob_greater_than,
                         prob_less_than)

__all__ = [
    "MatchRegime",
    "MatchingError",
    "NoAdmissiblePairsError",
    "infer_regime",
    "admissible",
    "admissibility_matrix",
    "treated_control_split",
    "match_binary",
    "match_continuous",
]


class MatchRegime(Enum):
    BINARY_BIPARTITE = "binary_bipartite"
    CONTINUOUS_NONBIPARTITE = "continuous_nonbipartite"


class MatchingError(RuntimeError):
    """Matching cannot proceed (empty groups, no admissible pairs)."""


class NoAdmissiblePairsError(MatchingError):
    pass


def infer_regime(dataset: StudyDataset) -> MatchRegime:
    if dataset.is_binary_treatment:
        return MatchRegime.BINARY_BIPARTITE
    return MatchRegime.CONTINUOUS_NONBIPARTITE


def admissible(u: int, v: int, dataset: StudyDataset,
               constraints: MatchConstraints,
               mc: MonteCarloConfig | None = None) -> bool:
    """Whether units u, v may be matched under the caliper and treatment rules.

    The pair passes when, for each confounder p with a caliper c_p,
    Pr(|Z_u - Z_v| > c_p) < caliper_prob_threshold, and the probability of a
    treatment gap below min_treatment_diff is at most
    treatment_prob_threshold.  With point-mass data both checks are plain
    threshold comparisons.
    """
    if u == v:
        raise ValueError("a unit cannot be matched with itself")
    if mc is None:
        mc = MonteCarloConfig(seed=0)
    if constraints.calipers is not None:
        for p, cal in enumerate(constraints.calipers):
            d = diff_abs_distribution(dataset.confounders[p][u], dataset.confounders[p][v],
                                      mc.substream(p, u, v))
            if prob_greater_than(d, cal) >= constraints.caliper_prob_threshold:
                return False
    gap = diff_abs_distribution(dataset.treatment[u], dataset.treatment[v],
                                mc.substream(-1, u, v))
    return prob_less_than(gap, constraints.min_treatment_diff) \
        <= constraints.treatment_prob_threshold


def admissibility_matrix(dataset: StudyDataset, constraints: MatchConstraints,
                         mc: MonteCarloConfig | None = None) -> np.ndarray:
    """Vectorized all-pairs admissibility (diagonal False)."""
    ok = pairwise_prob_diff_less(dataset.treatment, constraints.min_treatment_diff, mc) \
        <= constraints.treatment_prob_threshold
    if constraints.calipers is not None:
        for p, cal in enumerate(constraints.calipers):
            exceed = pairwise_prob_diff_less(dataset.confounders[p], cal, mc, greater=True)
            ok &= exceed < constraints.caliper_prob_threshold
    np.fill_diagonal(ok, False)
    return ok


def treated_control_split(dataset: StudyDataset) -> tuple[np.ndarray, np.ndarray]:
    """Split units by expected treatment >= 0.5 (treated) vs < 0.5 (control)."""
    means = dataset.treatment_means
    treated = np.flatnonzero(means >= 0.5)
    control = np.flatnonzero(means < 0.5)
    return treated, control


@njit(cache=True)
def _greedy_bipartite(dist, adm, with_replacement):  # pragma: no cover - jitted
    n_t, n_c = dist.shape
    taken = np.zeros(n_c, dtype=np.bool_)
    out = np.full(n_t, -1, dtype=np.int64)
    for t in range(n_t):
        best = -1
        best_d = np.inf
        for c in range(n_c):
            if adm[t, c] and (with_replacement or not taken[c]):
                d = dist[t, c]
                if d < best_d:
                    best_d = d
                    best = c
        if best >= 0:
            out[t] = best
            taken[best] = True
    return out


@njit(cache=True)
def _greedy_nonbipartite(order_u, order_v, n_units, with_replacement):  # pragma: no cover
    used = np.zeros(n_units, dtype=np.bool_)
    take = np.zeros(order_u.size, dtype=np.bool_)
    remaining = n_units
    for i in range(order_u.size):
        if remaining <= 0:
            break
        u = order_u[i]
        v = order_v[i]
        if with_replacement:
            if not used[u] or not used[v]:
                take[i] = True
                remaining -= int(not used[u]) + int(not used[v])
                used[u] = True
                used[v] = True
        else:
            if not used[u] and not used[v]:
                take[i] = True
                used[u] = True
                used[v] = True
                remaining -= 2
    return take


def _distance_to_matrix(distance, n: int) -> np.ndarray:
    if callable(distance):
        out = np.empty((n, n))
        for u in range(n):
            out[u, u] = np.inf
            for v in range(u + 1, n):
                out[u, v] = out[v, u] = float(distance(u, v))
        return out
    mat = np.asarray(distance, dtype=np.float64)
    if mat.shape != (n, n):
        raise ValueError(f"distance matrix must be ({n}, {n})")
    return mat


def match_binary(dataset: StudyDataset, distance, constraints: MatchConstraints,
                 adm: np.ndarray | None = None,
                 mc: MonteCarloConfig | None = None) -> MatchedPairSet:
    """Greedy nearest-neighbor bipartite matching.

    ``distance`` is an (N, N) confounder-distance matrix or a callable
    ``(u, v) -> float``.  Treated units (expected treatment >= 0.5) are
    processed in ascending index order and matched to the admissible control
    at minimal distance, ties going to the smaller control index.  Treated
    units with no admissible control are dropped and counted.
    """
    n = dataset.n_units
    treated, control = treated_control_split(dataset)
    if treated.size == 0 or control.size == 0:
        raise MatchingError("empty treated or control group")
    dist = _distance_to_matrix(distance, n)
    if adm is None:
        adm = admissibility_matrix(dataset, constraints, mc)
    sub_d = np.ascontiguousarray(dist[np.ix_(treated, control)])
    sub_a = np.ascontiguousarray(adm[np.ix_(treated, control)])
    picks = _greedy_bipartite(sub_d, sub_a, constraints.with_replacement)
    pairs = [(int(treated[t]), int(control[c])) for t, c in enumerate(picks) if c >= 0]
    result = MatchedPairSet(pairs, n_dropped=int(np.sum(picks < 0)))
    if not constraints.with_replacement:
        result.check_no_reuse()
    return result


def match_continuous(dataset: StudyDataset, distance, constraints: MatchConstraints,
                     adm: np.ndarray | None = None,
                     mc: MonteCarloConfig | None = None) -> MatchedPairSet:
    """Greedy nonbipartite matching over all admissible unordered pairs.

    Pairs are sorted by ascending distance with (min id, max id) tie-breaking
    and accepted greedily.  Within an accepted pair the unit with the larger
    expected treatment takes the treated role.
    """
    n = dataset.n_units
    if n < 2:
        raise MatchingError("need at least two units")
    dist = _distance_to_matrix(distance, n)
    if adm is None:
        adm = admissibility_matrix(dataset, constraints, mc)
    iu, iv = np.triu_indices(n, k=1)
    keep = adm[iu, iv]
    iu, iv, d = iu[keep], iv[keep], dist[iu, iv][keep]
    if iu.size == 0:
        raise NoAdmissiblePairsError("no admissible pairs")
    order = np.lexsort((iv, iu, d))
    take = _greedy_nonbipartite(iu[order], iv[order], n, constraints.with_replacement)
    means = dataset.treatment_means
    pairs = []
    for u, v in zip(iu[order][take], iv[order][take]):
        u, v = int(u), int(v)
        if means[v] > means[u]:
            u, v = v, u
        pairs.append((u, v))
    covered = {i for pair in pairs for i in pair}
    result = MatchedPairSet(pairs, n_dropped=n - len(covered))
    if not constraints.with_replacement:
        result.check_no_reuse()
    return result
