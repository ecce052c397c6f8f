"""Balance diagnostics on a matching and treatment-effect testing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .core import MatchedPairSet, StudyDataset

__all__ = [
    "ConfounderBalance",
    "BalanceReport",
    "AteResult",
    "smd",
    "paired_t_pvalue",
    "ks_two_sample",
    "balance_report",
    "ate",
    "wilcoxon_signed_rank",
    "causal_test",
]


def smd(values_treated, values_control) -> float:
    """Standardized mean difference of matched treated vs control values.

    Absolute mean gap over the pooled standard deviation (sample variances,
    n-1 denominator).  Returns 0 when both sides are constant and equal, and
    +inf when both are constant but different.
    """
    a = np.asarray(values_treated, dtype=np.float64)
    b = np.asarray(values_control, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("smd needs at least 2 pairs")
    gap = abs(float(np.mean(a)) - float(np.mean(b)))
    pooled = math.sqrt((np.var(a, ddof=1) + np.var(b, ddof=1)) / 2.0)
    if pooled == 0.0:
        return 0.0 if gap == 0.0 else math.inf
    return gap / pooled


def paired_t_pvalue(a, b) -> float:
    """Two-sided paired t-test p-value; constant differences map to 1 or 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diffs = a - b
    if np.ptp(diffs) == 0.0:
        return 1.0 if diffs[0] == 0.0 else 0.0
    return float(stats.ttest_rel(a, b).pvalue)


def ks_two_sample(x, y) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic with the asymptotic p-value.

    p = Q(d * sqrt(nm/(n+m))) where Q is the Kolmogorov survival function.
    """
    x = np.sort(np.asarray(x, dtype=np.float64))
    y = np.sort(np.asarray(y, dtype=np.float64))
    if x.size == 0 or y.size == 0:
        raise ValueError("KS test needs nonempty samples")
    pooled = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, pooled, side="right") / x.size
    cdf_y = np.searchsorted(y, pooled, side="right") / y.size
    d = float(np.max(np.abs(cdf_x - cdf_y)))
    en = math.sqrt(x.size * y.size / (x.size + y.size))
    p = float(special.kolmogorov(d * en))
    return d, min(max(p, 0.0), 1.0)


def _empirical_quantiles(values: np.ndarray, k_count: int) -> np.ndarray:
    levels = np.arange(1, k_count + 1) / (k_count + 1)
    srt = np.sort(values)
    idx = np.minimum(np.ceil(levels * srt.size).astype(int) - 1, srt.size - 1)
    return srt[np.maximum(idx, 0)]


@dataclass(frozen=True)
class ConfounderBalance:
    smd: float
    ks_pvalue: float
    t_pvalue: float
    quantile_gaps: np.ndarray

    def to_dict(self) -> dict:
        return {"smd": self.smd, "ks_pvalue": self.ks_pvalue,
                "t_pvalue": self.t_pvalue,
                "quantile_gaps": [float(g) for g in self.quantile_gaps]}


@dataclass(frozen=True)
class BalanceReport:
    confounders: tuple[ConfounderBalance, ...]
    pair_count: int
    dropped_unit_count: int

    def to_dict(self) -> dict:
        return {"confounders": [c.to_dict() for c in self.confounders],
                "pair_count": self.pair_count,
                "dropped_unit_count": self.dropped_unit_count}


@dataclass(frozen=True)
class AteResult:
    estimate: float
    wilcoxon_statistic: float
    p_value: float
    n_pairs: int
    rejected: bool
    n_excluded: int = 0

    def to_dict(self) -> dict:
        return {"estimate": self.estimate,
                "wilcoxon_statistic": self.wilcoxon_statistic,
                "p_value": self.p_value, "n_pairs": self.n_pairs,
                "rejected": self.rejected, "n_excluded": self.n_excluded}


def balance_report(pairs: MatchedPairSet, dataset: StudyDataset,
                   eval_truth: bool = False, k_count: int = 100,
                   scale_by_treatment_gap: bool | None = None,
                   epsilon: float = 1e-6) -> BalanceReport:
    """Per-confounder balance of the matched groups.

    With ``eval_truth`` the ground-truth columns are used (raising when they
    are absent); otherwise per-unit distribution means stand in for the noisy
    values.  For continuous treatments the compared values are the confounder
    values scaled by the per-pair treatment gap, matching how the residual
    bias feeds an effect estimate; pairs with a gap below epsilon are skipped
    there.  For binary treatments every gap is 1 and no scaling happens.
    """
    if len(pairs) == 0:
        raise ValueError("balance_report needs a nonempty pair set")
    if eval_truth:
        if dataset.truth_confounders is None or dataset.truth_treatment is None:
            raise ValueError("eval_truth requested but ground-truth columns are missing")
        zvals = dataset.truth_confounders
        tvals = dataset.truth_treatment
    else:
        zvals = dataset.confounder_means
        tvals = dataset.treatment_means
    if scale_by_treatment_gap is None:
        scale_by_treatment_gap = not dataset.is_binary_treatment

    t_idx = np.fromiter((u for u, _ in pairs), dtype=np.int64)
    c_idx = np.fromiter((v for _, v in pairs), dtype=np.int64)
    if scale_by_treatment_gap:
        gaps = tvals[t_idx] - tvals[c_idx]
        keep = np.abs(gaps) > epsilon
        if not np.any(keep):
            raise ValueError("all pairs have a degenerate treatment gap")
        t_idx, c_idx, gaps = t_idx[keep], c_idx[keep], gaps[keep]
    else:
        gaps = np.ones(t_idx.size)

    entries = []
    for p in range(dataset.n_confounders):
        a = zvals[p, t_idx] / gaps
        b = zvals[p, c_idx] / gaps
        qa = _empirical_quantiles(a, k_count)
        qb = _empirical_quantiles(b, k_count)
        entries.append(ConfounderBalance(
            smd=smd(a, b),
            ks_pvalue=ks_two_sample(a, b)[1],
            t_pvalue=paired_t_pvalue(a, b),
            quantile_gaps=np.abs(qa - qb),
        ))
    return BalanceReport(tuple(entries), len(pairs), pairs.n_dropped)


def _pair_ratios(pairs: MatchedPairSet, dataset: StudyDataset,
                 epsilon: float) -> tuple[np.ndarray, int]:
    if dataset.outcome is None:
        raise ValueError("dataset has no outcome")
    tvals = dataset.treatment_means
    y = dataset.outcome
    ratios, excluded = [], 0
    for u, v in pairs:
        gap = tvals[u] - tvals[v]
        if abs(gap) > epsilon:
            ratios.append((y[u] - y[v]) / gap)
        else:
            excluded += 1
    return np.asarray(ratios), excluded


def ate(pairs: MatchedPairSet, dataset: StudyDataset, epsilon: float = 1e-6) -> float:
    """Average treatment effect: mean per-pair outcome gap over treatment gap.

    Pairs whose observed treatments coincide (gap below epsilon) carry no
    contrast and are excluded; if every pair is excluded this raises.
    """
    ratios, _ = _pair_ratios(pairs, dataset, epsilon)
    if ratios.size == 0:
        raise ValueError("every pair has a degenerate treatment gap")
    return float(np.mean(ratios))


def wilcoxon_signed_rank(samples, mu0: float = 0.0, method: str = "auto",
                         exact_limit: int = 12) -> tuple[float, float]:
    """Two-sided Wilcoxon signed-rank test against location mu0.

    Zero differences are dropped and ties receive average ranks.  Returns
    (W+, p).  The exact p-value enumerates the 2^n sign assignments of the
    observed ranks (used for n <= ``exact_limit`` or ``method='exact'``);
    otherwise a normal approximation with tie and continuity corrections.
    """
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method {method!r}")
    d = np.asarray(samples, dtype=np.float64) - mu0
    d = d[d != 0.0]
    n = d.size
    if n < 5:
        raise ValueError(f"need at least 5 nonzero differences, got {n}")
    ranks = stats.rankdata(np.abs(d))
    w_plus = float(np.sum(ranks[d > 0]))
    use_exact = method == "exact" or (method == "auto" and n <= exact_limit)
    if use_exact:
        p = _exact_signed_rank_pvalue(ranks, w_plus)
    else:
        mu = n * (n + 1) / 4.0
        _, counts = np.unique(ranks, return_counts=True)
        tie_term = float(np.sum(counts.astype(np.float64) ** 3 - counts)) / 48.0
        sigma = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term)
        if sigma == 0.0:
            return w_plus, 1.0
        shift = w_plus - mu
        z = (shift - 0.5 * np.sign(shift)) / sigma
        p = min(1.0, 2.0 * float(stats.norm.sf(abs(z))))
    return w_plus, p


def _exact_signed_rank_pvalue(ranks: np.ndarray, w_plus: float) -> float:
    # DP over doubled ranks (average ranks are multiples of 1/2) counts how
    # many of the 2^n sign assignments reach each possible W+.
    doubled = np.rint(ranks * 2).astype(np.int64)
    total = int(np.sum(doubled))
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    counts /= 2.0 ** len(ranks)
    target = int(np.rint(w_plus * 2))
    p_ge = float(np.sum(counts[target:]))
    p_le = float(np.sum(counts[: target + 1]))
    return min(1.0, 2.0 * min(p_ge, p_le))


def causal_test(pairs: MatchedPairSet, dataset: StudyDataset, alpha: float = 0.05,
                epsilon: float = 1e-6) -> AteResult:
    """Wilcoxon signed-rank test of the per-pair effect ratios against zero."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    ratios, excluded = _pair_ratios(pairs, dataset, epsilon)
    if ratios.size == 0:
        raise ValueError("every pair has a degenerate treatment gap")
    statistic, p = wilcoxon_signed_rank(ratios, 0.0)
    return AteResult(
        estimate=float(np.mean(ratios)),
        wilcoxon_statistic=statistic,
        p_value=p,
        n_pairs=int(ratios.size),
        rejected=bool(p < alpha),
        n_excluded=excluded,
    )
