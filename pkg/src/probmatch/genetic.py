"""Evolutionary search over diagonal weight matrices.

A candidate weight vector induces a matching (the full rematch runs for every
candidate); its fitness is a balance loss on the matched pairs.  Quantile
losses are minimized, the minimum-p-value loss is maximized.  All randomness
flows through per-candidate streams keyed by (seed, generation, slot), so
results do not depend on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import paired_t_pvalue
from .core import MatchConstraints, MatchedPairSet, StudyDataset
from .distance import (CovarianceTransform, PairDistanceCache, WeightMatrix,
                       covariance_sqrt, det_confounder_distance_matrix,
                       det_pair_distance_matrix, pair_distance_matrix,
                       _numerator_matrix)
from .matcher import (MatchRegime, MatchingError, admissibility_matrix,
                      match_binary, match_continuous)
from .stochastic import MonteCarloConfig, StochasticScalar, quantiles

__all__ = [
    "LossSpec",
    "GaConfig",
    "EvolveResult",
    "MatchContext",
    "loss_pvalue",
    "loss_quantile_deterministic",
    "loss_quantile_probabilistic",
    "evolve_weights",
]

_STATS = {"mean": np.mean, "max": np.max, "median": np.median}


@dataclass(frozen=True)
class LossSpec:
    """Balance loss selection.

    ``family`` is ``'quantile'`` (reduce quantile-gap sets, minimized) or
    ``'pvalue_min'`` (minimum paired t-test p-value, maximized).  For the
    quantile family ``outer`` reduces across confounders and ``inner`` across
    the K quantiles, each one of mean / max / median.
    """

    family: str = "quantile"
    outer: str = "mean"
    inner: str = "mean"
    k_count: int = 100

    def __post_init__(self):
        if self.family not in ("quantile", "pvalue_min"):
            raise ValueError(f"unknown loss family {self.family!r}")
        if self.outer not in _STATS or self.inner not in _STATS:
            raise ValueError("outer/inner statistic must be mean, max or median")
        if self.k_count < 1:
            raise ValueError("k_count must be >= 1")

    def to_dict(self) -> dict:
        return {"family": self.family, "outer": self.outer,
                "inner": self.inner, "k_count": self.k_count}

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        return cls(**d)


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 50
    generations: int = 20
    weight_bounds: tuple[float, float] = (1e-3, 1e3)
    mutation_sigma: float = 0.3
    crossover_rate: float = 0.9
    tournament_size: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        lo, hi = self.weight_bounds
        if not (0 < lo <= hi):
            raise ValueError("weight_bounds must satisfy 0 < low <= high")
        if self.mutation_sigma <= 0:
            raise ValueError("mutation_sigma must be positive")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must lie in [0, 1]")
        if self.tournament_size < 2:
            raise ValueError("tournament_size must be >= 2")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    def to_dict(self) -> dict:
        return {"population_size": self.population_size,
                "generations": self.generations,
                "weight_bounds": list(self.weight_bounds),
                "mutation_sigma": self.mutation_sigma,
                "crossover_rate": self.crossover_rate,
                "tournament_size": self.tournament_size,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "GaConfig":
        d = dict(d)
        d["weight_bounds"] = tuple(d["weight_bounds"])
        return cls(**d)


def loss_pvalue(pairs: MatchedPairSet, dataset: StudyDataset) -> float:
    """Minimum over confounders of the paired t-test p-value on matched values.

    Larger is better: a high minimum p-value means no confounder shows
    detectable imbalance between the matched groups.
    """
    if len(pairs) < 2:
        raise ValueError("p-value loss needs at least 2 pairs")
    means = dataset.confounder_means
    t_idx = np.fromiter((u for u, _ in pairs), dtype=np.int64)
    c_idx = np.fromiter((v for _, v in pairs), dtype=np.int64)
    return min(paired_t_pvalue(means[p, t_idx], means[p, c_idx])
               for p in range(dataset.n_confounders))


def _pair_ratio_values(pairs, dataset: StudyDataset, p: int, epsilon: float) -> np.ndarray:
    means = dataset.confounder_means
    tvals = dataset.treatment_means
    out = np.empty(len(pairs))
    for i, (u, v) in enumerate(pairs):
        gap = max(abs(tvals[u] - tvals[v]), epsilon)
        out[i] = abs(means[p, u] - means[p, v]) / gap
    return out


def loss_quantile_deterministic(pairs: MatchedPairSet, dataset: StudyDataset,
                                spec: LossSpec, epsilon: float = 1e-6) -> float:
    """Quantile loss on point values.

    Per confounder, the pooled sample of per-pair confounder-gap to
    treatment-gap ratios is summarized by its K quantiles and the inner
    statistic; the outer statistic reduces across confounders.
    """
    if len(pairs) < 1:
        raise ValueError("quantile loss needs at least 1 pair")
    inner = _STATS[spec.inner]
    outer = _STATS[spec.outer]
    per_conf = []
    for p in range(dataset.n_confounders):
        sample = StochasticScalar.empirical(_pair_ratio_values(pairs, dataset, p, epsilon))
        per_conf.append(inner(quantiles(sample, spec.k_count)))
    return float(outer(per_conf))


def loss_quantile_probabilistic(pairs: MatchedPairSet, dataset: StudyDataset,
                                spec: LossSpec, mc: MonteCarloConfig,
                                epsilon: float = 1e-6,
                                cache: PairDistanceCache | None = None) -> float:
    """Quantile loss on random variables.

    For each pair and confounder the quantiles of the ratio variable
    (absolute confounder difference over absolute treatment difference) are
    computed; quantiles are averaged across pairs level by level before the
    inner and outer reductions.
    """
    if len(pairs) < 1:
        raise ValueError("quantile loss needs at least 1 pair")
    if cache is None:
        cache = PairDistanceCache.build(dataset, spec.k_count, mc, epsilon)
    elif cache.k_count != spec.k_count:
        raise ValueError("cache quantile count does not match the loss spec")
    inner = _STATS[spec.inner]
    outer = _STATS[spec.outer]
    per_conf = [inner(cache.mean_ratio_quantiles(p, pairs))
                for p in range(dataset.n_confounders)]
    return float(outer(per_conf))


@dataclass(eq=False)
class MatchContext:
    """Precomputed matching problem: rematch and score candidate weights.

    ``probabilistic`` selects the quantile-distance engine; otherwise the
    classical signed-delta distances on per-unit point values are used.
    """

    dataset: StudyDataset
    regime: MatchRegime
    constraints: MatchConstraints
    loss_spec: LossSpec
    probabilistic: bool
    mc: MonteCarloConfig
    cov: CovarianceTransform
    adm: np.ndarray
    cache: PairDistanceCache | None

    @classmethod
    def build(cls, dataset: StudyDataset, regime: MatchRegime,
              constraints: MatchConstraints, loss_spec: LossSpec,
              probabilistic: bool = True,
              mc: MonteCarloConfig | None = None,
              cov: CovarianceTransform | None = None) -> "MatchContext":
        if mc is None:
            mc = MonteCarloConfig(seed=0)
        if cov is None:
            cov = covariance_sqrt(dataset)
        adm = admissibility_matrix(dataset, constraints, mc)
        cache = None
        if probabilistic or loss_spec.family == "quantile":
            cache = PairDistanceCache.build(dataset, loss_spec.k_count, mc,
                                            constraints.epsilon)
        return cls(dataset, regime, constraints, loss_spec, probabilistic,
                   mc, cov, adm, cache)

    def distance_matrix(self, w: WeightMatrix) -> np.ndarray:
        eps = self.constraints.epsilon
        if self.regime is MatchRegime.BINARY_BIPARTITE:
            if self.probabilistic:
                # full ratio distance: on noiseless binary data the treatment
                # distance is the same for every treated-control pair, so the
                # ranking reduces to the classical confounder distance; with
                # noisy treatments it favors confidently different pairs
                return pair_distance_matrix(self.cache, w, self.cov, eps)
            return det_confounder_distance_matrix(self.dataset.confounder_means,
                                                  w, self.cov)
        if self.probabilistic:
            return pair_distance_matrix(self.cache, w, self.cov, eps)
        return det_pair_distance_matrix(self.dataset.confounder_means,
                                        self.dataset.treatment_means,
                                        w, self.cov, eps, self.loss_spec.k_count)

    def match(self, w: WeightMatrix) -> MatchedPairSet:
        dist = self.distance_matrix(w)
        if self.regime is MatchRegime.BINARY_BIPARTITE:
            return match_binary(self.dataset, dist, self.constraints, adm=self.adm)
        return match_continuous(self.dataset, dist, self.constraints, adm=self.adm)

    def loss(self, pairs: MatchedPairSet) -> float:
        if self.loss_spec.family == "pvalue_min":
            return loss_pvalue(pairs, self.dataset)
        if self.probabilistic:
            return loss_quantile_probabilistic(pairs, self.dataset, self.loss_spec,
                                               self.mc, self.constraints.epsilon,
                                               cache=self.cache)
        return loss_quantile_deterministic(pairs, self.dataset, self.loss_spec,
                                           self.constraints.epsilon)

    def score(self, pairs: MatchedPairSet) -> float:
        """Loss in minimization orientation (p-value losses are negated)."""
        value = self.loss(pairs)
        return -value if self.loss_spec.family == "pvalue_min" else value

    def evaluate(self, w: WeightMatrix) -> tuple[float, MatchedPairSet | None]:
        try:
            pairs = self.match(w)
            if len(pairs) == 0:
                return np.inf, None
            return self.score(pairs), pairs
        except (MatchingError, ValueError):
            return np.inf, None


@dataclass(eq=False)
class EvolveResult:
    weights: WeightMatrix
    pairs: MatchedPairSet
    loss: float
    score_history: list[float] = field(default_factory=list)
    n_pairs: int = 0


def _candidate_rng(seed: int, generation: int, slot: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, generation, slot)))


def evolve_weights(dataset: StudyDataset, regime: MatchRegime,
                   constraints: MatchConstraints, spec: LossSpec, ga: GaConfig,
                   probabilistic: bool = True,
                   mc: MonteCarloConfig | None = None,
                   cov: CovarianceTransform | None = None,
                   context: MatchContext | None = None) -> EvolveResult:
    """Real-coded GA over diagonal weights; returns the best weight vector,
    its induced matching, and its loss (in the family's native orientation).

    Tournament selection, uniform crossover, multiplicative log-normal
    mutation, elitism of one.  Candidates whose matching fails or yields no
    pairs receive worst fitness.  Deterministic given ``ga.seed``.
    """
    if context is None:
        context = MatchContext.build(dataset, regime, constraints, spec,
                                     probabilistic=probabilistic, mc=mc, cov=cov)
    p = dataset.n_confounders
    log_lo, log_hi = np.log(ga.weight_bounds[0]), np.log(ga.weight_bounds[1])

    population = [np.exp(_candidate_rng(ga.seed, 0, i).uniform(log_lo, log_hi, size=p))
                  for i in range(ga.population_size)]
    scores = np.empty(ga.population_size)
    for i, w in enumerate(population):
        scores[i], _ = context.evaluate(WeightMatrix(w))

    history = [float(np.min(scores))]
    for gen in range(1, ga.generations + 1):
        best_idx = int(np.argmin(scores))
        new_pop = [population[best_idx].copy()]
        new_scores = [scores[best_idx]]
        for slot in range(1, ga.population_size):
            rng = _candidate_rng(ga.seed, gen, slot)

            def pick(rng=rng):
                idx = rng.integers(0, ga.population_size, size=ga.tournament_size)
                return population[idx[np.argmin(scores[idx])]]

            parent_a, parent_b = pick(), pick()
            if rng.random() < ga.crossover_rate:
                mask = rng.random(p) < 0.5
                child = np.where(mask, parent_a, parent_b)
            else:
                child = parent_a.copy()
            child = child * np.exp(rng.normal(0.0, ga.mutation_sigma, size=p))
            child = np.exp(np.clip(np.log(child), log_lo, log_hi))
            new_pop.append(child)
            new_scores.append(context.evaluate(WeightMatrix(child))[0])
        population = new_pop
        scores = np.asarray(new_scores)
        history.append(float(np.min(scores)))

    best_idx = int(np.argmin(scores))
    best_w = WeightMatrix(population[best_idx])
    best_score, best_pairs = context.evaluate(best_w)
    if best_pairs is None:
        raise MatchingError("no candidate weight produced a nonempty matching")
    loss = -best_score if spec.family == "pvalue_min" else best_score
    return EvolveResult(best_w, best_pairs, float(loss), history, len(best_pairs))
