"""Reproducible generators for the synthetic studies.

Three scenario families are covered: a latent binary treatment inferred by a
calibrated classifier over two Gaussian classes, a latent binary confounder
of a continuous treatment, and a location-diary study where the daily time
spent in entertainment venues is corrupted through a label confusion matrix.
Every generator is a pure function of its configuration and seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.svm import SVC

from .core import StudyDataset, save_dataset
from .matcher import MatchRegime
from .stochastic import PROB_SUM_TOL, StochasticScalar

__all__ = [
    "GaussianClassConfig",
    "LinearScorer",
    "SigmoidCalibration",
    "ConfusionMatrix",
    "MobilityModel",
    "ScenarioCell",
    "LOCATION_LABELS",
    "gen_gaussian_classes",
    "fit_classifier_with_calibration",
    "study_from_classifier",
    "gen_scenario_treatment",
    "gen_scenario_confounder",
    "gen_outcome",
    "poisson_binomial_pmf",
    "gen_location_study",
    "default_confusion_matrix",
    "default_mobility_model",
    "build_noisy_treatment_cell",
    "build_noisy_confounder_cell",
    "build_location_cell",
    "build_spam_analog_cell",
]


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, *tags)))


def _sigmoid(t: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(t, -500, 500)))


# ---------------------------------------------------------------------------
# Gaussian classes and probability calibration


@dataclass(frozen=True)
class GaussianClassConfig:
    """Two Gaussian classes in M dimensions: positives at +1 with spread
    sigma1, negatives at -1 with spread sigma2."""

    m_dims: int = 2
    sigma1: float = 1.0
    sigma2: float = 1.0
    n_train: int = 400
    n_study: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.m_dims < 1 or self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("invalid Gaussian class configuration")
        if self.n_train < 2 or self.n_study < 2:
            raise ValueError("counts must be >= 2")


@dataclass(frozen=True)
class LinearScorer:
    weights: np.ndarray
    bias: float

    def scores(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights + self.bias


@dataclass(frozen=True)
class SigmoidCalibration:
    """Score-to-probability map Pr(L=1 | s) = 1 / (1 + exp(a*s + b))."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("calibration parameters must be finite")

    def predict(self, scores: np.ndarray) -> np.ndarray:
        return _sigmoid(-(self.a * np.asarray(scores) + self.b))


def _features_for_labels(labels: np.ndarray, cfg: GaussianClassConfig,
                         rng: np.random.Generator) -> np.ndarray:
    centers = np.where(labels[:, None] == 1, 1.0, -1.0)
    spread = np.where(labels[:, None] == 1, cfg.sigma1, cfg.sigma2)
    return centers + spread * rng.standard_normal((labels.size, cfg.m_dims))


def gen_gaussian_classes(cfg: GaussianClassConfig, n: int | None = None,
                         stream: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Balanced sample of the two classes: (features, binary labels)."""
    n = cfg.n_train if n is None else n
    rng = _rng(cfg.seed, 11, stream)
    labels = np.zeros(n, dtype=np.int64)
    labels[: n // 2] = 1
    rng.shuffle(labels)
    return _features_for_labels(labels, cfg, rng), labels


def _fit_platt_sigmoid(scores: np.ndarray, labels: np.ndarray,
                       max_iter: int = 100) -> SigmoidCalibration:
    """Newton fit of Pr(L=1|s) = 1/(1+exp(a*s+b)) with smoothed targets.

    The smoothed targets (N+1)/(N+2) and 1/(N+2) regularize the fit away
    from hard 0/1 probabilities on finite calibration samples.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    prior1 = float(np.sum(labels == 1))
    prior0 = float(labels.size - prior1)
    t = np.where(labels == 1, (prior1 + 1.0) / (prior1 + 2.0), 1.0 / (prior0 + 2.0))

    def objective(a, b):
        z = a * scores + b
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-z)),
                                     (t - 1.0) * z + np.log1p(np.exp(z)))))

    a, b = 0.0, np.log((prior0 + 1.0) / (prior1 + 1.0))
    fval = objective(a, b)
    for _ in range(max_iter):
        z = a * scores + b
        p = _sigmoid(-z)
        q = 1.0 - p
        pq = np.maximum(p * q, 1e-300)
        h11 = float(np.sum(scores * scores * pq)) + 1e-12
        h22 = float(np.sum(pq)) + 1e-12
        h21 = float(np.sum(scores * pq))
        d = t - p
        g1 = float(np.sum(scores * d))
        g2 = float(np.sum(d))
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= 1e-10:
            new_a, new_b = a + step * da, b + step * db
            new_f = objective(new_a, new_b)
            if new_f < fval + 1e-4 * step * gd:
                a, b, fval = new_a, new_b, new_f
                break
            step /= 2.0
        else:
            break
    return SigmoidCalibration(a=a, b=b)


def fit_classifier_with_calibration(features: np.ndarray, labels: np.ndarray,
                                    seed: int,
                                    cal_features: np.ndarray | None = None,
                                    cal_labels: np.ndarray | None = None,
                                    cv_folds: int = 3,
                                    ) -> tuple[LinearScorer, SigmoidCalibration]:
    """Fit a linear max-margin scorer, then a sigmoid on held-out scores.

    With an explicit calibration sample the scorer uses all of ``features``
    and the sigmoid is fit on the calibration scores.  Otherwise the sigmoid
    is fit on out-of-fold decision scores (seeded ``cv_folds``-fold split),
    so every point contributes to both the scorer and its calibration without
    the sigmoid ever seeing in-sample scores.
    """
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        raise ValueError("need both classes to fit a classifier")
    if cal_features is None:
        perm = _rng(seed, 13).permutation(labels.size)
        oof_scores = np.empty(labels.size)
        for fold in range(cv_folds):
            test = perm % cv_folds == fold
            if np.unique(labels[~test]).size < 2:
                raise ValueError("a fold lost one of the classes; use a larger sample")
            m = SVC(kernel="linear", C=1.0)
            m.fit(features[~test], labels[~test])
            oof_scores[test] = features[test] @ m.coef_[0] + m.intercept_[0]
        calibration = _fit_platt_sigmoid(oof_scores, labels)
    model = SVC(kernel="linear", C=1.0)
    model.fit(features, labels)
    scorer = LinearScorer(np.array(model.coef_[0]), float(model.intercept_[0]))
    if cal_features is not None:
        calibration = _fit_platt_sigmoid(scorer.scores(np.asarray(cal_features)),
                                         np.asarray(cal_labels))
    return scorer, calibration


def _bernoulli_cell(p: float) -> StochasticScalar:
    if p <= 0.0:
        return StochasticScalar.point_mass(0.0)
    if p >= 1.0:
        return StochasticScalar.point_mass(1.0)
    return StochasticScalar.discrete([0.0, 1.0], [1.0 - p, p])


def study_from_classifier(cfg: GaussianClassConfig, scorer: LinearScorer,
                          calibration: SigmoidCalibration, stream: int = 1,
                          labels: np.ndarray | None = None,
                          ) -> tuple[np.ndarray, np.ndarray, list[StochasticScalar]]:
    """Score a fresh study sample: (true labels, hard labels, Bernoulli cells).

    ``labels`` can inject scenario-specific class assignments; by default a
    balanced sample is drawn.
    """
    rng = _rng(cfg.seed, 17, stream)
    if labels is None:
        labels = np.zeros(cfg.n_study, dtype=np.int64)
        labels[: cfg.n_study // 2] = 1
        rng.shuffle(labels)
    features = _features_for_labels(labels, cfg, rng)
    s = scorer.scores(features)
    l_tilde = (s >= 0).astype(np.float64)
    probs = calibration.predict(s)
    cells = [_bernoulli_cell(float(p)) for p in probs]
    return labels.astype(np.float64), l_tilde, cells


# ---------------------------------------------------------------------------
# scenario variable models


def gen_scenario_treatment(l_values: np.ndarray, alphas: tuple[float, float],
                           seed: int,
                           noise_variances: tuple[float, float] = (1.0, 2.0),
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Confounders driven by a latent binary treatment: Z_i = alpha_i * L + e_i."""
    rng = _rng(seed, 23)
    l_values = np.asarray(l_values, dtype=np.float64)
    z1 = alphas[0] * l_values + rng.normal(0.0, np.sqrt(noise_variances[0]), l_values.size)
    z2 = alphas[1] * l_values + rng.normal(0.0, np.sqrt(noise_variances[1]), l_values.size)
    return z1, z2


def gen_scenario_confounder(n: int, alphas: tuple[float, float], seed: int,
                            noise_variance: float = 1.0,
                            ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous treatment with a latent binary confounder.

    X ~ U[0,1]; L ~ Bernoulli(sigmoid(alpha0 + alpha1 * X)); the observed
    continuous confounder is Z1 = alpha1 * X + e1.
    """
    rng = _rng(seed, 29)
    x = rng.uniform(0.0, 1.0, n)
    l = (rng.uniform(0.0, 1.0, n) < _sigmoid(alphas[0] + alphas[1] * x)).astype(np.float64)
    z1 = alphas[1] * x + rng.normal(0.0, np.sqrt(noise_variance), n)
    return x, l, z1


def gen_outcome(l_values: np.ndarray, z_columns, betas, seed: int,
                uniform_high: float = 4.0, noise_sd: float = 1.0) -> np.ndarray:
    """Outcome model: beta0*L + sum_i beta_i*Z_i + U[0, high] + Gaussian noise.

    Noise draws depend only on the seed, so the output is linear in each beta
    coefficient for a fixed seed.
    """
    rng = _rng(seed, 31)
    l_values = np.asarray(l_values, dtype=np.float64)
    y = betas[0] * l_values
    for beta, z in zip(betas[1:], z_columns):
        y = y + beta * np.asarray(z, dtype=np.float64)
    n_u = rng.uniform(0.0, uniform_high, l_values.size) if uniform_high > 0 \
        else np.zeros(l_values.size)
    e_n = rng.normal(0.0, noise_sd, l_values.size) if noise_sd > 0 \
        else np.zeros(l_values.size)
    return y + n_u + e_n


# ---------------------------------------------------------------------------
# location diary scenario

LOCATION_LABELS = ("home", "work", "college", "entertainment", "food", "shops", "other")
_ENT = LOCATION_LABELS.index("entertainment")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows indexed by predicted label, giving the true-label distribution."""

    labels: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        n = len(self.labels)
        if rows.shape != (n, n):
            raise ValueError(f"confusion rows must be ({n}, {n})")
        if np.any(rows < 0):
            raise ValueError("negative confusion entry")
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > PROB_SUM_TOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"confusion row {self.labels[bad]!r} sums to {sums[bad]!r}")
        rows = np.ascontiguousarray(rows)
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", tuple(self.labels))


def default_confusion_matrix(correct_rate: float = 0.8) -> ConfusionMatrix:
    """Reported corruption of the entertainment label, identity-dominated rows
    elsewhere.

    The published entertainment percentages (41/4/4/4/33/9) sum to 0.95; they
    are renormalized proportionally so the row is a distribution.
    """
    n = len(LOCATION_LABELS)
    rows = np.full((n, n), (1.0 - correct_rate) / (n - 1))
    np.fill_diagonal(rows, correct_rate)
    ent_row = {"entertainment": 0.41, "college": 0.04, "work": 0.04,
               "shops": 0.04, "food": 0.33, "other": 0.09, "home": 0.0}
    raw = np.array([ent_row[lab] for lab in LOCATION_LABELS])
    rows[_ENT] = raw / raw.sum()
    return ConfusionMatrix(LOCATION_LABELS, rows)


@dataclass(frozen=True)
class MobilityModel:
    """First-order hourly label process: stay with probability ``dwell``,
    otherwise redraw from the stationary distribution."""

    stationary: np.ndarray
    dwell: float = 0.8

    def __post_init__(self):
        st = np.asarray(self.stationary, dtype=np.float64)
        if st.size != len(LOCATION_LABELS) or np.any(st < 0) \
                or abs(st.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError("stationary must be a distribution over the 7 labels")
        if not 0.0 <= self.dwell < 1.0:
            raise ValueError("dwell must lie in [0, 1)")
        st = np.ascontiguousarray(st)
        st.flags.writeable = False
        object.__setattr__(self, "stationary", st)

    def sample_day(self, rng: np.random.Generator, hours: int = 24) -> np.ndarray:
        labels = np.empty(hours, dtype=np.int64)
        labels[0] = rng.choice(len(LOCATION_LABELS), p=self.stationary)
        for t in range(1, hours):
            if rng.random() < self.dwell:
                labels[t] = labels[t - 1]
            else:
                labels[t] = rng.choice(len(LOCATION_LABELS), p=self.stationary)
        return labels


def default_mobility_model() -> MobilityModel:
    # heavy dwell persistence gives the daily entertainment fraction a wide
    # spread, so minimum-gap thresholds up to 0.4 leave matchable pairs
    stationary = {"home": 0.27, "work": 0.20, "college": 0.06, "entertainment": 0.25,
                  "food": 0.09, "shops": 0.07, "other": 0.06}
    return MobilityModel(np.array([stationary[lab] for lab in LOCATION_LABELS]),
                         dwell=0.98)


def poisson_binomial_pmf(probs) -> np.ndarray:
    """Exact pmf of a sum of independent Bernoulli(p_i) via convolution."""
    pmf = np.ones(1)
    for p in np.asarray(probs, dtype=np.float64):
        nxt = np.zeros(pmf.size + 1)
        nxt[:-1] = pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


def _count_fraction_cell(hour_probs: np.ndarray, hours: int) -> StochasticScalar:
    pmf = poisson_binomial_pmf(hour_probs)
    support = np.arange(hours + 1) / hours
    keep = pmf > 0.0
    return StochasticScalar.discrete(support[keep], pmf[keep] / pmf[keep].sum())


def gen_location_study(days: int, mobility: MobilityModel,
                       confusion: ConfusionMatrix, seed: int, hours: int = 24,
                       ) -> tuple[np.ndarray, np.ndarray, list[StochasticScalar]]:
    """Daily entertainment-time study: (true fraction, noisy fraction, cells).

    Hourly true labels follow the mobility process; predicted labels come
    from Bayes-inverting the predicted-to-true confusion rows against the
    stationary label distribution.  The per-day distribution of the true
    fraction given the predictions is an exact Poisson binomial over the
    hourly Pr(true = entertainment | predicted label) values, normalized by
    the number of hours.
    """
    joint = mobility.stationary[:, None] * confusion.rows
    col = joint.sum(axis=0)
    if np.any(col <= 0):
        raise ValueError("some true label is unreachable under the confusion rows")
    pred_given_true = joint / col[None, :]
    rng = _rng(seed, 37)
    l_true = np.empty(days)
    l_tilde = np.empty(days)
    cells: list[StochasticScalar] = []
    n_labels = len(confusion.labels)
    for d in range(days):
        true_labels = mobility.sample_day(rng, hours)
        pred_labels = np.array([rng.choice(n_labels, p=pred_given_true[:, t])
                                for t in true_labels])
        l_true[d] = np.mean(true_labels == _ENT)
        l_tilde[d] = np.mean(pred_labels == _ENT)
        hour_probs = confusion.rows[pred_labels, _ENT]
        cells.append(_count_fraction_cell(hour_probs, hours))
    return l_true, l_tilde, cells


# ---------------------------------------------------------------------------
# assembled study cells (one replication of one scenario)


@dataclass(eq=False)
class ScenarioCell:
    """One generated replication, exposed as three dataset views.

    ``observed`` holds the noisy values as point masses (what a conventional
    matcher sees), ``prob`` the distribution cells, ``truth`` the noiseless
    values.  All three share the outcome and ground-truth columns.
    """

    regime: MatchRegime
    observed: StudyDataset
    prob: StudyDataset
    truth: StudyDataset
    params: dict = field(default_factory=dict)

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_dataset(self.observed, out / "observed.json")
        save_dataset(self.prob, out / "prob.json")
        save_dataset(self.truth, out / "truth.json")
        (out / "params.json").write_text(json.dumps(self.params, sort_keys=True))


def _points(values) -> tuple[StochasticScalar, ...]:
    return tuple(StochasticScalar.point_mass(float(v)) for v in values)


def build_noisy_treatment_cell(sigma2: float, alphas: tuple[float, float],
                               betas: tuple[float, float, float], seed: int,
                               n_units: int = 200, n_train: int = 400,
                               m_dims: int = 2, sigma1: float = 1.0) -> ScenarioCell:
    """Latent binary treatment scenario: L drives two continuous confounders."""
    cfg = GaussianClassConfig(m_dims=m_dims, sigma1=sigma1, sigma2=sigma2,
                              n_train=n_train, n_study=n_units, seed=seed)
    feats, labels = gen_gaussian_classes(cfg)
    scorer, calib = fit_classifier_with_calibration(feats, labels, seed)
    l_true, l_tilde, cells = study_from_classifier(cfg, scorer, calib)
    z1, z2 = gen_scenario_treatment(l_true, alphas, seed)
    y = gen_outcome(l_true, [z1, z2], betas, seed)
    confs = (_points(z1), _points(z2))
    truth_conf = np.stack([z1, z2])
    common = dict(outcome=y, truth_treatment=l_true, truth_confounders=truth_conf)
    return ScenarioCell(
        regime=MatchRegime.BINARY_BIPARTITE,
        observed=StudyDataset(_points(l_tilde), confs, **common),
        prob=StudyDataset(tuple(cells), confs, **common),
        truth=StudyDataset(_points(l_true), confs, **common),
        params={"scenario": "noisy_treatment", "sigma2": sigma2,
                "alphas": list(alphas), "betas": list(betas), "seed": seed,
                "n_units": n_units, "n_train": n_train,
                "confounder_names": ["z1", "z2"]},
    )


def build_noisy_confounder_cell(sigma2: float, alphas: tuple[float, float],
                                betas: tuple[float, ...], seed: int,
                                n_units: int = 100, n_train: int = 400,
                                m_dims: int = 2, sigma1: float = 1.0) -> ScenarioCell:
    """Latent binary confounder scenario with a continuous treatment.

    The outcome uses beta0 only (no direct treatment effect), so any rejected
    null here is a false positive caused by residual confounding.
    """
    x, l_true, z1 = gen_scenario_confounder(n_units, alphas, seed)
    cfg = GaussianClassConfig(m_dims=m_dims, sigma1=sigma1, sigma2=sigma2,
                              n_train=n_train, n_study=n_units, seed=seed)
    feats, labels = gen_gaussian_classes(cfg)
    # calibrate against the scenario's own class prior, not the balanced one
    cal_rng = _rng(seed, 41)
    x_cal = cal_rng.uniform(0.0, 1.0, n_train)
    l_cal = (cal_rng.uniform(0.0, 1.0, n_train)
             < _sigmoid(alphas[0] + alphas[1] * x_cal)).astype(np.int64)
    cal_feats = _features_for_labels(l_cal, cfg, cal_rng)
    scorer, calib = fit_classifier_with_calibration(feats, labels, seed,
                                                    cal_features=cal_feats,
                                                    cal_labels=l_cal)
    _, l_tilde, cells = study_from_classifier(cfg, scorer, calib,
                                              labels=l_true.astype(np.int64))
    y = gen_outcome(l_true, [], (betas[0],), seed)
    x_cells = _points(x)
    z1_cells = _points(z1)
    truth_conf = np.stack([l_true, z1])
    common = dict(outcome=y, truth_treatment=x, truth_confounders=truth_conf)
    return ScenarioCell(
        regime=MatchRegime.CONTINUOUS_NONBIPARTITE,
        observed=StudyDataset(x_cells, (_points(l_tilde), z1_cells), **common),
        prob=StudyDataset(x_cells, (tuple(cells), z1_cells), **common),
        truth=StudyDataset(x_cells, (_points(l_true), z1_cells), **common),
        params={"scenario": "noisy_confounder", "sigma2": sigma2,
                "alphas": list(alphas), "betas": list(betas), "seed": seed,
                "n_units": n_units, "n_train": n_train,
                "confounder_names": ["latent", "z1"]},
    )


def build_location_cell(alphas: tuple[float, float],
                        betas: tuple[float, float, float], seed: int,
                        n_units: int = 120,
                        confusion: ConfusionMatrix | None = None,
                        mobility: MobilityModel | None = None) -> ScenarioCell:
    """Location diary scenario: noisy continuous treatment on [0, 1]."""
    confusion = confusion or default_confusion_matrix()
    mobility = mobility or default_mobility_model()
    l_true, l_tilde, cells = gen_location_study(n_units, mobility, confusion, seed)
    z1, z2 = gen_scenario_treatment(l_true, alphas, seed)
    y = gen_outcome(l_true, [z1, z2], betas, seed)
    confs = (_points(z1), _points(z2))
    truth_conf = np.stack([z1, z2])
    common = dict(outcome=y, truth_treatment=l_true, truth_confounders=truth_conf)
    return ScenarioCell(
        regime=MatchRegime.CONTINUOUS_NONBIPARTITE,
        observed=StudyDataset(_points(l_tilde), confs, **common),
        prob=StudyDataset(tuple(cells), confs, **common),
        truth=StudyDataset(_points(l_true), confs, **common),
        params={"scenario": "location", "alphas": list(alphas),
                "betas": list(betas), "seed": seed, "n_units": n_units,
                "confounder_names": ["z1", "z2"]},
    )


def build_spam_analog_cell(seed: int, n_units: int = 200, n_train: int = 400,
                           sigma1: float = 2.0, sigma2: float = 1.55,
                           spam_prior: float = 0.4) -> ScenarioCell:
    """Social-media analog: a noisy binary spammer flag confounds a continuous
    URL-usage rate.  Class spreads are tuned so roughly 76% of spammers and
    82% of non-spammers are classified correctly."""
    cfg = GaussianClassConfig(m_dims=2, sigma1=sigma1, sigma2=sigma2,
                              n_train=n_train, n_study=n_units, seed=seed)
    feats, labels = gen_gaussian_classes(cfg)
    cal_rng = _rng(seed, 43)
    s_cal = (cal_rng.uniform(0.0, 1.0, n_train) < spam_prior).astype(np.int64)
    cal_feats = _features_for_labels(s_cal, cfg, cal_rng)
    scorer, calib = fit_classifier_with_calibration(feats, labels, seed,
                                                    cal_features=cal_feats,
                                                    cal_labels=s_cal)
    rng = _rng(seed, 47)
    s_true = (rng.uniform(0.0, 1.0, n_units) < spam_prior).astype(np.int64)
    s_float, s_tilde, cells = study_from_classifier(cfg, scorer, calib, labels=s_true)
    # URL usage shifts with the spammer flag but the group ranges overlap,
    # so same-flag pairs with a material treatment gap exist
    x = 0.15 + 0.2 * s_float + 0.65 * rng.uniform(0.0, 1.0, n_units)
    z1 = 0.4 * x + rng.normal(0.0, 0.3, n_units)
    y = -1.0 * s_float + 1.5 * x + rng.uniform(0.0, 2.0, n_units) \
        + rng.normal(0.0, 0.5, n_units)
    x_cells = _points(x)
    z1_cells = _points(z1)
    truth_conf = np.stack([s_float, z1])
    common = dict(outcome=y, truth_treatment=x, truth_confounders=truth_conf)
    return ScenarioCell(
        regime=MatchRegime.CONTINUOUS_NONBIPARTITE,
        observed=StudyDataset(x_cells, (_points(s_tilde), z1_cells), **common),
        prob=StudyDataset(x_cells, (tuple(cells), z1_cells), **common),
        truth=StudyDataset(x_cells, (_points(s_float), z1_cells), **common),
        params={"scenario": "spam_analog", "seed": seed, "n_units": n_units,
                "sigma1": sigma1, "sigma2": sigma2, "spam_prior": spam_prior,
                "confounder_names": ["spam", "z1"]},
    )
