"""Study containers and serialization.

A :class:`StudyDataset` holds one treatment column and P confounder columns of
:class:`~probmatch.stochastic.StochasticScalar` cells, plus an optional outcome
vector.  Ground-truth columns, when present, are evaluation-only metadata:
matching code never reads them, which keeps the noiseless values from leaking
into the estimators under test.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .stochastic import StochasticScalar, mean

__all__ = [
    "SchemaError",
    "MatchConstraints",
    "MatchedPairSet",
    "StudyDataset",
    "load_dataset",
    "save_dataset",
    "load_pairs",
    "save_pairs",
]


class SchemaError(ValueError):
    """Malformed or invariant-violating input data."""


@dataclass(frozen=True)
class MatchConstraints:
    """Admissibility rules for candidate pairs.

    ``min_treatment_diff`` is the smallest acceptable treatment gap;
    ``treatment_prob_threshold`` bounds the probability that the gap falls
    below it.  Calipers, when given (one per confounder), bound the
    probability of a confounder discrepancy exceeding the caliper by
    ``caliper_prob_threshold``.  For point-mass data both checks reduce to
    plain threshold comparisons.
    """

    min_treatment_diff: float = 0.0
    treatment_prob_threshold: float = 0.25
    calipers: tuple[float, ...] | None = None
    caliper_prob_threshold: float = 0.25
    with_replacement: bool = False
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.min_treatment_diff < 0:
            raise ValueError("min_treatment_diff must be nonnegative")
        for name in ("treatment_prob_threshold", "caliper_prob_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.calipers is not None:
            object.__setattr__(self, "calipers", tuple(float(c) for c in self.calipers))
            if any(c < 0 for c in self.calipers):
                raise ValueError("calipers must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def to_dict(self) -> dict:
        return {
            "min_treatment_diff": self.min_treatment_diff,
            "treatment_prob_threshold": self.treatment_prob_threshold,
            "calipers": list(self.calipers) if self.calipers is not None else None,
            "caliper_prob_threshold": self.caliper_prob_threshold,
            "with_replacement": self.with_replacement,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatchConstraints":
        d = dict(d)
        if d.get("calipers") is not None:
            d["calipers"] = tuple(d["calipers"])
        return cls(**d)


@dataclass(eq=False)
class MatchedPairSet:
    """Ordered list of matched (treated, control) unit indices.

    ``n_dropped`` counts units left without an admissible partner, a
    diagnostic only.  Without replacement no unit may appear twice.
    """

    pairs: list[tuple[int, int]] = field(default_factory=list)
    n_dropped: int = 0

    def __post_init__(self):
        self.pairs = [(int(u), int(v)) for u, v in self.pairs]
        for u, v in self.pairs:
            if u == v:
                raise ValueError(f"unit {u} matched with itself")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def units(self) -> set[int]:
        return {i for pair in self.pairs for i in pair}

    def check_no_reuse(self) -> None:
        seen: set[int] = set()
        for u, v in self.pairs:
            if u in seen or v in seen:
                raise ValueError("unit reused in matching without replacement")
            seen.update((u, v))


@dataclass(frozen=True, eq=False)
class StudyDataset:
    """N units with one treatment column and P confounder columns.

    ``truth_treatment`` / ``truth_confounders`` are optional noiseless values
    used only by evaluation code, never by matching.
    """

    treatment: tuple[StochasticScalar, ...]
    confounders: tuple[tuple[StochasticScalar, ...], ...]
    outcome: np.ndarray | None = None
    truth_treatment: np.ndarray | None = None
    truth_confounders: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "treatment", tuple(self.treatment))
        object.__setattr__(self, "confounders", tuple(tuple(row) for row in self.confounders))
        n = len(self.treatment)
        if n < 2:
            raise SchemaError("dataset needs at least 2 units")
        if len(self.confounders) < 1:
            raise SchemaError("dataset needs at least one confounder")
        for p, row in enumerate(self.confounders):
            if len(row) != n:
                raise SchemaError(
                    f"confounders[{p}]: length {len(row)} does not match N={n}")
        for name in ("outcome", "truth_treatment"):
            vec = getattr(self, name)
            if vec is not None:
                vec = np.asarray(vec, dtype=np.float64)
                if vec.shape != (n,):
                    raise SchemaError(f"{name}: expected shape ({n},), got {vec.shape}")
                if not np.all(np.isfinite(vec)):
                    raise SchemaError(f"{name}: non-finite entry")
                vec.flags.writeable = False
                object.__setattr__(self, name, vec)
        if self.truth_confounders is not None:
            tc = np.asarray(self.truth_confounders, dtype=np.float64)
            if tc.shape != (len(self.confounders), n):
                raise SchemaError(
                    f"truth_confounders: expected shape ({len(self.confounders)}, {n})")
            if not np.all(np.isfinite(tc)):
                raise SchemaError("truth_confounders: non-finite entry")
            tc.flags.writeable = False
            object.__setattr__(self, "truth_confounders", tc)

    @property
    def n_units(self) -> int:
        return len(self.treatment)

    @property
    def n_confounders(self) -> int:
        return len(self.confounders)

    @cached_property
    def treatment_means(self) -> np.ndarray:
        out = np.array([mean(s) for s in self.treatment])
        out.flags.writeable = False
        return out

    @cached_property
    def confounder_means(self) -> np.ndarray:
        out = np.array([[mean(s) for s in row] for row in self.confounders])
        out.flags.writeable = False
        return out

    @cached_property
    def is_binary_treatment(self) -> bool:
        """True when every treatment cell is supported on a subset of {0, 1}."""
        for s in self.treatment:
            vals = s.atoms()[0]
            if not np.all(np.isin(vals, (0.0, 1.0))):
                return False
        return True

    def without_truth(self) -> "StudyDataset":
        return StudyDataset(self.treatment, self.confounders, self.outcome)


# ---------------------------------------------------------------------------
# serialization


def _cell_from_json(obj, where: str) -> StochasticScalar:
    try:
        if isinstance(obj, (int, float)):
            if isinstance(obj, bool) or not math.isfinite(obj):
                raise SchemaError(f"{where}: non-finite or non-numeric value")
            return StochasticScalar.point_mass(float(obj))
        if isinstance(obj, dict):
            if "support" in obj and "probs" in obj:
                return StochasticScalar.discrete(obj["support"], obj["probs"])
            if "samples" in obj:
                return StochasticScalar.empirical(obj["samples"])
            raise SchemaError(f"{where}: cell object needs 'support'/'probs' or 'samples'")
        raise SchemaError(f"{where}: unsupported cell {type(obj).__name__}")
    except SchemaError:
        raise
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def _cell_to_json(s: StochasticScalar):
    if s.kind == "point":
        return float(s.values[0])
    if s.kind == "discrete":
        return {"support": [float(v) for v in s.values],
                "probs": [float(p) for p in s.probs]}
    return {"samples": [float(v) for v in s.values]}


def _read_text(source) -> str:
    if isinstance(source, (str, Path)) :
        return Path(source).read_text()
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def _parse_float(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise SchemaError(f"{where}: malformed number {text!r}") from exc
    if not math.isfinite(value):
        raise SchemaError(f"{where}: non-finite value {text!r}")
    return value


def _load_csv(text: str) -> StudyDataset:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise SchemaError("empty dataset stream")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "x":
        raise SchemaError("CSV header must start with treatment column 'x'")
    has_outcome = header[-1] == "y"
    z_names = header[1:-1] if has_outcome else header[1:]
    expected = [f"z{i + 1}" for i in range(len(z_names))]
    if not z_names or z_names != expected:
        raise SchemaError(f"CSV confounder columns must be {expected or ['z1']}, got {z_names}")
    treatment, outcome = [], []
    confounders: list[list[StochasticScalar]] = [[] for _ in z_names]
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise SchemaError(f"row {i}: expected {len(header)} fields, got {len(row)}")
        treatment.append(StochasticScalar.point_mass(_parse_float(row[0], f"row {i}, col x")))
        for p in range(len(z_names)):
            confounders[p].append(
                StochasticScalar.point_mass(_parse_float(row[1 + p], f"row {i}, col z{p + 1}")))
        if has_outcome:
            outcome.append(_parse_float(row[-1], f"row {i}, col y"))
    return StudyDataset(tuple(treatment), tuple(tuple(c) for c in confounders),
                        np.array(outcome) if has_outcome else None)


def _load_json(text: str) -> StudyDataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "treatment" not in doc or "confounders" not in doc:
        raise SchemaError("JSON dataset needs 'treatment' and 'confounders' keys")
    treatment = tuple(_cell_from_json(c, f"treatment[{i}]")
                      for i, c in enumerate(doc["treatment"]))
    confounders = tuple(
        tuple(_cell_from_json(c, f"confounders[{p}][{i}]") for i, c in enumerate(row))
        for p, row in enumerate(doc["confounders"]))
    kwargs = {}
    if doc.get("outcome") is not None:
        kwargs["outcome"] = np.asarray(doc["outcome"], dtype=np.float64)
    if doc.get("truth_treatment") is not None:
        kwargs["truth_treatment"] = np.asarray(doc["truth_treatment"], dtype=np.float64)
    if doc.get("truth_confounders") is not None:
        kwargs["truth_confounders"] = np.asarray(doc["truth_confounders"], dtype=np.float64)
    return StudyDataset(treatment, confounders, **kwargs)


def load_dataset(source, format: str | None = None) -> StudyDataset:
    """Load and validate a dataset from a path, stream, or text.

    ``format`` is ``'csv'`` or ``'json'``; when omitted it is inferred from a
    path suffix, defaulting to JSON.
    """
    if format is None:
        if isinstance(source, (str, Path)):
            format = "csv" if str(source).endswith(".csv") else "json"
        else:
            format = "json"
    text = _read_text(source)
    if not text.strip():
        raise SchemaError("empty dataset stream")
    if format == "csv":
        return _load_csv(text)
    if format == "json":
        return _load_json(text)
    raise ValueError(f"unknown format {format!r}")


def save_dataset(dataset: StudyDataset, sink) -> None:
    """Write the dataset as JSON (the only format that keeps distribution cells)."""
    doc = {
        "treatment": [_cell_to_json(s) for s in dataset.treatment],
        "confounders": [[_cell_to_json(s) for s in row] for row in dataset.confounders],
    }
    if dataset.outcome is not None:
        doc["outcome"] = [float(y) for y in dataset.outcome]
    if dataset.truth_treatment is not None:
        doc["truth_treatment"] = [float(x) for x in dataset.truth_treatment]
    if dataset.truth_confounders is not None:
        doc["truth_confounders"] = [[float(x) for x in row]
                                    for row in dataset.truth_confounders]
    text = json.dumps(doc)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    else:
        sink.write(text)


def save_pairs(pairs: MatchedPairSet, sink) -> None:
    """Write pairs as CSV with header ``treated,control``, in stored order."""
    lines = ["treated,control"] + [f"{u},{v}" for u, v in pairs]
    text = "\n".join(lines) + "\n"
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    else:
        sink.write(text)


def load_pairs(source) -> MatchedPairSet:
    text = _read_text(source)
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or [h.strip() for h in rows[0]] != ["treated", "control"]:
        raise SchemaError("pair CSV must have header 'treated,control'")
    try:
        pairs = [(int(r[0]), int(r[1])) for r in rows[1:]]
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"malformed pair row: {exc}") from exc
    return MatchedPairSet(pairs)
