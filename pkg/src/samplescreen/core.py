"""Datasets, mask/model persistence, and synthetic data generators."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ProblemKind(enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"
    INTERVAL = "interval"


class Mode(enum.Enum):
    LINEAR = "linear"
    KERNELIZED = "kernelized"


def _freeze(arr):
    arr = np.ascontiguousarray(np.asarray(arr, dtype=float))
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``features`` (n x p) plus per-sample labels.

    Labels are real-valued for regression/interval problems and exactly
    +/-1 for classification.  Interval datasets additionally carry the
    common half-width of the label intervals ``[b_i - w, b_i + w]``.
    Instances are immutable (arrays are marked read-only) and safe to
    share across threads.
    """

    features: np.ndarray
    labels: np.ndarray
    kind: ProblemKind
    interval_halfwidth: float | None = None

    def __post_init__(self):
        feats = _freeze(self.features)
        labels = _freeze(self.labels)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        n, p = feats.shape
        if n < 1 or p < 1:
            raise ValueError(f"need n >= 1 and p >= 1, got {feats.shape}")
        if labels.shape != (n,):
            raise ValueError(
                f"labels must have shape ({n},), got {labels.shape}"
            )
        if not (np.isfinite(feats).all() and np.isfinite(labels).all()):
            raise ValueError("non-finite entries in dataset")
        if self.kind == ProblemKind.CLASSIFICATION:
            if not np.all(np.isin(labels, (-1.0, 1.0))):
                raise ValueError("classification labels must be exactly +/-1")
        if self.kind == ProblemKind.INTERVAL:
            if self.interval_halfwidth is None or self.interval_halfwidth <= 0:
                raise ValueError("interval datasets require interval_halfwidth > 0")
        elif self.interval_halfwidth is not None:
            raise ValueError("interval_halfwidth only applies to interval datasets")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SampleMask:
    """Per-sample screening outcome: keep flags plus the test scores."""

    keep: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        keep = np.ascontiguousarray(np.asarray(self.keep, dtype=bool))
        keep.setflags(write=False)
        scores = _freeze(self.scores)
        if keep.ndim != 1 or keep.shape != scores.shape:
            raise ValueError(
                f"keep and scores must be 1-D with equal length, got "
                f"{keep.shape} vs {scores.shape}"
            )
        object.__setattr__(self, "keep", keep)
        object.__setattr__(self, "scores", scores)

    @property
    def n(self) -> int:
        return self.keep.shape[0]

    @property
    def n_discarded(self) -> int:
        return int(np.count_nonzero(~self.keep))


@dataclass(frozen=True)
class ModelVector:
    """Model coefficients: length p in linear mode, length n in kernelized
    mode (the coefficients of the Representer expansion)."""

    coefficients: np.ndarray
    mode: Mode = Mode.LINEAR

    def __post_init__(self):
        coef = _freeze(self.coefficients)
        if coef.ndim != 1:
            raise ValueError("coefficients must be a vector")
        if not np.isfinite(coef).all():
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coefficients", coef)


def subset(data: Dataset, keep) -> Dataset:
    """Dataset restricted to the samples flagged in the boolean vector."""
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != (data.n,):
        raise ValueError(f"keep must have shape ({data.n},)")
    return Dataset(
        data.features[keep],
        data.labels[keep],
        data.kind,
        data.interval_halfwidth,
    )


# ---------------------------------------------------------------------------
# File ingestion / persistence
# ---------------------------------------------------------------------------

def _remap_class_label(value: float, row: int) -> float:
    if value in (-1.0, 1.0):
        return value
    if value == 0.0:
        return -1.0
    raise ValueError(f"row {row}: invalid label {value!r} for classification")


def load_dataset(path, format: str, kind: ProblemKind,
                 interval_halfwidth: float | None = None) -> Dataset:
    """Load a dense dataset from a csv or libsvm text file.

    csv rows are ``v1,...,vp,label``; libsvm rows are
    ``label idx:val idx:val ...`` with 1-based indices, missing indices
    filled with zero and p set to the largest index seen.  Classification
    labels in {0,1} are remapped to {-1,+1}.
    """
    if format not in ("csv", "libsvm"):
        raise ValueError(f"unknown format {format!r}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [
            (i + 1, line.strip()) for i, line in enumerate(fh)
            if line.strip()
        ]
    if not lines:
        raise ValueError(f"{path}: empty file")
    if format == "csv":
        rows, labels = _parse_csv(lines, kind)
    else:
        rows, labels = _parse_libsvm(lines, kind)
    return Dataset(np.array(rows, dtype=float), np.array(labels, dtype=float),
                   kind, interval_halfwidth)


def _parse_csv(lines, kind):
    rows, labels = [], []
    width = None
    for rownum, line in lines:
        parts = line.split(",")
        if len(parts) < 2:
            raise ValueError(f"row {rownum}: need at least one feature and a label")
        try:
            values = [float(tok) for tok in parts]
        except ValueError as exc:
            raise ValueError(f"row {rownum}: {exc}") from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ValueError(
                f"row {rownum}: expected {width} fields, got {len(values)}"
            )
        label = values[-1]
        if kind == ProblemKind.CLASSIFICATION:
            label = _remap_class_label(label, rownum)
        rows.append(values[:-1])
        labels.append(label)
    return rows, labels


def _parse_libsvm(lines, kind):
    entries, labels = [], []
    p = 0
    for rownum, line in lines:
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise ValueError(f"row {rownum}: bad label {parts[0]!r}") from None
        if kind == ProblemKind.CLASSIFICATION:
            label = _remap_class_label(label, rownum)
        pairs = []
        for tok in parts[1:]:
            try:
                idx_s, val_s = tok.split(":")
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise ValueError(f"row {rownum}: bad entry {tok!r}") from None
            if idx < 1:
                raise ValueError(f"row {rownum}: indices are 1-based, got {idx}")
            pairs.append((idx, val))
            p = max(p, idx)
        entries.append(pairs)
        labels.append(label)
    if p == 0:
        raise ValueError("no feature indices found in libsvm file")
    rows = []
    for pairs in entries:
        row = [0.0] * p
        for idx, val in pairs:
            row[idx - 1] = val
        rows.append(row)
    return rows, labels


def _fmt(value) -> str:
    # repr of a python float is the shortest string that round-trips exactly
    return repr(float(value))


def save_dataset(data: Dataset, path) -> None:
    """Write the dataset as csv (label last); values round-trip exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for row, label in zip(data.features, data.labels):
            fh.write(",".join(_fmt(v) for v in row) + f",{_fmt(label)}\n")


def save_mask(mask: SampleMask, path) -> None:
    """One line per sample: ``<0|1> <score>`` with round-tripping precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for k, s in zip(mask.keep, mask.scores):
            fh.write(f"{1 if k else 0} {_fmt(s)}\n")


def load_mask(path) -> SampleMask:
    keep, scores = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for rownum, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(
                    f"row {rownum}: expected 2 tokens, got {len(parts)}"
                )
            if parts[0] not in ("0", "1"):
                raise ValueError(f"row {rownum}: keep flag must be 0 or 1")
            keep.append(parts[0] == "1")
            try:
                scores.append(float(parts[1]))
            except ValueError:
                raise ValueError(f"row {rownum}: bad score {parts[1]!r}") from None
    if not keep:
        raise ValueError(f"{path}: empty mask file")
    return SampleMask(np.array(keep), np.array(scores))


def save_model(model: ModelVector, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{model.mode.value}\n")
        for c in model.coefficients:
            fh.write(f"{_fmt(c)}\n")


def load_model(path) -> ModelVector:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty model file")
    try:
        mode = Mode(lines[0])
    except ValueError:
        raise ValueError(f"unknown model mode {lines[0]!r}") from None
    return ModelVector(np.array([float(tok) for tok in lines[1:]]), mode)


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------

def gen_synthetic_regression(n: int, p: int, sparsity: int, sigma: float,
                             seed: int) -> tuple[Dataset, ModelVector]:
    """Regression data ``b = A x + eps`` with a random sparse ground truth.

    A has i.i.d. entries uniform on [-1, 1]; x has ``sparsity`` nonzero
    entries drawn standard normal at random positions; eps ~ N(0, sigma^2).
    Deterministic for a fixed seed.
    """
    if n < 1 or p < 1:
        raise ValueError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    if not 1 <= sparsity <= p:
        raise ValueError(f"need 1 <= sparsity <= p, got sparsity={sparsity}")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    feats = rng.uniform(-1.0, 1.0, size=(n, p))
    x = np.zeros(p)
    support = rng.choice(p, size=sparsity, replace=False)
    x[support] = rng.standard_normal(sparsity)
    labels = feats @ x
    if sigma > 0:
        labels = labels + sigma * rng.standard_normal(n)
    data = Dataset(feats, labels, ProblemKind.REGRESSION)
    return data, ModelVector(x)


def gen_interval_dataset(n: int, p: int, halfwidth: float, seed: int) -> Dataset:
    """Interval-regression data: centers near a one-feature linear signal.

    Ground truth uses a single active feature (standard-normal weight);
    interval centers are the true responses jittered uniformly by at most
    half the interval half-width, so every interval contains the truth.
    """
    if halfwidth <= 0:
        raise ValueError("halfwidth must be positive")
    if n < 1 or p < 1:
        raise ValueError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    rng = np.random.default_rng(seed)
    feats = rng.uniform(-1.0, 1.0, size=(n, p))
    x = np.zeros(p)
    x[rng.integers(p)] = rng.standard_normal()
    centers = feats @ x + rng.uniform(-halfwidth / 2, halfwidth / 2, size=n)
    return Dataset(feats, centers, ProblemKind.INTERVAL,
                   interval_halfwidth=halfwidth)
