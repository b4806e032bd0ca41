"""Gaussian Gram matrices and kernelization of linear ERM problems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, Mode
from .erm import ErmProblem, Penalty


@dataclass(frozen=True)
class GramMatrix:
    """Gaussian kernel Gram matrix; symmetric with unit diagonal."""

    values: np.ndarray
    sigma: float

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("gram matrix must be square")
        if np.max(np.abs(values - values.T)) > 1e-12:
            raise ValueError("gram matrix must be symmetric")
        if np.max(np.abs(np.diagonal(values) - 1.0)) > 1e-12:
            raise ValueError("gaussian gram matrices have unit diagonal")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def gaussian_gram(data: Dataset, sigma: float) -> GramMatrix:
    """``K_ij = exp(-|a_i - a_j|^2 / (2 sigma^2))``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    feats = data.features
    sq = np.sum(feats * feats, axis=1)
    dist2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (feats @ feats.T),
                       0.0)
    values = np.exp(-dist2 / (2.0 * sigma * sigma))
    values = 0.5 * (values + values.T)
    np.fill_diagonal(values, 1.0)
    return GramMatrix(values, sigma)


def kernelize(problem: ErmProblem, gram) -> ErmProblem:
    """Lift a linear l2sq problem to its Representer form over alpha.

    Margins use Gram rows and the penalty becomes ``lam_k * alpha'K alpha``
    (the squared RKHS norm).  Because the linear l2sq penalty is
    ``lam * 0.5 |x|^2``, the kernel problem stores ``lam_k = lam / 2`` so
    that with the linear kernel ``K = A A'`` both problems fit the same
    model.  ``gram`` may be a :class:`GramMatrix` or a raw (n, n) array
    (e.g. a linear-kernel Gram); an l1 penalty is rejected since the
    Representer argument needs the squared RKHS norm.
    """
    if problem.mode != Mode.LINEAR:
        raise ValueError("problem is already kernelized")
    if problem.penalty != Penalty.L2SQ:
        raise ValueError("l1 penalty is not supported in kernel mode")
    values = gram.values if isinstance(gram, GramMatrix) else \
        np.asarray(gram, dtype=float)
    return ErmProblem(problem.data, problem.loss, Penalty.L2SQ,
                      problem.lam / 2.0, Mode.KERNELIZED, values)
