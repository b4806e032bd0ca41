"""ERM problems: primal/dual objectives, dual recovery, and an ISTA solver.

The primal objective is ``P(x) = (1/n) sum_i f_i(a_i' x) + lam * R(x)``
with per-sample losses built from a shared scalar loss: the margin is
``a_i' x - b_i`` for regression/interval problems and ``b_i a_i' x`` for
classification.  In kernelized mode the variable is the Representer
coefficient vector, margins use Gram rows, and the penalty is
``lam * alpha' K alpha`` (the squared RKHS norm).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, Mode, ModelVector, ProblemKind, subset
from .losses import (LossFamily, SafeLoss, flat_interval, loss_conjugate,
                     loss_eval, loss_subgradient)


class Penalty(enum.Enum):
    L1 = "l1"      # ||x||_1
    L2SQ = "l2sq"  # 0.5 * ||x||_2^2


@dataclass(frozen=True)
class ErmProblem:
    data: Dataset
    loss: SafeLoss
    penalty: Penalty
    lam: float
    mode: Mode = Mode.LINEAR
    gram: np.ndarray | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.mode == Mode.KERNELIZED:
            if self.gram is None:
                raise ValueError("kernelized problems need a gram matrix")
            gram = np.ascontiguousarray(np.asarray(self.gram, dtype=float))
            n = self.data.n
            if gram.shape != (n, n):
                raise ValueError(f"gram must be ({n}, {n}), got {gram.shape}")
            if np.max(np.abs(gram - gram.T)) > 1e-10:
                raise ValueError("gram matrix is not symmetric")
            if np.linalg.eigvalsh(gram)[0] < -1e-8:
                raise ValueError("gram matrix is not positive semi-definite")
            gram.setflags(write=False)
            object.__setattr__(self, "gram", gram)
        elif self.gram is not None:
            raise ValueError("gram matrix only applies to kernelized mode")
        if self.data.kind == ProblemKind.INTERVAL:
            # interval regression is screening-friendly regression whose flat
            # interval matches the label intervals
            fam_ok = (self.loss.family
                      == LossFamily.SCREENING_FRIENDLY_REGRESSION)
            if not fam_ok or abs(self.loss.mu - self.data.interval_halfwidth) > 1e-12:
                raise ValueError(
                    "interval data requires the screening-friendly regression "
                    "loss with mu equal to the interval half-width"
                )

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def dim(self) -> int:
        """Dimension of the optimization variable (p linear, n kernelized)."""
        return self.data.p if self.mode == Mode.LINEAR else self.data.n


@dataclass(frozen=True)
class SolveTrace:
    """Per-epoch (epoch, primal value, duality gap) rows plus the solution."""

    iterates: tuple
    final: ModelVector
    converged: bool

    @property
    def epochs(self) -> int:
        return self.iterates[-1][0] if self.iterates else 0


def _coefficients(problem: ErmProblem, x) -> np.ndarray:
    if isinstance(x, ModelVector):
        want = Mode.LINEAR if problem.mode == Mode.LINEAR else Mode.KERNELIZED
        if x.mode != want:
            raise ValueError(f"model mode {x.mode.value} does not match "
                             f"problem mode {problem.mode.value}")
        x = x.coefficients
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dim,):
        raise ValueError(f"expected coefficient vector of shape "
                         f"({problem.dim},), got {x.shape}")
    return x


def design(problem: ErmProblem):
    """Effective design (G, offset) such that margins are ``G x - offset``.

    Regression/interval: G is the feature (or Gram) matrix, offset the
    labels.  Classification: G has rows scaled by the labels, offset 0.
    """
    base = problem.data.features if problem.mode == Mode.LINEAR else problem.gram
    if problem.data.kind == ProblemKind.CLASSIFICATION:
        return problem.data.labels[:, None] * base, np.zeros(problem.n)
    return base, problem.data.labels


def margin_vector(problem: ErmProblem, x) -> np.ndarray:
    coef = _coefficients(problem, x)
    g, off = design(problem)
    return g @ coef - off


def penalty_value(problem: ErmProblem, x) -> float:
    coef = _coefficients(problem, x)
    if problem.mode == Mode.KERNELIZED:
        return problem.lam * float(coef @ problem.gram @ coef)
    if problem.penalty == Penalty.L1:
        return problem.lam * float(np.sum(np.abs(coef)))
    return problem.lam * 0.5 * float(coef @ coef)


def primal_objective(problem: ErmProblem, x) -> float:
    margins = margin_vector(problem, x)
    return float(np.mean(loss_eval(problem.loss, margins))) \
        + penalty_value(problem, x)


def dual_objective(problem: ErmProblem, nu) -> float:
    """Dual value ``D(nu)``; -inf when ``nu`` is dual-infeasible.

    ``nu`` uses the margin convention: for classification it is the
    subgradient with respect to the margin, and the label signs are
    carried by the design matrix.
    """
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (problem.n,):
        raise ValueError(f"nu must have shape ({problem.n},)")
    conj = loss_conjugate(problem.loss, nu)
    if not np.all(np.isfinite(conj)):
        return -math.inf
    g, off = design(problem)
    n = problem.n
    terms = -float(np.mean(conj)) - float(np.mean(off * nu))
    if problem.mode == Mode.KERNELIZED:
        # penalty lam * ||x||_H^2 has conjugate ||.||_H^2 / (4 lam)
        u = nu if problem.data.kind != ProblemKind.CLASSIFICATION \
            else problem.data.labels * nu
        return terms - float(u @ problem.gram @ u) / (4 * problem.lam * n * n)
    w = (g.T @ nu) / (problem.lam * n)
    if problem.penalty == Penalty.L2SQ:
        return terms - problem.lam * 0.5 * float(w @ w)
    if np.max(np.abs(w)) > 1.0 + 1e-12:
        return -math.inf
    return terms


def dual_from_primal(problem: ErmProblem, x) -> np.ndarray:
    """Candidate dual point: the loss subgradient at each margin."""
    return loss_subgradient(problem.loss, margin_vector(problem, x))


def duality_gap(problem: ErmProblem, x) -> float:
    """``P(x) - D(nu_hat)`` with the recovered dual rescaled into the
    feasible set for the l1 penalty (standard Lasso-style certificate)."""
    nu = dual_from_primal(problem, x)
    if problem.mode == Mode.LINEAR and problem.penalty == Penalty.L1:
        g, _ = design(problem)
        scale = np.max(np.abs(g.T @ nu)) / (problem.lam * problem.n)
        if scale > 1.0:
            nu = nu / scale
    return primal_objective(problem, x) - dual_objective(problem, nu)


def kkt_residual(problem: ErmProblem, x) -> float:
    """Sup-norm residual of the optimality link for l2sq problems."""
    coef = _coefficients(problem, x)
    nu = dual_from_primal(problem, coef)
    g, _ = design(problem)
    n = problem.n
    if problem.mode == Mode.KERNELIZED:
        u = nu if problem.data.kind != ProblemKind.CLASSIFICATION \
            else problem.data.labels * nu
        return float(np.max(np.abs(problem.gram @ (coef + u / (2 * problem.lam * n)))))
    if problem.penalty != Penalty.L2SQ:
        raise ValueError("kkt_residual requires the l2sq penalty")
    return float(np.max(np.abs(coef + g.T @ nu / (problem.lam * n))))


def objective_subgradient(problem: ErmProblem, x) -> np.ndarray:
    """A subgradient of the full objective (used to cut ellipsoids)."""
    coef = _coefficients(problem, x)
    g, off = design(problem)
    grad = g.T @ loss_subgradient(problem.loss, g @ coef - off) / problem.n
    if problem.mode == Mode.KERNELIZED:
        return grad + 2 * problem.lam * (problem.gram @ coef)
    if problem.penalty == Penalty.L1:
        return grad + problem.lam * np.sign(coef)
    return grad + problem.lam * coef


def soft_threshold(t, tau: float):
    """Componentwise ``sign(t) * max(|t| - tau, 0)`` (prox of tau * l1)."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    t = np.asarray(t, dtype=float)
    return np.sign(t) * np.maximum(np.abs(t) - tau, 0.0)


def prox_step(penalty: Penalty, t, tau: float):
    """Proximal operator of ``tau * R`` for the supported penalties."""
    if penalty == Penalty.L1:
        return soft_threshold(t, tau)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return np.asarray(t, dtype=float) / (1.0 + tau)


def subset_problem(problem: ErmProblem, keep,
                   rescale_lambda: bool = True) -> ErmProblem:
    """The problem restricted to the kept samples.

    With ``rescale_lambda`` (the default) the penalty weight becomes
    ``lam * n / n_kept`` so that, because the loss is averaged over the
    samples, the reduced objective is a positive multiple of the full one
    minus the discarded terms: screening-safe reductions then share the
    full problem's minimizer.  Pass ``rescale_lambda=False`` for a plain
    refit of the standard estimator on the smaller dataset (dataset
    compression semantics).
    """
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != (problem.n,):
        raise ValueError(f"keep must have shape ({problem.n},)")
    if not keep.any():
        raise ValueError("cannot keep zero samples")
    data = subset(problem.data, keep)
    gram = None
    if problem.mode == Mode.KERNELIZED:
        gram = problem.gram[np.ix_(keep, keep)]
    lam = problem.lam
    if rescale_lambda:
        lam = lam * problem.n / data.n
    return ErmProblem(data, problem.loss, problem.penalty, lam,
                      problem.mode, gram)


def solve(problem: ErmProblem, max_epochs: int = 1000, tol: float = 1e-8,
          x0=None) -> SolveTrace:
    """Proximal gradient (ISTA) with backtracking line search.

    One epoch is one full gradient evaluation.  Stops once the duality
    gap drops to ``tol`` or after ``max_epochs``.  The hinge loss is
    rejected (nonsmooth data term); use screening with an externally
    provided center instead.
    """
    if problem.loss.family == LossFamily.HINGE:
        raise ValueError("nonsmooth loss unsupported by solver: hinge")
    g_mat, off = design(problem)
    n = problem.n
    lam = problem.lam
    kernel = problem.mode == Mode.KERNELIZED

    def smooth_value(coef, margins):
        val = float(np.mean(loss_eval(problem.loss, margins)))
        if kernel:
            val += lam * float(coef @ problem.gram @ coef)
        return val

    def smooth_grad(coef, margins):
        grad = g_mat.T @ loss_subgradient(problem.loss, margins) / n
        if kernel:
            grad = grad + 2 * lam * (problem.gram @ coef)
        return grad

    def nonsmooth(coef):
        if kernel:
            return 0.0
        if problem.penalty == Penalty.L1:
            return lam * float(np.sum(np.abs(coef)))
        return lam * 0.5 * float(coef @ coef)

    def prox(v, step):
        if kernel:
            return v
        return prox_step(problem.penalty, v, step * lam)

    x = np.zeros(problem.dim) if x0 is None else _coefficients(problem, x0)
    margins = g_mat @ x - off
    g_val = smooth_value(x, margins)
    objective = g_val + nonsmooth(x)
    if not math.isfinite(objective):
        raise RuntimeError("objective is not finite at the starting point")

    gap = duality_gap(problem, x)
    trace = [(0, objective, gap)]
    lip = 1.0
    converged = gap <= tol
    epoch = 0
    while not converged and epoch < max_epochs:
        epoch += 1
        grad = smooth_grad(x, margins)
        lip = max(lip * 0.5, 1e-12)
        for _ in range(120):
            cand = prox(x - grad / lip, 1.0 / lip)
            delta = cand - x
            cand_margins = g_mat @ cand - off
            cand_g = smooth_value(cand, cand_margins)
            bound = g_val + float(grad @ delta) \
                + 0.5 * lip * float(delta @ delta)
            if cand_g <= bound + 1e-12 * max(1.0, abs(g_val)):
                break
            lip *= 2.0
        else:
            raise RuntimeError("line search failed: objective may be diverging")
        x, margins, g_val = cand, cand_margins, cand_g
        objective = g_val + nonsmooth(x)
        if not math.isfinite(objective):
            raise RuntimeError("solver diverged: non-finite objective")
        gap = duality_gap(problem, x)
        trace.append((epoch, objective, gap))
        converged = gap <= tol

    mode = Mode.KERNELIZED if kernel else Mode.LINEAR
    return SolveTrace(tuple(trace), ModelVector(x, mode), converged)
