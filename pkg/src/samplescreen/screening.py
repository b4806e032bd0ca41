"""Safe screening: closed-form margin bounds over cut ellipsoids.

A sample can be discarded once its margin is certified to stay strictly
inside the flat interval of the loss for every model in a region that
contains the optimum.  The bound maximizes a linear form over an
ellipsoid intersected with one half-space, in closed form.

Note on the closed form: with an active half-space the maximizer is the
boundary-normalized point ``z + E w / sqrt(w' E w)`` (with
``w = a - (g'Ea / g'Eg) g``), giving the maximum ``a'z + sqrt(w'Ew)``.
A published variant scales by ``1/(2*gamma)`` with
``gamma = sqrt(w'Ew / 2)`` instead; that point does not satisfy the
ellipsoid boundary equation and disagrees with brute-force maximization
(e.g. unit ball, a = (1,0), cut g = (1,1): true maximum 1/sqrt(2), the
variant yields 1/2), so the boundary-normalized form is used here.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .core import Mode, ProblemKind, SampleMask
from .ellipsoid import CutRegion, Ellipsoid, init_ball, matmat, matvec
from .erm import (ErmProblem, Penalty, duality_gap, primal_objective, solve,
                  subset_problem)
from .losses import flat_interval


@dataclass(frozen=True)
class ScreeningReport:
    """Outcome of one screening sweep plus region metadata."""

    mask: SampleMask
    n_screened: int
    region_volume_logdet: float
    settings: dict
    wall_time: float

    def to_json_dict(self) -> dict:
        logdet = self.region_volume_logdet
        return {
            "n": self.mask.n,
            "n_screened": self.n_screened,
            "settings": dict(self.settings),
            "logdet": logdet if math.isfinite(logdet) else None,
            "wall_time_s": self.wall_time,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


_DEGENERATE_FRACTION = 1e-12  # of the ellipsoid scale, for w'Ew


def _bound_batch(rows: np.ndarray, offsets: np.ndarray,
                 region: CutRegion) -> np.ndarray:
    """Exact ``max_x rows_i' x - offsets_i`` over the cut region, per row."""
    e = region.ellipsoid
    az = rows @ e.center
    e_rows = matmat(e, rows.T)                      # (p, n) holding E a_i
    quad = np.maximum(np.einsum("ij,ji->i", rows, e_rows), 0.0)
    if region.halfspace_g is None:
        return az + np.sqrt(quad) - offsets
    g = region.halfspace_g
    eg = matvec(e, g)
    geg = float(g @ eg)
    if geg <= 0:
        raise RuntimeError("half-space direction has nonpositive E-norm; "
                           "region is not positive definite")
    gea = g @ e_rows
    w_quad = quad - gea * gea / geg
    unconstrained = az + np.sqrt(quad) - offsets
    on_boundary = az + np.sqrt(np.maximum(w_quad, 0.0)) - offsets
    degenerate = w_quad <= _DEGENERATE_FRACTION * e.scale
    # g'Ea < 0: the unconstrained maximizer already satisfies the cut.
    # Degenerate w (a parallel to g): the cut is inactive for g'Ea <= 0
    # and fully binding otherwise.
    return np.where(
        gea < 0, unconstrained,
        np.where(degenerate,
                 np.where(gea <= 0, unconstrained, az - offsets),
                 on_boundary))


def max_linear_over_region(a, b_off: float, region: CutRegion) -> float:
    """Exact maximum of ``a'x - b_off`` over the cut region."""
    a = np.asarray(a, dtype=float)
    if a.shape != (region.ellipsoid.dim,):
        raise ValueError(f"expected vector of shape "
                         f"({region.ellipsoid.dim},), got {a.shape}")
    return float(_bound_batch(a[None, :], np.array([b_off]), region)[0])


def _test_rows(problem: ErmProblem):
    return problem.data.features if problem.mode == Mode.LINEAR \
        else problem.gram


def _screening_scores(problem: ErmProblem, region: CutRegion) -> np.ndarray:
    """Signed slack of the certified margin bound to the flat threshold.

    Positive slack means the margin provably stays inside the flat
    interval (the sample is screenable); larger is safer.
    """
    flat = flat_interval(problem.loss)
    rows = _test_rows(problem)
    labels = problem.data.labels
    if problem.data.kind == ProblemKind.CLASSIFICATION:
        signed = labels[:, None] * rows
        # certified minimum of the margin b_i a_i'x over the region
        min_margin = -_bound_batch(-signed, np.zeros(problem.n), region)
        return min_margin - flat.lo
    upper = _bound_batch(rows, labels, region)
    lower = _bound_batch(-rows, -labels, region)
    return np.minimum(flat.hi - upper, -flat.lo - lower)


def screen(problem: ErmProblem, region: CutRegion,
           strict_eps: float = 1e-9) -> ScreeningReport:
    """Run the per-sample safe test over the region.

    Regression/interval samples are discarded when ``|a_i'x - b_i|`` is
    certified to stay strictly inside the flat interval; classification
    samples when the margin ``b_i a_i'x`` provably exceeds the flat
    threshold.  ``strict_eps`` keeps boundary cases conservative.
    """
    start = time.perf_counter()
    scores = _screening_scores(problem, region)
    keep = scores <= strict_eps
    mask = SampleMask(keep, scores)
    elapsed = time.perf_counter() - start
    settings = {
        "loss": problem.loss.family.value,
        "mu": problem.loss.mu,
        "penalty": problem.penalty.value,
        "lambda": problem.lam,
        "steps": region.ellipsoid.cuts,
        "radius": region.ellipsoid.initial_radius,
    }
    return ScreeningReport(mask, mask.n_discarded, region.ellipsoid.logdet,
                           settings, elapsed)


def compression_scores(problem: ErmProblem, region: CutRegion) -> np.ndarray:
    """Per-sample ranking scores for dataset compression.

    Same slack as the screening test: the larger the score, the easier
    the sample, the earlier it can be deleted.  Ties are broken by sample
    index when ranking.
    """
    return _screening_scores(problem, region)


def compression_order(problem: ErmProblem, region: CutRegion) -> np.ndarray:
    """Sample indices ordered easiest-first (stable in the index)."""
    scores = compression_scores(problem, region)
    return np.argsort(-scores, kind="stable")


def gap_ball_region(problem: ErmProblem, x) -> CutRegion:
    """Baseline safe region: ball of radius ``2 * gap / lambda`` at ``x``.

    Requires a strongly convex objective (l2sq penalty, linear mode); no
    half-space cut is attached.  The radius formula is conservative but
    can undershoot far from the optimum; experiments always re-verify
    containment.
    """
    if problem.mode != Mode.LINEAR or problem.penalty != Penalty.L2SQ:
        raise ValueError("baseline requires strong convexity (l2sq penalty, "
                         "linear mode)")
    x = np.asarray(x, dtype=float)
    gap = max(duality_gap(problem, x), 0.0)
    radius = 2.0 * gap / problem.lam
    if radius > 0:
        return CutRegion(init_ball(x, radius), None)
    p = x.shape[0]
    degenerate = Ellipsoid(x, 0.0, np.zeros((p, 0)), np.zeros(0), -math.inf)
    return CutRegion(degenerate, None)


def certified_radius(problem: ErmProblem, x0, gap: float | None = None) -> float:
    """Provably safe initial radius for a ball centered at ``x0``.

    l2sq: strong convexity gives ``|x0 - x*| <= sqrt(2 gap / lambda)``.
    l1: nonnegative losses give ``lambda |x*|_1 <= P(x*) <= P(x0)``, so
    ``|x0 - x*| <= P(x0)/lambda + |x0|``.  Kernelized problems are
    ``2 lam``-strongly convex in the RKHS norm, so the coefficient error
    satisfies ``|a0 - a*|_2 <= sqrt(gap/lam) / sqrt(lmin(K))``; this needs
    a numerically nonsingular Gram matrix.
    """
    x0 = np.asarray(x0, dtype=float)
    floor = 1e-9 * (1.0 + float(np.linalg.norm(x0)))
    if problem.mode == Mode.KERNELIZED:
        lmin = float(np.linalg.eigvalsh(problem.gram)[0])
        if lmin <= 1e-10:
            raise ValueError("gram matrix is numerically singular; cannot "
                             "certify an alpha-space radius")
        if gap is None:
            gap = duality_gap(problem, x0)
        return max(math.sqrt(max(gap, 0.0) / problem.lam) / math.sqrt(lmin),
                   floor)
    if problem.penalty == Penalty.L2SQ:
        if gap is None:
            gap = duality_gap(problem, x0)
        return max(math.sqrt(2.0 * max(gap, 0.0) / problem.lam), floor)
    p0 = primal_objective(problem, x0)
    return max(p0 / problem.lam + float(np.linalg.norm(x0)), floor)


def heuristic_radius(problem: ErmProblem, x0, scale: float = 2.0) -> float:
    """Order-of-magnitude initial radius for regions that cannot be
    certified up front (always follow with :func:`verify_containment`)."""
    x0 = np.asarray(x0, dtype=float)
    return scale * max(1.0, float(np.linalg.norm(x0)))


def progress_radius(problem: ErmProblem, x0, probe_epochs: int = 5,
                    safety: float = 100.0) -> float:
    """Initial radius estimated from recent solver progress at ``x0``.

    For a linearly converging solver the distance to the optimum is of
    the order of the last step length; ``safety`` inflates the estimate.
    Not a certificate: always confirm with :func:`verify_containment`.
    """
    x0 = np.asarray(x0, dtype=float)
    probe = solve(problem, max_epochs=probe_epochs, tol=0.0, x0=x0)
    moved = float(np.linalg.norm(probe.final.coefficients - x0))
    return safety * moved + 1e-8 * (1.0 + float(np.linalg.norm(x0)))


def verify_safety(problem: ErmProblem, mask: SampleMask, solver_tol: float,
                  check_tol: float, sol_tol: float | None = None,
                  max_epochs: int = 200_000) -> bool:
    """Solve the full and the screened problems and compare.

    True iff the full-data objective at the screened solution matches the
    full solution within ``check_tol`` and, for strongly convex problems
    (l2sq), the solutions agree within ``sol_tol`` relative (RKHS norm in
    kernelized mode).  The objective is always evaluated with all samples
    included.
    """
    if sol_tol is None:
        sol_tol = check_tol
    keep = mask.keep
    full = solve(problem, max_epochs=max_epochs, tol=solver_tol)
    if not full.converged:
        raise RuntimeError("full solve did not reach the requested tolerance")
    if keep.all():
        reduced = full
        coef_screened = full.final.coefficients
    else:
        reduced = solve(subset_problem(problem, keep),
                        max_epochs=max_epochs, tol=solver_tol)
        if not reduced.converged:
            raise RuntimeError("screened solve did not reach the requested "
                               "tolerance")
        if problem.mode == Mode.KERNELIZED:
            coef_screened = np.zeros(problem.n)
            coef_screened[keep] = reduced.final.coefficients
        else:
            coef_screened = reduced.final.coefficients
    coef_full = full.final.coefficients
    obj_full = primal_objective(problem, coef_full)
    obj_screened = primal_objective(problem, coef_screened)
    if abs(obj_screened - obj_full) > check_tol:
        return False
    if problem.penalty == Penalty.L2SQ:
        diff = coef_screened - coef_full
        if problem.mode == Mode.KERNELIZED:
            dist = math.sqrt(max(float(diff @ problem.gram @ diff), 0.0))
            ref = math.sqrt(max(float(coef_full @ problem.gram @ coef_full),
                                0.0))
        else:
            dist = float(np.linalg.norm(diff))
            ref = float(np.linalg.norm(coef_full))
        if dist > sol_tol * (1.0 + ref):
            return False
    return True
