"""Ellipsoid-method engine: cut updates in low-rank downdate form.

The shape matrix after k cuts is kept as ``E = s*I - L*diag(d)*L'`` so a
product ``E v`` costs O(p k) and no dense matrix is ever materialized.
Each cut shrinks the volume by the fixed factor
``(p^2/(p^2-1))^(p/2) * sqrt((p-1)/(p+1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .erm import ErmProblem, objective_subgradient


@dataclass(frozen=True)
class Ellipsoid:
    """Region ``{x : (x - center)' E^{-1} (x - center) <= 1}`` with
    ``E = scale * I - factors @ diag(weights) @ factors'``."""

    center: np.ndarray
    scale: float
    factors: np.ndarray      # (p, k), one column per cut
    weights: np.ndarray      # (k,) nonnegative downdate weights
    logdet: float            # log det E, tracked in closed form
    last_cut: np.ndarray | None = None

    def __post_init__(self):
        center = np.ascontiguousarray(np.asarray(self.center, dtype=float))
        p = center.shape[0]
        factors = np.ascontiguousarray(np.asarray(self.factors, dtype=float))
        weights = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        if center.ndim != 1:
            raise ValueError("center must be a vector")
        if factors.shape != (p, weights.shape[0]):
            raise ValueError("factors/weights shapes are inconsistent")
        if self.scale < 0 or np.any(weights < 0):
            raise ValueError("scale and weights must be nonnegative")
        for name, arr in (("center", center), ("factors", factors),
                          ("weights", weights)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.last_cut is not None:
            cut = np.ascontiguousarray(np.asarray(self.last_cut, dtype=float))
            cut.setflags(write=False)
            object.__setattr__(self, "last_cut", cut)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def cuts(self) -> int:
        return self.weights.shape[0]

    @property
    def initial_radius(self) -> float:
        """Radius of the ball the region started from (inverts the scaling
        applied by the cut updates)."""
        p = self.dim
        if self.cuts == 0:
            return math.sqrt(self.scale)
        growth = (p * p / (p * p - 1.0)) ** self.cuts
        return math.sqrt(self.scale / growth)


@dataclass(frozen=True)
class CutRegion:
    """Ellipsoid intersected with the half-space of its final subgradient:
    ``{x in ellipsoid : g'(x - center) <= 0}`` when ``halfspace_g`` is set."""

    ellipsoid: Ellipsoid
    halfspace_g: np.ndarray | None = None

    def __post_init__(self):
        if self.halfspace_g is not None:
            g = np.ascontiguousarray(np.asarray(self.halfspace_g, dtype=float))
            if g.shape != (self.ellipsoid.dim,):
                raise ValueError("half-space normal has the wrong dimension")
            if not np.any(g):
                raise ValueError("half-space normal must be nonzero")
            g.setflags(write=False)
            object.__setattr__(self, "halfspace_g", g)


def init_ball(center, radius: float) -> Ellipsoid:
    """Ball of the given radius: ``E = radius^2 * I``, no cuts yet."""
    center = np.asarray(center, dtype=float)
    if radius <= 0:
        raise ValueError("radius must be positive")
    p = center.shape[0]
    if p < 2:
        raise ValueError("ellipsoid cuts need dimension p >= 2")
    return Ellipsoid(center, radius * radius, np.zeros((p, 0)), np.zeros(0),
                     p * 2.0 * math.log(radius))


def matvec(e: Ellipsoid, v) -> np.ndarray:
    """``E v`` in O(p k) using the downdate structure."""
    v = np.asarray(v, dtype=float)
    if v.shape != (e.dim,):
        raise ValueError(f"expected vector of shape ({e.dim},), got {v.shape}")
    return e.scale * v - e.factors @ (e.weights * (e.factors.T @ v))


def matmat(e: Ellipsoid, m: np.ndarray) -> np.ndarray:
    """``E @ m`` column-wise, same structure as :func:`matvec`."""
    return e.scale * m - e.factors @ (e.weights[:, None] * (e.factors.T @ m))


def dense_matrix(e: Ellipsoid) -> np.ndarray:
    """Materialized E; diagnostics and tests only."""
    return e.scale * np.eye(e.dim) \
        - (e.factors * e.weights) @ e.factors.T


def step(e: Ellipsoid, g) -> Ellipsoid:
    """One central-cut update with subgradient ``g`` at the center.

    The new ellipsoid is the minimum-volume cover of the half-ellipsoid
    ``{x in E : g'(x - center) <= 0}``.
    """
    g = np.asarray(g, dtype=float)
    p = e.dim
    if p < 2:
        raise ValueError("ellipsoid cuts need dimension p >= 2")
    if g.shape != (p,) or not np.any(g):
        raise ValueError("cut direction must be a nonzero p-vector")
    eg = matvec(e, g)
    quad = float(g @ eg)
    if not math.isfinite(quad) or quad <= 0:
        raise RuntimeError("cut direction has nonpositive E-norm; "
                           "ellipsoid lost positive definiteness")
    egt = eg / math.sqrt(quad)  # E @ g_tilde
    c = p * p / (p * p - 1.0)
    center = e.center - egt / (p + 1.0)
    factors = np.hstack([e.factors, egt[:, None]])
    weights = np.concatenate([c * e.weights, [c * 2.0 / (p + 1.0)]])
    logdet = e.logdet + p * math.log(c) + math.log((p - 1.0) / (p + 1.0))
    return Ellipsoid(center, c * e.scale, factors, weights, logdet, g)


def logvol_drop(p: int) -> float:
    """Per-step decrease of the log-volume (a fixed function of p)."""
    c = p * p / (p * p - 1.0)
    return -0.5 * (p * math.log(c) + math.log((p - 1.0) / (p + 1.0)))


def solve_shape(e: Ellipsoid, rhs, rtol: float = 1e-10,
                max_iters: int | None = None) -> np.ndarray:
    """Solve ``E y = rhs`` by conjugate gradient on :func:`matvec`."""
    rhs = np.asarray(rhs, dtype=float)
    if max_iters is None:
        max_iters = 10 * e.dim
    y = np.zeros_like(rhs)
    r = rhs - matvec(e, y)
    d = r.copy()
    rs = float(r @ r)
    target = rtol * math.sqrt(float(rhs @ rhs))
    if math.sqrt(rs) <= target:
        return y
    for _ in range(max_iters):
        ed = matvec(e, d)
        denom = float(d @ ed)
        if denom <= 0:
            raise RuntimeError("conjugate gradient hit a nonpositive "
                               "curvature direction; E is not PD")
        alpha = rs / denom
        y = y + alpha * d
        r = r - alpha * ed
        rs_new = float(r @ r)
        if math.sqrt(rs_new) <= target:
            return y
        d = r + (rs_new / rs) * d
        rs = rs_new
    raise RuntimeError("conjugate gradient did not converge; "
                       "ellipsoid matrix is ill-conditioned")


def verify_containment(region: CutRegion, x_ref, tol: float = 1e-9) -> bool:
    """A-posteriori check that ``x_ref`` lies in the region (up to tol)."""
    e = region.ellipsoid
    x_ref = np.asarray(x_ref, dtype=float)
    diff = x_ref - e.center
    if e.scale == 0.0:  # degenerate ball of radius zero
        inside = float(np.linalg.norm(diff)) <= tol * max(1.0, float(
            np.linalg.norm(e.center)))
    else:
        y = solve_shape(e, diff)
        inside = float(diff @ y) <= 1.0 + tol
    if inside and region.halfspace_g is not None:
        g = region.halfspace_g
        slack = tol * float(np.linalg.norm(g)) * math.sqrt(max(e.scale, 0.0))
        inside = float(g @ diff) <= slack
    return bool(inside)


def build_region(problem: ErmProblem, x0, radius: float,
                 n_steps: int) -> CutRegion:
    """Run ``n_steps`` ellipsoid cuts from ``ball(x0, radius)`` using
    subgradients of the ERM objective, keeping the final subgradient as
    the half-space constraint.

    The caller asserts that the optimum lies in the initial ball; use
    :func:`verify_containment` against a high-precision solve to confirm
    a posteriori.  Stops early if a center has an (exactly) zero
    subgradient, i.e. is already optimal.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    e = init_ball(np.asarray(x0, dtype=float), radius)
    for _ in range(n_steps):
        g = objective_subgradient(problem, e.center)
        if not np.any(g):
            return CutRegion(e, None)
        e = step(e, g)
    g = objective_subgradient(problem, e.center)
    if not np.any(g):
        return CutRegion(e, None)
    return CutRegion(e, g)
