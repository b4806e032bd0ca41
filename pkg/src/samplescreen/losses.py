"""The safe-loss family: closed forms, subgradients, conjugates, flat regions.

A loss is "safe" when it is exactly zero on a non-trivial interval; the
optimal dual variable of any sample whose margin lands strictly inside
that interval is then zero, which is what makes screening possible.  The
threshold parameter ``mu`` controls the width of the flat region.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class LossFamily(enum.Enum):
    SCREENING_FRIENDLY_REGRESSION = "sreg"
    SAFE_LOGISTIC = "safe_logistic"
    HINGE = "hinge"
    SQUARED_HINGE = "squared_hinge"
    HUBER = "huber"
    SQUARE = "square"
    LOGISTIC = "logistic"


# families whose shape depends on mu (mu > 0 required)
_MU_FAMILIES = frozenset({
    LossFamily.SCREENING_FRIENDLY_REGRESSION,
    LossFamily.SAFE_LOGISTIC,
    LossFamily.HINGE,
    LossFamily.SQUARED_HINGE,
    LossFamily.HUBER,
})

# families with a non-singleton zero set (screenable)
SAFE_FAMILIES = frozenset({
    LossFamily.SCREENING_FRIENDLY_REGRESSION,
    LossFamily.SAFE_LOGISTIC,
    LossFamily.HINGE,
    LossFamily.SQUARED_HINGE,
})


@dataclass(frozen=True)
class SafeLoss:
    """Loss descriptor: a family plus its threshold parameter ``mu``.

    ``square`` and ``logistic`` are the classical non-safe references and
    ignore ``mu``; every other family requires ``mu > 0``.
    """

    family: LossFamily
    mu: float = 0.0

    def __post_init__(self):
        if self.family in _MU_FAMILIES:
            if not self.mu > 0:
                raise ValueError(f"{self.family.value} requires mu > 0")
        elif self.mu != 0.0:
            raise ValueError(f"{self.family.value} does not take a mu parameter")

    @property
    def is_safe(self) -> bool:
        return self.family in SAFE_FAMILIES


@dataclass(frozen=True)
class FlatInterval:
    """Closed interval on which a safe loss is exactly zero."""

    lo: float
    hi: float

    def contains(self, t, strict_eps: float = 0.0):
        t = np.asarray(t, dtype=float)
        return (t > self.lo + strict_eps) & (t < self.hi - strict_eps)


def _as_array(t):
    arr = np.asarray(t, dtype=float)
    return arr, (arr.ndim == 0)


def _xlogx(u):
    # u * log(u) extended by continuity with value 0 at u = 0
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = u[pos] * np.log(u[pos])
    return out


def loss_eval(loss: SafeLoss, t):
    """Pointwise loss value; accepts scalars or arrays (elementwise)."""
    arr, scalar = _as_array(t)
    mu = loss.mu
    fam = loss.family
    if fam == LossFamily.SCREENING_FRIENDLY_REGRESSION:
        out = 0.5 * np.maximum(np.abs(arr) - mu, 0.0) ** 2
    elif fam == LossFamily.SAFE_LOGISTIC:
        v = arr + mu - 1.0
        out = np.where(v <= 0, np.exp(np.minimum(v, 0.0)) - v - 1.0, 0.0)
    elif fam == LossFamily.HINGE:
        out = 0.5 * np.maximum(1.0 - arr - mu, 0.0)
    elif fam == LossFamily.SQUARED_HINGE:
        out = np.maximum(1.0 - arr - mu, 0.0) ** 2
    elif fam == LossFamily.HUBER:
        out = np.where(np.abs(arr) <= mu, arr * arr / (2 * mu),
                       np.abs(arr) - mu / 2)
    elif fam == LossFamily.SQUARE:
        out = 0.5 * arr * arr
    else:  # logistic
        out = np.logaddexp(0.0, -arr)
    return float(out) if scalar else out


def loss_subgradient(loss: SafeLoss, t):
    """A subgradient of the loss at ``t`` (the derivative when smooth).

    At the hinge kink the flat-side element 0 is returned, which maximises
    dual sparsity.
    """
    arr, scalar = _as_array(t)
    mu = loss.mu
    fam = loss.family
    if fam == LossFamily.SCREENING_FRIENDLY_REGRESSION:
        out = np.sign(arr) * np.maximum(np.abs(arr) - mu, 0.0)
    elif fam == LossFamily.SAFE_LOGISTIC:
        v = arr + mu - 1.0
        out = np.where(v <= 0, np.exp(np.minimum(v, 0.0)) - 1.0, 0.0)
    elif fam == LossFamily.HINGE:
        out = np.where(arr < 1.0 - mu, -0.5, 0.0)
    elif fam == LossFamily.SQUARED_HINGE:
        out = -2.0 * np.maximum(1.0 - arr - mu, 0.0)
    elif fam == LossFamily.HUBER:
        out = np.where(np.abs(arr) <= mu, arr / mu, np.sign(arr))
    elif fam == LossFamily.SQUARE:
        out = arr.copy()
    else:  # logistic
        out = -np.exp(-np.logaddexp(0.0, arr))
    return float(out) if scalar else out


def loss_conjugate(loss: SafeLoss, y):
    """Fenchel conjugate ``f*(y)``; +inf outside the conjugate's domain."""
    arr, scalar = _as_array(y)
    mu = loss.mu
    fam = loss.family
    if fam == LossFamily.SCREENING_FRIENDLY_REGRESSION:
        out = 0.5 * arr * arr + mu * np.abs(arr)
    elif fam == LossFamily.SAFE_LOGISTIC:
        out = np.full_like(arr, np.inf)
        ok = (arr >= -1.0) & (arr <= 0.0)
        v = arr[ok]
        out[ok] = (1.0 - mu) * v + _xlogx(1.0 + v) - v
    elif fam == LossFamily.HINGE:
        out = np.where((arr >= -0.5) & (arr <= 0.0), (1.0 - mu) * arr, np.inf)
    elif fam == LossFamily.SQUARED_HINGE:
        out = np.where(arr <= 0.0, (1.0 - mu) * arr + arr * arr / 4.0, np.inf)
    elif fam == LossFamily.HUBER:
        out = np.where(np.abs(arr) <= 1.0, mu * arr * arr / 2.0, np.inf)
    elif fam == LossFamily.SQUARE:
        out = 0.5 * arr * arr
    else:  # logistic
        out = np.full_like(arr, np.inf)
        ok = (arr >= -1.0) & (arr <= 0.0)
        v = arr[ok]
        out[ok] = _xlogx(-v) + _xlogx(1.0 + v)
    return float(out) if scalar else out


def flat_interval(loss: SafeLoss) -> FlatInterval:
    """The zero set of a safe loss; raises for non-safe families."""
    fam = loss.family
    if fam == LossFamily.SCREENING_FRIENDLY_REGRESSION:
        return FlatInterval(-loss.mu, loss.mu)
    if fam in (LossFamily.SAFE_LOGISTIC, LossFamily.HINGE,
               LossFamily.SQUARED_HINGE):
        return FlatInterval(1.0 - loss.mu, math.inf)
    raise ValueError(f"loss {fam.value!r} has no flat interval")


# ---------------------------------------------------------------------------
# Numeric infimal-convolution oracle (test instrument)
# ---------------------------------------------------------------------------

def omega_star_linf_ball(y):
    """Indicator of the unit l-inf ball: conjugate of the l1 norm."""
    y = np.asarray(y, dtype=float)
    return np.where(np.abs(y) <= 1.0, 0.0, np.inf)


def omega_star_halfline(y):
    """Indicator of {y >= -1}: conjugate of ``|x| + indicator(x <= 0)``."""
    y = np.asarray(y, dtype=float)
    return np.where(y >= -1.0, 0.0, np.inf)


def omega_star_quadratic(y):
    y = np.asarray(y, dtype=float)
    return 0.5 * y * y


def infconv_oracle(base, omega_star, mu: float, t: float,
                   grid_halfwidth: float = 50.0,
                   grid_step: float = 1e-4) -> float:
    """Numerically evaluate ``min_z base(z) + mu * omega_star((t - z)/mu)``.

    Test oracle only: a uniform grid (augmented with the points where an
    indicator ``omega_star`` switches on) followed by local refinement of
    the best bracket.  Both ``base`` and ``omega_star`` must be vectorized
    and may return +inf.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if grid_halfwidth <= abs(t):
        raise ValueError("grid_halfwidth must exceed |t|")

    def objective(z):
        z = np.asarray(z, dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            return np.asarray(base(z), dtype=float) + mu * np.asarray(
                omega_star((t - z) / mu), dtype=float)

    z = np.arange(-grid_halfwidth, grid_halfwidth + grid_step, grid_step)
    z = np.concatenate([z, [t, t - mu, t + mu]])
    vals = objective(z)
    finite = np.isfinite(vals)
    if not finite.any():
        return math.inf
    best = z[finite][np.argmin(vals[finite])]

    lo, hi = best - grid_step, best + grid_step
    for _ in range(60):
        zz = np.linspace(lo, hi, 33)
        vv = objective(zz)
        i = int(np.nanargmin(np.where(np.isfinite(vv), vv, np.inf)))
        width = (hi - lo) / 8
        lo, hi = zz[i] - width, zz[i] + width
        if width < 1e-14 * max(1.0, abs(zz[i])):
            break
    cand = np.concatenate([[best, t, t - mu, t + mu], np.linspace(lo, hi, 9)])
    cv = objective(cand)
    return float(np.min(cv[np.isfinite(cv)]))
