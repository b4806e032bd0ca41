"""Shared test helpers: data generators and independent oracles."""

import numpy as np
import pytest

from samplescreen.core import Dataset, ProblemKind
from samplescreen.ellipsoid import Ellipsoid


def gen_blobs(n, p, sep, noise, seed, scale=1.0):
    """Two Gaussian clusters at +/- sep along a random unit direction."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(p)
    u /= np.linalg.norm(u)
    y = np.where(rng.uniform(size=n) < 0.5, 1.0, -1.0)
    feats = y[:, None] * (sep * u)[None, :] + noise * rng.standard_normal((n, p))
    return Dataset(scale * feats, y, ProblemKind.CLASSIFICATION)


def ellipsoid_from_dense(e_dense, center):
    """Wrap an arbitrary SPD matrix in the downdate representation."""
    e_dense = np.asarray(e_dense, dtype=float)
    eigvals, eigvecs = np.linalg.eigh(e_dense)
    if eigvals[0] <= 0:
        raise ValueError("matrix must be positive definite")
    s = float(eigvals[-1])
    weights = s - eigvals
    logdet = float(np.sum(np.log(eigvals)))
    return Ellipsoid(np.asarray(center, dtype=float), s, eigvecs, weights,
                     logdet)


def random_spd(rng, p, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    eigvals = np.exp(rng.uniform(0.0, np.log(cond), size=p))
    return (q * eigvals) @ q.T


def cut_ball_max_oracle(e_dense, center, a, g=None, b_off=0.0,
                        grid=4001, refine=48):
    """Brute-force maximum of ``a'x - b_off`` over the cut ellipsoid.

    Works in whitened coordinates ``x = z + E^{1/2} u`` where the feasible
    set is the unit ball cut by a central half-space; the objective only
    lives in a 2-D span, so a dense angular grid plus local refinement is
    exact to ~1e-12.  Entirely independent of the closed-form test path.
    """
    e_dense = np.asarray(e_dense, dtype=float)
    center = np.asarray(center, dtype=float)
    a = np.asarray(a, dtype=float)
    eigvals, eigvecs = np.linalg.eigh(e_dense)
    esqrt = (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T
    c = esqrt @ a
    base = float(a @ center) - b_off
    if g is None:
        return base + float(np.linalg.norm(c))
    h = esqrt @ np.asarray(g, dtype=float)
    hn = float(np.linalg.norm(h))
    if hn == 0.0:
        return base + float(np.linalg.norm(c))
    e1 = h / hn
    ce1 = float(c @ e1)
    c_perp = c - ce1 * e1
    cpn = float(np.linalg.norm(c_perp))
    if cpn < 1e-13:
        # objective aligned with the cut normal: max over u1 in [-1, 0]
        return base + max(0.0, -ce1)
    # maximize ce1*cos(t) + cpn*sin(t) over the feasible arc cos(t) <= 0
    lo, hi = np.pi / 2, 3 * np.pi / 2

    def best_on(thetas):
        vals = ce1 * np.cos(thetas) + cpn * np.sin(thetas)
        i = int(np.argmax(vals))
        return thetas[i], float(vals[i])

    theta, val = best_on(np.linspace(lo, hi, grid))
    width = (hi - lo) / (grid - 1)
    for _ in range(refine):
        t0 = max(lo, theta - width)
        t1 = min(hi, theta + width)
        theta, val = best_on(np.linspace(t0, t1, 33))
        width /= 8.0
    # a linear objective attains its max at an extreme point, and every
    # extreme point of the half-disk lies on the arc (endpoints included)
    return base + val


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
