import math

import numpy as np
import pytest

from samplescreen.core import gen_synthetic_regression
from samplescreen.ellipsoid import (CutRegion, Ellipsoid, build_region,
                                    dense_matrix, init_ball, logvol_drop,
                                    matvec, solve_shape, step,
                                    verify_containment)
from samplescreen.erm import ErmProblem, Penalty, solve
from samplescreen.losses import LossFamily, SafeLoss

from conftest import ellipsoid_from_dense, random_spd


def small_problem(seed=0, lam=0.05):
    data, _ = gen_synthetic_regression(40, 4, 2, 0.05, seed)
    loss = SafeLoss(LossFamily.SCREENING_FRIENDLY_REGRESSION, 0.3)
    return ErmProblem(data, loss, Penalty.L2SQ, lam)


class TestInitBall:
    def test_matrix_is_scaled_identity(self):
        e = init_ball(np.zeros(3), 2.0)
        np.testing.assert_allclose(dense_matrix(e), 4.0 * np.eye(3))
        assert e.cuts == 0
        assert e.initial_radius == pytest.approx(2.0)

    def test_matvec_scales(self, rng):
        e = init_ball(np.zeros(5), 2.0)
        v = rng.standard_normal(5)
        np.testing.assert_allclose(matvec(e, v), 4.0 * v)

    def test_contains_ball_points(self, rng):
        e = init_ball(np.ones(4), 2.0)
        region = CutRegion(e)
        for _ in range(50):
            d = rng.standard_normal(4)
            x = np.ones(4) + 2.0 * rng.uniform() * d / np.linalg.norm(d)
            assert verify_containment(region, x, 1e-9)

    def test_radius_must_be_positive(self):
        with pytest.raises(ValueError, match="radius"):
            init_ball(np.zeros(3), 0.0)

    def test_dimension_one_rejected(self):
        with pytest.raises(ValueError, match="p >= 2"):
            init_ball(np.zeros(1), 1.0)


class TestMatvec:
    def test_rank_one_cut_algebra(self):
        e = init_ball(np.zeros(2), 1.0)
        e1 = step(e, np.array([1.0, 0.0]))
        # column EgÌƒ = (1, 0), weight c * 2/(p+1)
        v = np.array([0.7, -0.4])
        c = 4.0 / 3.0
        expect = c * v - np.array([v[0] * c * 2.0 / 3.0, 0.0])
        np.testing.assert_allclose(matvec(e1, v), expect, atol=1e-14)

    def test_matches_dense_random(self, rng):
        for _ in range(20):
            e_dense = random_spd(rng, 20, cond=30.0)
            e = ellipsoid_from_dense(e_dense, rng.standard_normal(20))
            for _ in range(5):
                g = rng.standard_normal(20)
                e = step(e, g)
            dense = dense_matrix(e)
            v = rng.standard_normal(20)
            np.testing.assert_allclose(matvec(e, v), dense @ v, atol=1e-10)

    def test_dimension_mismatch(self):
        e = init_ball(np.zeros(3), 1.0)
        with pytest.raises(ValueError, match="shape"):
            matvec(e, np.zeros(4))


class TestStep:
    def test_hand_example_p2(self):
        e = init_ball(np.zeros(2), 1.0)
        e1 = step(e, np.array([1.0, 0.0]))
        np.testing.assert_allclose(e1.center, [-1.0 / 3.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(dense_matrix(e1),
                                   np.diag([4.0 / 9.0, 4.0 / 3.0]),
                                   atol=1e-15)

    def test_determinant_ratio_p2(self):
        e = init_ball(np.zeros(2), 1.0)
        e1 = step(e, np.array([0.3, -0.8]))
        ratio = np.linalg.det(dense_matrix(e1)) / np.linalg.det(dense_matrix(e))
        assert ratio == pytest.approx(16.0 / 27.0, abs=1e-12)

    def test_zero_direction_rejected(self):
        e = init_ball(np.zeros(3), 1.0)
        with pytest.raises(ValueError, match="nonzero"):
            step(e, np.zeros(3))

    def test_representation_matches_direct_dense_updates(self, rng):
        # run the textbook update densely alongside the downdate form
        p, k = 30, 25
        e = init_ball(np.zeros(p), 3.0)
        dense = 9.0 * np.eye(p)
        center = np.zeros(p)
        c = p * p / (p * p - 1.0)
        for _ in range(k):
            g = rng.standard_normal(p)
            e = step(e, g)
            gt = g / math.sqrt(g @ dense @ g)
            eg = dense @ gt
            center = center - eg / (p + 1.0)
            dense = c * (dense - (2.0 / (p + 1.0)) * np.outer(eg, eg))
            np.testing.assert_allclose(dense_matrix(e), dense, atol=1e-9)
            np.testing.assert_allclose(e.center, center, atol=1e-12)

    def test_positive_definite_along_runs(self, rng):
        for p in (2, 7, 30):
            e = init_ball(rng.standard_normal(p), 2.0)
            for _ in range(25):
                e = step(e, rng.standard_normal(p))
                assert np.linalg.eigvalsh(dense_matrix(e))[0] > 0

    def test_logdet_tracking(self, rng):
        e = init_ball(np.zeros(6), 1.5)
        for _ in range(12):
            e = step(e, rng.standard_normal(6))
        sign, logdet = np.linalg.slogdet(dense_matrix(e))
        assert sign == 1.0
        assert e.logdet == pytest.approx(logdet, abs=1e-9)

    @pytest.mark.parametrize("p", [2, 5, 10, 20])
    def test_logvolume_law(self, p, rng):
        e = init_ball(np.zeros(p), 2.0)
        drop = logvol_drop(p)
        expect = p * math.log(p * p / (p * p - 1.0)) \
            + math.log((p - 1.0) / (p + 1.0))
        for _ in range(25):
            prev = e.logdet
            e = step(e, rng.standard_normal(p))
            # volume change is half the logdet change
            assert 0.5 * (e.logdet - prev) == pytest.approx(-drop, abs=1e-12)
        sign, logdet = np.linalg.slogdet(dense_matrix(e))
        assert 0.5 * (logdet - p * math.log(4.0)) == pytest.approx(
            25 * 0.5 * expect, abs=1e-9)

    def test_halfspace_containment_monte_carlo(self, rng):
        # no sampled point of the kept half-ellipsoid may escape the update
        total = 0
        for p in (2, 5, 13):
            e_dense = random_spd(rng, p, cond=15.0)
            z = rng.standard_normal(p)
            e = ellipsoid_from_dense(e_dense, z)
            for _ in range(2):
                g = rng.standard_normal(p)
                e_next = step(e, g)
                sqrtm = np.linalg.cholesky(dense_matrix(e))
                inv_next = np.linalg.inv(dense_matrix(e_next))
                n_draws = 70_000 if p == 2 else 35_000
                u = rng.standard_normal((n_draws, p))
                u /= np.linalg.norm(u, axis=1, keepdims=True)
                u *= rng.uniform(size=(n_draws, 1)) ** (1.0 / p)
                x = e.center + u @ sqrtm.T
                half = (x - e.center) @ g <= 0
                x = x[half]
                diff = x - e_next.center
                quad = np.einsum("ij,jk,ik->i", diff, inv_next, diff)
                assert np.max(quad) <= 1.0 + 1e-9
                total += x.shape[0]
                e = e_next
        assert total >= 100_000


class TestSolveShape:
    def test_matches_dense_solve(self, rng):
        e_dense = random_spd(rng, 12, cond=50.0)
        e = ellipsoid_from_dense(e_dense, np.zeros(12))
        rhs = rng.standard_normal(12)
        np.testing.assert_allclose(solve_shape(e, rhs),
                                   np.linalg.solve(e_dense, rhs), atol=1e-8)


class TestVerifyContainment:
    def test_center_inside(self):
        region = CutRegion(init_ball(np.ones(3), 0.5))
        assert verify_containment(region, np.ones(3))

    def test_far_point_outside(self):
        region = CutRegion(init_ball(np.zeros(3), 1.0))
        x = np.array([2.0, 0.0, 0.0])
        assert not verify_containment(region, x)

    def test_halfspace_side_checked(self):
        g = np.array([1.0, 0.0])
        region = CutRegion(init_ball(np.zeros(2), 1.0), g)
        assert verify_containment(region, np.array([-0.5, 0.2]))
        assert not verify_containment(region, np.array([0.5, 0.2]))

    def test_halfspace_normal_must_be_nonzero(self):
        with pytest.raises(ValueError, match="nonzero"):
            CutRegion(init_ball(np.zeros(2), 1.0), np.zeros(2))


class TestBuildRegion:
    def test_zero_steps_keeps_ball(self):
        prob = small_problem()
        region = build_region(prob, np.zeros(4), 2.0, 0)
        assert region.ellipsoid.cuts == 0
        assert region.ellipsoid.initial_radius == pytest.approx(2.0)
        assert region.halfspace_g is not None

    def test_volume_decreases_each_step(self):
        prob = small_problem()
        region0 = build_region(prob, np.zeros(4), 2.0, 0)
        prev = region0.ellipsoid.logdet
        for k in (1, 3, 6, 10):
            region = build_region(prob, np.zeros(4), 2.0, k)
            assert region.ellipsoid.logdet < prev - 1e-9
            assert region.ellipsoid.cuts == k
            prev = region.ellipsoid.logdet

    def test_center_approaches_optimum(self):
        prob = small_problem(seed=3)
        x_star = solve(prob, max_epochs=20000, tol=1e-12).final.coefficients
        dists = []
        for k in (0, 40, 120):
            region = build_region(prob, np.zeros(4), 4.0, k)
            dists.append(np.linalg.norm(region.ellipsoid.center - x_star))
        assert dists[1] < dists[0]
        assert dists[2] < dists[1]

    def test_contains_optimum_with_honest_radius(self):
        prob = small_problem(seed=1)
        x_star = solve(prob, max_epochs=20000, tol=1e-12).final.coefficients
        radius = np.linalg.norm(x_star) * 2 + 1.0
        region = build_region(prob, np.zeros(4), radius, 15)
        assert verify_containment(region, x_star, 1e-9)

    def test_stops_at_exact_optimum(self):
        # subgradient 0 at the start: region stays the ball, no half-space
        data, _ = gen_synthetic_regression(10, 3, 1, 0.0, seed=0)
        from samplescreen.core import Dataset, ProblemKind
        flatdata = Dataset(data.features * 1e-3, np.zeros(10),
                           ProblemKind.REGRESSION)
        loss = SafeLoss(LossFamily.SCREENING_FRIENDLY_REGRESSION, 0.5)
        prob = ErmProblem(flatdata, loss, Penalty.L1, 0.5)
        region = build_region(prob, np.zeros(3), 1.0, 5)
        assert region.ellipsoid.cuts == 0
        assert region.halfspace_g is None

    def test_negative_steps_rejected(self):
        with pytest.raises(ValueError, match="n_steps"):
            build_region(small_problem(), np.zeros(4), 1.0, -1)
