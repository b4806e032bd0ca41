import math

import numpy as np
import pytest

from samplescreen.core import (Dataset, Mode, ProblemKind,
                               gen_synthetic_regression)
from samplescreen.ellipsoid import build_region, verify_containment
from samplescreen.erm import ErmProblem, Penalty, duality_gap, solve
from samplescreen.kernels import GramMatrix, gaussian_gram, kernelize
from samplescreen.losses import LossFamily, SafeLoss
from samplescreen.screening import certified_radius, screen, verify_safety

from conftest import gen_blobs

SREG = SafeLoss(LossFamily.SCREENING_FRIENDLY_REGRESSION, 0.3)
SQH = SafeLoss(LossFamily.SQUARED_HINGE, 0.5)


class TestGaussianGram:
    def test_identical_rows_give_one(self):
        data = Dataset(np.ones((3, 2)), np.zeros(3), ProblemKind.REGRESSION)
        gram = gaussian_gram(data, 1.0)
        np.testing.assert_allclose(gram.values, np.ones((3, 3)))

    def test_known_distance(self):
        sigma = 0.7
        feats = np.array([[0.0, 0.0], [sigma * math.sqrt(2.0), 0.0]])
        data = Dataset(feats, np.zeros(2), ProblemKind.REGRESSION)
        gram = gaussian_gram(data, sigma)
        assert gram.values[0, 1] == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_wide_bandwidth_limit(self, rng):
        data, _ = gen_synthetic_regression(20, 4, 2, 0.1, seed=3)
        gram = gaussian_gram(data, 1e6)
        assert np.min(gram.values) >= 1.0 - 1e-9

    def test_unit_diagonal_and_symmetry(self, rng):
        data, _ = gen_synthetic_regression(50, 6, 2, 0.3, seed=5)
        gram = gaussian_gram(data, 1.3)
        np.testing.assert_array_equal(np.diagonal(gram.values), 1.0)
        np.testing.assert_array_equal(gram.values, gram.values.T)

    def test_psd_on_random_datasets(self, rng):
        for seed in range(5):
            n = int(rng.integers(20, 200))
            data, _ = gen_synthetic_regression(n, 5, 2, 0.5, seed=seed)
            gram = gaussian_gram(data, float(rng.uniform(0.3, 3.0)))
            assert np.linalg.eigvalsh(gram.values)[0] >= -1e-8

    def test_sigma_validation(self):
        data, _ = gen_synthetic_regression(5, 2, 1, 0.0, seed=0)
        with pytest.raises(ValueError, match="sigma"):
            gaussian_gram(data, 0.0)

    def test_gram_type_invariants(self):
        with pytest.raises(ValueError, match="unit diagonal"):
            GramMatrix(2.0 * np.eye(3), 1.0)
        bad = np.eye(3)
        bad[0, 1] = 1e-6
        with pytest.raises(ValueError, match="symmetric"):
            GramMatrix(bad, 1.0)


class TestKernelize:
    def test_l1_rejected(self):
        data, _ = gen_synthetic_regression(10, 3, 1, 0.1, seed=0)
        prob = ErmProblem(data, SREG, Penalty.L1, 0.1)
        with pytest.raises(ValueError, match="l1"):
            kernelize(prob, gaussian_gram(data, 1.0))

    def test_double_kernelize_rejected(self):
        data, _ = gen_synthetic_regression(10, 3, 1, 0.1, seed=0)
        prob = ErmProblem(data, SREG, Penalty.L2SQ, 0.1)
        kprob = kernelize(prob, gaussian_gram(data, 1.0))
        with pytest.raises(ValueError, match="already"):
            kernelize(kprob, gaussian_gram(data, 1.0))

    def test_lambda_mapping(self):
        data, _ = gen_synthetic_regression(10, 3, 1, 0.1, seed=0)
        prob = ErmProblem(data, SREG, Penalty.L2SQ, 0.1)
        kprob = kernelize(prob, gaussian_gram(data, 1.0))
        assert kprob.lam == pytest.approx(0.05)
        assert kprob.mode == Mode.KERNELIZED

    def test_linear_kernel_reproduces_linear_predictions(self):
        data, _ = gen_synthetic_regression(30, 5, 2, 0.05, seed=8)
        lin = ErmProblem(data, SREG, Penalty.L2SQ, 0.05)
        ker = kernelize(lin, data.features @ data.features.T)
        fl = solve(lin, max_epochs=30000, tol=1e-12)
        fk = solve(ker, max_epochs=30000, tol=1e-12)
        pred_lin = data.features @ fl.final.coefficients
        pred_ker = ker.gram @ fk.final.coefficients
        assert np.max(np.abs(pred_lin - pred_ker)) <= 1e-5

    def test_single_sample_scalar_problem(self):
        data = Dataset(np.array([[1.0]]), np.array([2.0]),
                       ProblemKind.REGRESSION)
        loss = SafeLoss(LossFamily.SCREENING_FRIENDLY_REGRESSION, 0.5)
        kprob = kernelize(ErmProblem(data, loss, Penalty.L2SQ, 0.4),
                          np.array([[1.0]]))
        trace = solve(kprob, max_epochs=4000, tol=1e-13)
        # stationarity of sreg(a - 2) + 0.2 a^2: (a - 1.5) + 0.4 a = 0
        assert trace.final.coefficients[0] == pytest.approx(1.5 / 1.4,
                                                            abs=1e-5)


class TestKernelScreening:
    def test_alpha_space_screening_is_safe(self):
        data = gen_blobs(100, 4, 1.5, 0.5, 5, scale=2.2)
        kprob = kernelize(ErmProblem(data, SQH, Penalty.L2SQ, 0.003),
                          gaussian_gram(data, 1.0))
        init = solve(kprob, max_epochs=8000, tol=1e-11)
        a0 = init.final.coefficients
        radius = certified_radius(kprob, a0)
        region = build_region(kprob, a0, radius, 25)
        report = screen(kprob, region)
        assert report.n_screened >= 1
        ref = solve(kprob, max_epochs=60000, tol=1e-11).final.coefficients
        assert verify_containment(region, ref, 1e-6)
        assert verify_safety(kprob, report.mask, solver_tol=1e-11,
                             check_tol=1e-6, sol_tol=1e-3)

    def test_certified_radius_contains_optimum(self):
        data = gen_blobs(40, 3, 1.5, 0.5, 2, scale=2.2)
        kprob = kernelize(ErmProblem(data, SQH, Penalty.L2SQ, 0.01),
                          gaussian_gram(data, 1.0))
        init = solve(kprob, max_epochs=500, tol=1e-8)
        a0 = init.final.coefficients
        radius = certified_radius(kprob, a0)
        ref = solve(kprob, max_epochs=60000, tol=1e-12).final.coefficients
        assert np.linalg.norm(ref - a0) <= radius
