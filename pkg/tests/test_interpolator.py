import numpy as np
import pytest
from hypothesis import given, strategies as st

from bolab.interpolator import (RankDeficientError, certify, min_norm_fit, normal_equations_fit,
                                row_svd)
from bolab.verify import random_invertible

from oracles import pinv_solution


def well_posed(seed, n=20, p=80):
    g = np.random.default_rng(seed)
    X = g.standard_normal((n, p)) * np.linspace(2, 0.2, p)
    return X, g.standard_normal(n)


class TestMinNormFit:
    def test_coordinate_rows(self):
        fit = min_norm_fit(np.array([[1.0, 0, 0], [0, 1.0, 0]]), np.array([2.0, 3.0]))
        assert np.allclose(fit.beta_hat, [2, 3, 0], atol=1e-15)
        assert fit.effective_rank_used == 2

    def test_symmetric_split(self):
        fit = min_norm_fit(np.array([[1.0, 1.0]]), np.array([2.0]))
        assert np.allclose(fit.beta_hat, [1, 1], rtol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_svd_matches_normal_equations(self, seed):
        X, Y = well_posed(seed)
        b = min_norm_fit(X, Y).beta_hat
        ref = pinv_solution(X, Y)
        assert np.linalg.norm(b - ref) <= 1e-10 * np.linalg.norm(ref)
        assert np.linalg.norm(normal_equations_fit(X, Y) - ref) <= 1e-10 * np.linalg.norm(ref)

    def test_rank_deficient(self):
        X = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
        with pytest.raises(RankDeficientError) as info:
            min_norm_fit(X, np.array([1.0, 2.0]))
        assert info.value.rank == 1
        assert info.value.smallest < 1e-12

    def test_underdetermined_only(self):
        with pytest.raises(ValueError):
            min_norm_fit(np.ones((3, 2)), np.ones(3))

    def test_shape_check(self):
        with pytest.raises(ValueError):
            min_norm_fit(np.eye(2, 4), np.ones(3))

    @given(st.integers(1, 30), st.integers(0, 40), st.integers(0, 2 ** 32 - 1))
    def test_interpolates_in_row_space(self, n, extra, seed):
        g = np.random.default_rng(seed)
        p = n + extra + 1
        X = g.standard_normal((n, p))
        Y = g.standard_normal(n) * 10
        fit = min_norm_fit(X, Y)
        assert fit.residual_inf <= 1e-8 * max(1.0, np.max(np.abs(Y)))
        assert fit.null_overlap <= 1e-8 * np.linalg.norm(fit.beta_hat)

    @given(st.integers(0, 2 ** 32 - 1))
    def test_row_transform_invariance(self, seed):
        g = np.random.default_rng(seed)
        X, Y = g.standard_normal((15, 60)), g.standard_normal(15)
        A = random_invertible(15, g, 1e3)
        b1 = min_norm_fit(X, Y).beta_hat
        b2 = min_norm_fit(A @ X, A @ Y).beta_hat
        assert np.linalg.norm(b1 - b2) <= 1e-6 * np.linalg.norm(b1)

    def test_row_svd_drops_tiny_directions(self):
        X = np.array([[1.0, 0.0, 0.0], [0.0, 1e-14, 0.0]])
        assert row_svd(X, require_full_rank=False).s.size == 1


class TestCertificate:
    def test_valid_fit_passes(self):
        X, Y = well_posed(1)
        cert = certify(min_norm_fit(X, Y), X, Y)
        assert cert.passed
        assert cert.residual_inf <= cert.residual_tol
        assert cert.min_norm_gap > 0

    def test_null_perturbation_is_longer(self):
        X, Y = well_posed(2)
        fit = min_norm_fit(X, Y)
        _, _, Vt = np.linalg.svd(X)
        v = Vt[-1]
        assert np.linalg.norm(fit.beta_hat + v) > np.linalg.norm(fit.beta_hat)

    def test_null_shifted_fit_fails(self):
        X, Y = well_posed(3)
        fit = min_norm_fit(X, Y)
        _, _, Vt = np.linalg.svd(X)
        fit.beta_hat = fit.beta_hat + 1e-3 * Vt[-1]
        cert = certify(fit, X, Y)
        assert not cert.passed
        assert cert.null_overlap > cert.null_tol
        assert cert.residual_inf <= cert.residual_tol  # still interpolates

    def test_non_interpolating_fit_fails(self):
        X, Y = well_posed(4)
        fit = min_norm_fit(X, Y)
        fit.beta_hat = fit.beta_hat * 1.01
        assert not certify(fit, X, Y).passed

    def test_report_dict(self):
        X, Y = well_posed(5)
        d = certify(min_norm_fit(X, Y), X, Y).to_dict()
        assert d["passed"] is True and "min_norm_gap" in d
