import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bolab.bounds import (REGIME_FINITE, REGIME_LARGE, ExtrapolationWarning, bias_shape,
                          hetero_upper_bound, homo_lower_bounds, homo_upper_bound,
                          integrated_covariance, integrated_covariance_dense, kappa_alpha,
                          lag_factor, loglog_slope, moment_rhs, rate_prediction, variance_shape)
from bolab.spectra import (KStarInfinite, SpatialSpectrum, effective_ranks, identity_spectrum,
                           k_star, rate_sequences, weighted_norms)
from bolab.temporal import TemporalSpec, ToeplitzCov, materialize

from oracles import integrated_dense_loops, moment_rhs_hand


def ar(rho, n):
    return materialize(TemporalSpec.arma([rho], normalize=True), n)


def decaying(p, power=1.0):
    return SpatialSpectrum(1.0 / np.arange(1, p + 1) ** power)


class TestIntegratedCovariance:
    def test_identity_family(self):
        sp = decaying(30)
        s = integrated_covariance(sp, materialize(TemporalSpec.identity(), 10), 10)
        assert s.trace_bar == pytest.approx(sp.trace, rel=1e-15)
        assert s.norm_bar == sp.norm
        assert np.all(s.per_coordinate_factors == 1.0)

    @pytest.mark.parametrize("rho", [0.3, 0.8, -0.5])
    def test_ar1_factor(self, rho):
        n = 25
        f = lag_factor(ar(rho, n))
        r = abs(rho)
        assert f == pytest.approx(1 + 2 * r * (1 - r ** (n - 1)) / (1 - r), rel=1e-12)

    def test_three_coordinate_dense(self):
        sp = SpatialSpectrum([3.0, 2.0, 1.0])
        n = 12
        fam = [ar(0.1, n), ar(0.9, n), ar(-0.6, n)]
        s = integrated_covariance(sp, fam, n)
        dense = integrated_dense_loops(list(sp.eigenvalues), [list(c.first_row) for c in fam])
        ev = np.linalg.eigvalsh(dense)
        assert s.norm_bar == pytest.approx(ev[-1], rel=1e-12)
        assert s.trace_bar == pytest.approx(np.trace(dense), rel=1e-12)
        # the 0.9 coordinate overtakes the largest eigenvalue, so the order changes
        assert s.r0_bar == pytest.approx(np.trace(dense) / ev[-1], rel=1e-12)

    @given(st.integers(1, 10), st.integers(2, 20), st.lists(st.floats(-0.9, 0.9), min_size=1, max_size=3),
           st.integers(0, 2 ** 32 - 1))
    def test_fast_path_equals_dense(self, p, n, rhos, seed):
        from bolab.sampler import random_orthogonal
        lam = np.sort(np.random.default_rng(seed).uniform(0.1, 5, p))[::-1]
        sp = SpatialSpectrum(lam, basis=random_orthogonal(p, seed))
        fam = [ar(rhos[i % len(rhos)], n) for i in range(p)]
        s = integrated_covariance(sp, fam, n)
        dense = integrated_covariance_dense(sp, fam)
        ev = np.linalg.eigvalsh(dense)
        assert abs(s.trace_bar - np.trace(dense)) <= 1e-10 * abs(np.trace(dense))
        assert abs(s.norm_bar - ev[-1]) <= 1e-10 * ev[-1]
        assert np.all(s.per_coordinate_factors >= 1)
        assert s.trace_bar >= sp.trace * (1 - 1e-12) and s.norm_bar >= sp.norm * (1 - 1e-12)

    def test_requires_unit_diagonal(self):
        with pytest.raises(ValueError, match="diagonal"):
            integrated_covariance(identity_spectrum(2), materialize(TemporalSpec.arma([0.5]), 5))

    def test_family_length(self):
        with pytest.raises(ValueError):
            integrated_covariance(identity_spectrum(3), [ar(0.2, 4)] * 2)


class TestHomoBounds:
    def test_zero_beta(self):
        rep = homo_upper_bound(identity_spectrum(100), np.zeros(100), 1.0, 10)
        assert rep.bias_bound == 0.0 and rep.regime == REGIME_FINITE

    def test_nu_linearity(self):
        sp = decaying(500, 0.5)
        beta = np.ones(500) / 10
        a = homo_upper_bound(sp, beta, 1.3, 20)
        b = homo_upper_bound(sp, beta, 2.6, 20)
        assert b.variance_bound == 2 * a.variance_bound
        assert b.bias_bound == a.bias_bound

    def test_k_star_zero_reduces_to_quadratic_form(self, rng):
        sp = SpatialSpectrum(np.sort(rng.uniform(0.5, 1, 300))[::-1])
        beta = rng.standard_normal(300)
        rep = homo_upper_bound(sp, beta, 1.0, 10, b=2, c=3.0)
        assert rep.k_star == 0
        assert rep.bias_bound == pytest.approx(3.0 * np.sum(sp.eigenvalues * beta ** 2), rel=1e-12)

    def test_explicit_formula(self):
        sp = decaying(2000, 1.0)
        n, b, c, delta, nu = 10, 2.0, 1.5, 0.1, 1.7
        beta = np.linspace(1, 0, 2000)
        rep = homo_upper_bound(sp, beta, nu, n, b, c, delta)
        ks = k_star(sp, b, n)
        tail, head = weighted_norms(sp, beta, ks)
        _, R = effective_ranks(sp, ks)
        lam = sp.eigenvalues
        assert rep.bias_bound == pytest.approx(c * (tail + head * (lam[ks:].sum() / n) ** 2), rel=1e-10)
        assert rep.variance_bound == pytest.approx(c * nu * (ks / n + n / R) * math.log(1 / delta), rel=1e-12)
        assert rep.constants_used == {"b": b, "c": c, "delta": delta}
        assert rep.bias_bound >= 0 and rep.variance_bound >= 0

    def test_large_k_star_regime(self):
        sp = decaying(20, 2.0)
        rep = homo_upper_bound(sp, np.ones(20), 1.0, 100, c=2.0, nu_inverse=4.0)
        assert rep.regime == REGIME_LARGE
        assert rep.bias_bound is None
        assert rep.lower_variance_bound == pytest.approx(1 / 8)
        assert rep.to_dict()["k_star"] == "inf"

    def test_k_star_above_n_over_c(self):
        sp = decaying(5000, 1.0)
        n = 30
        ks = k_star(sp, 2, n)
        assert ks != math.inf
        c = 2.0 * n / ks  # makes k* > n / c
        assert homo_upper_bound(sp, np.ones(5000), 1.0, n, c=c).regime == REGIME_LARGE

    def test_upper_lower_variance_ratio(self):
        sp = decaying(3000, 0.8)
        n, c, delta, nu, nu_inv = 15, 1.2, 0.05, 2.0, 1.5
        up = homo_upper_bound(sp, np.zeros(3000), nu, n, c=c, delta=delta)
        lo = homo_lower_bounds(sp, np.zeros(3000), nu_inv, n, c=c)
        assert up.variance_bound / lo.lower_variance_bound == pytest.approx(
            c * c * nu * nu_inv * math.log(1 / delta), rel=1e-12)

    def test_lower_bias_zero_beta(self):
        assert homo_lower_bounds(decaying(500), np.zeros(500), 1.0, 10).lower_bias_bound == 0.0

    def test_lower_bias_matches_upper_at_c_one(self):
        sp = decaying(3000, 0.8)
        beta = np.cos(np.arange(3000))
        up = homo_upper_bound(sp, beta, 1.0, 15, c=1.0)
        lo = homo_lower_bounds(sp, beta, 1.0, 15, c=1.0)
        assert lo.lower_bias_bound == pytest.approx(up.bias_bound, rel=1e-14)

    def test_lower_large_regime_value(self):
        rep = homo_lower_bounds(decaying(20, 2.0), np.ones(20), 4.0, 100, c=2.0)
        assert rep.regime == REGIME_LARGE and rep.lower_variance_bound == pytest.approx(1 / 8)


class TestHeteroBound:
    def test_identity_family_reduces_to_iid_shape(self):
        sp = decaying(400, 0.6)
        n, c, delta, bn = 20, 1.0, 0.1, 2.0
        integ = integrated_covariance(sp, materialize(TemporalSpec.identity(), n), n)
        rep = hetero_upper_bound(sp, integ, bn, 1.0, n, c=c, delta=delta)
        r0 = sp.trace / sp.norm
        want = (c / delta) * bn ** 2 * (math.sqrt(sp.norm * sp.norm * r0 / n) + sp.norm * r0 / n)
        assert abs(rep.bias_bound / want - 1) <= 1e-10

    def test_zero_beta(self):
        sp = decaying(400, 0.6)
        integ = integrated_covariance(sp, ar(0.4, 10), 10)
        assert hetero_upper_bound(sp, integ, 0.0, 1.0, 10).bias_bound == 0.0

    def test_delta_halved(self):
        sp = decaying(400, 0.6)
        integ = integrated_covariance(sp, ar(0.4, 10), 10)
        a = hetero_upper_bound(sp, integ, 1.0, 1.5, 10, delta=0.2)
        b = hetero_upper_bound(sp, integ, 1.0, 1.5, 10, delta=0.1)
        assert b.bias_bound == pytest.approx(2 * a.bias_bound, rel=1e-14)
        per_log = a.variance_bound / math.log(1 / 0.2)
        assert b.variance_bound - a.variance_bound == pytest.approx(per_log * math.log(2), rel=1e-12)

    def test_delta_range(self):
        sp = decaying(100)
        integ = integrated_covariance(sp, ar(0.4, 5), 5)
        with pytest.raises(ValueError):
            hetero_upper_bound(sp, integ, 1.0, 1.0, 5, delta=0.5)

    def test_dependence_inflates_bias_bound(self):
        sp = decaying(400, 0.6)
        iid = integrated_covariance(sp, materialize(TemporalSpec.identity(), 20), 20)
        dep = integrated_covariance(sp, ar(0.7, 20), 20)
        assert (hetero_upper_bound(sp, dep, 1.0, 1.0, 20).bias_bound
                > hetero_upper_bound(sp, iid, 1.0, 1.0, 20).bias_bound)


class TestMomentRHS:
    def test_identity_example(self):
        want = (2 * math.sqrt(2) / 50) * (math.sqrt(2) * 100 + math.sqrt(2 * 50 * 100) + math.sqrt(50 * 100))
        assert moment_rhs(100, 1, 100, 1, 50) == pytest.approx(want, rel=1e-15)
        assert moment_rhs(100, 1, 100, 1, 50) == pytest.approx(moment_rhs_hand(100, 1, 100, 1, 50), rel=1e-15)

    def test_n_scaling(self):
        args = (37.0, 2.5, 80.0, 6.0)
        n = 40
        c = 2 * math.sqrt(2) / n
        t1 = c * math.sqrt(2) * args[2]
        t2 = c * math.sqrt(2 * n * args[1] * args[2])
        t3 = c * math.sqrt(n * args[0] * args[3])
        assert moment_rhs(*args, n) == pytest.approx(t1 + t2 + t3, rel=1e-14)
        assert moment_rhs(*args, 4 * n) == pytest.approx(t1 / 4 + t2 / 2 + t3 / 2, rel=1e-14)

    def test_iid_substitution(self):
        tr, nm, n = 55.0, 3.0, 17
        want = (2 * math.sqrt(2) / n) * (math.sqrt(2) * tr + math.sqrt(2 * n * nm * tr) + math.sqrt(n * tr * nm))
        assert moment_rhs(tr, nm, tr, nm, n) == pytest.approx(want, rel=1e-14)

    @given(st.lists(st.floats(0.01, 1e4), min_size=4, max_size=4), st.integers(1, 10_000),
           st.integers(0, 3), st.floats(1.0001, 2.0))
    def test_monotone_in_covariance_inputs(self, args, n, which, bump):
        base = moment_rhs(*args, n)
        up = list(args)
        up[which] *= bump
        assert moment_rhs(*up, n) >= base

    @given(st.lists(st.floats(0.01, 1e4), min_size=4, max_size=4), st.integers(1, 10_000))
    def test_decreasing_in_n(self, args, n):
        assert moment_rhs(*args, n + 1) < moment_rhs(*args, n)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            moment_rhs(0, 1, 1, 1, 5)


class TestKappaAndRates:
    def test_kappa_cases(self):
        assert kappa_alpha(100, 2.0) == pytest.approx(0.1, rel=1e-15)
        assert kappa_alpha(math.e ** 2, 1.0) == pytest.approx(math.exp(-1) * math.sqrt(2), rel=1e-14)
        with pytest.warns(ExtrapolationWarning):
            assert kappa_alpha(16, 0.5) == pytest.approx(0.5, rel=1e-15)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert kappa_alpha(16, 0.75) == pytest.approx(16 ** -0.375)

    @pytest.mark.parametrize("alpha,n", [(0.0, 10), (-1.0, 10), (1.5, 1)])
    def test_kappa_domain(self, alpha, n):
        with pytest.raises(ValueError):
            kappa_alpha(n, alpha)

    def test_kappa_ordering(self):
        for n in (50, 100, 400):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ExtrapolationWarning)
                vals = [kappa_alpha(n, a) for a in (0.5, 1.0, 2.0)]
            assert vals[0] > vals[1] > vals[2]

    def test_homo_identity_spectrum(self):
        sp = identity_spectrum(400)
        seq = rate_sequences(sp, 20, 2)
        assert rate_prediction("homo", sp, 1.0, 20) == seq.tau + seq.eta

    def test_hetero_short_memory(self):
        sp = decaying(2000, 0.7)
        n = 25
        seq = rate_sequences(sp, n, 2)
        got = rate_prediction("hetero", sp, 1.4, n, alpha=3.0)
        assert got == pytest.approx(math.sqrt(seq.zeta) * n ** -0.5 + 1.4 * seq.eta, rel=1e-14)

    def test_nu_doubles_variance_summand(self):
        sp = decaying(2000, 0.7)
        a = rate_prediction("homo", sp, 1.0, 25)
        b = rate_prediction("homo", sp, 2.0, 25)
        seq = rate_sequences(sp, 25, 2)
        assert b - a == pytest.approx(seq.eta, rel=1e-12)

    def test_errors(self):
        with pytest.raises(KStarInfinite):
            rate_prediction("homo", decaying(20, 2.0), 1.0, 100)
        with pytest.raises(ValueError):
            rate_prediction("hetero", identity_spectrum(100), 1.0, 10)
        with pytest.raises(ValueError):
            rate_prediction("mixed", identity_spectrum(100), 1.0, 10)


class TestScaleConsistency:
    @given(st.floats(0.3, 1.5), st.floats(1e-3, 1e3), st.integers(2, 40))
    def test_shapes_scale(self, power, s, n):
        sp = decaying(1500, power)
        beta = np.sin(np.arange(1500.0))
        ks = k_star(sp, 2, n)
        if ks == math.inf:
            return
        big = sp.scaled(s)
        assert k_star(big, 2, n) == ks
        assert bias_shape(big, beta, ks, n) == pytest.approx(s * bias_shape(sp, beta, ks, n), rel=1e-10)
        assert variance_shape(big, ks, n) == pytest.approx(variance_shape(sp, ks, n), rel=1e-10)
        assert rate_sequences(big, n, 2).eta == pytest.approx(rate_sequences(sp, n, 2).eta, rel=1e-10)


class TestSlope:
    def test_constant(self):
        assert loglog_slope([10, 20, 40], [3, 3, 3]) == pytest.approx(0, abs=1e-12)

    def test_inverse(self):
        n = np.array([50, 100, 200, 400])
        assert abs(loglog_slope(n, 1 / n) + 1) <= 1e-12

    def test_needs_positive_points(self):
        with pytest.raises(ValueError):
            loglog_slope([1, 2], [1, 0])
