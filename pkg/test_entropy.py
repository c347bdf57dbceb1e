#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
度量熵与熵积分判别测试
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from config.settings import Settings
from core.bounds import tau_function
from core.entropy import (DistanceMatrix, EntropyModel, EntropyProfile, covering_entropy, criterion_report,
                          distance_matrix_from_points, farthest_point_radii, fit_entropy_model,
                          holder_condition, integral_dudley, integral_gls, integral_pisier,
                          martingale_distance_curve, natural_distance, rho_distance)
from core.errors import DomainError
from core.gls import MomentCurve, PsiFunction
from core.mixed_norms import MomentTable


class TestModels:
    def test_validation(self):
        with pytest.raises(DomainError):
            EntropyModel('power', c=0.0, s=1.0)
        with pytest.raises(DomainError):
            EntropyModel('log', k=-1.0)
        with pytest.raises(DomainError):
            EntropyModel('spline')

    def test_covering_power(self):
        model = EntropyModel.covering_power(2.0)
        assert model.H(0.1)[()] == pytest.approx(2 * math.log(10.0))

    def test_profile_validation(self):
        with pytest.raises(DomainError):
            EntropyProfile([1.0, 0.5], [2.0, 1.0])
        with pytest.raises(DomainError):
            EntropyProfile([1.0, 0.0], [0.0, 1.0])
        profile = EntropyProfile([0.1, 1.0], [2.0, 0.0])
        np.testing.assert_allclose(profile.epsilon, [1.0, 0.1])


class TestDistances:
    def test_matrix_validation(self):
        with pytest.raises(DomainError):
            DistanceMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))
        with pytest.raises(DomainError):
            DistanceMatrix(np.array([[1.0, 1.0], [1.0, 0.0]]))
        bad = DistanceMatrix(np.array([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]]))
        assert bad.triangle_violation() == pytest.approx(3.0)
        assert not bad.is_semimetric()
        assert distance_matrix_from_points([[0.0, 0.0], [3.0, 4.0]]).matrix[0, 1] == pytest.approx(5.0)

    def test_natural_distance(self):
        curve = MomentCurve.gaussian(Settings.default_p_grid()).scaled(2.0)
        dmat = natural_distance(['a', 'b'], {('b', 'a'): curve}, PsiFunction.psi_sub2())
        assert dmat.matrix[0, 1] == pytest.approx(math.sqrt(2.0), rel=1e-12)
        assert dmat.labels == ['a', 'b']
        with pytest.raises(DomainError):
            natural_distance(['a', 'b', 'c'], {('a', 'b'): curve}, PsiFunction.psi_sub2())

    def test_martingale_distance_curve(self):
        table = MomentTable.constant(5, np.array([2.0, 4.0]), 1.0)
        curve = martingale_distance_curve(table)
        np.testing.assert_allclose(curve.values, [1.0, 3.0])


    def test_rho_distance(self):
        grid = np.array([2.0, 4.0, 8.0])
        tau = tau_function([MomentTable.constant(4, grid, 1.0), MomentTable.constant(4, grid, 2.0)])
        diffs = {('a', 'b'): MomentTable.constant(4, grid, 0.5),
                 ('b', 'c'): MomentTable.constant(4, grid, 1.0),
                 ('c', 'a'): MomentTable.constant(4, grid, 1.5)}
        dmat = rho_distance(['a', 'b', 'c'], diffs, tau)
        # τ(p) = 2(p-1), 差分界 = level (p-1)
        assert dmat.matrix[0, 1] == pytest.approx(0.25, rel=1e-9)
        assert dmat.matrix[1, 2] == pytest.approx(0.5, rel=1e-9)
        assert dmat.matrix[0, 2] == pytest.approx(0.75, rel=1e-9)
        np.testing.assert_array_equal(dmat.matrix, dmat.matrix.T)
        assert dmat.is_semimetric()
        with pytest.raises(DomainError):
            rho_distance(['a', 'b', 'd'], diffs, tau)

    @pytest.mark.parametrize('seed', [0, 1, 2])
    def test_natural_distance_of_gaussian_field(self, seed):
        rng = np.random.default_rng(seed)
        centers = rng.standard_normal((6, 3))
        grid = np.array([2.0, 3.0, 4.0, 8.0])
        labels = list(range(6))
        gaps = {(a, b): float(np.linalg.norm(centers[a] - centers[b]))
                for a in labels for b in labels if a < b}
        curves = {key: MomentCurve.gaussian(grid, gap) for key, gap in gaps.items()}
        dmat = natural_distance(labels, curves, PsiFunction.psi_sub2())
        np.testing.assert_array_equal(dmat.matrix, dmat.matrix.T)
        assert dmat.is_semimetric()
        # 高斯差分的距离正比于欧氏距离
        scale = dmat.matrix[0, 1] / gaps[(0, 1)]
        for (a, b), gap in gaps.items():
            assert dmat.matrix[a, b] == pytest.approx(scale * gap, rel=1e-12)


class TestCovering:
    def test_farthest_point_order(self):
        dmat = distance_matrix_from_points([0.0, 0.3, 1.0, 0.5])
        order, radii = farthest_point_radii(dmat)
        assert list(order[:3]) == [0, 2, 3]
        assert radii[0] == math.inf and radii[1] == pytest.approx(1.0)

    def test_covering_entropy_bounds(self):
        points = np.linspace(0.0, 1.0, 101)
        profile = covering_entropy(points, [2.0, 0.5, 0.1, 0.02, 0.001])
        assert profile.H_upper[0] == pytest.approx(0.0)
        assert profile.H_upper[-1] == pytest.approx(math.log(101))
        assert np.all(profile.H_lower <= profile.H_upper + 1e-12)

    @pytest.mark.parametrize('k', [6, 8, 10])
    def test_uniform_grid_doubling(self, k):
        points = np.linspace(0.0, 1.0, 2 ** k)
        eps = [2.0 ** -j for j in range(1, k + 1)]
        profile = covering_entropy(points, eps)
        for j, upper, lower in zip(range(1, k + 1), profile.H_upper, profile.H_lower):
            count = round(math.exp(upper))
            assert 2 ** (j - 1) <= count <= 2 ** j + 1
            assert lower <= upper

    def test_fit_log_model(self):
        profile = EntropyProfile.from_model(EntropyModel('log', c=0.5, k=2.0))
        model = fit_entropy_model(profile)
        assert model.family == 'log'
        assert model.k == pytest.approx(2.0, rel=1e-9)
        assert model.fit_window[0] == pytest.approx(1e-6)

    def test_fit_constant_model(self):
        profile = covering_entropy(np.linspace(0.0, 1.0, 11), np.geomspace(1e-2, 1e-4, 8))
        model = fit_entropy_model(profile)
        assert model.family == 'constant'
        assert model.c == pytest.approx(math.log(11))


class TestIntegrals:
    @pytest.mark.parametrize('d,alpha,r', [(1, 0.5, 3.0), (1, 0.5, 1.5), (2, 1.0, 3.0),
                                           (2, 0.5, 3.0), (1, 1.0, 1.5)])
    def test_pisier_matches_holder_condition(self, d, alpha, r):
        result = integral_pisier(EntropyModel.covering_power(d / alpha), r)
        expected = 'converges' if holder_condition(d, alpha, r) else 'diverges'
        assert result.verdict == expected

    def test_pisier_value(self):
        # ∫ ε^{-2/3} dε = 3
        result = integral_pisier(EntropyModel.covering_power(2.0), 3.0)
        assert result.value == pytest.approx(3.0, rel=1e-6)

    def test_dudley_value(self):
        result = integral_dudley(EntropyModel.covering_power(1.0))
        assert result.verdict == 'converges'
        assert result.value == pytest.approx(math.sqrt(math.pi) / 2, abs=1e-6)

    def test_dudley_power_models(self):
        assert integral_dudley(EntropyModel('power', c=1.0, s=1.0)).verdict == 'converges'
        assert integral_dudley(EntropyModel('power', c=1.0, s=2.0)).verdict == 'diverges'

    def test_gls_reduces_to_dudley(self):
        psi = PsiFunction.psi_sub2()
        model = EntropyModel.covering_power(1.0)
        gls = integral_gls(psi, model)
        dudley = integral_dudley(model)
        assert gls.verdict == dudley.verdict == 'converges'
        assert gls.value >= math.sqrt(2 * math.e) * dudley.value
        steep = EntropyModel('power', c=1.0, s=3.0)
        assert integral_gls(psi, steep).verdict == integral_dudley(steep).verdict == 'diverges'

    def test_points_without_model(self):
        profile = covering_entropy(np.linspace(0.0, 1.0, 11), np.geomspace(1.0, 1e-3, 10))
        result = integral_dudley(profile)
        assert result.verdict == 'inconclusive'
        assert result.value > 0

    def test_points_with_fitted_model(self):
        profile = covering_entropy(np.linspace(0.0, 1.0, 11), np.geomspace(1.0, 1e-4, 20))
        fitted = profile.with_model(fit_entropy_model(profile))
        result = integral_dudley(fitted)
        assert result.verdict == 'converges'
        assert 0 < result.value < math.sqrt(math.log(11))

    def test_argument_errors(self):
        with pytest.raises(DomainError):
            integral_pisier(EntropyModel.covering_power(1.0), 0.5)
        with pytest.raises(DomainError):
            holder_condition(1, 1.5, 2.0)


class TestReport:
    def test_conclusions(self):
        converges = integral_dudley(EntropyModel.covering_power(1.0))
        report = criterion_report(converges, weak_compactness=True)
        assert report['conclusion'].endswith('weakly compact')
        assert report['weak_compactness_declared'] is True
        assert report['tolerance'] == converges.error
        diverges = integral_dudley(EntropyModel('power', c=1.0, s=2.0))
        assert criterion_report(diverges)['conclusion'].startswith('criterion not satisfied')
        assert criterion_report(diverges)['tolerance'] == Settings.QUADRATURE_TOLERANCE
