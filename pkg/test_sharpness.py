#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
精确性构造测试
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from core.errors import DomainError, ResourceLimitError
from core.sharpness import (DyadicMartingale, build_dyadic_martingale, cell_average, constant_C, level_tail_bound,
                            limit_formula, lower_bound_ratio, s_infinity_norm, series_bound_constant,
                            xi_level_norm, zeta)

SMALL_BUDGET = 2 ** 16


class TestZeta:
    def test_classical_values(self):
        assert zeta(2.0) == pytest.approx(math.pi ** 2 / 6, abs=1e-12)
        assert zeta(4.0) == pytest.approx(math.pi ** 4 / 90, abs=1e-12)
        assert zeta(10.0) == pytest.approx(1.0009945751, abs=1e-9)

    def test_limit_one(self):
        values = [zeta(p) ** (2.0 / p) for p in (4.0, 8.0, 16.0, 32.0, 50.0)]
        assert values[-1] - 1 < 1e-8
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_domain(self):
        with pytest.raises(DomainError):
            zeta(1.0)


class TestConstants:
    def test_constant_c(self):
        assert constant_C() == pytest.approx(0.31080315, abs=5e-8)

    def test_limit_formula(self):
        assert limit_formula(10.0) == pytest.approx(0.3107958, abs=1e-6)
        assert abs(limit_formula(400.0) - constant_C()) < 1e-4
        grid = [2.0, 4.0, 10.0, 50.0, 400.0]
        values = [limit_formula(p) for p in grid]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_s_infinity_norm(self):
        exact, surrogate = s_infinity_norm(2.0)
        # E(t-1)² = 1 for t ~ Exp(1)
        assert exact == pytest.approx(1.0, abs=1e-12)
        assert surrogate == pytest.approx(math.sqrt(2.0))
        big, big_surrogate = s_infinity_norm(40.0)
        assert big / big_surrogate == pytest.approx(math.exp(-1 / 40.0), rel=1e-3)


class TestDyadicMartingale:
    def test_cell_average(self):
        assert cell_average(0.0, 0.25) == pytest.approx(math.log(4.0))
        # 在 (1/2, 1) 上 |log x| - 1 的平均
        expected = 2 * (0.5 * math.log(0.5) + 0.5) - 1
        assert cell_average(0.5, 0.5) == pytest.approx(expected, rel=1e-12)

    def test_build(self):
        mart = build_dyadic_martingale(3, 2, SMALL_BUDGET)
        assert [mart.level(m).size for m in range(3)] == [1, 8, 64]
        assert mart.level(0)[0] == pytest.approx(0.0, abs=1e-12)

    def test_tower_property(self):
        mart = DyadicMartingale(2, 5)
        for m in range(5):
            assert mart.tower_deviation(m) <= 1e-12

    def test_l2_orthogonality(self):
        mart = DyadicMartingale(2, 6)
        total = sum(mart.xi_moment(2.0, m) for m in range(6))
        assert total == pytest.approx(mart.level_norm(2.0, 6) ** 2, rel=1e-10)
        assert abs(float(np.mean(mart.level(0)))) < 1e-12

    def test_budget(self):
        with pytest.raises(ResourceLimitError):
            DyadicMartingale(4, 7)
        assert DyadicMartingale.max_level(4) == 6
        with pytest.raises(DomainError):
            DyadicMartingale(2.5, 2)

    def test_tail_bound_dominates_exact_levels(self):
        mart = DyadicMartingale(3, 4, SMALL_BUDGET)
        for m in range(1, 4):
            exact = xi_level_norm(3.0, m, mart)
            assert exact <= level_tail_bound(3.0, m, mart)['rigorous'] * (1 + 1e-12)

    def test_tail_mode_decays(self):
        mart = DyadicMartingale(2, 3)
        norms = [xi_level_norm(2.0, m, mart) for m in range(3, 8)]
        assert all(b == pytest.approx(a / 2) for a, b in zip(norms, norms[1:]))


class TestSharpnessRatio:
    @pytest.mark.parametrize('p', [2, 3, 4])
    def test_series_below_closed_form(self, p):
        ratio = lower_bound_ratio(p, cell_budget=SMALL_BUDGET)
        assert ratio.series_total() <= series_bound_constant(p) + 1e-9
        assert 0 < ratio.ratio

    def test_p2_ratio_is_certified_lower_bound(self):
        ratio = lower_bound_ratio(2, cell_budget=SMALL_BUDGET)
        assert 0.999 <= ratio.ratio <= 1.0 + 1e-12
        assert ratio.limit_formula == pytest.approx(limit_formula(2.0))

    def test_no_level_in_budget(self):
        with pytest.raises(ResourceLimitError):
            lower_bound_ratio(5, cell_budget=16)

    def test_report_fields(self):
        payload = lower_bound_ratio(3, cell_budget=SMALL_BUDGET).to_dict()
        for key in ('p', 'M', 'numerator', 'denominator', 'ratio', 'limit_formula',
                    'series_prefix', 'series_tail_bound'):
            assert key in payload
