#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
蒙特卡洛模拟器测试
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from core.errors import DomainError
from data.simulate import (GeneratorSpec, MultiplierSpec, PathBatch, TailEstimate, adjudicate,
                           attach_multipliers, conditional_square_table, empirical_norms, empirical_tail,
                           exact_b_table, exact_xi_table, fit_tail_decay, generate, lag_correlation,
                           martingale_check, summarize, tail_from_values, wilson_interval)


class TestSpecs:
    def test_generator_validation(self):
        with pytest.raises(DomainError):
            GeneratorSpec('cauchy', n=4, reps=10, seed=1)
        with pytest.raises(DomainError):
            GeneratorSpec('rademacher', n=4, reps=1, seed=1)
        with pytest.raises(DomainError):
            GeneratorSpec('rademacher', n=4, reps=10, seed=None)
        with pytest.raises(DomainError):
            GeneratorSpec('predictable_variance', n=4, reps=10, seed=1, feedback=1.0)
        with pytest.raises(DomainError):
            GeneratorSpec('dyadic_embedded', n=27, reps=10, seed=1, dyadic_p=2)
        with pytest.raises(DomainError):
            GeneratorSpec('gaussian', n=3, reps=10, seed=1, variances=[1.0, 0.0, 1.0])

    def test_multiplier_validation(self):
        with pytest.raises(DomainError):
            MultiplierSpec('oracle')
        with pytest.raises(DomainError):
            MultiplierSpec('constant', V=0.0)
        with pytest.raises(DomainError):
            MultiplierSpec('deterministic_sequence')
        assert MultiplierSpec('clamped_running_sum', V=2.0).label == 'clamped_running_sum(V=2)'

    def test_dict_round_trip(self):
        spec = GeneratorSpec('two_point_asymmetric', n=5, reps=20, seed=3, asymmetry=(1.0, 2.0))
        restored = GeneratorSpec.from_dict({**spec.to_dict(), 'unused': True})
        assert restored.asymmetry == (1.0, 2.0) and restored.n == 5

    def test_gaussian_pair_validation(self):
        spec = GeneratorSpec('gaussian', n=3, reps=10, seed=1)
        batch = generate(spec)
        with pytest.raises(DomainError):
            attach_multipliers(batch, MultiplierSpec('gaussian_predictable', variances=[1.0, math.inf, 1.0]))


class TestGeneration:
    @pytest.mark.parametrize('family', ['rademacher', 'gaussian', 'two_point_asymmetric',
                                        'predictable_variance', 'dyadic_embedded'])
    def test_thread_count_invariance(self, family):
        spec = GeneratorSpec(family, n=6, reps=1000, seed=42)
        one = generate(spec, threads=1, block_size=128)
        four = generate(spec, threads=4, block_size=128)
        np.testing.assert_array_equal(one.xi, four.xi)
        np.testing.assert_array_equal(one.cond_var, four.cond_var)

    def test_seed_changes_paths(self):
        a = generate(GeneratorSpec('gaussian', n=4, reps=50, seed=1))
        b = generate(GeneratorSpec('gaussian', n=4, reps=50, seed=2))
        assert not np.array_equal(a.xi, b.xi)

    def test_rademacher_values(self):
        batch = generate(GeneratorSpec('rademacher', n=8, reps=200, seed=9))
        assert set(np.unique(batch.xi)) == {-1.0, 1.0}
        np.testing.assert_array_equal(batch.cond_var, 1.0)

    def test_two_point_is_centered(self):
        spec = GeneratorSpec('two_point_asymmetric', n=4, reps=40_000, seed=5, asymmetry=(1.0, 2.0))
        batch = generate(spec)
        assert abs(batch.xi.mean()) < 0.03
        assert batch.xi.var() == pytest.approx(2.0, rel=0.05)

    def test_gaussian_variances(self):
        spec = GeneratorSpec('gaussian', n=2, reps=40_000, seed=8, variances=[1.0, 4.0])
        batch = generate(spec)
        np.testing.assert_allclose(batch.xi.std(axis=0), [1.0, 2.0], rtol=0.03)

    def test_dyadic_embedded_differences(self):
        spec = GeneratorSpec('dyadic_embedded', n=3, reps=20_000, seed=4, dyadic_p=2)
        batch = generate(spec)
        assert np.all(np.isfinite(batch.xi))
        assert np.all(batch.cond_var >= 0)
        assert np.all(np.abs(batch.xi.mean(axis=0)) < 0.05)

    def test_terminal_scaling(self):
        batch = generate(GeneratorSpec('rademacher', n=4, reps=10, seed=1))
        np.testing.assert_allclose(batch.terminal('S'), batch.xi.sum(axis=1) / 2.0)
        with pytest.raises(DomainError):
            batch.terminal('X')


class TestMultipliers:
    def test_predictability(self):
        spec = GeneratorSpec('gaussian', n=6, reps=64, seed=2)
        batch = generate(spec)
        for mult in (MultiplierSpec('sign_of_past'), MultiplierSpec('clamped_running_sum', V=0.5)):
            b = attach_multipliers(batch, mult).b
            changed = batch.xi.copy()
            changed[:, 3:] = 100.0
            other = attach_multipliers(PathBatch(xi=changed, cond_var=batch.cond_var, spec=spec), mult).b
            # b(i) 只依赖 ξ(1..i-1)
            np.testing.assert_array_equal(b[:, :4], other[:, :4])

    def test_multiplier_ranges(self):
        batch = generate(GeneratorSpec('gaussian', n=5, reps=100, seed=3))
        sign = attach_multipliers(batch, MultiplierSpec('sign_of_past')).b
        np.testing.assert_array_equal(sign[:, 0], 1.0)
        clamped = attach_multipliers(batch, MultiplierSpec('clamped_running_sum', V=0.5)).b
        assert np.all(np.abs(clamped) <= 0.5)
        seq = attach_multipliers(batch, MultiplierSpec('deterministic_sequence', sequence=[1, 2, 3, 4, 5])).b
        np.testing.assert_array_equal(seq[7], [1, 2, 3, 4, 5])
        with pytest.raises(DomainError):
            attach_multipliers(batch, MultiplierSpec('deterministic_sequence', sequence=[1.0]))

    def test_constant_multiplier_scales_w(self):
        batch = attach_multipliers(generate(GeneratorSpec('rademacher', n=4, reps=20, seed=6)),
                                   MultiplierSpec('constant', V=3.0))
        np.testing.assert_allclose(batch.terminal('W'), 3.0 * batch.terminal('S'))
        assert batch.lineage['multiplier'] == 'constant(V=3)'


class TestDiagnostics:
    def test_martingale_check(self):
        batch = generate(GeneratorSpec('predictable_variance', n=6, reps=20_000, seed=13))
        first = martingale_check(batch, 0)
        assert list(first['bin']) == ['all']
        frame = martingale_check(batch, 4)
        assert set(frame['bin']) <= {'pos:large', 'pos:small', 'neg:large', 'neg:small', 'zero:small'}
        assert np.all(np.abs(frame['mean']) <= 2 * frame['halfwidth'])
        with pytest.raises(DomainError):
            martingale_check(batch, 6)

    def test_volatility_clustering(self):
        batch = generate(GeneratorSpec('predictable_variance', n=32, reps=4000, seed=21, feedback=0.5))
        assert lag_correlation(batch, 1, squared=True) > 0.1
        assert abs(lag_correlation(batch, 1)) < 0.05

    def test_conditional_square_table(self):
        batch = generate(GeneratorSpec('rademacher', n=3, reps=200, seed=1))
        table = conditional_square_table(batch, [2.0, 4.0])
        np.testing.assert_allclose(table.values, 1.0)

    def test_empirical_norms(self):
        batch = attach_multipliers(generate(GeneratorSpec('rademacher', n=16, reps=4000, seed=3)),
                                   MultiplierSpec('sign_of_past'))
        curves = empirical_norms(batch, [2.0, 4.0], bootstrap=20)
        assert set(curves) == {'S', 'W'}
        assert curves['S'].values[0] == pytest.approx(1.0, abs=0.05)
        assert np.all(curves['W'].halfwidths > 0)


class TestTails:
    def test_wilson_interval(self):
        lower, upper = wilson_interval(np.array([50]), 100, z=1.96)
        assert lower[0] == pytest.approx(0.40383, abs=1e-4)
        assert upper[0] == pytest.approx(0.59617, abs=1e-4)
        zero_lo, zero_hi = wilson_interval(np.array([0]), 100, z=1.96)
        assert zero_lo[0] == 0.0 and zero_hi[0] > 0

    def test_tail_from_values(self):
        tail = tail_from_values(np.array([0.0, -1.0, 2.0, 3.0]), [0.5, 1.5])
        np.testing.assert_allclose(tail.survival, [0.75, 0.5])
        assert tail.null_atom == pytest.approx(0.25)
        assert np.all(tail.lower <= tail.survival) and np.all(tail.survival <= tail.upper)
        assert list(tail.to_frame().columns) == ['u', 'survival', 'lower', 'upper', 'resolvable']

    def test_empirical_tail_from_batch(self):
        batch = generate(GeneratorSpec('gaussian', n=4, reps=20_000, seed=17))
        tail = empirical_tail(batch, [1.0, 2.0], target='S')
        np.testing.assert_allclose(tail.survival, [0.3173, 0.0455], atol=0.015)

    def test_fit_tail_decay(self):
        u = np.linspace(0.5, 3.0, 10)
        survival = np.exp(-2.0 * u)
        tail = TailEstimate(u, survival, survival, survival, 10 ** 6, 0.0, np.ones(10, dtype=bool))
        fits = fit_tail_decay(tail)
        assert fits['linear']['rate'] == pytest.approx(2.0)
        assert fits['linear']['r2'] == pytest.approx(1.0)
        assert fits['points'] == 10
        short = TailEstimate(u[:2], survival[:2], survival[:2], survival[:2], 10, 0.0, np.ones(2, dtype=bool))
        with pytest.raises(DomainError):
            fit_tail_decay(short)


class TestExactTables:
    def test_generators(self):
        spec = GeneratorSpec('two_point_asymmetric', n=3, reps=10, seed=1, asymmetry=(1.0, 2.0))
        table = exact_xi_table(spec, [2.0, 4.0])
        assert table.values[0, 0] == pytest.approx(math.sqrt(2.0))
        np.testing.assert_allclose(table.sup_norms, 2.0)
        assert exact_xi_table(GeneratorSpec('predictable_variance', n=3, reps=10, seed=1), [2.0]) is None

    def test_multipliers(self):
        table = exact_b_table(MultiplierSpec('deterministic_sequence', sequence=[-1.0, 2.0]), 2, [2.0, 3.0])
        np.testing.assert_allclose(table.sup_norms, [1.0, 2.0])
        assert exact_b_table(MultiplierSpec('clamped_running_sum', V=1.0), 2, [2.0]) is None


class TestSummaries:
    def test_summary_matches_full_batch(self):
        spec = GeneratorSpec('gaussian', n=4, reps=3000, seed=11)
        mults = [MultiplierSpec('constant', V=2.0), MultiplierSpec('sign_of_past'),
                 MultiplierSpec('clamped_running_sum', V=0.5)]
        summary = summarize(spec, mults, [2.0, 4.0], threads=3)
        batch = generate(spec)
        np.testing.assert_array_equal(summary.s_terminal, batch.terminal('S'))
        for mult in mults:
            full = attach_multipliers(batch, mult)
            np.testing.assert_array_equal(summary.w_terminal[mult.label], full.terminal('W'))
        np.testing.assert_allclose(summary.b_tables['clamped_running_sum(V=0.5)'].sup_norms, 0.5)
        # 高斯生成器使用精确矩表
        assert summary.xi_table.values[0, 0] == pytest.approx(1.0)

    def test_summary_thread_invariance(self):
        spec = GeneratorSpec('predictable_variance', n=5, reps=2500, seed=19)
        mults = [MultiplierSpec('clamped_running_sum', V=1.0)]
        one = summarize(spec, mults, [2.0, 3.0], threads=1)
        four = summarize(spec, mults, [2.0, 3.0], threads=4)
        np.testing.assert_array_equal(one.xi_table.values, four.xi_table.values)
        np.testing.assert_array_equal(one.w_terminal['clamped_running_sum(V=1)'],
                                      four.w_terminal['clamped_running_sum(V=1)'])


class TestAdjudicate:
    def test_verdicts(self):
        batch = generate(GeneratorSpec('rademacher', n=16, reps=4000, seed=23))
        holds = adjudicate(batch, 10.0, 2.0)
        assert holds.verdict == 'holds' and holds.generator == 'rademacher'
        violated = adjudicate(batch, 0.5, 2.0)
        assert violated.verdict == 'violated'
        small = adjudicate(generate(GeneratorSpec('rademacher', n=4, reps=20, seed=1)), 10.0, 2.0)
        assert small.verdict == 'inconclusive'
