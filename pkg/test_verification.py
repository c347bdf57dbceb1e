#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
验证引擎测试
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from core.verification_engine import (VerificationEngine, config_seed, multiplier_specs, run_tail_pipeline,
                                      summary_p_grid, tail_u_grid)
from data.simulate import MultiplierSpec
from utils.storage import dumps

SMALL = {'reps': 400, 'p_values': [2, 3], 'n_values': [8]}


class TestHelpers:
    def test_config_seed(self):
        assert config_seed(7, 0, 1) == config_seed(7, 0, 1)
        assert config_seed(7, 0, 1) != config_seed(7, 1, 0)
        assert 0 <= config_seed(7, 3, 3) < 2 ** 64

    def test_summary_p_grid(self):
        grid = summary_p_grid([2, 3, 5], 8)
        assert grid[0] == pytest.approx(2.0) and grid[-1] == pytest.approx(10.0)
        assert {3.0, 5.0} <= set(grid.tolist())
        assert np.all(np.diff(grid) > 0)

    def test_multiplier_specs(self):
        specs = multiplier_specs(['constant', 'deterministic_sequence'], 2.0, 5)
        assert specs[0] == MultiplierSpec('constant', V=2.0)
        assert len(specs[1].sequence) == 5
        assert max(abs(v) for v in specs[1].sequence) <= 2.0

    def test_tail_u_grid(self):
        values = np.random.default_rng(0).standard_normal(10_000)
        grid = tail_u_grid(values, points=5)
        assert grid[0] == pytest.approx(0.5)
        assert grid.size == 5 and np.all(np.diff(grid) > 0)


class TestVerificationEngine:
    @pytest.mark.asyncio
    async def test_quick_matrix(self):
        engine = VerificationEngine('quick', seed=5, threads=2, overrides=SMALL)
        await engine.initialize()
        assert engine.is_initialized

        report = await engine.run_matrix()
        # 4 个生成器 × 1 个 n × 2 个 p × (1 个鞅界 + 4 个乘子族)
        assert report.counts['total'] == 40
        assert report.errors == []
        assert len(report.sharpness_p2) == 3
        assert not report.incomplete
        assert report.sharpness_p2[0]['tolerance']['confidence_z'] == pytest.approx(1.96)

        payload = report.to_dict()
        assert set(payload) == {'preset', 'seed', 'config', 'summary', 'results', 'sharpness_p2',
                                'errors', 'provenance'}
        constant = [r for r in payload['results'] if r['multiplier'].startswith('constant')]
        assert constant and all(abs(r['tie_gap']) <= 1e-6 for r in constant)
        martingale = [r for r in payload['results'] if r['kind'] == 'martingale']
        assert all(r['legacy_bound'] > r['bound'] for r in martingale)

    @pytest.mark.asyncio
    async def test_thread_count_does_not_change_report(self):
        one = await VerificationEngine('quick', seed=9, threads=1, overrides=SMALL).run_matrix()
        three = await VerificationEngine('quick', seed=9, threads=3, overrides=SMALL).run_matrix()
        assert dumps(one.to_dict()) == dumps(three.to_dict())

    @pytest.mark.asyncio
    async def test_seed_changes_report(self):
        a = await VerificationEngine('quick', seed=1, threads=1, overrides=SMALL).run_matrix()
        b = await VerificationEngine('quick', seed=2, threads=1, overrides=SMALL).run_matrix()
        assert dumps(a.to_dict()) != dumps(b.to_dict())

    @pytest.mark.asyncio
    async def test_all_configurations_failing_is_incomplete(self):
        engine = VerificationEngine('quick', seed=1, threads=1,
                                    overrides={'reps': 200, 'p_values': [2], 'n_values': [0]})
        report = await engine.run_matrix()
        assert report.counts['total'] == 0
        assert len(report.errors) == 4
        assert {e['error'] for e in report.errors} == {'DomainError'}
        assert report.incomplete
        assert not report.any_violated

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            VerificationEngine('exhaustive')


class TestTailPipeline:
    def test_theta_bound_dominates_empirical_tail(self):
        result = run_tail_pipeline(seed=3, n=4, reps=20_000, u_points=8, p_grid=np.geomspace(2.0, 64.0, 24))
        assert result['dominated']
        frame = result['frame']
        assert list(frame.columns) == ['u', 'survival', 'lower', 'upper', 'resolvable', 'bound']
        assert np.all(frame['bound'] <= 1.0)
        assert result['lineage']['reps'] == 20_000
        assert result['theta'].grid_p[-1] <= 32.0 * (1 + 1e-9)
