"""Tests for the two-sector open-path estimator of the off-diagonal correlation."""

import numpy as np
import pytest

from bosecycles.canonical import build_table, odlro_correlation
from bosecycles.errors import PoorOverlapWarning
from bosecycles.opencycle import OpenCycleSchedule, open_cycle_estimator
from bosecycles.potentials import GaussianPotential, ZeroPotential
from bosecycles.system import SimulationBox


BOX = SimulationBox(3, 4.0)
BETA = 1.0
N = 6
M = 4


@pytest.fixture(scope="module")
def exact_table():
    return build_table(BOX, BETA, N)


def run(x, seed, sweeps=8000, **kw):
    sched = OpenCycleSchedule(sweeps=sweeps, equilibration=1000, blocks=40, **kw)
    return open_cycle_estimator(BOX, BETA, N, M, ZeroPotential(), x, sched,
                                seed=seed)


class TestIdealGasAgreement:
    def test_origin_reproduces_density(self, exact_table):
        res = run([0.0, 0.0, 0.0], seed=31)
        exact = odlro_correlation(exact_table, [0.0, 0.0, 0.0])
        assert exact == pytest.approx(exact_table.rho, rel=1e-12)
        assert abs(res.sigma - exact) < 3.0 * res.sigma_err

    def test_generic_point(self, exact_table):
        x = [1.3, 0.6, 0.0]
        res = run(x, seed=32)
        exact = odlro_correlation(exact_table, x)
        assert abs(res.sigma - exact) < 3.0 * res.sigma_err

    def test_winding_never_exceeds_particle_number(self):
        res = run([0.5, 0.0, 0.0], seed=33, sweeps=4000)
        assert res.winding_counts.shape == (N + 1,)
        assert res.winding_counts.sum() > 0

    def test_seed_determinism(self):
        a = run([1.0, 0.0, 0.0], seed=34, sweeps=800)
        b = run([1.0, 0.0, 0.0], seed=34, sweeps=800)
        assert a.sigma == b.sigma
        assert a.open_fraction == b.open_fraction


class TestDiagnostics:
    def test_poor_overlap_warns(self):
        # absurdly small fixed worm constant starves the open sector
        sched = OpenCycleSchedule(sweeps=1500, equilibration=100, blocks=10,
                                  worm_constant=1e-9)
        with pytest.warns(PoorOverlapWarning):
            res = open_cycle_estimator(BOX, BETA, N, M, ZeroPotential(),
                                       [0.0, 0.0, 0.0], sched, seed=35)
        assert "poor_overlap" in res.meta["warnings"]

    def test_interacting_smoke(self):
        # weak coupling: estimator stays finite and near the ideal answer
        sched = OpenCycleSchedule(sweeps=2500, equilibration=600, blocks=20)
        res = open_cycle_estimator(BOX, BETA, N, M, GaussianPotential(0.05, 1.0),
                                   [1.0, 0.0, 0.0], sched, seed=36)
        table = build_table(BOX, BETA, N)
        ideal = odlro_correlation(table, [1.0, 0.0, 0.0])
        assert res.sigma == pytest.approx(ideal, rel=0.35)
