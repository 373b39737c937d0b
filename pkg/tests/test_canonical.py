"""Tests for the exact canonical ensemble: recursion, cycles, ODLRO, modes."""

import math
import warnings

import numpy as np
import pytest

from bosecycles.canonical import (
    build_table,
    condensate_fraction,
    cycle_densities,
    cycle_density,
    cycle_log_weights,
    cycle_spectrum,
    large_deviation_rate,
    mode_occupation,
    odlro_correlation,
    odlro_decomposition,
    verify_decomposition,
    zero_mode_tail,
)
from bosecycles.grand import critical_density, mu_of_density, sigma_upper_bound
from bosecycles.system import SimulationBox

from oracles import enumeration_cycle_density, enumeration_log_y


class TestRecursion:
    def test_y1_is_single_cycle_weight(self):
        box = SimulationBox(3, 4.0)
        t = build_table(box, 1.0, 1)
        assert t.log_y[1] == pytest.approx(t.log_c[1], rel=1e-14)

    def test_y2_two_cycle_types(self):
        box = SimulationBox(2, 3.0)
        beta = 0.8
        t = build_table(box, beta, 2)
        c = np.exp(cycle_log_weights(box, beta, 2))
        expected = (c[1] ** 2 + c[2]) / 2.0
        assert math.exp(t.log_y[2]) == pytest.approx(expected, rel=1e-13)

    def test_n6_matches_full_enumeration(self):
        box = SimulationBox(3, 5.0)
        t = build_table(box, 1.0, 6)
        assert t.log_y[6] == pytest.approx(enumeration_log_y(box, 1.0, 6),
                                           rel=1e-12)

    def test_randomized_small_systems_match_enumeration(self):
        rng = np.random.default_rng(20)
        for _ in range(6):
            dim = int(rng.integers(1, 4))
            side = float(rng.uniform(2.0, 6.0))
            beta = float(rng.uniform(0.4, 1.5))
            n = int(rng.integers(3, 9))
            box = SimulationBox(dim, side)
            t = build_table(box, beta, n)
            ref = enumeration_log_y(box, beta, n)
            assert t.log_y[n] == pytest.approx(ref, rel=1e-10)

    def test_recursion_invariant_holds_entrywise(self):
        box = SimulationBox(3, 6.0)
        t = build_table(box, 1.0, 60)
        for n in range(1, 61):
            terms = t.log_c[1:n + 1] + t.log_y[n - 1::-1]
            m = terms.max()
            lhs = math.log(n) + t.log_y[n]
            rhs = m + math.log(np.exp(terms - m).sum())
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_trivial_table(self):
        t = build_table(SimulationBox(3, 4.0), 1.0, 0)
        assert t.log_y.tolist() == [0.0]

    def test_determinism(self):
        box = SimulationBox(3, 5.0)
        a = build_table(box, 1.0, 40)
        b = build_table(box, 1.0, 40)
        assert np.array_equal(a.log_y, b.log_y)
        assert np.array_equal(a.log_c[1:], b.log_c[1:])


class TestCycleDensities:
    def test_single_particle(self):
        box = SimulationBox(3, 4.0)
        t = build_table(box, 1.0, 1)
        assert cycle_density(t, 1) == pytest.approx(1.0 / box.volume, rel=1e-13)

    def test_sum_rule(self):
        for n, side in ((10, 4.0), (200, 6.0)):
            t = build_table(SimulationBox(3, side), 1.0, n)
            total = cycle_densities(t)[1:].sum()
            assert abs(total / t.rho - 1.0) < 1e-12

    def test_against_enumeration(self):
        box = SimulationBox(3, 4.0)
        t = build_table(box, 1.0, 2)
        for n in (1, 2):
            assert cycle_density(t, n) == pytest.approx(
                enumeration_cycle_density(box, 1.0, 2, n), rel=1e-12)

    def test_domain_errors(self):
        t = build_table(SimulationBox(3, 4.0), 1.0, 3)
        with pytest.raises(ValueError):
            cycle_density(t, 0)
        with pytest.raises(ValueError):
            cycle_density(t, 4)

    def test_spectrum_tail_clamped_to_physical_range(self):
        t = build_table(SimulationBox(3, 4.0), 1.0, 30)
        spec = cycle_spectrum(t, cutoff=5)
        assert 0.0 <= spec.rho_inf_estimate <= spec.rho
        full = cycle_spectrum(t)
        assert full.rho_inf_estimate == pytest.approx(0.0, abs=1e-14)


class TestOdlro:
    def test_value_at_origin_is_rho(self):
        t = build_table(SimulationBox(3, 5.0), 1.0, 25)
        assert odlro_correlation(t, [0.0, 0.0, 0.0]) == pytest.approx(
            t.rho, rel=1e-13)

    def test_torus_periodicity(self):
        box = SimulationBox(3, 5.0)
        t = build_table(box, 1.0, 25)
        x = np.array([1.0, 0.5, -0.25])
        assert odlro_correlation(t, x) == pytest.approx(
            odlro_correlation(t, x + box.side * np.array([1, 0, -2])), rel=1e-12)

    def test_decay_and_grand_canonical_bound(self):
        # below the critical density the correlation decays with |x| and is
        # controlled by the infinite-volume bound at the matching mu
        beta = 1.0
        rho_c = critical_density(beta, 3)
        box = SimulationBox(3, 12.0)
        n = round(0.5 * rho_c * box.volume)
        t = build_table(box, beta, n)
        xs = [1.0, 2.0, 3.0, box.side / 2]
        sig = [odlro_correlation(t, [x, 0.0, 0.0]) for x in xs]
        assert all(sig[i] > sig[i + 1] for i in range(len(sig) - 1))
        mu_star = mu_of_density(beta, t.rho, 3)
        # the infinite-volume bound controls sigma away from the box edge
        # (at |x| ~ L/2 the nearest torus image contributes at the same order)
        for x, s in zip(xs[:3], sig[:3]):
            bound = sigma_upper_bound([x, 0.0, 0.0], beta, mu_star, 3)
            assert s <= bound * 1.05

    def test_decomposition_zero_residual_at_origin(self):
        t = build_table(SimulationBox(3, 6.0), 1.0, 40)
        dec = odlro_decomposition(t, [0.0, 0.0, 0.0], c=0.3)
        assert dec.residual == pytest.approx(0.0, abs=1e-14)

    def test_decomposition_residual_shrinks_with_box(self):
        beta = 1.0
        rho = 2.0 * critical_density(beta, 3)
        res = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for side in (6.0, 8.0, 10.0):
                box = SimulationBox(3, side)
                t = build_table(box, beta, round(rho * box.volume))
                res.append(abs(verify_decomposition(t, [1.0, 0.0, 0.0], 1.0)))
        assert res[0] > res[1] > res[2]

    def test_cutoff_clamp_warns(self):
        t = build_table(SimulationBox(3, 6.0), 1.0, 10)
        with pytest.warns(RuntimeWarning):
            dec = odlro_decomposition(t, [1.0, 0.0, 0.0], c=1.0)
        assert dec.cutoff_clamped
        assert dec.n_cut == 10


class TestModeOccupations:
    def test_sum_rule_with_tail_bound(self):
        beta = 1.0
        box = SimulationBox(3, 4.0)
        n = 30
        t = build_table(box, beta, n)
        shell = 10
        total = 0.0
        for mx in range(-shell, shell + 1):
            for my in range(-shell, shell + 1):
                for mz in range(-shell, shell + 1):
                    k = 2.0 * math.pi / box.side * np.array([mx, my, mz])
                    total += mode_occupation(t, k)
        # remaining modes are bounded by the geometric tail sum
        tail = 0.0
        for mx in range(-2 * shell, 2 * shell + 1):
            for my in range(-2 * shell, 2 * shell + 1):
                for mz in range(-2 * shell, 2 * shell + 1):
                    if max(abs(mx), abs(my), abs(mz)) <= shell:
                        continue
                    ksq = (2.0 * math.pi / box.side) ** 2 * (mx * mx + my * my + mz * mz)
                    if beta * ksq < 500.0:
                        tail += 1.0 / math.expm1(beta * ksq)
        assert total <= n + 1e-9
        assert n - total <= tail + 1e-9

    def test_occupation_bound_off_zero_mode(self):
        beta = 0.7
        box = SimulationBox(3, 5.0)
        t = build_table(box, beta, 40)
        for m in ([1, 0, 0], [1, 1, 0], [2, 1, 1]):
            k = 2.0 * math.pi / box.side * np.array(m, dtype=float)
            ksq = float(np.dot(k, k))
            assert mode_occupation(t, k) <= 1.0 / math.expm1(beta * ksq) + 1e-12

    def test_ground_state_saturation_at_low_temperature(self):
        box = SimulationBox(3, 4.0)
        n = 12
        t = build_table(box, 30.0, n)
        assert mode_occupation(t, np.zeros(3)) == pytest.approx(n, rel=1e-6)

    def test_off_lattice_wavevector_rejected(self):
        t = build_table(SimulationBox(3, 4.0), 1.0, 5)
        with pytest.raises(ValueError):
            mode_occupation(t, [0.1, 0.0, 0.0])


class TestZeroModeTail:
    def test_boundary_values(self):
        t = build_table(SimulationBox(3, 4.0), 1.0, 20)
        assert zero_mode_tail(t, 0) == 1.0
        assert zero_mode_tail(t, 21) == 0.0

    def test_monotone_non_increasing(self):
        t = build_table(SimulationBox(3, 5.0), 1.0, 60)
        vals = [zero_mode_tail(t, i) for i in range(61)]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))

    def test_condensed_tail_near_one(self):
        beta = 1.0
        rho = 2.0 * critical_density(beta, 3)
        box = SimulationBox(3, 10.0)
        n = round(rho * box.volume)
        t = build_table(box, beta, n)
        i = int(box.volume * (rho - critical_density(beta, 3)) / 2)
        assert zero_mode_tail(t, i) > 0.95

    def test_condensate_fraction_in_range(self):
        t = build_table(SimulationBox(3, 6.0), 1.0, 30)
        assert 0.0 <= condensate_fraction(t) <= t.rho


class TestLargeDeviationRate:
    def test_domain_validation(self):
        t = build_table(SimulationBox(3, 4.0), 1.0, 10)
        with pytest.raises(ValueError):
            large_deviation_rate(t, 0.0)
        with pytest.raises(ValueError):
            large_deviation_rate(t, t.rho * 1.5)

    def test_rate_negative_above_condensate_excess(self):
        beta = 1.0
        rho_c = critical_density(beta, 3)
        box = SimulationBox(3, 8.0)
        t = build_table(box, beta, round(2 * rho_c * box.volume))
        rate = large_deviation_rate(t, 1.5 * rho_c)
        assert rate < 0.0

    def test_rate_vanishes_inside_condensate(self):
        beta = 1.0
        rho_c = critical_density(beta, 3)
        box = SimulationBox(3, 10.0)
        t = build_table(box, beta, round(2 * rho_c * box.volume))
        inside = large_deviation_rate(t, 0.5 * rho_c)
        outside = large_deviation_rate(t, 1.5 * rho_c)
        assert abs(inside) < abs(outside) / 5
