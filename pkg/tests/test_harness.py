import math

import numpy as np
import pytest

from epr2sim import harness
from epr2sim.core import BinaryCorrelation, BlochVector, StateParameter
from epr2sim.harness import EstimatedDistribution, compare, estimate

from oracles import probs_to_triple, quantum_probs

PI6 = StateParameter.from_theta(math.pi / 6)
PI4 = StateParameter.from_theta(math.pi / 4)
Z = BlochVector(0, 0, 1)
X = BlochVector(1, 0, 0)


def test_oracle_uniform():
    est = estimate("oracle", PI6, Z, Z, 1_000_000, seed=1, target=BinaryCorrelation(0, 0, 0))
    assert np.all(np.abs(est.p_hat - 0.25) <= 0.0022)
    assert sum(est.counts) == est.n and est.p_hat.sum() == pytest.approx(1.0, abs=1e-12)


def test_estimate_is_deterministic_and_worker_independent():
    a, b = BlochVector(0.1, 0.2, 0.3), BlochVector(-0.3, 0.1, 0.9)
    e1 = estimate("epr2-full", PI6, a, b, 150_000, seed=5)
    e2 = estimate("epr2-full", PI6, a, b, 150_000, seed=5)
    e3 = estimate("epr2-full", PI6, a, b, 150_000, seed=5, workers=2)
    assert e1 == e2 == e3
    assert estimate("epr2-full", PI6, a, b, 150_000, seed=6) != e1


def test_estimate_errors():
    with pytest.raises(ValueError):
        estimate("nope", PI6, Z, Z, 10)
    with pytest.raises(ValueError):
        estimate("oracle", PI6, Z, Z, 0)


def test_singlet_ignores_theta():
    e1 = estimate("singlet", PI6, Z, X, 10_000, seed=2)
    e2 = estimate("singlet", None, Z, X, 10_000, seed=2)
    assert e1 == e2


def test_preliminary_chsh_anchor_correlator():
    est = estimate("preliminary", PI4, Z, BlochVector(1, 0, 1), 1_000_000, seed=3)
    assert abs(est.marginals[2] - 0.70710678) <= 5 * math.sqrt(0.5 / 1_000_000)


class TestCompare:
    def test_self_consistency(self):
        d = BinaryCorrelation(0.3, -0.2, 0.1)
        est = estimate("oracle", PI6, Z, Z, 1_000_000, seed=4, target=d)
        assert compare(est, d).passed

    def test_detects_shifted_cell(self):
        n = 1_000_000
        est = EstimatedDistribution((740_000, 10_000, 0, 250_000), n)
        rep = compare(est, BinaryCorrelation(0.5, 0.5, 1.0))
        assert not rep.passed
        assert rep.abs_diff[1] == pytest.approx(0.01)

    def test_zero_cell_convention(self):
        est = EstimatedDistribution((750_000, 0, 0, 250_000), 1_000_000)
        rep = compare(est, BinaryCorrelation(0.5, 0.5, 1.0))
        assert rep.z[1] == 0.0 and rep.z[2] == 0.0 and rep.passed

    def test_floor_rescues_small_difference(self):
        est = EstimatedDistribution((100, 0, 0, 0), 100)
        rep = compare(est, BinaryCorrelation(0.996, 0.996, 0.996), abs_floor=0.005)
        assert rep.passed and math.isinf(rep.worst_z)


def test_standard_error_coverage():
    # calibration of the z machinery against the exact sampler
    d = BinaryCorrelation(0.2, -0.4, 0.1)
    big = 0
    for run in range(200):
        est = estimate("oracle", PI6, Z, Z, 20_000, seed=run, target=d)
        big += sum(z > 3 for z in compare(est, d).z)
    assert big / (200 * 4) < 0.02


def test_two_proportion_z():
    assert harness.two_proportion_z(500, 1000, 500, 1000) == 0.0
    assert harness.two_proportion_z(10, 10, 10, 10) == 0.0
    z = harness.two_proportion_z(520, 1000, 480, 1000)
    assert z == pytest.approx(0.04 / math.sqrt(0.25 * 2 / 1000))


class TestNoSignaling:
    bobs = [BlochVector(*v) for v in ((1, 0, 0), (0, 1, 0), (0, 0, -1), (1, 1, 1), (-1, 2, 0.5))]

    def test_full_model_alice_fixed(self):
        rep = harness.no_signaling_test("epr2-full", PI6, "A", Z, self.bobs, 200_000, seed=1)
        assert rep.replay_exact is True
        assert rep.passed, rep

    def test_bob_fixed(self):
        rep = harness.no_signaling_test("preliminary", PI6, "B", Z, self.bobs, 200_000, seed=2)
        assert rep.replay_exact is None and rep.passed

    def test_oracle_passes(self):
        rep = harness.no_signaling_test("oracle", PI6, "A", Z, self.bobs[:3], 100_000, seed=3)
        assert rep.passed

    def test_broken_model_fails(self):
        rep = harness.no_signaling_test("signaling-fault", PI6, "A", Z, self.bobs, 200_000, seed=4)
        assert not rep.passed
        assert rep.replay_exact is False

    def test_needs_two_settings(self):
        with pytest.raises(ValueError):
            harness.no_signaling_test("oracle", PI6, "A", Z, [X], 10)


class TestChsh:
    def test_optimal_pi4(self):
        res = harness.chsh("epr2-full", PI4, harness.OPTIMAL_CHSH, 400_000, seed=1)
        assert res.analytic == pytest.approx(2 * math.sqrt(2))
        assert abs(res.s - res.analytic) <= 5 * res.stderr

    def test_degenerate_settings_bounded(self):
        settings = (Z, Z, Z, Z)
        res = harness.chsh("preliminary", PI6, settings, 200_000, seed=2)
        assert res.analytic == pytest.approx(2 * 1.0)
        assert res.s <= 2 + 1e-12

    def test_local_product_oracle(self):
        res = harness.chsh("oracle", PI6, harness.OPTIMAL_CHSH, 400_000, seed=3,
                           target=BinaryCorrelation(0, 0, 0))
        assert abs(res.s) <= 5 * res.stderr

    def test_analytic_pi8_matches_density_matrix(self):
        theta = math.pi / 8
        vecs = [v.as_tuple() for v in harness.OPTIMAL_CHSH]
        corr = [probs_to_triple(quantum_probs(theta, vecs[i], vecs[j]))[2]
                for i, j in ((0, 2), (0, 3), (1, 2), (1, 3))]
        expected = corr[0] + corr[1] + corr[2] - corr[3]
        val = harness.analytic_chsh(StateParameter.from_theta(theta))
        assert val == pytest.approx(expected, abs=1e-12)
        assert val == pytest.approx(1 + math.sqrt(2), abs=1e-12)


class TestSweep:
    def test_rows_and_usage(self):
        thetas = [0.01, math.pi / 6]
        settings = harness.default_settings(2, seed=1)
        res = harness.sweep(thetas, settings, 50_000, seed=1, models=("epr2-full",))
        assert len(res.rows) == len(thetas) * len(settings)
        assert res.passed
        near_product = res.usage[0]
        assert near_product.expected == pytest.approx(math.sin(0.02))
        row = res.rows[0].as_dict()
        assert {"q_pp", "p_mm", "worst_z", "nonlocal_freq", "pass"} <= set(row)

    def test_empty_settings(self):
        with pytest.raises(ValueError):
            harness.sweep([0.3], [], 10)

    def test_random_pairs_reproducible(self):
        assert harness.random_setting_pairs(3, 9) == harness.random_setting_pairs(3, 9)
        assert harness.random_setting_pairs(3, 9) != harness.random_setting_pairs(3, 10)
