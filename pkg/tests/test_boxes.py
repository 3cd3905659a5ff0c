import math

import numpy as np
import pytest

from epr2sim import boxes
from epr2sim.boxes import SharedRandomness
from epr2sim.core import BinaryCorrelation, BlochVector

from oracles import all_bit_tuples

N = 1_000_000


def test_same_seed_same_stream():
    r1, r2 = SharedRandomness(7), SharedRandomness(7)
    assert [r1.uniform() for _ in range(5)] == [r2.uniform() for _ in range(5)]
    assert SharedRandomness(7).uniform() != SharedRandomness(8).uniform()
    assert SharedRandomness(7, (1,)).uniform() != SharedRandomness(7, (2,)).uniform()


def test_scalar_draws_match_block_draws():
    r = SharedRandomness(3, (4,))
    seq = np.array([r.uniform() for _ in range(5 * 17)]).reshape(5, 17)
    assert np.array_equal(seq, SharedRandomness(3, (4,)).uniforms((5, 17)))


def test_seed_range():
    SharedRandomness(2**64 - 1)
    for bad in (-1, 2**64):
        with pytest.raises(ValueError):
            SharedRandomness(bad)


def test_unit_vectors_rotation_invariant():
    u = SharedRandomness(1).uniforms((100_000, 2))
    v = boxes.unit_vectors(u[:, 0], u[:, 1])
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0)
    assert np.linalg.norm(v.mean(axis=0)) <= 0.02
    # second moments of a uniform sphere are I/3
    assert np.allclose(v.T @ v / len(v), np.eye(3) / 3, atol=0.01)


def test_shared_unit_vector_draw():
    v = SharedRandomness(9).unit_vector()
    assert abs(v.norm() - 1) < 1e-12


class TestPrBox:
    def test_relation_each_input(self):
        for x, y in all_bit_tuples(2):
            r = SharedRandomness(x * 2 + y)
            for _ in range(200):
                a, b = boxes.pr_box(r, x, y)
                assert a ^ b == x * y

    def test_rejects_non_bits(self):
        with pytest.raises(ValueError):
            boxes.pr_box(SharedRandomness(0), 2, 0)

    @pytest.mark.parametrize("x,y", [(0, 0), (1, 1)])
    def test_local_uniformity(self, x, y):
        bits = boxes.uniform_bits(SharedRandomness(5).uniforms(N))
        a, b = boxes.pr_outputs(bits, x, y)
        assert abs(a.mean() - 0.5) <= 0.002
        assert abs(b.mean() - 0.5) <= 0.002

    def test_alice_end_ignores_bob(self):
        outs = [boxes.pr_box(SharedRandomness(11), 1, y)[0] for y in (0, 1)]
        assert outs[0] == outs[1]

    def test_bob_end_needs_alice_first(self):
        ends = boxes.pr_box_ends(SharedRandomness(0))
        with pytest.raises(RuntimeError):
            ends.bob(1)


class TestMBox:
    def test_examples(self):
        r = SharedRandomness(2)
        a, b = boxes.m_box(r, 0.3, 0.7)
        assert a ^ b == 0
        a, b = boxes.m_box(r, 0.7, 0.3)
        assert a ^ b == 1
        a, b = boxes.m_box(r, 0.5, 0.5)
        assert a ^ b == 0

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            boxes.m_box(SharedRandomness(0), 1.2, 0.3)
        with pytest.raises(ValueError):
            boxes.m_box(SharedRandomness(0), 0.2, -0.1)

    def test_relation_on_random_inputs(self):
        rng = np.random.default_rng(4)
        x, y = rng.random(10_000), rng.random(10_000)
        a, b = boxes.m_outputs(boxes.uniform_bits(rng.random(10_000)), x, y)
        assert np.array_equal(a ^ b, (x > y).astype(np.uint8))


def _cgmp_stats(u, v, n, seed):
    d = SharedRandomness(seed).uniforms((n, 5))
    lam = boxes.unit_vectors(d[:, [0, 2]], d[:, [1, 3]])
    out = boxes.cgmp_outputs(lam[:, 0], lam[:, 1], boxes.uniform_bits(d[:, 4]), u.as_tuple(), v.as_tuple())
    al, be = boxes.bits_to_signs(out.alpha).astype(float), boxes.bits_to_signs(out.beta).astype(float)
    return al.mean(), be.mean(), (al * be).mean()


class TestCgmp:
    def test_equal_settings_perfectly_correlated(self):
        u = BlochVector(0.2, -0.4, 0.7)
        _, _, e = _cgmp_stats(u, u, 100_000, 1)
        assert e == 1.0

    @pytest.mark.parametrize(
        "u,v,expected",
        [
            (BlochVector(0, 0, 1), BlochVector(1, 0, 0), 0.0),
            (BlochVector(0, 0, 1), BlochVector(math.sqrt(3) / 2, 0, 0.5), 0.5),
        ],
    )
    def test_scalar_product(self, u, v, expected):
        ma, mb, e = _cgmp_stats(u, v, N, 2)
        tol = 5 / math.sqrt(N)
        assert abs(e - expected) <= tol
        assert abs(ma) <= tol and abs(mb) <= tol

    def test_single_use_wrapper_matches_kernel(self):
        u, v = BlochVector(0.1, 0.2, 0.9), BlochVector(-0.3, 0.5, 0.2)
        r = SharedRandomness(21)
        singles = [boxes.cgmp_box(r, u, v) for _ in range(50)]
        d = SharedRandomness(21).uniforms((50, 5))
        lam = boxes.unit_vectors(d[:, [0, 2]], d[:, [1, 3]])
        out = boxes.cgmp_outputs(lam[:, 0], lam[:, 1], boxes.uniform_bits(d[:, 4]), u.as_tuple(), v.as_tuple())
        batch = list(zip(boxes.bits_to_signs(out.alpha).tolist(), boxes.bits_to_signs(out.beta).tolist()))
        assert singles == batch

    def test_pr_relation_inside(self):
        d = SharedRandomness(3).uniforms((1000, 5))
        lam = boxes.unit_vectors(d[:, [0, 2]], d[:, [1, 3]])
        out = boxes.cgmp_outputs(lam[:, 0], lam[:, 1], boxes.uniform_bits(d[:, 4]), (0, 0, 1), (1, 0, 0))
        assert np.array_equal(out.p ^ out.q, out.x & out.y)


class TestOracleBox:
    def test_uniform(self):
        u = SharedRandomness(4).uniforms(N)
        a, b = boxes.oracle_outputs(u, BinaryCorrelation(0, 0, 0))
        cell = (a < 0) * 2 + (b < 0)
        freq = np.bincount(cell, minlength=4) / N
        assert np.all(np.abs(freq - 0.25) <= 5 * math.sqrt(0.25 * 0.75 / N))

    def test_biased(self):
        u = SharedRandomness(5).uniforms(N)
        a, b = boxes.oracle_outputs(u, BinaryCorrelation(0.5, 0.5, 1.0))
        cell = (a < 0) * 2 + (b < 0)
        counts = np.bincount(cell, minlength=4)
        assert counts[1] == 0 and counts[2] == 0
        assert abs(counts[0] / N - 0.75) <= 5 * math.sqrt(0.75 * 0.25 / N)

    def test_deterministic_corner(self):
        r = SharedRandomness(6)
        assert {boxes.oracle_box(r, BinaryCorrelation(1, 1, 1)) for _ in range(100)} == {(1, 1)}

    def test_rejects_invalid(self):
        with pytest.raises(TypeError):
            boxes.oracle_box(SharedRandomness(0), (0, 0, 0))
