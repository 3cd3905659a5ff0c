"""No-signaling resources and the shared randomness that drives them.

Bits follow one convention throughout: bit 0 is outcome +1, bit 1 is -1.

Every box comes in two forms. The array kernels (``pr_outputs``,
``m_outputs``, ``cgmp_outputs``, ``unit_vectors``) take pre-drawn uniforms
and are what the protocol engine runs on whole batches. The per-use wrappers
(``pr_box``, ``m_box``, ``cgmp_box``, ``oracle_box``) pull their draws from a
``SharedRandomness`` stream in a fixed order and call the same kernels.

In the PR- and M-box Alice's output is the fresh shared bit and Bob's is
fixed by the box relation, so Alice's side replays exactly when only Bob's
inputs change.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import BinaryCorrelation, BlochVector

STREAM_VERSION = "pcg64-seedsequence-v1"
MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


class SharedRandomness:
    """Deterministic uniform stream shared by Alice and Bob.

    The stream for ``(seed, key)`` is PCG64 seeded by
    ``SeedSequence(seed, spawn_key=key)``. Every draw is built from uniform
    doubles: a scalar uses one, a bit one (0 iff u < 1/2), a unit vector two
    (z = 1 - 2u, azimuth = 2*pi*u'). Drawing K values one at a time gives the
    same numbers as ``uniforms((N, K))`` read row by row, which is what lets
    the batch engine replay single rounds exactly.
    """

    def __init__(self, seed: int = 0, key: Sequence[int] = ()):
        self.seed = check_seed(seed)
        self.key = tuple(int(k) for k in key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.key))
        )

    def child(self, *key: int) -> SharedRandomness:
        """Independent stream for the sub-key ``self.key + key``."""
        return SharedRandomness(self.seed, self.key + tuple(key))

    def uniform(self) -> float:
        return float(self._gen.random())

    def uniforms(self, shape) -> np.ndarray:
        return self._gen.random(shape)

    def bit(self) -> int:
        return int(self._gen.random() >= 0.5)

    def unit_vector(self) -> BlochVector:
        u = self._gen.random(2)
        return BlochVector(*unit_vectors(u[0], u[1]))


def uniform_bits(u: np.ndarray) -> np.ndarray:
    return (np.asarray(u) >= 0.5).astype(np.uint8)


def unit_vectors(u1, u2) -> np.ndarray:
    """Rotation-invariant unit vectors from two uniforms; last axis is (x, y, z)."""
    z = 1.0 - 2.0 * np.asarray(u1, dtype=float)
    phi = 2.0 * np.pi * np.asarray(u2, dtype=float)
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def sgnbit(w) -> np.ndarray:
    """0 for w >= 0, 1 otherwise."""
    return (np.asarray(w) < 0).astype(np.uint8)


def bits_to_signs(bits) -> np.ndarray:
    return 1 - 2 * np.asarray(bits, dtype=np.int8)


def pr_outputs(shared_bit, x, y) -> tuple[np.ndarray, np.ndarray]:
    """a = shared bit, b = a xor (x and y)."""
    a = np.asarray(shared_bit, dtype=np.uint8)
    return a, a ^ (np.asarray(x, dtype=np.uint8) & np.asarray(y, dtype=np.uint8))


def m_outputs(shared_bit, x, y) -> tuple[np.ndarray, np.ndarray]:
    """a = shared bit, b = a xor [x <= y] where the bracket is 0 when true."""
    a = np.asarray(shared_bit, dtype=np.uint8)
    return a, a ^ (np.asarray(x) > np.asarray(y)).astype(np.uint8)


def _dot(lam: np.ndarray, w: np.ndarray) -> np.ndarray:
    if w.ndim == 1:
        return lam @ w
    return np.sum(lam * w, axis=-1)


@dataclass
class CgmpOutputs:
    alpha: np.ndarray
    beta: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    q: np.ndarray


def cgmp_outputs(lam1: np.ndarray, lam2: np.ndarray, shared_bit, u, v) -> CgmpOutputs:
    """Scalar-product box from two shared unit vectors and one PR-box.

    ``lam1``/``lam2`` have shape (..., 3); ``u``/``v`` are 3-vectors or arrays
    broadcastable against them. Output bits have E[alpha*beta] = u.v and
    uniform marginals.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    lam1_v, lam2_v = _dot(lam1, v), _dot(lam2, v)
    ua1 = sgnbit(_dot(lam1, u))
    ua2 = sgnbit(_dot(lam2, u))
    vp = sgnbit(lam1_v + lam2_v)
    vm = sgnbit(lam1_v - lam2_v)
    x = ua1 ^ ua2
    y = vp ^ vm
    p, q = pr_outputs(shared_bit, x, y)
    return CgmpOutputs(alpha=p ^ ua1, beta=q ^ vp, x=x, y=y, p=p, q=q)


@dataclass
class BoxEnds:
    """The two ends of one drawn box.

    Alice's end returns her output from her input and the shared draw alone.
    Bob's end needs the box relation, so it can only be queried after
    Alice's input is in.
    """

    shared_bit: int
    relation: Callable[[object, object], int]
    _alice_input: object = field(default=None, repr=False)

    def alice(self, x) -> int:
        self._alice_input = x
        return int(self.shared_bit)

    def bob(self, y) -> int:
        if self._alice_input is None:
            raise RuntimeError("Bob's end was queried before Alice supplied her input")
        return int(self.shared_bit) ^ int(self.relation(self._alice_input, y))


def pr_box_ends(shared: SharedRandomness) -> BoxEnds:
    return BoxEnds(shared.bit(), lambda x, y: int(x) & int(y))


def m_box_ends(shared: SharedRandomness) -> BoxEnds:
    return BoxEnds(shared.bit(), lambda x, y: int(x > y))


def pr_box(shared: SharedRandomness, x: int, y: int) -> tuple[int, int]:
    if x not in (0, 1) or y not in (0, 1):
        raise ValueError("PR-box inputs must be bits")
    box = pr_box_ends(shared)
    return box.alice(x), box.bob(y)


def m_box(shared: SharedRandomness, x: float, y: float) -> tuple[int, int]:
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ValueError(f"M-box inputs must lie in [0, 1], got {x!r}, {y!r}")
    box = m_box_ends(shared)
    return box.alice(x), box.bob(y)


def cgmp_box(shared: SharedRandomness, u: BlochVector, v: BlochVector) -> tuple[int, int]:
    """One scalar-product round; consumes lambda1, lambda2, then the PR bit."""
    draws = shared.uniforms(5)
    lam = unit_vectors(draws[[0, 2]], draws[[1, 3]])
    out = cgmp_outputs(lam[0], lam[1], uniform_bits(draws[4]), u.as_tuple(), v.as_tuple())
    return int(bits_to_signs(out.alpha)), int(bits_to_signs(out.beta))


def oracle_cells(d: BinaryCorrelation) -> np.ndarray:
    """Cumulative cell boundaries in (++, +-, -+, --) order."""
    probs = np.clip(np.array(d.probabilities()), 0.0, None)
    cdf = np.cumsum(probs / probs.sum())
    cdf[-1] = 1.0
    return cdf


def oracle_outputs(u, d: BinaryCorrelation) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-CDF sample of the joint distribution; returns sign arrays."""
    cell = np.searchsorted(oracle_cells(d), np.asarray(u), side="right")
    alpha = np.where(cell < 2, 1, -1).astype(np.int8)
    beta = np.where(cell % 2 == 0, 1, -1).astype(np.int8)
    return alpha, beta


def oracle_box(shared: SharedRandomness, d: BinaryCorrelation) -> tuple[int, int]:
    """Centralized sampler of ``d`` for testing; not a no-signaling resource."""
    if not isinstance(d, BinaryCorrelation):
        raise TypeError("oracle_box needs a BinaryCorrelation")
    alpha, beta = oracle_outputs(shared.uniform(), d)
    return int(alpha), int(beta)
