"""Analytic correlations for von Neumann measurements on cos(t)|00> + sin(t)|11>.

Everything here is a pure function of the entanglement angle and the two
Bloch vectors. Binary correlations are stored as (marginal A, marginal B,
correlator); the joint distribution is

    P(alpha, beta) = (1 + alpha*m_a + beta*m_b + alpha*beta*corr) / 4

with outcome order (++, +-, -+, --) wherever a 4-tuple is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

NONNEG_TOL = 1e-12
UNIT_TOL = 1e-9
NORM_FLOOR = 1e-6
G_CLAMP_TOL = 1e-9

SIGN_PAIRS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


class ConsistencyError(RuntimeError):
    """An internal identity that must hold by construction was violated."""


@dataclass(frozen=True)
class StateParameter:
    """Entanglement angle theta in (0, pi/4] with cached c = cos 2θ, s = sin 2θ."""

    theta: float
    c: float
    s: float

    @classmethod
    def from_theta(cls, theta: float) -> StateParameter:
        theta = float(theta)
        quarter = math.pi / 4
        if not math.isfinite(theta) or theta <= 0.0 or theta > quarter + 1e-12:
            raise ValueError(f"theta must lie in (0, pi/4], got {theta!r}")
        theta = min(theta, quarter)
        c, s = math.cos(2 * theta), math.sin(2 * theta)
        # cos(pi/2) evaluates to ~6e-17; snap so the maximally entangled limit is exact
        if c < 1e-15:
            c, s = 0.0, 1.0
        return cls(theta, c, s)

    @property
    def p_local(self) -> float:
        return 1.0 - self.s


@dataclass(frozen=True)
class BlochVector:
    """Measurement direction on the Bloch sphere.

    Inputs within ``UNIT_TOL`` of unit norm are stored as given, anything else
    is renormalized; norms below ``NORM_FLOOR`` are rejected.
    """

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        x, y, z = float(self.x), float(self.y), float(self.z)
        if not all(math.isfinite(t) for t in (x, y, z)):
            raise ValueError("Bloch vector components must be finite")
        norm = math.sqrt(x * x + y * y + z * z)
        if norm < NORM_FLOOR:
            raise ValueError(f"Bloch vector norm {norm:.3g} is too small to normalize")
        if abs(norm - 1.0) > UNIT_TOL:
            x, y, z = x / norm, y / norm, z / norm
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    def dot(self, other: BlochVector) -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def __neg__(self) -> BlochVector:
        return BlochVector(-self.x, -self.y, -self.z)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class BinaryCorrelation:
    """Two-outcome bipartite distribution as (m_a, m_b, corr)."""

    m_a: float
    m_b: float
    corr: float

    def __post_init__(self) -> None:
        for alpha, beta in SIGN_PAIRS:
            weight = 1 + alpha * self.m_a + beta * self.m_b + alpha * beta * self.corr
            if weight < -4 * NONNEG_TOL:
                raise ValueError(
                    f"{self} is not a probability distribution "
                    f"(cell {alpha:+d}{beta:+d} has weight {weight / 4:.3g})"
                )

    def probability(self, alpha: int, beta: int) -> float:
        return distribution_probability(self, alpha, beta)

    def probabilities(self) -> tuple[float, float, float, float]:
        return tuple(distribution_probability(self, a, b) for a, b in SIGN_PAIRS)  # type: ignore[return-value]

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.m_a, self.m_b, self.corr)


@dataclass(frozen=True)
class Epr2Decomposition:
    p_local: float
    local_part: BinaryCorrelation
    nonlocal_part: BinaryCorrelation

    def mixture(self) -> tuple[float, float, float]:
        """Field-wise p*local + (1-p)*nonlocal."""
        p = self.p_local
        return tuple(
            p * lo + (1 - p) * nl
            for lo, nl in zip(self.local_part.as_tuple(), self.nonlocal_part.as_tuple())
        )  # type: ignore[return-value]


def quantum_correlation(state: StateParameter, a: BlochVector, b: BlochVector) -> BinaryCorrelation:
    corr = a.z * b.z + state.s * (a.x * b.x - a.y * b.y)
    return BinaryCorrelation(state.c * a.z, state.c * b.z, corr)


def distribution_probability(d: BinaryCorrelation, alpha: int, beta: int) -> float:
    if alpha not in (-1, 1) or beta not in (-1, 1):
        raise ValueError("outcomes must be +1 or -1")
    return 0.25 * (1 + alpha * d.m_a + beta * d.m_b + alpha * beta * d.corr)


def flip_compose(f_a: float, f_b: float, c0: float) -> BinaryCorrelation:
    """Distribution after correlated Z-channel flips on a zero-marginal source.

    Each party flips its -1 outcome to +1 when a shared uniform Λ falls below
    its flip probability, so the smaller flip only happens together with the
    larger one. Negative arguments mean flips of +1 towards -1 with
    probability |f|; both parties must flip in the same direction.
    """
    if abs(f_a) > 1 + NONNEG_TOL or abs(f_b) > 1 + NONNEG_TOL or abs(c0) > 1 + NONNEG_TOL:
        raise ValueError("flip probabilities and source correlator must lie in [-1, 1]")
    if f_a * f_b < 0:
        raise ValueError("opposite-direction flips cannot share one flip variable")
    lo, hi = sorted((abs(f_a), abs(f_b)))
    return BinaryCorrelation(f_a, f_b, lo + (1 - hi) * c0)


Side = Literal["alice", "bob"]


def _step_back_terms(state: StateParameter, v: BlochVector) -> tuple[float, float]:
    """(v_z - c, 1 - c*v_z) without cancellation when v_z and c are both near 1."""
    c = state.c
    one_minus_c = 2.0 * math.sin(state.theta) ** 2 if c > 0.5 else 1 - c
    one_minus_z = (v.x * v.x + v.y * v.y) / (1 + v.z) if v.z > 0 else 1 - v.z
    return one_minus_c - one_minus_z, one_minus_c + c * one_minus_z


def hardy_step_back(state: StateParameter, v: BlochVector, side: Side = "bob") -> BlochVector:
    """Move a setting one rung down the Hardy ladder.

    Both sides use (s*v_x, -s*v_y, v_z - c) / (1 - c*v_z); ``side`` only
    documents which party's CGMP input is being built.
    """
    if side not in ("alice", "bob"):
        raise ValueError(f"unknown side {side!r}")
    s = state.s
    num_z, den = _step_back_terms(state, v)
    return BlochVector(s * v.x / den, -s * v.y / den, num_z / den)


def main_model_step_back_A(state: StateParameter, a: BlochVector) -> BlochVector:
    s = state.s
    num_z, den = _step_back_terms(state, a)
    return BlochVector(s * a.x / den, s * a.y / den, -num_z / den)


def bob_reflection(b: BlochVector) -> BlochVector:
    return BlochVector(b.x, -b.y, -b.z)


def slice_threshold(state: StateParameter) -> float:
    if state.c == 0.0:
        return 0.0
    return (1 - state.s) / state.c


def local_marginal_f(state: StateParameter, z: float) -> float:
    if state.c == 0.0 or z == 0.0:
        return 0.0
    return math.copysign(min(1.0, state.c / (1 - state.s) * abs(z)), z)


def nonlocal_marginal_F(state: StateParameter, z: float) -> float:
    if abs(z) <= slice_threshold(state):
        return 0.0
    return (state.c * z - (1 - state.s) * local_marginal_f(state, z)) / state.s


def nonlocal_corr_G(state: StateParameter, a: BlochVector, b: BlochVector) -> float:
    s = state.s
    fa, fb = local_marginal_f(state, a.z), local_marginal_f(state, b.z)
    g = a.x * b.x - a.y * b.y + (a.z * b.z - (1 - s) * fa * fb) / s
    if abs(g) > 1 + G_CLAMP_TOL:
        raise ConsistencyError(f"nonlocal correlator {g!r} left [-1, 1]")
    return min(1.0, max(-1.0, g))


def epr2_decompose(state: StateParameter, a: BlochVector, b: BlochVector) -> Epr2Decomposition:
    fa, fb = local_marginal_f(state, a.z), local_marginal_f(state, b.z)
    return Epr2Decomposition(
        p_local=state.p_local,
        local_part=BinaryCorrelation(fa, fb, fa * fb),
        nonlocal_part=BinaryCorrelation(
            nonlocal_marginal_F(state, a.z),
            nonlocal_marginal_F(state, b.z),
            nonlocal_corr_G(state, a, b),
        ),
    )
