"""Simulation pipelines built only from shared randomness and no-signaling boxes.

Each round consumes a fixed-width record of uniforms from the shared stream.
The slot layout is part of the reproducibility contract (version
``ROUND_LAYOUT_VERSION``); every slot is consumed on every round whether or
not the branch taken reads it.

nonlocal record (preliminary, epr2-nonlocal), 14 uniforms::

    0-1   lambda1 for CGMP1      2-3   lambda2 for CGMP1     4   PR bit for CGMP1
    5-6   lambda1 for CGMP2      7-8   lambda2 for CGMP2     9   PR bit for CGMP2
    10    M-box bit              11    PR3 bit               12  PR4 bit
    13    flip variable

epr2-full prepends the branch coin and appends Alice's and Bob's local
scalars (17 uniforms). singlet uses slots 0-4 only, local 2 and oracle 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import core
from .boxes import (
    SharedRandomness,
    bits_to_signs,
    cgmp_outputs,
    m_outputs,
    oracle_outputs,
    pr_outputs,
    uniform_bits,
    unit_vectors,
)
from .core import BinaryCorrelation, BlochVector, StateParameter

ROUND_LAYOUT_VERSION = "1"

NONLOCAL_WIDTH = 14
FULL_WIDTH = 1 + NONLOCAL_WIDTH + 2


@dataclass(frozen=True)
class ProtocolTranscript:
    """Box inputs and outputs of one nonlocal round (bits; 0 is +1)."""

    alpha1: int
    beta1: int
    alpha2: int
    beta2: int
    cgmp1_in: tuple[int, int]
    cgmp2_in: tuple[int, int]
    m_in: tuple[float, float]
    a_m: int
    b_m: int
    pr3_in: tuple[int, int]
    a3: int
    b3: int
    pr4_in: tuple[int, int]
    a4: int
    b4: int
    pre_flip: tuple[int, int]
    flip_a: bool
    flip_b: bool
    branch: int
    pr_uses: int = 4
    m_uses: int = 1

    def relations_hold(self) -> bool:
        """PR and M relations for every box recorded in this round."""
        x3, y3 = self.pr3_in
        x4, y4 = self.pr4_in
        mx, my = self.m_in
        return (
            (self.a_m ^ self.b_m) == int(mx > my)
            and (self.a3 ^ self.b3) == (x3 & y3)
            and (self.a4 ^ self.b4) == (x4 & y4)
        )


@dataclass(frozen=True)
class RoundResult:
    alpha: int
    beta: int
    used_nonlocal: bool
    transcript: Optional[ProtocolTranscript] = None


def hemisphere_reduce(v: BlochVector) -> tuple[BlochVector, bool]:
    """Map v to the upper hemisphere; the flag says the outcome must be negated."""
    if v.z >= 0:
        return v, False
    return -v, True


@dataclass(frozen=True)
class _Plan:
    """Setting-dependent, round-independent part of a nonlocal pipeline."""

    cgmp1: tuple[BlochVector, BlochVector]
    cgmp2: tuple[BlochVector, BlochVector]
    m_in: tuple[float, float]
    flip_a: float
    flip_b: float
    negate_a: bool
    negate_b: bool


def _preliminary_plan(state: StateParameter, a: BlochVector, b: BlochVector) -> _Plan:
    a, neg_a = hemisphere_reduce(a)
    b, neg_b = hemisphere_reduce(b)
    return _Plan(
        cgmp1=(core.hardy_step_back(state, a, "alice"), b),
        cgmp2=(a, core.hardy_step_back(state, b, "bob")),
        m_in=(a.z, b.z),
        flip_a=state.c * a.z,
        flip_b=state.c * b.z,
        negate_a=neg_a,
        negate_b=neg_b,
    )


def _signaling_fault_plan(state: StateParameter, a: BlochVector, b: BlochVector) -> _Plan:
    # test fixture: Alice's flip reads Bob's setting
    plan = _preliminary_plan(state, a, b)
    return _Plan(**{**plan.__dict__, "flip_a": plan.flip_b})


def _epr2_plan(state: StateParameter, a: BlochVector, b: BlochVector) -> _Plan:
    a, neg_a = hemisphere_reduce(a)
    b, neg_b = hemisphere_reduce(b)
    edge = core.slice_threshold(state)
    b_ref = core.bob_reflection(b)
    a_first = a if a.z <= edge else core.main_model_step_back_A(state, a)
    b_second = b_ref if b.z <= edge else core.hardy_step_back(state, b, "bob")
    return _Plan(
        cgmp1=(a_first, b_ref),
        cgmp2=(a, b_second),
        m_in=(a.z, b.z),
        flip_a=core.nonlocal_marginal_F(state, a.z),
        flip_b=core.nonlocal_marginal_F(state, b.z),
        negate_a=neg_a,
        negate_b=neg_b,
    )


def _run_nonlocal(plan: _Plan, u: np.ndarray) -> dict[str, np.ndarray]:
    """Vectorized nonlocal pipeline over rows of a (N, 14) uniform block."""
    lam = unit_vectors(u[:, [0, 2, 5, 7]], u[:, [1, 3, 6, 8]])
    bits = uniform_bits(u[:, [4, 9, 10, 11, 12]])
    c1 = cgmp_outputs(lam[:, 0], lam[:, 1], bits[:, 0], *(w.as_tuple() for w in plan.cgmp1))
    c2 = cgmp_outputs(lam[:, 2], lam[:, 3], bits[:, 1], *(w.as_tuple() for w in plan.cgmp2))
    a_m, b_m = m_outputs(bits[:, 2], *plan.m_in)
    a_m = np.broadcast_to(a_m, c1.alpha.shape)
    b_m = np.broadcast_to(b_m, c1.alpha.shape)
    da = c1.alpha ^ c2.alpha
    db = c1.beta ^ c2.beta
    a3, b3 = pr_outputs(bits[:, 3], a_m, db)
    a4, b4 = pr_outputs(bits[:, 4], da, b_m)
    pre_a = (a_m & da) ^ c2.alpha ^ a3 ^ a4
    pre_b = (b_m & db) ^ c2.beta ^ b3 ^ b4
    lam_flip = u[:, 13]
    flip_a = (pre_a == 1) & (lam_flip < plan.flip_a)
    flip_b = (pre_b == 1) & (lam_flip < plan.flip_b)
    alpha = bits_to_signs(np.where(flip_a, 0, pre_a))
    beta = bits_to_signs(np.where(flip_b, 0, pre_b))
    if plan.negate_a:
        alpha = -alpha
    if plan.negate_b:
        beta = -beta
    return {
        "alpha": alpha,
        "beta": beta,
        "alpha1": c1.alpha, "beta1": c1.beta, "alpha2": c2.alpha, "beta2": c2.beta,
        "x1": c1.x, "y1": c1.y, "p1": c1.p, "q1": c1.q,
        "x2": c2.x, "y2": c2.y, "p2": c2.p, "q2": c2.q,
        "a_m": a_m, "b_m": b_m, "a3": a3, "b3": b3, "a4": a4, "b4": b4,
        "da": da, "db": db, "pre_a": pre_a, "pre_b": pre_b,
        "flip_a": flip_a, "flip_b": flip_b,
    }


def _local_outputs(state: StateParameter, a: BlochVector, b: BlochVector, ua, ub):
    fa = core.local_marginal_f(state, a.z)
    fb = core.local_marginal_f(state, b.z)
    alpha = np.where(ua < (1 + fa) / 2, 1, -1).astype(np.int8)
    beta = np.where(ub < (1 + fb) / 2, 1, -1).astype(np.int8)
    return alpha, beta


@dataclass(frozen=True)
class Model:
    name: str
    width: int
    run: Callable[[StateParameter, BlochVector, BlochVector, np.ndarray], dict]
    target: Callable[[StateParameter, BlochVector, BlochVector], BinaryCorrelation]


def _batch_nonlocal(plan_fn):
    def run(state, a, b, u):
        out = _run_nonlocal(plan_fn(state, a, b), u)
        out["used_nonlocal"] = np.ones(len(u), dtype=bool)
        return out
    return run


def _batch_full(state, a, b, u):
    local = u[:, 0] < state.p_local
    out = _run_nonlocal(_epr2_plan(state, a, b), u[:, 1:1 + NONLOCAL_WIDTH])
    la, lb = _local_outputs(state, a, b, u[:, -2], u[:, -1])
    out["alpha"] = np.where(local, la, out["alpha"])
    out["beta"] = np.where(local, lb, out["beta"])
    out["used_nonlocal"] = ~local
    return out


def _batch_singlet(state, a, b, u):
    lam = unit_vectors(u[:, [0, 2]], u[:, [1, 3]])
    tilted = (b.x, -b.y, b.z)
    c1 = cgmp_outputs(lam[:, 0], lam[:, 1], uniform_bits(u[:, 4]), a.as_tuple(), tilted)
    return {
        "alpha": bits_to_signs(c1.alpha), "beta": bits_to_signs(c1.beta),
        "alpha1": c1.alpha, "beta1": c1.beta,
        "x1": c1.x, "y1": c1.y, "p1": c1.p, "q1": c1.q,
        "used_nonlocal": np.ones(len(u), dtype=bool),
    }


def _batch_local(state, a, b, u):
    alpha, beta = _local_outputs(state, a, b, u[:, 0], u[:, 1])
    return {"alpha": alpha, "beta": beta, "used_nonlocal": np.zeros(len(u), dtype=bool)}


def oracle_rounds(state, a, b, u, target=None):
    d = target if target is not None else core.quantum_correlation(state, a, b)
    alpha, beta = oracle_outputs(u[:, 0], d)
    return {"alpha": alpha, "beta": beta, "used_nonlocal": np.zeros(len(u), dtype=bool)}


def _local_target(state, a, b):
    return core.epr2_decompose(state, a, b).local_part


def _nonlocal_target(state, a, b):
    return core.epr2_decompose(state, a, b).nonlocal_part


def _singlet_target(state, a, b):
    return core.quantum_correlation(SINGLET_STATE, a, b)


SINGLET_STATE = StateParameter.from_theta(np.pi / 4)

MODELS: dict[str, Model] = {
    "preliminary": Model("preliminary", NONLOCAL_WIDTH, _batch_nonlocal(_preliminary_plan), core.quantum_correlation),
    "epr2-nonlocal": Model("epr2-nonlocal", NONLOCAL_WIDTH, _batch_nonlocal(_epr2_plan), _nonlocal_target),
    "epr2-full": Model("epr2-full", FULL_WIDTH, _batch_full, core.quantum_correlation),
    "singlet": Model("singlet", 5, _batch_singlet, _singlet_target),
    "oracle": Model("oracle", 1, oracle_rounds, core.quantum_correlation),
    "local": Model("local", 2, _batch_local, _local_target),
}

# deliberately broken pipeline for mutation tests; not offered by the CLI
FAULT_MODELS: dict[str, Model] = {
    "signaling-fault": Model("signaling-fault", NONLOCAL_WIDTH, _batch_nonlocal(_signaling_fault_plan), core.quantum_correlation),
}

PUBLIC_MODELS = tuple(MODELS)


def get_model(name: str) -> Model:
    try:
        return MODELS[name] if name in MODELS else FAULT_MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(PUBLIC_MODELS)}") from None


def run_rounds(name: str, state: StateParameter, a: BlochVector, b: BlochVector, u: np.ndarray) -> dict:
    """Run ``len(u)`` rounds of a model on a pre-drawn (N, width) uniform block."""
    model = get_model(name)
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != model.width:
        raise ValueError(f"{name} needs a (N, {model.width}) block of uniforms, got {u.shape}")
    if name == "singlet":
        state = SINGLET_STATE
    return model.run(state, a, b, u)


def _transcript(out: dict, plan: _Plan) -> ProtocolTranscript:
    g = {k: (v[0].item() if isinstance(v, np.ndarray) else v) for k, v in out.items()}
    return ProtocolTranscript(
        alpha1=g["alpha1"], beta1=g["beta1"], alpha2=g["alpha2"], beta2=g["beta2"],
        cgmp1_in=(g["x1"], g["y1"]), cgmp2_in=(g["x2"], g["y2"]),
        m_in=plan.m_in, a_m=g["a_m"], b_m=g["b_m"],
        pr3_in=(g["a_m"], g["db"]), a3=g["a3"], b3=g["b3"],
        pr4_in=(g["da"], g["b_m"]), a4=g["a4"], b4=g["b4"],
        pre_flip=(g["pre_a"], g["pre_b"]),
        flip_a=bool(g["flip_a"]), flip_b=bool(g["flip_b"]),
        branch=1 if g["a_m"] ^ g["b_m"] else 2,
    )


def _single(name: str, plan_fn, state, a, b, shared: SharedRandomness) -> RoundResult:
    model = get_model(name)
    u = shared.uniforms((1, model.width))
    out = run_rounds(name, state, a, b, u)
    alpha, beta = int(out["alpha"][0]), int(out["beta"][0])
    used = bool(out["used_nonlocal"][0])
    transcript = _transcript(out, plan_fn(state, a, b)) if used and plan_fn else None
    return RoundResult(alpha, beta, used, transcript)


def simulate_preliminary(state, a, b, shared: SharedRandomness) -> RoundResult:
    return _single("preliminary", _preliminary_plan, state, a, b, shared)


def simulate_epr2_nonlocal(state, a, b, shared: SharedRandomness) -> RoundResult:
    return _single("epr2-nonlocal", _epr2_plan, state, a, b, shared)


def simulate_epr2_full(state, a, b, shared: SharedRandomness) -> RoundResult:
    return _single("epr2-full", _epr2_plan, state, a, b, shared)


def simulate_singlet(a, b, shared: SharedRandomness) -> RoundResult:
    """Maximally entangled case: one CGMP box, i.e. a single PR-box use."""
    u = shared.uniforms((1, 5))
    out = _batch_singlet(SINGLET_STATE, a, b, u)
    return RoundResult(int(out["alpha"][0]), int(out["beta"][0]), True, None)
