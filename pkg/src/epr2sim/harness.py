"""Monte Carlo estimation and statistical checks against the analytic targets.

Rounds are generated in fixed-size chunks. Chunk ``j`` of a run keyed
``key`` draws from ``SharedRandomness(seed, key + (j,))``, so counts depend
only on (seed, key, n) and never on how many workers share the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import core
from .boxes import STREAM_VERSION, SharedRandomness, check_seed, unit_vectors
from .core import BinaryCorrelation, BlochVector, StateParameter
from .protocols import ROUND_LAYOUT_VERSION, SINGLET_STATE, get_model, run_rounds
from .protocols import oracle_rounds

CHUNK_SIZE = 1 << 16
PARTITION_RULE = (
    f"chunks of {CHUNK_SIZE} rounds; chunk j of run key k draws from "
    f"PCG64(SeedSequence(seed, spawn_key=k+(j,))); layout v{ROUND_LAYOUT_VERSION}; {STREAM_VERSION}"
)

Z_MAX = 5.0
ABS_FLOOR = 0.005
EXACT_TOL = 1e-12
CELLS = ("pp", "pm", "mp", "mm")


@dataclass(frozen=True)
class EstimatedDistribution:
    """Outcome counts in (++, +-, -+, --) order."""

    counts: tuple[int, int, int, int]
    n: int
    nonlocal_count: int = 0

    @property
    def p_hat(self) -> np.ndarray:
        return np.array(self.counts, dtype=float) / self.n

    @property
    def stderr(self) -> np.ndarray:
        p = self.p_hat
        return np.sqrt(p * (1 - p) / self.n)

    @property
    def nonlocal_freq(self) -> float:
        return self.nonlocal_count / self.n

    @property
    def marginals(self) -> tuple[float, float, float]:
        """Estimated (m_a, m_b, corr)."""
        pp, pm, mp, mm = self.p_hat
        return (pp + pm - mp - mm, pp - pm + mp - mm, pp - pm - mp + mm)

    def merge(self, other: EstimatedDistribution) -> EstimatedDistribution:
        return EstimatedDistribution(
            tuple(x + y for x, y in zip(self.counts, other.counts)),  # type: ignore[arg-type]
            self.n + other.n,
            self.nonlocal_count + other.nonlocal_count,
        )


@dataclass(frozen=True)
class TestReport:
    target: BinaryCorrelation
    z: tuple[float, ...]
    abs_diff: tuple[float, ...]
    worst_z: float
    passed: bool

    __test__ = False  # keep pytest from collecting this


def _count(alpha: np.ndarray, beta: np.ndarray) -> tuple[int, int, int, int]:
    cell = (alpha < 0).astype(np.int64) * 2 + (beta < 0)
    return tuple(int(c) for c in np.bincount(cell, minlength=4))  # type: ignore[return-value]


def _chunk_job(args) -> EstimatedDistribution:
    model, theta, a, b, seed, key, start_chunk, n, target = args
    state = StateParameter.from_theta(theta)
    a, b = BlochVector(*a), BlochVector(*b)
    width = get_model(model).width
    total = EstimatedDistribution((0, 0, 0, 0), 0)
    chunk = start_chunk
    left = n
    while left > 0:
        size = min(CHUNK_SIZE, left)
        u = SharedRandomness(seed, key + (chunk,)).uniforms((size, width))
        if model == "oracle" and target is not None:
            out = oracle_rounds(state, a, b, u, BinaryCorrelation(*target))
        else:
            out = run_rounds(model, state, a, b, u)
        total = total.merge(
            EstimatedDistribution(_count(out["alpha"], out["beta"]), size, int(out["used_nonlocal"].sum()))
        )
        left -= size
        chunk += 1
    return total


def _resolve_state(model: str, state: Optional[StateParameter]) -> StateParameter:
    if model == "singlet" or state is None:
        return SINGLET_STATE
    return state


def estimate(
    model: str,
    state: Optional[StateParameter],
    a: BlochVector,
    b: BlochVector,
    n: int,
    seed: int = 0,
    *,
    key: Sequence[int] = (),
    workers: int = 1,
    target: Optional[BinaryCorrelation] = None,
) -> EstimatedDistribution:
    """Run ``n`` rounds and count joint outcomes.

    ``target`` replaces the distribution sampled by the ``oracle`` model.
    The singlet model always runs at theta = pi/4.
    """
    get_model(model)
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    seed = check_seed(seed)
    state = _resolve_state(model, state)
    key = tuple(int(k) for k in key)
    n_chunks = -(-n // CHUNK_SIZE)
    tgt = target.as_tuple() if target is not None else None
    jobs = []
    for j in range(n_chunks):
        size = min(CHUNK_SIZE, n - j * CHUNK_SIZE)
        jobs.append((model, state.theta, a.as_tuple(), b.as_tuple(), seed, key, j, size, tgt))
    if workers > 1 and n_chunks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_job, jobs, chunksize=max(1, n_chunks // (4 * workers))))
    else:
        parts = [_chunk_job(job) for job in jobs]
    total = parts[0]
    for part in parts[1:]:
        total = total.merge(part)
    return total


def sample(model: str, state: Optional[StateParameter], a: BlochVector, b: BlochVector,
           n: int, seed: int = 0, *, key: Sequence[int] = ()) -> dict:
    """Per-round output arrays for ``n`` rounds, chunked exactly like ``estimate``."""
    state = _resolve_state(model, state)
    width = get_model(model).width
    key = tuple(key)
    parts = []
    for j in range(-(-int(n) // CHUNK_SIZE)):
        size = min(CHUNK_SIZE, n - j * CHUNK_SIZE)
        u = SharedRandomness(seed, key + (j,)).uniforms((size, width))
        parts.append(run_rounds(model, state, a, b, u))
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def compare(est: EstimatedDistribution, target: BinaryCorrelation,
            z_max: float = Z_MAX, abs_floor: float = ABS_FLOOR) -> TestReport:
    """Per-cell z-test of the estimate against ``target`` with an absolute floor.

    A cell whose standard error is zero has z = 0 when it matches the target
    (to ``EXACT_TOL``, absorbing rounding in the analytic cell) and z = inf
    otherwise.
    """
    p = np.array(target.probabilities())
    diff = np.abs(est.p_hat - p)
    se = est.stderr
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(diff <= EXACT_TOL, 0.0, np.inf))
    ok = (z <= z_max) | (diff <= abs_floor)
    return TestReport(
        target=target,
        z=tuple(float(v) for v in z),
        abs_diff=tuple(float(v) for v in diff),
        worst_z=float(z.max()),
        passed=bool(ok.all()),
    )


def two_proportion_z(k1: int, n1: int, k2: int, n2: int) -> float:
    pooled = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    diff = abs(k1 / n1 - k2 / n2)
    if se == 0:
        return 0.0 if diff == 0 else math.inf
    return diff / se


@dataclass(frozen=True)
class NoSignalingReport:
    fixed_side: str
    pairwise_z: tuple[float, ...]
    worst_z: float
    replay_exact: Optional[bool]
    passed: bool


def _plus_count(est: EstimatedDistribution, side: str) -> int:
    pp, pm, mp, mm = est.counts
    return pp + pm if side == "A" else pp + mp


def no_signaling_test(
    model: str,
    state: Optional[StateParameter],
    fixed_side: str,
    fixed_setting: BlochVector,
    varied_settings: Sequence[BlochVector],
    n: int,
    seed: int = 0,
    *,
    z_max: float = Z_MAX,
    replay_rounds: int = 100_000,
) -> NoSignalingReport:
    """Check that the fixed party's marginal ignores the partner's setting.

    Each varied setting gets its own stream for the z-tests. With Alice
    fixed, her outcome stream is also replayed under a common seed for every
    Bob setting and must be bit-identical.
    """
    if fixed_side not in ("A", "B"):
        raise ValueError("fixed_side must be 'A' or 'B'")
    if len(varied_settings) < 2:
        raise ValueError("need at least two partner settings")

    def pair(v):
        return (fixed_setting, v) if fixed_side == "A" else (v, fixed_setting)

    ests = [estimate(model, state, *pair(v), n, seed, key=(i,)) for i, v in enumerate(varied_settings)]
    zs = []
    for i in range(len(ests)):
        for j in range(i + 1, len(ests)):
            zs.append(two_proportion_z(_plus_count(ests[i], fixed_side), ests[i].n,
                                       _plus_count(ests[j], fixed_side), ests[j].n))
    replay = None
    if fixed_side == "A":
        m = min(n, replay_rounds)
        ref = sample(model, state, *pair(varied_settings[0]), m, seed)["alpha"]
        replay = all(
            np.array_equal(ref, sample(model, state, *pair(v), m, seed)["alpha"])
            for v in varied_settings[1:]
        )
    worst = max(zs)
    return NoSignalingReport(
        fixed_side=fixed_side,
        pairwise_z=tuple(zs),
        worst_z=worst,
        replay_exact=replay,
        passed=bool(worst < z_max and replay is not False),
    )


@dataclass(frozen=True)
class ChshResult:
    s: float
    stderr: float
    correlators: tuple[float, float, float, float]
    analytic: Optional[float]


def chsh(
    model: str,
    state: Optional[StateParameter],
    settings: tuple[BlochVector, BlochVector, BlochVector, BlochVector],
    n: int,
    seed: int = 0,
    *,
    workers: int = 1,
    target: Optional[BinaryCorrelation] = None,
) -> ChshResult:
    """S = E00 + E01 + E10 - E11; ``n`` rounds in total, a quarter per pair."""
    a0, a1, b0, b1 = settings
    per = max(1, int(n) // 4)
    pairs = ((a0, b0), (a0, b1), (a1, b0), (a1, b1))
    corrs = []
    var = 0.0
    for i, (a, b) in enumerate(pairs):
        est = estimate(model, state, a, b, per, seed, key=(i,), workers=workers, target=target)
        e = est.marginals[2]
        corrs.append(e)
        var += max(0.0, 1 - e * e) / est.n
    st = _resolve_state(model, state)
    if target is not None:
        analytic = 2 * target.corr
    else:
        m = get_model(model)
        analytic = sum(
            sign * m.target(st, a, b).corr for sign, (a, b) in zip((1, 1, 1, -1), pairs)
        )
    s = corrs[0] + corrs[1] + corrs[2] - corrs[3]
    return ChshResult(s, math.sqrt(var), tuple(corrs), analytic)  # type: ignore[arg-type]


OPTIMAL_CHSH = (
    BlochVector(0, 0, 1),
    BlochVector(1, 0, 0),
    BlochVector(1 / math.sqrt(2), 0, 1 / math.sqrt(2)),
    BlochVector(-1 / math.sqrt(2), 0, 1 / math.sqrt(2)),
)

ANCHOR_PAIRS = (
    (BlochVector(0, 0, 1), BlochVector(0, 0, 1)),
    (BlochVector(1, 0, 0), BlochVector(1, 0, 0)),
    (BlochVector(0, 1, 0), BlochVector(0, 1, 0)),
    (BlochVector(0, 0, 1), BlochVector(1, 0, 0)),
    (BlochVector(0, 0, -1), BlochVector(0, 0, 1)),
    (BlochVector(0, 0, 1), BlochVector(1 / math.sqrt(2), 0, 1 / math.sqrt(2))),
)

DEFAULT_THETAS = (math.pi / 16, math.pi / 8, 3 * math.pi / 16, math.pi / 4)
SETTINGS_KEY = 2**32


def random_setting_pairs(k: int, seed: int) -> list[tuple[BlochVector, BlochVector]]:
    """``k`` rotation-invariant setting pairs from a stream reserved for settings."""
    u = SharedRandomness(seed, (SETTINGS_KEY,)).uniforms((k, 4))
    vecs = unit_vectors(u[:, [0, 2]], u[:, [1, 3]])
    return [(BlochVector(*va), BlochVector(*vb)) for va, vb in vecs]


@dataclass
class SweepRow:
    model: str
    theta: float
    a: BlochVector
    b: BlochVector
    n: int
    seed: int
    est: EstimatedDistribution
    target: BinaryCorrelation
    report: TestReport

    def as_dict(self) -> dict:
        row = {"model": self.model, "theta": self.theta}
        row.update(zip(("ax", "ay", "az"), self.a.as_tuple()))
        row.update(zip(("bx", "by", "bz"), self.b.as_tuple()))
        row.update(n=self.n, seed=self.seed)
        row.update({f"p_{c}": float(p) for c, p in zip(CELLS, self.est.p_hat)})
        row.update({f"q_{c}": float(q) for c, q in zip(CELLS, self.target.probabilities())})
        row.update(worst_z=self.report.worst_z, nonlocal_freq=self.est.nonlocal_freq,
                   **{"pass": self.report.passed})
        return row


@dataclass
class UsageCheck:
    """Pooled nonlocal-resource frequency for one (model, theta)."""

    model: str
    theta: float
    expected: float
    observed: float
    n: int
    sigmas: float
    passed: bool


@dataclass
class SweepResult:
    rows: list[SweepRow]
    usage: list[UsageCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.report.passed for r in self.rows) and all(u.passed for u in self.usage)


def usage_check(model: str, state: StateParameter, ests: Iterable[EstimatedDistribution],
                sigmas: float = 3.0) -> UsageCheck:
    """Nonlocal frequency against sin 2θ (epr2-full) or 1 (other nonlocal models)."""
    ests = list(ests)
    n = sum(e.n for e in ests)
    k = sum(e.nonlocal_count for e in ests)
    if model == "epr2-full":
        expected = state.s
    else:
        expected = 0.0 if model in ("oracle", "local") else 1.0
    observed = k / n
    sd = math.sqrt(expected * (1 - expected) / n)
    ok = abs(observed - expected) <= sigmas * sd if sd > 0 else observed == expected
    return UsageCheck(model, state.theta, expected, observed, n, sigmas, ok)


def sweep(
    thetas: Sequence[float],
    settings: Sequence[tuple[BlochVector, BlochVector]],
    n: int,
    seed: int = 0,
    *,
    models: Sequence[str] = ("preliminary", "epr2-full"),
    z_max: float = Z_MAX,
    abs_floor: float = ABS_FLOOR,
    workers: int = 1,
    progress=None,
) -> SweepResult:
    """One row per (model, theta, a, b); row ``i`` runs on stream key ``(i,)``."""
    if not settings:
        raise ValueError("sweep needs at least one setting pair")
    if not thetas:
        raise ValueError("sweep needs at least one theta")
    for m in models:
        get_model(m)
    rows: list[SweepRow] = []
    usage: list[UsageCheck] = []
    index = 0
    for model in models:
        for theta in thetas:
            state = StateParameter.from_theta(theta)
            per_theta = []
            for a, b in settings:
                est = estimate(model, state, a, b, n, seed, key=(index,), workers=workers)
                target = get_model(model).target(_resolve_state(model, state), a, b)
                report = compare(est, target, z_max, abs_floor)
                rows.append(SweepRow(model, state.theta, a, b, n, seed, est, target, report))
                per_theta.append(est)
                index += 1
                if progress is not None:
                    progress(rows[-1])
            usage.append(usage_check(model, state, per_theta))
    return SweepResult(rows, usage)


def default_settings(k: int, seed: int) -> list[tuple[BlochVector, BlochVector]]:
    return list(ANCHOR_PAIRS) + random_setting_pairs(k, seed)


def analytic_chsh(state: StateParameter, settings=OPTIMAL_CHSH) -> float:
    a0, a1, b0, b1 = settings
    q = core.quantum_correlation
    return q(state, a0, b0).corr + q(state, a0, b1).corr + q(state, a1, b0).corr - q(state, a1, b1).corr
