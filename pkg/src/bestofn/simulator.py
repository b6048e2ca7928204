"""Event-driven, well-mixed simulation of a swarm running the decision FSM.

Every agent has exactly one pending event, the expiry of its current
phase, kept in a binary heap. When a disseminating agent's phase
expires it hears the opinions of up to ``G`` other agents that are
disseminating at that moment, chosen uniformly at random, and then
applies its decision rule.
"""

from __future__ import annotations

import heapq
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .problem import ProblemInstance, validate
from .rng import RandomStream
from .strategy import (
    DEFAULT_BUFFER,
    DEFAULT_Q_MIN,
    AgentState,
    DecisionRule,
    OpinionBuffer,
    PhaseKind,
    StrategyParams,
    measure_quality,
    sample_dissemination_duration,
    sample_exploration_duration,
    step_agent,
)

INITIAL_PHASES = ("exploration", "dissemination", "stationary")
ENGINES = ("auto", "python", "compiled")


@dataclass(frozen=True)
class SwarmConfig:
    """Swarm and run parameters.

    ``initial_opinions`` holds one fraction per option (``None`` means an
    even split). ``initial_phase`` chooses where agents start:
    ``"exploration"``, ``"dissemination"``, or ``"stationary"`` (each agent
    independently disseminating with probability ``g*q / (c + g*q)`` of its
    option). ``sample_dt`` controls trajectory sampling: ``None`` keeps only
    the first and last snapshot, ``0`` records every event.

    ``engine`` picks the event loop: ``"python"`` is the reference
    implementation built on ``strategy.step_agent``; ``"compiled"`` is a
    numba transcription of it that gives bit-identical records;
    ``"auto"`` uses the compiled loop whenever the instance has no quality
    sampler or schedule.
    """

    N: int = 100
    g: float = 10.0
    G: int = DEFAULT_BUFFER
    sigma: float = 0.0
    q_min: float = DEFAULT_Q_MIN
    rule: DecisionRule = field(default_factory=DecisionRule.voter)
    initial_opinions: Optional[tuple[float, ...]] = None
    tau: float = 1.0
    max_time: float = 1e5
    seed: int = 0
    with_replacement: bool = False
    initial_phase: str = "exploration"
    sample_dt: Optional[float] = None
    engine: str = "auto"

    def __post_init__(self):
        if self.initial_opinions is not None:
            object.__setattr__(self, "initial_opinions",
                               tuple(float(f) for f in self.initial_opinions))
        if int(self.N) != self.N or self.N < 2:
            raise ValidationError("N", "must be an integer >= 2")
        if not self.g > 0:
            raise ValidationError("g", "must be positive")
        if int(self.G) != self.G or self.G < 1:
            raise ValidationError("G", "must be an integer >= 1")
        if not self.sigma >= 0:
            raise ValidationError("sigma", "must be non-negative")
        if not 0 < self.q_min < 1:
            raise ValidationError("q_min", "must lie in (0, 1)")
        if not 0.5 < self.tau <= 1:
            raise ValidationError("tau", "must lie in (0.5, 1]")
        if not self.max_time > 0:
            raise ValidationError("max_time", "must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed", "must be an unsigned 64-bit integer")
        if self.initial_phase not in INITIAL_PHASES:
            raise ValidationError("initial_phase", f"must be one of {INITIAL_PHASES}")
        if self.engine not in ENGINES:
            raise ValidationError("engine", f"must be one of {ENGINES}")
        if self.sample_dt is not None and self.sample_dt < 0:
            raise ValidationError("sample_dt", "must be non-negative")
        fr = self.initial_opinions
        if fr is not None and (any(f < 0 for f in fr) or abs(sum(fr) - 1) > 1e-9):
            raise ValidationError("initial_opinions", "fractions must be >= 0 and sum to 1")

    @property
    def params(self) -> StrategyParams:
        return StrategyParams(self.g, self.sigma, self.q_min)

    def opinion_fractions(self, n: int) -> tuple[float, ...]:
        if self.initial_opinions is None:
            return (1.0 / n,) * n
        if len(self.initial_opinions) != n:
            raise ValidationError("initial_opinions", f"expected {n} fractions")
        return self.initial_opinions


@dataclass
class RunRecord:
    """Outcome of one run.

    ``trajectory`` has columns ``time, E_1..E_n, D_1..D_n``.
    ``decision_time`` is NaN when no decision was reached.
    """

    seed: int
    decided: bool
    winner: Optional[int]
    decision_time: float
    trajectory: np.ndarray
    events: int = 0


@dataclass
class BatchMetrics:
    repetitions: int
    decided: int
    wins: np.ndarray
    exit_probability: np.ndarray
    exit_se: np.ndarray
    mean_time: float
    var_time: float
    se_time: float
    non_decision_rate: float
    records: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        def clean(x):
            x = float(x)
            return None if math.isnan(x) else x

        return {
            "repetitions": self.repetitions,
            "decided": self.decided,
            "wins": [int(w) for w in self.wins],
            "exit_probability": [clean(p) for p in self.exit_probability],
            "exit_probability_se": [clean(s) for s in self.exit_se],
            "mean_decision_time": clean(self.mean_time),
            "var_decision_time": clean(self.var_time),
            "mean_decision_time_se": clean(self.se_time),
            "non_decision_rate": self.non_decision_rate,
        }


def decision_threshold(tau: float, N: int) -> int:
    """Smallest head count that makes up a ``tau`` majority of ``N``."""
    return math.ceil(round(tau * N, 9))


def detect_consensus(counts: Sequence[int], tau: float, N: int) -> Optional[int]:
    """Option id holding at least ``ceil(tau*N)`` agents, if any."""
    threshold = decision_threshold(tau, N)
    for i, k in enumerate(counts):
        if k >= threshold:
            return i + 1
    return None


def allocate_counts(fractions: Sequence[float], N: int) -> list[int]:
    """Split ``N`` agents by largest remainder; ties go to the lower option."""
    raw = [f * N for f in fractions]
    counts = [math.floor(r + 1e-9) for r in raw]
    rest = N - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts


def stationary_dissemination_share(instance: ProblemInstance, g: float, q_min: float):
    """Long-run probability that an agent of each opinion is disseminating."""
    q = [min(1.0, max(q_min, qi)) for qi in instance.quality]
    return [g * qi / (ci + g * qi) for qi, ci in zip(q, instance.cost)]


def _initial_agents(config: SwarmConfig, instance: ProblemInstance, rng):
    n = instance.n
    N = config.N
    G = config.G
    ndis = [0] * n
    nexp = [0] * n
    opinions = [0] * n
    agents: list[AgentState] = []
    share = stationary_dissemination_share(instance, config.g, config.q_min)
    a = 0
    for i, k in enumerate(allocate_counts(config.opinion_fractions(n), N)):
        option = i + 1
        for _ in range(k):
            if config.initial_phase == "stationary":
                phase = (PhaseKind.DISSEMINATION if rng.random() < share[i]
                         else PhaseKind.EXPLORATION)
            elif config.initial_phase == "dissemination":
                phase = PhaseKind.DISSEMINATION
            else:
                phase = PhaseKind.EXPLORATION
            agent = AgentState(a, phase, option, 0.0, buffer=OpinionBuffer(G))
            if phase is PhaseKind.EXPLORATION:
                agent.phase_ends_at = sample_exploration_duration(option, instance, rng)
                nexp[i] += 1
            else:
                agent.quality_estimate = measure_quality(
                    option, instance, config.sigma, rng, config.q_min, 0.0)
                agent.phase_ends_at = sample_dissemination_duration(
                    agent.quality_estimate, config.g, rng)
                ndis[i] += 1
            opinions[i] += 1
            agents.append(agent)
            a += 1
    return agents, nexp, ndis, opinions


def run(config: SwarmConfig, instance: ProblemInstance) -> RunRecord:
    """Simulate one run until a decision or ``config.max_time``."""
    validate(instance)
    if config.engine == "python":
        return _run_python(config, instance)
    plain = instance.quality_sampler is None and not instance.quality_schedule
    if config.engine == "compiled" and not plain:
        raise ValidationError("engine", "the compiled engine does not support quality "
                                        "samplers or schedules")
    if plain and _compiled_available():
        return _run_compiled(config, instance)
    if config.engine == "compiled":
        raise ValidationError("engine", "numba is not installed")
    return _run_python(config, instance)


def _run_python(config: SwarmConfig, instance: ProblemInstance) -> RunRecord:
    n = instance.n
    N = config.N
    G = config.G
    rule = config.rule
    params = config.params
    rng = RandomStream(config.seed)
    threshold = decision_threshold(config.tau, N)
    agents, nexp, ndis, opinions = _initial_agents(config, instance, rng)

    # Disseminating agents, with O(1) removal through a position index.
    dis = [ag.id for ag in agents if ag.phase is PhaseKind.DISSEMINATION]
    pos = [-1] * N
    for k, aid in enumerate(dis):
        pos[aid] = k
    heap = [(ag.phase_ends_at, ag.id) for ag in agents]
    heapq.heapify(heap)

    sample_dt = config.sample_dt
    rows = []

    def snapshot(t):
        rows.append([t, *nexp, *ndis])

    snapshot(0.0)
    next_sample = sample_dt if sample_dt else math.inf

    winner = next((i + 1 for i in range(n) if opinions[i] >= threshold), None)
    now = 0.0
    events = 0
    max_time = config.max_time
    with_replacement = config.with_replacement
    randbelow = rng.randbelow
    distinct_below = rng.distinct_below
    heapreplace = heapq.heapreplace
    DISSEMINATION = PhaseKind.DISSEMINATION
    while winner is None:
        t, aid = heap[0]
        if t > max_time:
            break
        while next_sample <= t:
            snapshot(next_sample)
            next_sample += sample_dt
        now = t
        agent = agents[aid]
        old = agent.option - 1
        if agent.phase is DISSEMINATION:
            others = len(dis) - 1
            p = pos[aid]
            if others > 0:
                buf = agent.buffer.entries
                if with_replacement:
                    for _ in range(G):
                        r = randbelow(others)
                        buf.append(agents[dis[r + (r >= p)]].option)
                else:
                    for r in distinct_below(others, G):
                        buf.append(agents[dis[r + (r >= p)]].option)
            last = dis.pop()
            if last != aid:
                dis[p] = last
                pos[last] = p
            pos[aid] = -1
            step_agent(agent, t, rule, instance, params, rng)
            new = agent.option - 1
            ndis[old] -= 1
            nexp[new] += 1
            if new != old:
                opinions[old] -= 1
                opinions[new] += 1
                if opinions[new] >= threshold:
                    winner = new + 1
        else:
            step_agent(agent, t, rule, instance, params, rng)
            pos[aid] = len(dis)
            dis.append(aid)
            nexp[old] -= 1
            ndis[old] += 1
        heapreplace(heap, (agent.phase_ends_at, aid))
        events += 1
        if sample_dt == 0:
            snapshot(t)

    decided = winner is not None
    end = now if decided else config.max_time
    if not decided:
        while next_sample <= end:
            snapshot(next_sample)
            next_sample += sample_dt
    if rows[-1][0] != end or rows[-1][1:] != [*nexp, *ndis]:
        snapshot(end)
    return RunRecord(
        seed=config.seed,
        decided=decided,
        winner=winner,
        decision_time=end if decided else math.nan,
        trajectory=np.asarray(rows, dtype=float),
        events=events,
    )


def _compiled_available() -> bool:
    try:
        from . import _engine  # noqa: F401
    except ImportError:
        return False
    return True


def _run_compiled(config: SwarmConfig, instance: ProblemInstance) -> RunRecord:
    from . import _engine as eng

    n = instance.n
    N = config.N
    rng = RandomStream(config.seed)
    threshold = decision_threshold(config.tau, N)
    agents, nexp, ndis, opinions = _initial_agents(config, instance, rng)

    phase = np.array([int(ag.phase is PhaseKind.DISSEMINATION) for ag in agents], dtype=np.int64)
    option = np.array([ag.option - 1 for ag in agents], dtype=np.int64)
    ends = np.array([ag.phase_ends_at for ag in agents])
    heap = [(ag.phase_ends_at, ag.id) for ag in agents]
    heapq.heapify(heap)
    ht = np.array([h[0] for h in heap])
    hi = np.array([h[1] for h in heap], dtype=np.int64)
    dis = np.zeros(N, dtype=np.int64)
    pos = np.full(N, -1, dtype=np.int64)
    nd = 0
    for ag in agents:
        if ag.phase is PhaseKind.DISSEMINATION:
            dis[nd] = ag.id
            pos[ag.id] = nd
            nd += 1
    nexp = np.array(nexp, dtype=np.int64)
    ndis = np.array(ndis, dtype=np.int64)
    opinions = np.array(opinions, dtype=np.int64)

    sample_dt = config.sample_dt
    every_event = sample_dt == 0
    rows = np.empty((1024 if sample_dt is not None else 4, 1 + 2 * n))
    rows[0] = [0.0, *nexp, *ndis]
    winner = next((i + 1 for i in range(n) if opinions[i] >= threshold), 0)
    ist = np.array([winner, 0, 0, 0, 1, nd], dtype=np.int64)
    fst = np.array([0.0, sample_dt if sample_dt else math.inf])

    chunk = 4096
    U = rng.take_uniforms(chunk)
    Z = rng.take_normals(chunk) if config.sigma > 0 else np.empty(0)
    cost = np.array(instance.cost, dtype=float)
    quality = np.array(instance.quality, dtype=float)
    rule = config.rule
    while True:
        status = eng.advance(
            phase, option, ends, ht, hi, dis, pos, nexp, ndis, opinions,
            cost, quality, U, Z, rows, ist, fst,
            config.G, float(config.g), float(config.sigma), float(config.q_min), threshold,
            float(config.max_time), config.with_replacement, rule.kind == "majority",
            rule.include_self, every_event, float(sample_dt or 0.0))
        if status == eng.DONE:
            break
        chunk = min(2 * chunk, 1 << 20)
        if status == eng.NEED_UNIFORMS:
            U = np.concatenate([U[ist[eng.I_UPOS]:], rng.take_uniforms(chunk)])
            ist[eng.I_UPOS] = 0
        elif status == eng.NEED_NORMALS:
            Z = np.concatenate([Z[ist[eng.I_ZPOS]:], rng.take_normals(chunk)])
            ist[eng.I_ZPOS] = 0
        else:
            rows = np.concatenate([rows, np.empty_like(rows)])

    traj = [list(r) for r in rows[:ist[eng.I_ROWS]]]
    winner = int(ist[eng.I_WINNER]) or None
    decided = winner is not None
    end = float(fst[eng.F_NOW]) if decided else config.max_time
    counts = [*nexp.tolist(), *ndis.tolist()]
    next_sample = float(fst[eng.F_NEXT])
    if not decided:
        while next_sample <= end:
            traj.append([next_sample, *counts])
            next_sample += sample_dt
    if traj[-1][0] != end or traj[-1][1:] != counts:
        traj.append([end, *counts])
    return RunRecord(
        seed=config.seed,
        decided=decided,
        winner=winner,
        decision_time=end if decided else math.nan,
        trajectory=np.asarray(traj, dtype=float),
        events=int(ist[eng.I_EVENTS]),
    )


def resample_trajectory(trajectory: np.ndarray, times) -> np.ndarray:
    """Counts in force at each of ``times`` (piecewise-constant, last value held).

    Runs stop at their decision, so times past the end repeat the final
    snapshot, which is the absorbed state when ``tau == 1``.
    """
    idx = np.searchsorted(trajectory[:, 0], np.asarray(times), side="right") - 1
    return trajectory[np.clip(idx, 0, None), 1:]


def summarize(records: list[RunRecord], n: int) -> BatchMetrics:
    R = len(records)
    done = [r for r in records if r.decided]
    wins = np.zeros(n, dtype=int)
    for r in done:
        wins[r.winner - 1] += 1
    D = len(done)
    if D:
        p = wins / D
        se = np.sqrt(p * (1 - p) / D)
        times = np.array([r.decision_time for r in done])
        mean = float(times.mean())
        var = float(times.var(ddof=1)) if D > 1 else 0.0
        se_t = math.sqrt(var / D)
    else:
        p = np.full(n, np.nan)
        se = np.full(n, np.nan)
        mean = var = se_t = math.nan
    return BatchMetrics(R, D, wins, p, se, mean, var, se_t, (R - D) / R, records)


def _run_seeds(args):
    config, instance, seeds, runner = args
    return [runner(replace(config, seed=s), instance) for s in seeds]


def batch(config: SwarmConfig, instance: ProblemInstance, repetitions: int,
          seed_base: Optional[int] = None, workers: int = 1, runner=None) -> BatchMetrics:
    """Run ``repetitions`` independent runs with seeds ``seed_base + r``.

    ``runner`` defaults to :func:`run`; any callable with the same
    signature (e.g. ``meanfield.ssa_run_config``) may be passed.
    """
    if repetitions < 1:
        raise ValidationError("repetitions", "must be at least 1")
    runner = runner or run
    base = config.seed if seed_base is None else seed_base
    seeds = [base + r for r in range(repetitions)]
    if workers > 1:
        chunks = [seeds[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_seeds,
                                  [(config, instance, c, runner) for c in chunks]))
        by_seed = {rec.seed: rec for part in parts for rec in part}
        records = [by_seed[s] for s in seeds]
    else:
        records = _run_seeds((config, instance, seeds, runner))
    return summarize(records, instance.n)
