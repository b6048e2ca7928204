"""Per-agent exploration/dissemination state machine and decision rules.

An agent alternates between exploring the option it currently favours
and disseminating that opinion. Exploration lasts an exponential time
whose mean is the option's cost; dissemination lasts an exponential time
whose mean is ``g`` times the agent's quality estimate. At the end of a
dissemination period the agent applies a decision rule to the opinions
it most recently heard and starts exploring the outcome.
"""

from __future__ import annotations

import enum
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DegenerateQuality, PhaseNotExpired
from .problem import ProblemInstance

DEFAULT_Q_MIN = 0.01
DEFAULT_BUFFER = 3


class PhaseKind(enum.IntEnum):
    EXPLORATION = 0
    DISSEMINATION = 1


class OpinionBuffer:
    """Most recent neighbour opinions, oldest first, at most ``capacity`` long."""

    __slots__ = ("capacity", "entries")

    def __init__(self, capacity: int = DEFAULT_BUFFER, entries: Iterable[int] = ()):
        if capacity < 1:
            raise ValueError("buffer capacity must be at least 1")
        self.capacity = capacity
        self.entries = deque(entries, maxlen=capacity)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    def __repr__(self):
        return f"OpinionBuffer({self.capacity}, {list(self.entries)})"

    def clear(self):
        self.entries.clear()


def record_neighbor_opinion(buffer: OpinionBuffer, opinion: int) -> OpinionBuffer:
    buffer.entries.append(opinion)
    return buffer


@dataclass(frozen=True)
class DecisionRule:
    """``kind`` is ``"voter"`` or ``"majority"``.

    Majority ties always keep the agent's own opinion.
    """

    kind: str = "voter"
    include_self: bool = True

    def __post_init__(self):
        if self.kind not in ("voter", "majority"):
            raise ValueError(f"unknown decision rule {self.kind!r}")

    @classmethod
    def voter(cls) -> "DecisionRule":
        return cls("voter")

    @classmethod
    def majority(cls, include_self: bool = True) -> "DecisionRule":
        return cls("majority", include_self)

    def __str__(self):
        if self.kind == "voter":
            return "voter"
        return f"majority(include_self={self.include_self})"


@dataclass(slots=True)
class StrategyParams:
    g: float = 10.0
    sigma: float = 0.0
    q_min: float = DEFAULT_Q_MIN


@dataclass(slots=True)
class AgentState:
    id: int
    phase: PhaseKind
    option: int
    phase_ends_at: float
    quality_estimate: float = 1.0
    buffer: OpinionBuffer = field(default_factory=OpinionBuffer)


def sample_exploration_duration(option: int, instance: ProblemInstance, rng) -> float:
    """Exponential draw with mean equal to the option's cost (inverse CDF)."""
    return -instance.cost[option - 1] * math.log(rng.uniform())


def sample_dissemination_duration(quality_estimate: float, g: float, rng) -> float:
    """Exponential draw with mean ``g * quality_estimate``."""
    if not quality_estimate > 0:
        raise DegenerateQuality(f"quality estimate {quality_estimate} must be positive")
    return -g * quality_estimate * math.log(rng.uniform())


def measure_quality(option: int, instance: ProblemInstance, sigma: float, rng,
                    q_min: float = DEFAULT_Q_MIN, now: float = 0.0) -> float:
    """Noisy quality sample clamped to ``[q_min, 1]``.

    Instances carrying a ``quality_sampler`` use it instead of Gaussian noise.
    """
    if instance.quality_sampler is not None:
        return instance.quality_sampler(option, rng, q_min)
    if instance.quality_schedule:
        q = instance.quality_at(now)[option - 1]
    else:
        q = instance.quality[option - 1]
    if sigma > 0:
        q += sigma * rng.normal()
    return min(1.0, max(q_min, q))


def apply_voter(own: int, buffer: Sequence[int], rng) -> int:
    if not len(buffer):
        return own
    return buffer[rng.randbelow(len(buffer))]


def apply_majority(own: int, buffer: Iterable[int], include_self: bool = True) -> int:
    counts = Counter(buffer)
    if not counts:
        return own
    if include_self:
        counts[own] += 1
    ranked = counts.most_common(2)
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return own
    return ranked[0][0]


def apply_rule(rule: DecisionRule, own: int, buffer, rng) -> int:
    if rule.kind == "voter":
        return apply_voter(own, buffer, rng)
    return apply_majority(own, buffer, rule.include_self)


def step_agent(agent: AgentState, now: float, rule: DecisionRule,
               instance: ProblemInstance, params: StrategyParams, rng) -> AgentState:
    """Advance an agent whose current phase has expired.

    The agent is updated in place and returned. Exploration always leads
    to dissemination of the same option; dissemination ends with a
    decision, a cleared buffer and a fresh exploration (possibly of the
    same option).
    """
    if now < agent.phase_ends_at:
        raise PhaseNotExpired(
            f"agent {agent.id} phase ends at {agent.phase_ends_at}, now is {now}"
        )
    if agent.phase is PhaseKind.EXPLORATION:
        q_hat = measure_quality(agent.option, instance, params.sigma, rng,
                                params.q_min, now)
        agent.quality_estimate = q_hat
        agent.phase = PhaseKind.DISSEMINATION
        agent.phase_ends_at = now + sample_dissemination_duration(q_hat, params.g, rng)
    else:
        entries = agent.buffer.entries
        new = apply_rule(rule, agent.option, entries, rng)
        entries.clear()
        agent.option = new
        agent.phase = PhaseKind.EXPLORATION
        agent.phase_ends_at = now + sample_exploration_duration(new, instance, rng)
    return agent
