"""Best-of-n problem instances and their classification.

An instance holds ``n`` options, each described by a quality in (0, 1]
(normalized so that the best quality is exactly 1) and a cost, the mean
time an agent spends exploring the option. Option identifiers are the
integers ``1..n``; arrays are stored positionally.
"""

from __future__ import annotations

import bisect
import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .errors import (
    MissingInteraction,
    NonPositiveCost,
    NotNormalized,
    QualityOutOfRange,
    TooFewOptions,
)

DEFAULT_EPSILON = 1e-9


class Interaction(enum.Enum):
    SYNERGISTIC = "synergistic"
    ANTAGONISTIC = "antagonistic"
    NOT_APPLICABLE = "na"


class Variant(enum.Enum):
    SYMMETRY_BREAKING = "symmetry_breaking"
    COST_ASYMMETRIC = "cost_asymmetric"
    QUALITY_ASYMMETRIC = "quality_asymmetric"
    SYNERGISTIC = "synergistic"
    ANTAGONISTIC = "antagonistic"


@dataclass(frozen=True)
class OptionProfile:
    quality: float
    cost: float


@dataclass(frozen=True)
class ProblemInstance:
    """A best-of-n problem.

    ``quality_schedule`` is an optional, time-sorted tuple of
    ``(time, qualities)`` pairs; from each listed time onwards the agents
    sample the scheduled qualities instead of the static ones. Analytical
    models ignore it.

    ``quality_sampler`` optionally replaces the Gaussian quality
    measurement with a scenario-specific one; it is called as
    ``sampler(option, rng, q_min)`` with a 1-based option id.
    """

    quality: tuple[float, ...]
    cost: tuple[float, ...]
    interaction: Interaction = Interaction.NOT_APPLICABLE
    quality_schedule: Optional[tuple[tuple[float, tuple[float, ...]], ...]] = None
    quality_sampler: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "quality", tuple(float(q) for q in self.quality))
        object.__setattr__(self, "cost", tuple(float(c) for c in self.cost))
        if not isinstance(self.interaction, Interaction):
            object.__setattr__(self, "interaction", Interaction(self.interaction))
        if self.quality_schedule is not None:
            sched = tuple(
                (float(t), tuple(float(q) for q in qs))
                for t, qs in sorted(self.quality_schedule, key=lambda item: item[0])
            )
            object.__setattr__(self, "quality_schedule", sched)

    @property
    def n(self) -> int:
        return len(self.quality)

    @property
    def options(self) -> list[OptionProfile]:
        return [OptionProfile(q, c) for q, c in zip(self.quality, self.cost)]

    def quality_at(self, t: float) -> tuple[float, ...]:
        """Quality vector in force at time ``t``."""
        if not self.quality_schedule:
            return self.quality
        times = [s[0] for s in self.quality_schedule]
        k = bisect.bisect_right(times, t)
        if k == 0:
            return self.quality
        return self.quality_schedule[k - 1][1]

    def replace(self, **changes) -> "ProblemInstance":
        fields = dict(
            quality=self.quality,
            cost=self.cost,
            interaction=self.interaction,
            quality_schedule=self.quality_schedule,
            quality_sampler=self.quality_sampler,
        )
        fields.update(changes)
        return ProblemInstance(**fields)

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "quality": list(self.quality),
            "cost": list(self.cost),
            "interaction": self.interaction.value,
        }
        if self.quality_schedule:
            d["qualitySchedule"] = [[t, list(qs)] for t, qs in self.quality_schedule]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemInstance":
        inst = cls(
            quality=d["quality"],
            cost=d["cost"],
            interaction=Interaction(d.get("interaction", "na")),
            quality_schedule=d.get("qualitySchedule"),
        )
        validate(inst)
        if "n" in d and int(d["n"]) != inst.n:
            raise ValueError(f"declared n={d['n']} does not match {inst.n} options")
        return inst

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ProblemInstance":
        return cls.from_dict(json.loads(text))


def make_instance(quality: Sequence[float], cost: Sequence[float],
                  interaction=Interaction.NOT_APPLICABLE, **kw) -> ProblemInstance:
    """Build an instance, dividing qualities by their maximum, and validate it."""
    top = max(quality)
    if top <= 0:
        raise QualityOutOfRange("at least one quality must be positive")
    inst = ProblemInstance(tuple(q / top for q in quality), tuple(cost),
                           Interaction(interaction), **kw)
    validate(inst)
    return inst


def validate(instance: ProblemInstance) -> None:
    """Raise the error for the first violated instance invariant."""
    if instance.n < 2:
        raise TooFewOptions(f"need at least 2 options, got {instance.n}")
    if len(instance.cost) != instance.n:
        raise ValueError("quality and cost vectors differ in length")
    for i, c in enumerate(instance.cost, start=1):
        if not c > 0:
            raise NonPositiveCost(f"option {i} has cost {c}")
    for i, q in enumerate(instance.quality, start=1):
        if not 0 < q <= 1:
            raise QualityOutOfRange(f"option {i} has quality {q}")
    if abs(max(instance.quality) - 1.0) > DEFAULT_EPSILON:
        raise NotNormalized(f"max quality is {max(instance.quality)}, expected 1")
    for t, qs in instance.quality_schedule or ():
        if len(qs) != instance.n:
            raise ValueError(f"quality schedule entry at t={t} has wrong length")
        if any(not 0 < q <= 1 for q in qs):
            raise QualityOutOfRange(f"quality schedule entry at t={t} leaves (0, 1]")


def _symmetric(values, epsilon) -> bool:
    return max(values) - min(values) <= epsilon


def classify_variant(instance: ProblemInstance, epsilon: float = DEFAULT_EPSILON) -> Variant:
    q_sym = _symmetric(instance.quality, epsilon)
    c_sym = _symmetric(instance.cost, epsilon)
    if q_sym and c_sym:
        return Variant.SYMMETRY_BREAKING
    if q_sym:
        return Variant.COST_ASYMMETRIC
    if c_sym:
        return Variant.QUALITY_ASYMMETRIC
    if instance.interaction is Interaction.SYNERGISTIC:
        return Variant.SYNERGISTIC
    if instance.interaction is Interaction.ANTAGONISTIC:
        return Variant.ANTAGONISTIC
    raise MissingInteraction(
        "quality and cost both differ across options; declare an interaction"
    )


def pareto_front(quality, cost, epsilon: float = DEFAULT_EPSILON) -> set[int]:
    """Options not dominated under (maximize quality, minimize cost)."""
    front = set()
    for i in range(len(quality)):
        dominated = any(
            quality[j] >= quality[i] - epsilon
            and cost[j] <= cost[i] + epsilon
            and (quality[j] > quality[i] + epsilon or cost[j] < cost[i] - epsilon)
            for j in range(len(quality))
        )
        if not dominated:
            front.add(i + 1)
    return front


def best_options(instance: ProblemInstance, epsilon: float = DEFAULT_EPSILON) -> set[int]:
    """Option ids that count as a correct collective decision."""
    variant = classify_variant(instance, epsilon)
    q, c = instance.quality, instance.cost
    if variant is Variant.SYMMETRY_BREAKING:
        return set(range(1, instance.n + 1))
    if variant is Variant.COST_ASYMMETRIC:
        lo = min(c)
        return {i + 1 for i, ci in enumerate(c) if ci <= lo + epsilon}
    if variant is Variant.QUALITY_ASYMMETRIC:
        hi = max(q)
        return {i + 1 for i, qi in enumerate(q) if qi >= hi - epsilon}
    # When the declared synergy holds, the non-dominated set is exactly the
    # options of maximum quality and minimum cost.
    return pareto_front(q, c, epsilon)
