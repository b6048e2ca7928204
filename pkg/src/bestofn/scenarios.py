"""Builders for the shortest-path, site-selection and collective-perception scenarios."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import InvalidInstance, ZeroFraction
from .problem import Interaction, ProblemInstance, validate


_KEYS = {
    "shortest_path": ("type", "lengths", "baseTime"),
    "site_selection": ("type", "areas", "discoveryBase"),
    "collective_perception": ("type", "featureFractions", "sampleSize", "cost"),
}


def _positive(values, name):
    values = tuple(float(v) for v in values)
    if len(values) < 1 or any(not v > 0 for v in values):
        raise InvalidInstance(f"all {name} must be positive, got {values}")
    return values


def _interaction_for(quality, cost, declared):
    if max(quality) - min(quality) <= 1e-9 or max(cost) - min(cost) <= 1e-9:
        return Interaction.NOT_APPLICABLE
    return declared


@dataclass(frozen=True)
class PathScenario:
    lengths: tuple[float, ...]
    base_time: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lengths", _positive(self.lengths, "lengths"))


@dataclass(frozen=True)
class SiteScenario:
    areas: tuple[float, ...]
    discovery_base: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "areas", _positive(self.areas, "areas"))


@dataclass(frozen=True)
class PerceptionScenario:
    feature_fractions: tuple[float, ...]
    sample_size: int = 10
    cost: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        fr = tuple(float(f) for f in self.feature_fractions)
        if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise InvalidInstance(f"feature fractions must be >= 0 and sum to 1, got {fr}")
        if self.sample_size < 1:
            raise InvalidInstance("sample size must be at least 1")
        object.__setattr__(self, "feature_fractions", fr)
        if self.cost is not None:
            object.__setattr__(self, "cost", tuple(float(c) for c in self.cost))


def build_shortest_path(s: PathScenario) -> ProblemInstance:
    shortest = min(s.lengths)
    inst = ProblemInstance(
        quality=(1.0,) * len(s.lengths),
        cost=tuple(s.base_time * length / shortest for length in s.lengths),
    )
    validate(inst)
    return inst


def build_site_selection(s: SiteScenario) -> ProblemInstance:
    """Quality grows with site area; larger sites are also quicker to discover."""
    largest = max(s.areas)
    quality = tuple(a / largest for a in s.areas)
    cost = tuple(s.discovery_base * largest / a for a in s.areas)
    inst = ProblemInstance(quality, cost,
                           _interaction_for(quality, cost, Interaction.SYNERGISTIC))
    validate(inst)
    return inst


class PerceptionSampler:
    """Estimate of a feature's normalized abundance from ``m`` inspected cells."""

    def __init__(self, scenario: PerceptionScenario):
        self.scenario = scenario
        self.max_fraction = max(scenario.feature_fractions)

    def __call__(self, option: int, rng, q_min: float) -> float:
        return perception_quality_sampler(self.scenario, option, rng, q_min,
                                          self.max_fraction)


def perception_quality_sampler(s: PerceptionScenario, option: int, rng,
                               q_min: float = 0.01, max_fraction=None) -> float:
    if max_fraction is None:
        max_fraction = max(s.feature_fractions)
    k = rng.binomial(s.sample_size, s.feature_fractions[option - 1])
    return min(1.0, max(q_min, (k / s.sample_size) / max_fraction))


def build_collective_perception(s: PerceptionScenario) -> ProblemInstance:
    fr = s.feature_fractions
    if any(f == 0 for f in fr):
        raise ZeroFraction(f"feature fractions {fr} include an unobservable feature")
    top = max(fr)
    quality = tuple(f / top for f in fr)
    cost = s.cost if s.cost is not None else (1.0,) * len(fr)
    if len(cost) != len(fr):
        raise InvalidInstance("cost vector length differs from the number of features")
    # A manual cost vector can make both axes asymmetric; abundance and
    # effort then pull in opposite directions unless the user says otherwise.
    inst = ProblemInstance(quality, cost,
                           _interaction_for(quality, cost, Interaction.ANTAGONISTIC),
                           quality_sampler=PerceptionSampler(s))
    validate(inst)
    return inst


def scenario_from_dict(d: dict):
    kind = d.get("type")
    if kind in _KEYS:
        extra = sorted(set(d) - set(_KEYS[kind]))
        if extra:
            raise ValueError(f"unknown {kind} scenario keys: {', '.join(extra)}")
    if kind == "shortest_path":
        return PathScenario(tuple(d["lengths"]), float(d.get("baseTime", 1.0)))
    if kind == "site_selection":
        return SiteScenario(tuple(d["areas"]), float(d.get("discoveryBase", 1.0)))
    if kind == "collective_perception":
        cost = d.get("cost")
        return PerceptionScenario(tuple(d["featureFractions"]),
                                  int(d.get("sampleSize", 10)),
                                  tuple(cost) if cost is not None else None)
    raise ValueError(f"unknown scenario type {kind!r}")


def build(scenario) -> ProblemInstance:
    if isinstance(scenario, PathScenario):
        return build_shortest_path(scenario)
    if isinstance(scenario, SiteScenario):
        return build_site_selection(scenario)
    if isinstance(scenario, PerceptionScenario):
        return build_collective_perception(scenario)
    raise TypeError(f"not a scenario: {scenario!r}")


def load_scenario(path) -> ProblemInstance:
    return build(scenario_from_dict(json.loads(Path(path).read_text())))
