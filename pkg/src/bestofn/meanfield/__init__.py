"""Predictive models of the swarm: mean-field ODE and finite-N Markov chain."""

from .ctmc import (
    AbsorptionResult,
    decision_weights,
    exact_absorption,
    initial_distribution,
    ssa_ensemble,
    ssa_run,
    ssa_runner,
    state_space_size,
    transitions,
)
from .ode import initial_state, integrate, ode_rhs, opinion_fractions
from .rules import decision_outcome_distribution, outcome_matrix

__all__ = [
    "AbsorptionResult",
    "decision_outcome_distribution",
    "decision_weights",
    "exact_absorption",
    "initial_distribution",
    "initial_state",
    "integrate",
    "ode_rhs",
    "opinion_fractions",
    "outcome_matrix",
    "ssa_ensemble",
    "ssa_run",
    "ssa_runner",
    "state_space_size",
    "transitions",
]
