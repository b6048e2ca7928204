"""Mean-field population model of the exploration/dissemination FSM.

The state is a vector ``y = (e_1..e_n, d_1..d_n)`` of swarm fractions
exploring and disseminating each option. Agents leave exploration of
option ``i`` at rate ``1/c_i`` and dissemination of option ``j`` at rate
``1/(g q_j)``; a deciding agent of opinion ``j`` starts exploring ``i``
with probability ``W[j, i]`` given neighbour opinions distributed as the
current disseminator shares.
"""

from __future__ import annotations

import numpy as np

from ..errors import ToleranceExceeded
from ..problem import ProblemInstance
from ..strategy import DEFAULT_Q_MIN, DecisionRule
from .rules import outcome_matrix

CONSERVATION_TOL = 1e-6


def effective_quality(instance: ProblemInstance, q_min: float = DEFAULT_Q_MIN) -> np.ndarray:
    return np.clip(np.asarray(instance.quality), q_min, 1.0)


def ode_rhs(y, instance: ProblemInstance, g: float, rule: DecisionRule, G: int,
            q_min: float = DEFAULT_Q_MIN) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    n = instance.n
    e, d = y[:n], y[n:]
    c = np.asarray(instance.cost)
    leave_d = d / (g * effective_quality(instance, q_min))
    heard = np.clip(d, 0.0, None)
    total = heard.sum()
    if total > 0:
        W = outcome_matrix(rule, heard / total, G)
    else:
        W = np.eye(n)
    leave_e = e / c
    return np.concatenate([leave_d @ W - leave_e, leave_e - leave_d])


def _rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(instance: ProblemInstance, g: float, rule: DecisionRule, G: int, y0,
              horizon: float, dt: float, q_min: float = DEFAULT_Q_MIN):
    """Fixed-step RK4 integration sampled every ``dt``.

    Returns ``(times, states)`` where ``states[k]`` is the state at
    ``times[k]``. Raises ToleranceExceeded if the state leaves the
    simplex by more than 1e-6, which means ``dt`` is too large.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    y = np.asarray(y0, dtype=float)
    if y.shape != (2 * instance.n,):
        raise ValueError(f"state must have {2 * instance.n} components")
    if abs(y.sum() - 1) > CONSERVATION_TOL or y.min() < -CONSERVATION_TOL:
        raise ValueError("initial state is not a probability vector")
    steps = int(round(horizon / dt))
    times = dt * np.arange(steps + 1)
    out = np.empty((steps + 1, len(y)))
    out[0] = y

    def f(state):
        return ode_rhs(state, instance, g, rule, G, q_min)

    for k in range(1, steps + 1):
        y = _rk4_step(f, y, dt)
        if abs(y.sum() - 1) > CONSERVATION_TOL or y.min() < -CONSERVATION_TOL:
            raise ToleranceExceeded(
                f"state left the simplex at t={times[k]:g} (sum={y.sum():.9f}, "
                f"min={y.min():.3g}); reduce dt"
            )
        out[k] = y
    return times, out


def opinion_fractions(states: np.ndarray, n: int) -> np.ndarray:
    """Per-option opinion share ``e_i + d_i`` for each row of ``states``."""
    states = np.atleast_2d(states)
    return states[:, :n] + states[:, n:]


def initial_state(instance: ProblemInstance, fractions, g: float,
                  phase: str = "exploration", q_min: float = DEFAULT_Q_MIN) -> np.ndarray:
    x = np.asarray(fractions, dtype=float)
    if phase == "exploration":
        return np.concatenate([x, np.zeros_like(x)])
    if phase == "dissemination":
        return np.concatenate([np.zeros_like(x), x])
    q = effective_quality(instance, q_min)
    share = g * q / (np.asarray(instance.cost) + g * q)
    return np.concatenate([x * (1 - share), x * share])
