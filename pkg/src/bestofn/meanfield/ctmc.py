"""Finite-population continuous-time Markov chain of the swarm.

A state counts the agents exploring and disseminating each option,
``(E_1..E_n, D_1..D_n)``. Transitions:

* ``E_i -> D_i`` at rate ``E_i / c_i``;
* ``D_j -> E_i`` at rate ``D_j / (g q_j) * W_j[i]`` where ``W_j`` is the
  decision-rule outcome for an agent of opinion ``j`` whose ``G`` buffer
  entries are drawn with replacement from the *other* disseminators.

A deciding agent with no other disseminator around keeps its opinion.
This is the process the agent-based simulator runs with
``with_replacement=True`` and noiseless quality measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from ..errors import StateSpaceTooLarge
from ..problem import ProblemInstance, validate
from ..rng import RandomStream
from ..simulator import (
    BatchMetrics,
    RunRecord,
    SwarmConfig,
    allocate_counts,
    decision_threshold,
    stationary_dissemination_share,
)
from .ode import effective_quality
from .rules import compositions, majority_table, outcome_matrix

DEFAULT_STATE_LIMIT = 200_000


def _neighbour_distribution(D, j):
    """Opinion distribution of the disseminators other than one of opinion ``j``."""
    others = sum(D) - 1
    if others <= 0:
        return None
    p = [k / others for k in D]
    p[j] -= 1 / others
    return p


def decision_weights(D, j: int, rule, G: int) -> np.ndarray:
    """Outcome distribution for a deciding agent of (0-based) opinion ``j``."""
    p = _neighbour_distribution(D, j)
    if p is None:
        w = np.zeros(len(D))
        w[j] = 1.0
        return w
    return outcome_matrix(rule, p, G)[j]


def transitions(state, instance: ProblemInstance, config: SwarmConfig):
    """Outgoing ``(next_state, rate)`` pairs of a CTMC state."""
    n = instance.n
    E, D = state[:n], state[n:]
    q = effective_quality(instance, config.q_min)
    out = []
    for i in range(n):
        if E[i]:
            nxt = list(state)
            nxt[i] -= 1
            nxt[n + i] += 1
            out.append((tuple(nxt), E[i] / instance.cost[i]))
    for j in range(n):
        if D[j]:
            base = D[j] / (config.g * q[j])
            w = decision_weights(D, j, config.rule, config.G)
            for i in range(n):
                if w[i] > 0:
                    nxt = list(state)
                    nxt[n + j] -= 1
                    nxt[i] += 1
                    out.append((tuple(nxt), base * w[i]))
    return out


def state_space_size(N: int, n: int) -> int:
    return math.comb(N + 2 * n - 1, 2 * n - 1)


def initial_distribution(instance: ProblemInstance, config: SwarmConfig) -> dict:
    """Distribution of the starting CTMC state implied by ``config``.

    Opinion counts are allocated deterministically as in the simulator;
    in ``"stationary"`` mode each agent independently starts
    disseminating with the long-run probability of its opinion.
    """
    n = instance.n
    counts = allocate_counts(config.opinion_fractions(n), config.N)
    if config.initial_phase == "exploration":
        return {tuple(counts) + (0,) * n: 1.0}
    if config.initial_phase == "dissemination":
        return {(0,) * n + tuple(counts): 1.0}
    share = stationary_dissemination_share(instance, config.g, config.q_min)
    per_option = []
    for k, s in zip(counts, share):
        per_option.append([(d, math.comb(k, d) * s**d * (1 - s) ** (k - d))
                           for d in range(k + 1)])
    dist = {((), ()): 1.0}
    for i, choices in enumerate(per_option):
        nxt = {}
        for (es, ds), pr in dist.items():
            for d, pd in choices:
                if pd > 0:
                    key = (es + (counts[i] - d,), ds + (d,))
                    nxt[key] = nxt.get(key, 0.0) + pr * pd
        dist = nxt
    return {es + ds: pr for (es, ds), pr in dist.items()}


@dataclass
class AbsorptionResult:
    """Exit probabilities and expected decision times from the exact chain.

    ``conditional_time[i]`` is the expected decision time given that the
    swarm decides for option ``i + 1`` (NaN where that is impossible).
    """

    probabilities: np.ndarray
    mean_time: float
    conditional_time: np.ndarray
    n_states: int


def exact_absorption(instance: ProblemInstance, config: SwarmConfig, N: int | None = None,
                     limit: int = DEFAULT_STATE_LIMIT, initial=None) -> AbsorptionResult:
    """Solve the absorbing chain for exit probabilities and decision times.

    States where some opinion is held by at least ``ceil(tau*N)`` agents
    are absorbing. ``initial`` optionally maps states to probabilities
    and overrides the distribution implied by ``config``.
    """
    validate(instance)
    n = instance.n
    N = config.N if N is None else N
    size = state_space_size(N, n)
    if size > limit:
        raise StateSpaceTooLarge(
            f"N={N} with {n} options gives {size} states, limit is {limit}"
        )
    if N != config.N:
        config = replace(config, N=N)
    threshold = decision_threshold(config.tau, N)

    def winner_of(s):
        for i in range(n):
            if s[i] + s[n + i] >= threshold:
                return i
        return None

    states = list(compositions(N, 2 * n))
    transient = [s for s in states if winner_of(s) is None]
    index = {s: k for k, s in enumerate(transient)}
    T = len(transient)

    rows, cols, vals = [], [], []
    absorb = np.zeros((T, n))
    for k, s in enumerate(transient):
        out = 0.0
        for nxt, rate in transitions(s, instance, config):
            out += rate
            w = winner_of(nxt)
            if w is None:
                rows.append(k)
                cols.append(index[nxt])
                vals.append(-rate)
            else:
                absorb[k, w] += rate
        rows.append(k)
        cols.append(k)
        vals.append(out)

    if initial is None:
        initial = initial_distribution(instance, config)
    probs = np.zeros(n)
    mean_time = 0.0
    weighted_time = np.zeros(n)
    pi = np.zeros(T)
    for s, pr in initial.items():
        w = winner_of(s)
        if w is None:
            pi[index[s]] += pr
        else:
            probs[w] += pr

    if T and pi.any():
        # Rows of (-Q) restricted to transient states.
        A = coo_matrix((vals, (rows, cols)), shape=(T, T)).tocsc()
        lu = splu(A)
        H = lu.solve(absorb)
        tau = lu.solve(np.ones(T))
        U = lu.solve(H)
        probs += pi @ H
        mean_time = float(pi @ tau)
        weighted_time = pi @ U
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(probs > 0, weighted_time / probs, np.nan)
    return AbsorptionResult(probs, mean_time, cond, len(states))


def _draw_initial_state(instance, config, rng):
    n = instance.n
    counts = allocate_counts(config.opinion_fractions(n), config.N)
    if config.initial_phase == "exploration":
        return list(counts), [0] * n
    if config.initial_phase == "dissemination":
        return [0] * n, list(counts)
    share = stationary_dissemination_share(instance, config.g, config.q_min)
    D = [sum(rng.random() < share[i] for _ in range(k)) for i, k in enumerate(counts)]
    return [k - d for k, d in zip(counts, D)], D


def ssa_run(instance: ProblemInstance, config: SwarmConfig, rng=None) -> RunRecord:
    """One exact (direct-method) trajectory of the CTMC.

    Trajectory sampling, stopping and output follow ``simulator.run``.
    """
    validate(instance)
    rng = RandomStream(config.seed) if rng is None else rng
    n = instance.n
    N = config.N
    threshold = decision_threshold(config.tau, N)
    cost = instance.cost
    leave_d = [1.0 / (config.g * q) for q in effective_quality(instance, config.q_min)]
    rule, G = config.rule, config.G
    E, D = _draw_initial_state(instance, config, rng)
    weights = lru_cache(maxsize=4096)(
        lambda Dt, j: tuple(decision_weights(Dt, j, rule, G)))

    sample_dt = config.sample_dt
    rows = [[0.0, *E, *D]]
    next_sample = sample_dt if sample_dt else math.inf
    winner = next((i + 1 for i in range(n) if E[i] + D[i] >= threshold), None)
    t = 0.0
    now = 0.0
    events = 0
    while winner is None:
        rates = [E[i] / cost[i] for i in range(n)] + [D[j] * leave_d[j] for j in range(n)]
        total = sum(rates)
        t += -math.log(rng.uniform()) / total
        if t > config.max_time:
            break
        while next_sample <= t:
            rows.append([next_sample, *E, *D])
            next_sample += sample_dt
        now = t
        target = rng.random() * total
        ch = 0
        acc = rates[0]
        while acc <= target and ch < 2 * n - 1:
            ch += 1
            acc += rates[ch]
        if ch < n:
            E[ch] -= 1
            D[ch] += 1
        else:
            j = ch - n
            w = weights(tuple(D), j)
            u = rng.random()
            i = 0
            acc = w[0]
            while acc <= u and i < n - 1:
                i += 1
                acc += w[i]
            D[j] -= 1
            E[i] += 1
            if E[i] + D[i] >= threshold:
                winner = i + 1
        events += 1
        if sample_dt == 0:
            rows.append([t, *E, *D])

    decided = winner is not None
    end = now if decided else config.max_time
    if not decided:
        while next_sample <= end:
            rows.append([next_sample, *E, *D])
            next_sample += sample_dt
    if rows[-1][0] != end or rows[-1][1:] != [*E, *D]:
        rows.append([end, *E, *D])
    return RunRecord(config.seed, decided, winner, end if decided else math.nan,
                     np.asarray(rows, dtype=float), events)


def ssa_runner(config: SwarmConfig, instance: ProblemInstance) -> RunRecord:
    """``simulator.batch``-compatible wrapper around :func:`ssa_run`."""
    return ssa_run(instance, config)


def ssa_ensemble(instance: ProblemInstance, config: SwarmConfig, repetitions: int,
                 seed: int | None = None) -> BatchMetrics:
    """Many independent direct-method trajectories advanced in lock step.

    Each replica is an exact CTMC realisation; vectorising over replicas
    makes 10^5-run exit-probability estimates cheap for small swarms.
    Only outcomes are kept, so ``records`` is empty.
    """
    validate(instance)
    n = instance.n
    N = config.N
    gen = np.random.Generator(np.random.PCG64(config.seed if seed is None else seed))
    threshold = decision_threshold(config.tau, N)
    cost = np.asarray(instance.cost)
    leave_d = 1.0 / (config.g * effective_quality(instance, config.q_min))

    counts = allocate_counts(config.opinion_fractions(n), N)
    R = repetitions
    if config.initial_phase == "exploration":
        E = np.tile(counts, (R, 1))
        D = np.zeros((R, n), dtype=np.int64)
    elif config.initial_phase == "dissemination":
        E = np.zeros((R, n), dtype=np.int64)
        D = np.tile(counts, (R, 1))
    else:
        share = stationary_dissemination_share(instance, config.g, config.q_min)
        D = gen.binomial(np.tile(counts, (R, 1)), np.tile(share, (R, 1)))
        E = np.tile(counts, (R, 1)) - D
    E = E.astype(np.int64)
    D = D.astype(np.int64)

    if config.rule.kind == "majority":
        comps, coef, outcome = majority_table(config.G, n, config.rule.include_self)
        onehot = np.eye(n)[outcome]  # (own, K, n)

    ids = np.arange(R)
    t = np.zeros(R)
    winner = np.full(R, -1)
    time_out = np.full(R, np.nan)

    def settle(mask_done, win):
        winner[ids[mask_done]] = win[mask_done]
        time_out[ids[mask_done]] = t[mask_done]

    opinion = E + D
    done = (opinion >= threshold).any(axis=1)
    settle(done, np.argmax(opinion >= threshold, axis=1))
    keep = ~done
    ids, E, D, t = ids[keep], E[keep], D[keep], t[keep]

    while len(ids):
        M = len(ids)
        rates = np.concatenate([E / cost, D * leave_d], axis=1)
        total = rates.sum(axis=1)
        t = t + gen.standard_exponential(M) / total
        over = t > config.max_time
        target = gen.random(M) * total
        ch = np.minimum((np.cumsum(rates, axis=1) <= target[:, None]).sum(axis=1), 2 * n - 1)
        rows = np.arange(M)

        explore = ch < n
        r_e = rows[explore]
        E[r_e, ch[explore]] -= 1
        D[r_e, ch[explore]] += 1

        decide = ~explore
        r_d = rows[decide]
        j = ch[decide] - n
        Dd = D[r_d]
        others = Dd.sum(axis=1) - 1
        P = Dd.astype(float)
        P[np.arange(len(r_d)), j] -= 1
        lonely = others <= 0
        P = P / np.where(lonely, 1, others)[:, None]
        if config.rule.kind == "voter":
            W = P
        else:
            wk = coef * np.prod(P[:, None, :] ** comps[None, :, :], axis=2)
            W = np.einsum("mk,mki->mi", wk, onehot[j])
        W[lonely] = np.eye(n)[j[lonely]]
        u = gen.random(len(r_d))
        i = np.minimum((np.cumsum(W, axis=1) <= u[:, None]).sum(axis=1), n - 1)
        D[r_d, j] -= 1
        E[r_d, i] += 1

        opinion = E + D
        reached = (opinion >= threshold).any(axis=1) & ~over
        settle(reached, np.argmax(opinion >= threshold, axis=1))
        keep = ~(reached | over)
        ids, E, D, t = ids[keep], E[keep], D[keep], t[keep]

    decided_mask = winner >= 0
    Dn = int(decided_mask.sum())
    wins = np.bincount(winner[decided_mask], minlength=n)
    if Dn:
        p = wins / Dn
        se = np.sqrt(p * (1 - p) / Dn)
        times = time_out[decided_mask]
        mean = float(times.mean())
        var = float(times.var(ddof=1)) if Dn > 1 else 0.0
        se_t = math.sqrt(var / Dn)
    else:
        p = se = np.full(n, np.nan)
        mean = var = se_t = math.nan
    return BatchMetrics(R, Dn, wins, p, se, mean, var, se_t, (R - Dn) / R, [])
