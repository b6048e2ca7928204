import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bestofn.simulator as simulator
from bestofn.errors import ValidationError
from bestofn.problem import make_instance
from bestofn.scenarios import PerceptionScenario, build_collective_perception
from bestofn.simulator import (
    SwarmConfig,
    allocate_counts,
    batch,
    decision_threshold,
    detect_consensus,
    resample_trajectory,
    run,
)
from bestofn.strategy import DecisionRule, PhaseKind

SYM = make_instance((1, 1), (1, 1))
QUAL = make_instance((1, 0.5), (1, 1))


@pytest.mark.parametrize(
    "counts, tau, N, expected",
    [
        ((90, 10), 0.9, 100, 1),
        ((89, 11), 0.9, 100, None),
        ((100, 0), 1.0, 100, 1),
        ((0, 100), 1.0, 100, 2),
        ((3, 7), 0.7, 10, 2),
        ((5, 5), 0.51, 10, None),
    ],
)
def test_detect_consensus(counts, tau, N, expected):
    assert detect_consensus(counts, tau, N) == expected


def test_threshold_survives_float_rounding():
    # 0.7 * 10 evaluates to 7.000000000000001
    assert decision_threshold(0.7, 10) == 7


@pytest.mark.parametrize(
    "fractions, N, expected",
    [((0.5, 0.5), 100, [50, 50]), ((1 / 3,) * 3, 10, [4, 3, 3]), ((0.3, 0.7), 10, [3, 7])],
)
def test_allocate_counts(fractions, N, expected):
    assert allocate_counts(fractions, N) == expected


@pytest.mark.parametrize("field, value", [("tau", 0.4), ("tau", 1.1), ("N", 1), ("G", 0),
                                          ("g", 0.0), ("q_min", 0.0), ("sigma", -1.0),
                                          ("initial_opinions", (0.5, 0.6)),
                                          ("initial_phase", "sleeping"),
                                          ("engine", "fortran")])
def test_config_validation(field, value):
    with pytest.raises(ValidationError) as err:
        SwarmConfig(**{field: value})
    assert err.value.field == field


def test_initial_consensus_decides_at_time_zero():
    rec = run(SwarmConfig(N=2, initial_opinions=(1.0, 0.0)), SYM)
    assert rec.decided and rec.winner == 1 and rec.decision_time == 0.0
    assert rec.events == 0


def test_voter_absorbs_well_before_max_time():
    cfg = SwarmConfig(N=100, initial_opinions=(0.5, 0.5), max_time=1e5)
    records = [run(replace(cfg, seed=s), SYM) for s in range(100)]
    assert all(r.decided for r in records)
    assert max(r.decision_time for r in records) < 1e5


@pytest.mark.parametrize("with_replacement", [False, True])
@pytest.mark.parametrize("rule", [DecisionRule.voter(), DecisionRule.majority()])
def test_same_seed_same_bytes(rule, with_replacement):
    cfg = SwarmConfig(N=30, rule=rule, seed=42, sample_dt=0, sigma=0.1,
                      with_replacement=with_replacement)
    a, b = run(cfg, QUAL), run(cfg, QUAL)
    assert a.trajectory.tobytes() == b.trajectory.tobytes()
    assert (a.decided, a.winner, a.decision_time) == (b.decided, b.winner, b.decision_time)
    c = run(replace(cfg, seed=43), QUAL)
    assert c.trajectory.tobytes() != a.trajectory.tobytes()


@pytest.mark.parametrize("phase", ["exploration", "dissemination", "stationary"])
def test_agent_conservation_at_every_event(phase):
    cfg = SwarmConfig(N=25, seed=7, sample_dt=0, initial_phase=phase,
                      rule=DecisionRule.majority())
    rec = run(cfg, make_instance((1, 0.7, 0.4), (1, 2, 1)))
    counts = rec.trajectory[:, 1:]
    assert (counts >= 0).all()
    assert (counts.sum(axis=1) == 25).all()
    assert len(rec.trajectory) == rec.events + 1 + (not rec.decided)
    assert np.all(np.diff(rec.trajectory[:, 0]) >= 0)


def test_tau_one_decision_means_everyone_agrees():
    for s in range(20):
        rec = run(SwarmConfig(N=20, seed=s), QUAL)
        assert rec.decided
        last = rec.trajectory[-1, 1:]
        w = rec.winner - 1
        assert last[w] + last[2 + w] == 20


def test_partial_threshold_decision():
    for s in range(20):
        rec = run(SwarmConfig(N=40, seed=s, tau=0.8), SYM)
        last = rec.trajectory[-1, 1:]
        w = rec.winner - 1
        assert last[w] + last[2 + w] >= 32


def test_max_time_cutoff_gives_no_decision():
    rec = run(SwarmConfig(N=100, max_time=5.0, sample_dt=1.0), SYM)
    assert not rec.decided and rec.winner is None and math.isnan(rec.decision_time)
    assert rec.trajectory[-1, 0] == 5.0
    np.testing.assert_array_equal(rec.trajectory[:, 0], np.arange(6.0))


def test_fsm_invariants_inside_simulator(monkeypatch):
    """Every step alternates phase and every decision leaves an empty buffer."""
    seen = []
    real = simulator.step_agent

    def spy(agent, now, rule, instance, params, rng):
        before = agent.phase
        heard = set(agent.buffer)
        own = agent.option
        real(agent, now, rule, instance, params, rng)
        seen.append((before, agent.phase, len(agent.buffer), agent.option in heard | {own}))
        return agent

    monkeypatch.setattr(simulator, "step_agent", spy)
    run(SwarmConfig(N=30, seed=3, rule=DecisionRule.majority(), engine="python"), QUAL)
    run(SwarmConfig(N=30, seed=4, engine="python"), QUAL)
    assert seen
    for before, after, buffered, closed in seen:
        assert before is not after
        assert closed
        if before is PhaseKind.DISSEMINATION:
            assert buffered == 0


def test_buffer_fill_sizes(monkeypatch):
    sizes = []
    real = simulator.step_agent

    def spy(agent, now, rule, instance, params, rng):
        if agent.phase is PhaseKind.DISSEMINATION:
            sizes.append(len(agent.buffer))
        return real(agent, now, rule, instance, params, rng)

    monkeypatch.setattr(simulator, "step_agent", spy)
    run(SwarmConfig(N=3, G=5, seed=1, initial_phase="dissemination", engine="python"), SYM)
    # without replacement an agent hears at most the other N-1 = 2 agents
    assert sizes and max(sizes) <= 2
    sizes.clear()
    run(SwarmConfig(N=3, G=5, seed=1, initial_phase="dissemination", with_replacement=True,
                    engine="python"), SYM)
    assert set(sizes) <= {0, 5}


def test_batch_symmetric_exit_probability():
    m = batch(SwarmConfig(N=20, initial_opinions=(0.5, 0.5)), SYM, 1000, seed_base=0)
    assert m.decided == 1000
    assert abs(m.exit_probability[0] - 0.5) <= 0.05
    assert m.exit_probability.sum() == pytest.approx(1.0)
    assert m.exit_se[0] == pytest.approx(math.sqrt(m.exit_probability[0] * m.exit_probability[1] / 1000))


def test_batch_degenerate_start():
    m = batch(SwarmConfig(N=50, initial_opinions=(1.0, 0.0)), QUAL, 20)
    assert m.exit_probability[0] == 1.0 and m.mean_time == 0.0
    assert m.non_decision_rate == 0.0


def test_batch_seeds_are_consecutive():
    m = batch(SwarmConfig(N=10), SYM, 5, seed_base=100)
    assert [r.seed for r in m.records] == [100, 101, 102, 103, 104]
    single = run(SwarmConfig(N=10, seed=102), SYM)
    assert m.records[2].decision_time == single.decision_time


def test_parallel_batch_matches_serial():
    cfg = SwarmConfig(N=15)
    a = batch(cfg, QUAL, 12, seed_base=5, workers=1)
    b = batch(cfg, QUAL, 12, seed_base=5, workers=3)
    assert [r.decision_time for r in a.records] == [r.decision_time for r in b.records]
    np.testing.assert_array_equal(a.wins, b.wins)


def test_quality_asymmetry_favours_better_option():
    m = batch(SwarmConfig(N=20), QUAL, 300)
    assert m.exit_probability[0] - 0.5 > 3 * m.exit_se[0]


def test_relabeling_symmetry():
    cfg = SwarmConfig(N=20, initial_opinions=(0.6, 0.4))
    a = batch(cfg, make_instance((1, 0.8), (1, 1)), 1000, seed_base=0)
    b = batch(replace(cfg, initial_opinions=(0.4, 0.6)), make_instance((0.8, 1), (1, 1)),
              1000, seed_base=50_000)
    se = math.hypot(a.exit_se[0], b.exit_se[1])
    assert abs(a.exit_probability[0] - b.exit_probability[1]) < 3 * se


def test_quality_monotonicity():
    cfg = SwarmConfig(N=20)
    E, S = [], []
    for q1 in (0.6, 0.8, 1.0):
        m = batch(cfg, make_instance((q1, 1.0), (1, 1)), 1000, seed_base=0)
        E.append(m.exit_probability[0])
        S.append(m.exit_se[0])
    for k in range(2):
        assert E[k + 1] >= E[k] - 3 * math.hypot(S[k], S[k + 1])
    assert E[2] - E[0] > 3 * math.hypot(S[0], S[2])


def test_perception_scenario_runs_with_its_sampler():
    inst = build_collective_perception(PerceptionScenario((0.6, 0.4), sample_size=20))
    m = batch(SwarmConfig(N=20), inst, 200)
    assert m.decided == 200
    assert m.exit_probability[0] > 0.5


def test_resample_holds_last_state():
    traj = np.array([[0.0, 5, 5, 0, 0], [2.5, 4, 5, 1, 0], [4.0, 10, 0, 0, 0]])
    got = resample_trajectory(traj, [0, 1, 2.5, 3, 4, 100])
    np.testing.assert_array_equal(got[:, 0], [5, 5, 4, 4, 10, 10])


PARITY_CASES = [
    dict(),
    dict(rule=DecisionRule.majority(), sample_dt=0),
    dict(rule=DecisionRule.majority(False), with_replacement=True, sample_dt=0.7),
    dict(sigma=0.2, initial_phase="stationary", sample_dt=0),
    dict(sigma=0.3, rule=DecisionRule.majority(), initial_phase="dissemination", G=5, N=5),
    dict(tau=0.8, with_replacement=True, G=1),
    dict(max_time=20.0, sample_dt=1.5),
]


@pytest.mark.parametrize("case", PARITY_CASES)
@pytest.mark.parametrize("instance", [SYM, QUAL, make_instance((1, 0.7, 0.4), (1, 2, 1))],
                         ids=["sym", "qual", "three"])
def test_compiled_engine_is_bit_identical(case, instance):
    cfg = SwarmConfig(**{"N": 30, "seed": 17, **case})
    a = run(replace(cfg, engine="python"), instance)
    b = run(replace(cfg, engine="compiled"), instance)
    assert a.trajectory.tobytes() == b.trajectory.tobytes()
    assert (a.decided, a.winner, a.events) == (b.decided, b.winner, b.events)
    assert a.decision_time == b.decision_time or (math.isnan(a.decision_time)
                                                  and math.isnan(b.decision_time))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 40), st.integers(1, 6), st.booleans(),
       st.sampled_from(["voter", "majority"]), st.sampled_from([0.0, 0.15]))
def test_engines_agree_on_random_configs(seed, N, G, wr, kind, sigma):
    cfg = SwarmConfig(N=N, G=G, seed=seed, with_replacement=wr, rule=DecisionRule(kind),
                      sigma=sigma, sample_dt=0, max_time=300.0)
    a = run(replace(cfg, engine="python"), QUAL)
    b = run(replace(cfg, engine="compiled"), QUAL)
    assert a.trajectory.tobytes() == b.trajectory.tobytes()


def test_compiled_engine_rejects_samplers():
    inst = build_collective_perception(PerceptionScenario((0.6, 0.4)))
    with pytest.raises(ValidationError) as err:
        run(SwarmConfig(N=10, engine="compiled"), inst)
    assert err.value.field == "engine"
    # auto falls back to the reference loop
    assert run(SwarmConfig(N=10), inst).decided
