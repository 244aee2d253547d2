import math

import pytest

from mitlplan.formula import EventSet, parse, substitute_dist, uniform_truncation_vector
from mitlplan.game_model import GridWorldConfig, build_gridworld
from mitlplan.product_mdp import build_product
from mitlplan.simulator import default_max_steps, estimate_success, rollout
from mitlplan.solver import extract_policy, value_iteration
from mitlplan.stochastic_ta import StaModel, truncate
from mitlplan.timed_automata import build_dta

from conftest import BUS_CASE2, build_case


@pytest.fixture(scope="module")
def planned_case2():
    m, tv = build_case(BUS_CASE2, 3)
    res = value_iteration(m)
    return m, extract_policy(m, res.values), res


def test_rollout_reproducible(planned_case2):
    m, pol, _ = planned_case2
    one = rollout(m, pol, seed=42)
    two = rollout(m, pol, seed=42)
    assert one.render() == two.render()
    assert one.state_indices == two.state_indices
    other = rollout(m, pol, seed=43)
    assert other.render() != one.render() or other.outcome == one.outcome


def test_rollout_trajectory_shape(planned_case2):
    m, pol, _ = planned_case2
    traj = rollout(m, pol, seed=1)
    text = traj.render()
    assert text.startswith("(((0, 0), {}, {b1,b2}), (q0, [0,0], {b1,b2}))")
    assert "--e=" in text
    assert text.rstrip().endswith(f"terminal: {traj.outcome}")
    assert traj.outcome in ("accept", "sink", "step-limit")


def test_rollout_transitions_positive_probability(planned_case2):
    m, pol, _ = planned_case2
    for seed in range(20):
        traj = rollout(m, pol, seed=seed)
        for z, z2 in zip(traj.state_indices, traj.state_indices[1:]):
            a = m.action_index(pol.action_name(z))
            assert dict(m.successors(z, a)).get(z2, 0.0) > 0.0


def test_rollout_deterministic_game_no_events():
    # a deadline makes delaying strictly suboptimal, so the greedy
    # tie-break cannot stall; slip-free motion makes runs seed independent
    f = parse("F[0,4] goal")
    u = EventSet.from_formula(f)
    ts = truncate(StaModel(build_dta(substitute_dist(f)), u),
                  uniform_truncation_vector(f, u, 0))
    game = build_gridworld(GridWorldConfig(
        3, 1, (0, 0), (("goal", (2, 0)),), (), (1.0, 0.0, 0.0)))
    m = build_product(game, ts)
    pol = extract_policy(m, value_iteration(m).values)
    runs = {rollout(m, pol, seed=s, max_steps=10).render() for s in range(5)}
    assert len(runs) == 1  # slip-free: seed independent
    assert rollout(m, pol, seed=0, max_steps=10).outcome == "accept"


def test_rollout_step_limit_zero(planned_case2):
    m, pol, _ = planned_case2
    traj = rollout(m, pol, seed=9, max_steps=0)
    assert traj.outcome == "step-limit"
    assert traj.steps == 0


def test_rollout_accepting_initial():
    f = parse("true")
    u = EventSet.from_formula(f)
    ts = truncate(StaModel(build_dta(f), u), uniform_truncation_vector(f, u, 0))
    game = build_gridworld(GridWorldConfig(2, 2, (0, 0), (), ()))
    m = build_product(game, ts)
    pol = extract_policy(m, value_iteration(m).values)
    assert rollout(m, pol, seed=0, max_steps=0).outcome == "accept"
    est = estimate_success(m, pol, 50, seed=0)
    assert est.rate == 1.0


def test_estimate_consistent_with_value(planned_case2):
    m, pol, res = planned_case2
    est = estimate_success(m, pol, 20000, seed=11)
    v = res.initial_value
    sigma = math.sqrt(v * (1 - v) / est.samples)
    assert abs(est.rate - v) < 4 * sigma
    assert est.ci_low <= est.rate <= est.ci_high


def test_estimate_backends_identical(planned_case2):
    m, pol, _ = planned_case2
    a = estimate_success(m, pol, 5000, seed=3, backend="numpy")
    b = estimate_success(m, pol, 5000, seed=3, backend="numba")
    assert a.rate == b.rate
    assert a.outcomes == b.outcomes


def test_estimate_matches_single_rollouts(planned_case2):
    # batch stream i=0 is the stream of rollout(seed)
    m, pol, _ = planned_case2
    single = rollout(m, pol, seed=77, max_steps=default_max_steps(m))
    batch = estimate_success(m, pol, 1, seed=77)
    got = {"accept": 1, "sink": 0, "step-limit": 0} if single.outcome == "accept" \
        else {"accept": 0, "sink": 1, "step-limit": 0} if single.outcome == "sink" \
        else {"accept": 0, "sink": 0, "step-limit": 1}
    assert batch.outcomes == got


def test_estimate_validates_n(planned_case2):
    m, pol, _ = planned_case2
    with pytest.raises(ValueError):
        estimate_success(m, pol, 0, seed=1)


def test_default_max_steps_covers_mission(planned_case2):
    m, _, _ = planned_case2
    # events capped at 3, windows at 3: all classification done well before
    assert default_max_steps(m) >= 3 + 3 + 2
