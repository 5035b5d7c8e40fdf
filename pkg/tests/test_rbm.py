import math
import logging
import itertools

import numpy as np
import pytest

from rbpredict.errors import *
from rbpredict.graph import ProjectGraph, compute_schedule, makespan_batch
from rbpredict.rbm import *
from rbpredict.util import rng


@pytest.fixture
def fan():
    g = ProjectGraph.from_edges(
        'ABCDE', [('A', 'B'), ('A', 'C'), ('A', 'D'), ('B', 'E'), ('C', 'E'), ('D', 'E')])
    crash = {
        a: CrashParams(tn, 10.0, 1.0, b)
        for a, tn, b in zip('ABCDE', [2, 4, 3, 5, 1], [0.5, 1.0, 0.3, 0.8, 2.0])}
    return g, crash


def test_resource_time_cost():
    t, c = resource_time_cost(ActivityWorkSpec([10], [2], [3]), [1.0])
    assert (t[0], c[0]) == (5, 15)
    t2, c2 = resource_time_cost(ActivityWorkSpec([10], [2], [3]), [2.0])
    assert (t2[0], c2[0]) == (2.5, 7.5)
    with pytest.raises(NonPositiveEfficiency):
        resource_time_cost(ActivityWorkSpec([10], [2], [3]), [0.0])


def test_resource_time_cost_homogeneity():
    spec = ActivityWorkSpec([3, 5, 7], [1, 2, 0.5], [2, 1, 4])
    r = rng(1, 'test').uniform(0.5, 1.5, size=(10, 3))
    t, c = resource_time_cost(spec, r)
    th, ch = resource_time_cost(spec, r / 2)
    assert np.array_equal(th, 2 * t) and np.array_equal(ch, 2 * c)


@pytest.mark.parametrize(
    'lam,expected',
    [(1.0, 5.0), (0.0, 3.0), (0.5, 4.0)]
)
def test_aggregate_duration(lam, expected):
    assert aggregate_duration([2, 3], lam) == expected


def test_aggregate_duration_bounds():
    gen = rng(2, 'test')
    for _ in range(100):
        t = gen.uniform(0.1, 5, size=int(gen.integers(1, 6)))
        res = aggregate_duration(t, float(gen.random()))
        assert t.max() - 1e-12 <= res <= t.sum() + 1e-12
    with pytest.raises(EmptyResourceSet):
        aggregate_duration([], 0.5)
    with pytest.raises(ValidationError):
        aggregate_duration([1], 1.5)


def test_activity_cost():
    spec = ActivityWorkSpec([5, 5], [1, 1], [3, 2])
    assert activity_cost(spec, [1, 1]) == 25
    assert activity_cost(ActivityWorkSpec([5], [1], [3]), [1]) == 15
    assert activity_cost(ActivityWorkSpec([5, 5], [1, 1], [6, 4], parallelism=0), [1, 1]) == 50


def test_ActivityWorkSpec_invalid():
    with pytest.raises(ValidationError):
        ActivityWorkSpec([1, 2], [1], [1])
    with pytest.raises(ValidationError):
        ActivityWorkSpec([0], [1], [1])
    with pytest.raises(ValidationError):
        ActivityWorkSpec([1], [1], [1], parallelism=2)


def test_expected_duration_taylor():
    spec = ActivityWorkSpec([2, 3], [1, 1], [1, 1])
    assert expected_duration_taylor(spec, [1, 2], [0, 0]) == 2 + 1.5
    assert expected_duration_taylor(
        ActivityWorkSpec([1], [1], [1]), [0.0], [0.5], family='lognormal') == \
        pytest.approx(1.28403, abs=1e-5)
    with pytest.raises(NonPositiveMean):
        expected_duration_taylor(spec, [1, 0], [0, 0])

    spec = ActivityWorkSpec([1], [1], [1])
    assert expected_duration_taylor(spec, [1], [0.04]) == pytest.approx(1.04)
    r = EfficiencyDistribution('gaussian', [1.0], [0.04]).sample(rng(3, 'test'), 10 ** 6)
    t, _ = resource_time_cost(spec, r)
    assert t.mean() == pytest.approx(1.04, rel=0.01)


def test_EfficiencyDistribution():
    d = EfficiencyDistribution('beta', [1.0, 0.8], [0.02, 0.01])
    x = d.sample(rng(4, 'test'), 5000)
    assert x.shape == (5000, 2)
    assert x.min() > 0.5 and x.max() < 1.5
    assert x.mean(axis=0) == pytest.approx([1.0, 0.8], abs=0.01)

    d = EfficiencyDistribution('lognormal', [0.0, 0.0, 0.0], [0.1, 0.1, 0.1], correlation=0.5)
    x = np.log(d.sample(rng(5, 'test'), 20000))
    assert np.corrcoef(x.T)[0, 1] == pytest.approx(0.5, abs=0.03)
    assert d.expected_efficiency() == pytest.approx(np.exp([0.05] * 3))

    for kw in [
        dict(family='cauchy', mean=[1], variance=[1]),
        dict(family='gaussian', mean=[1, 1], variance=[1]),
        dict(family='gaussian', mean=[1], variance=[-1]),
        dict(family='beta', mean=[1], variance=[0.5]),
        dict(family='beta', mean=[1], variance=[0.01], bounds=(1.5, 0.5)),
        dict(family='gaussian', mean=[1, 1, 1], variance=[1, 1, 1], correlation=-0.6),
    ]:
        with pytest.raises(ValidationError):
            EfficiencyDistribution(**kw)


def test_gaussian_truncation(caplog):
    with caplog.at_level(logging.INFO):
        x = EfficiencyDistribution('gaussian', [0.1], [1.0]).sample(
            rng(6, 'test'), 1000, log=logging.getLogger(__name__))
    assert x.min() >= TRUNCATION
    assert 'truncated' in caplog.text


def test_expected_duration():
    spec = ActivityWorkSpec([2], [1], [1], parallelism=1)
    d = EfficiencyDistribution('lognormal', [0.0], [0.25])
    assert expected_duration(spec, d) == pytest.approx(2 * math.exp(0.125))
    spec = ActivityWorkSpec([2, 4], [1, 1], [1, 1], parallelism=0)
    assert expected_duration(spec, EfficiencyDistribution('gaussian', [1, 2], [0, 0])) == 2


def test_crash_cost():
    p = CrashParams(2.0, 10.0, 1.0, math.log(2))
    assert crash_cost(2.0, p) == 10
    assert crash_cost(1.0, p) == pytest.approx(11)
    grid = np.linspace(0.1, 2.0, 40)
    costs = [crash_cost(t, p) for t in grid]
    assert all(a > b for a, b in zip(costs, costs[1:]))
    for t1, t2 in itertools.combinations(grid[::5], 2):
        assert crash_cost((t1 + t2) / 2, p) <= (crash_cost(t1, p) + crash_cost(t2, p)) / 2
    with pytest.raises(DurationAboveNormal):
        crash_cost(2.5, p)
    with pytest.raises(ValidationError):
        CrashParams(1.0, 1.0, 0.0, 1.0)


def test_solve_cost_frontier_slack(fan):
    g, crash = fan
    res = solve_cost_frontier(g, crash, 10.0)
    assert res == {a: crash[a].normal_duration for a in 'ABCDE'}
    assert frontier_cost(g, crash, res) == 50


def test_solve_cost_frontier_single():
    g = ProjectGraph.from_edges('A')
    crash = dict(A=CrashParams(4.0, 1.0, 1.0, 1.0))
    assert solve_cost_frontier(g, crash, 3.0)['A'] == pytest.approx(3.0, rel=1e-6)
    with pytest.raises(Infeasible):
        solve_cost_frontier(g, crash, 0.5)
    with pytest.raises(MissingCrashParams):
        solve_cost_frontier(ProjectGraph.from_edges('AB'), crash, 3.0)


def test_solve_cost_frontier_grid(fan):
    g, crash = fan
    t_max = 0.8 * compute_schedule(g, {a: c.normal_duration for a, c in crash.items()}).makespan
    res = solve_cost_frontier(g, crash, t_max)
    assert compute_schedule(g, res).makespan <= t_max * (1 + 1e-6)
    assert all(
        crash[a].min_duration - 1e-9 <= t <= crash[a].normal_duration + 1e-9
        for a, t in res.items())
    cost = frontier_cost(g, crash, res)
    uniform = frontier_cost(g, crash, uniform_scaling_durations(g, crash, t_max))
    assert 50 <= cost <= uniform + 1e-9
    assert cost <= _grid_cost(g, crash, t_max) * 1.01


def _grid_cost(g, crash, t_max, step=0.05):
    ids = g.activity_ids
    tn = np.array([crash[a].normal_duration for a in ids])
    cmin, a, b = (np.array([getattr(crash[x], k) for x in ids]) for k in ['min_cost', 'a', 'b'])
    factors = np.arange(CRASH_FLOOR, 1.0 + 1e-9, step)
    grid = np.array(list(itertools.product(factors, repeat=len(ids)))) * tn
    feasible = grid[makespan_batch(g, grid) <= t_max + 1e-9]
    return (cmin + a * np.expm1(b * (tn - feasible))).sum(axis=1).min()


@pytest.mark.parametrize('seed', range(20))
def test_solve_cost_frontier_random(seed):
    gen = rng(seed, 'frontier')
    ids = 'ABCD'
    g = ProjectGraph.from_edges(
        ids, [(u, v) for i, u in enumerate(ids) for v in ids[i + 1:] if gen.random() < 0.5])
    crash = {
        x: CrashParams(gen.uniform(1, 5), 10.0, gen.uniform(0.5, 2), gen.uniform(0.2, 1.5))
        for x in ids}
    t_max = 0.75 * compute_schedule(g, {x: c.normal_duration for x, c in crash.items()}).makespan

    res = solve_cost_frontier(g, crash, t_max)
    assert compute_schedule(g, res).makespan <= t_max * (1 + 1e-6)
    cost = frontier_cost(g, crash, res)
    assert cost <= frontier_cost(g, crash, uniform_scaling_durations(g, crash, t_max)) + 1e-9
    assert cost <= _grid_cost(g, crash, t_max) * 1.02


def test_frontier_curve(fan, caplog):
    g, crash = fan
    curve = frontier_curve(g, crash, [1.0, 4.0, 6.0, 8.0])
    assert [t for t, _ in curve] == [4.0, 6.0, 8.0]
    costs = [c for _, c in curve]
    assert costs[0] >= costs[1] >= costs[2] == pytest.approx(50)


def test_monte_carlo_deterministic():
    g = ProjectGraph.from_edges('AB', [('A', 'B')])
    specs = dict(A=ActivityWorkSpec([2], [1], [1]), B=ActivityWorkSpec([3], [1], [2]))
    dists = {a: EfficiencyDistribution('gaussian', [1.0], [0.0]) for a in 'AB'}
    res = monte_carlo_project(g, specs, dists, 100, 1, overhead=2)
    assert res.makespan_mean == 5 and res.makespan_var == 0
    assert res.cost_mean == 2 + 6 + 2
    assert res.activities['B']['duration_mean'] == 3

    res = monte_carlo_project(ProjectGraph.from_edges([]), {}, {}, 10, 1, overhead=7)
    assert res.cost_mean == 7 and res.makespan_mean == 0

    with pytest.raises(MissingDuration):
        monte_carlo_project(g, dict(A=specs['A']), dists, 10, 1)
    with pytest.raises(ValidationError):
        monte_carlo_project(g, specs, dists, 0, 1)

    res = monte_carlo_project(g, dict(A=specs['A']), dists, 10, 1, fixed=dict(B=(4.0, 1.0)))
    assert res.makespan_mean == 6 and res.cost_mean == 3


def test_monte_carlo_lognormal():
    g = ProjectGraph.from_edges('A')
    res = monte_carlo_project(
        g,
        dict(A=ActivityWorkSpec([2], [1], [1])),
        dict(A=EfficiencyDistribution('lognormal', [0.0], [0.25])),
        10 ** 5,
        seed=3)
    assert res.activities['A']['duration_mean'] == pytest.approx(2 * math.exp(0.125), rel=0.02)
    assert res.makespan_quantiles['0.05'] < res.makespan_quantiles['0.5'] \
        < res.makespan_quantiles['0.95']


def test_monte_carlo_jobs(project):
    inst = project(n=15, seed=2)
    specs = specs_from_instance(inst)
    kw = dict(
        overhead=1.0, chunk_size=300, fixed=fixed_from_instance(inst, specs))
    dists = distributions_from_instance(inst, specs)
    a = monte_carlo_project(inst.graph, specs, dists, 1000, 5, jobs=1, **kw)
    b = monte_carlo_project(inst.graph, specs, dists, 1000, 5, jobs=3, **kw)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != monte_carlo_project(inst.graph, specs, dists, 1000, 6, **kw).to_dict()


def test_monte_carlo_jensen(project):
    for seed in range(5):
        inst = project(n=15, seed=seed)
        specs = specs_from_instance(inst)
        res = monte_carlo_project(
            inst.graph, specs, distributions_from_instance(inst, specs), 2000, seed,
            fixed=fixed_from_instance(inst, specs))
        assert res.makespan_mean >= compute_schedule(inst.graph, inst.t_est).makespan


def test_specs_from_instance(project):
    inst = project(n=10, seed=4)
    specs = specs_from_instance(inst)
    assert set(specs) == set(inst.graph.activity_ids)
    for i, aid in enumerate(inst.graph.activity_ids):
        spec = specs[aid]
        t, c = resource_time_cost(spec, np.ones(spec.size))
        assert aggregate_duration(t, spec.parallelism) == pytest.approx(inst.t_est[i])
        assert c.sum() == pytest.approx(inst.c_est[i])
        assert set(spec.resources) <= set(inst.graph.resource_ids)
    assert fixed_from_instance(inst, specs) == {}


def test_crash_params_from_instance(project):
    inst = project(n=5, seed=4)
    crash = crash_params_from_instance(inst)
    first = crash[inst.graph.activity_ids[0]]
    assert first.normal_duration == inst.t_est[0] and first.min_cost == inst.c_est[0]
    assert first.b == pytest.approx(2 / inst.t_est[0])

    extras = dict(crash_a=np.full(5, 3.0), crash_b=np.full(5, 0.5))
    crash = crash_params_from_instance(inst.replace(extras=extras))
    assert crash[inst.graph.activity_ids[0]].a == 3.0
