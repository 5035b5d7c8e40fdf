import numpy as np
import pytest

from rbpredict.errors import InvalidConfig, RateOutOfRange, ValidationError
from rbpredict.graph import topological_sort
from rbpredict.synthgen import *
from rbpredict.synthgen import DEMAND_RANGE, T_FLOOR, C_FLOOR


def _pairs(inst):
    return {(e.src, e.dst) for e in inst.graph.edges_of('precedence')}


def test_generate_project(project):
    inst = project(n=20, p=4, seed=3)
    assert inst.n_activities == 20 and inst.graph.n_resources == 4
    assert topological_sort(inst.graph)
    assert DEMAND_RANGE[0] <= inst.demands.min() and inst.demands.max() <= DEMAND_RANGE[1]
    assert inst.t_true.min() >= T_FLOOR and inst.c_true.min() >= C_FLOOR
    ratio = inst.t_est / inst.t_true
    assert ratio.min() >= 0.8 and ratio.max() <= 1.2
    assert set(inst.activity_types) <= set(ACTIVITY_TYPES)
    assert inst.meta['seed'] == 3 and inst.meta['source'] == 'synthgen'
    assert len(inst.graph.edges_of('assignment')) == 80


def test_generate_project_deterministic(project):
    assert project(seed=5) == project(seed=5)
    assert project(seed=5) != project(seed=6)


def test_backbone():
    inst = generate_project(GenConfig(n=2, rho=0.01, seed=1))
    assert len(_pairs(inst)) == 1
    # Consecutive activities in topological order are always connected.
    for seed in range(10):
        inst = generate_project(GenConfig(n=15, rho=0.05, seed=seed))
        order = topological_sort(inst.graph)
        g = inst.graph
        assert all(g.reachable(g.index[u], g.index[v]) for u, v in zip(order, order[1:]))


def test_noise_free_targets():
    cfg = GenConfig(n=30, rho=0.2, sigma_t=0, sigma_c=0, est_band=(1, 1), seed=9)
    inst = generate_project(cfg)
    own = inst.demands.sum(axis=1)
    g = inst.graph
    pred = np.array([own[list(g.pred_index(i))].sum() for i in range(g.n_activities)])
    expected = np.maximum(0.7 * own + 0.2 * pred + 0.1 * g.in_degree, T_FLOOR)
    assert np.allclose(inst.t_true, expected, atol=1e-12)
    assert np.array_equal(inst.t_est, inst.t_true)

    X = np.column_stack([own, pred, g.in_degree])
    coef, *_ = np.linalg.lstsq(X, inst.t_true, rcond=None)
    assert np.allclose(coef, [0.7, 0.2, 0.1], atol=1e-6)
    X = np.column_stack([inst.t_true, own, inst.skill])
    coef, *_ = np.linalg.lstsq(X, inst.c_true, rcond=None)
    assert np.allclose(coef, [0.6, 0.3, 0.1], atol=1e-6)


def test_edge_count():
    n, rho, counts = 100, 0.1, []
    for seed in range(50):
        inst = generate_project(GenConfig(n=n, rho=rho, seed=seed))
        counts.append(len(_pairs(inst)) - len(inst.meta['backbone']))
    pairs = n * (n - 1) / 2
    mean, std = rho * pairs, np.sqrt(pairs * rho * (1 - rho))
    assert abs(np.mean(counts) - mean) <= 3 * std / np.sqrt(50)


@pytest.mark.parametrize(
    'kw',
    [dict(n=1), dict(rho=0), dict(rho=1), dict(p=0), dict(sigma_t=-1), dict(alpha=(1, 2)),
     dict(est_band=(0, 1)), dict(n_types=5)]
)
def test_GenConfig_invalid(kw):
    with pytest.raises(InvalidConfig):
        generate_project(GenConfig(**kw))


def test_generate_dataset():
    ds = generate_dataset(GenConfig(n=5, seed=2), 3)
    assert [i.name for i in ds] == ['synth-2-0000', 'synth-2-0001', 'synth-2-0002']
    assert len({i.meta['seed'] for i in ds}) == 3


def test_split_instances():
    train, val, test = split_instances(list(range(20)), 1)
    assert (len(train), len(val), len(test)) == (14, 3, 3)
    assert sorted(train + val + test) == list(range(20))
    assert split_instances(list(range(20)), 1) == (train, val, test)
    with pytest.raises(InvalidConfig):
        split_instances([1], 1, fractions=(0.5, 0.5, 0.5))


@pytest.mark.parametrize('kind', PERTURBATIONS)
def test_perturb_zero(project, kind):
    inst = project()
    assert perturb(inst, kind, 0.0, 1) == inst


def test_perturb_invalid(project):
    with pytest.raises(RateOutOfRange):
        perturb(project(), 'missingness', 1.5, 1)
    with pytest.raises(ValidationError):
        perturb(project(), 'unknown', 0.1, 1)


def test_perturb_missingness(project):
    inst = perturb(project(), 'missingness', 1.0, 1)
    assert inst.missing['demands'].all()
    assert (inst.demands == 0).all()
    assert np.array_equal(inst.t_true, project().t_true)


def test_perturb_feature_noise(project):
    inst, noisy = project(), perturb(project(), 'feature_noise', 0.3, 1)
    assert not np.array_equal(inst.demands, noisy.demands)
    assert noisy.demands.min() >= DEMAND_RANGE[0]
    assert noisy == perturb(project(), 'feature_noise', 0.3, 1)


def test_perturb_edge_drop():
    inst = generate_project(GenConfig(n=40, rho=0.25, seed=11))
    backbone = {tuple(e) for e in inst.meta['backbone']}
    droppable = len(_pairs(inst) - backbone)
    removed = []
    for seed in range(30):
        res = perturb(inst, 'edge_drop', 0.1, seed)
        assert backbone <= _pairs(res)
        removed.append(len(_pairs(inst)) - len(_pairs(res)))
    std = np.sqrt(droppable * 0.1 * 0.9)
    assert abs(np.mean(removed) - 0.1 * droppable) <= 3 * std / np.sqrt(30)


def test_perturb_edge_add(project):
    for seed in range(20):
        inst = project(n=15, seed=seed)
        res = perturb(inst, 'edge_add', 0.3, seed)
        assert _pairs(inst) <= _pairs(res)
        assert topological_sort(res.graph)


def test_perturb_all(project):
    inst = perturb_all(project(), [('edge_drop', 0.2), ('missingness', 0.1)], 3)
    assert inst.missing
    assert inst == perturb_all(project(), [('edge_drop', 0.2), ('missingness', 0.1)], 3)
