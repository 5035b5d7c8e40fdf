import math

import numpy as np
import pytest
from scipy import optimize

from rbpredict import tensor as T
from rbpredict.errors import MaskAllEmpty, InvalidConfig, CycleDetected
from rbpredict.gnn import PredictionSet
from rbpredict.graph import ProjectGraph, Edge, compute_schedule, enumerate_paths
from rbpredict.loss import *
from rbpredict.util import rng


def prediction_set(mu_t, logvar_t=None, mu_c=None, logvar_c=None):
    mu_t = np.asarray(mu_t, dtype=float).reshape(-1, 1)
    zeros = np.zeros_like(mu_t)
    return PredictionSet(
        tuple('a{}'.format(i) for i in range(len(mu_t))),
        T.Tensor(mu_t),
        T.Tensor(zeros if logvar_t is None else np.reshape(logvar_t, (-1, 1))),
        T.Tensor(mu_t if mu_c is None else np.reshape(mu_c, (-1, 1))),
        T.Tensor(zeros if logvar_c is None else np.reshape(logvar_c, (-1, 1))))


def test_nll_activity():
    preds = prediction_set([1.0, 2.0, 3.0])
    assert nll_activity(preds, Targets(np.array([1.0, 2, 3]), np.array([1.0, 2, 3]))).item() == 0
    targets = Targets(np.array([2.0, 3, 4]), np.array([2.0, 3, 4]))
    assert nll_activity(preds, targets).item() == pytest.approx(1.0)
    assert nll_activity(preds, targets, lambda_c=0.0).item() == pytest.approx(0.5)
    # Unlabeled activities do not count, the mean is over labeled ones.
    targets = Targets(np.array([2.0, 2, 3]), np.array([1.0, 2, 3]),
                      mask=np.array([True, True, False]))
    assert nll_activity(preds, targets).item() == pytest.approx(0.25)
    with pytest.raises(MaskAllEmpty):
        nll_activity(preds, Targets(targets.t, targets.c, mask=np.zeros(3, dtype=bool)))


def test_nll_variance_optimum():
    def f(logvar):
        preds = prediction_set([0.0], logvar_t=[logvar])
        return nll_activity(preds, Targets(np.array([2.0]), np.array([0.0])), lambda_c=0).item()

    res = optimize.minimize_scalar(f, bounds=(-5, 5), method='bounded', options=dict(xatol=1e-8))
    assert math.exp(res.x) == pytest.approx(4.0, rel=1e-5)


def test_soft_makespan():
    assert soft_makespan([[5.0]], ProjectGraph(['a']), 3.0).item() == pytest.approx(5.0)
    chain = ProjectGraph.from_edges('ABC', [('A', 'B'), ('B', 'C')])
    assert soft_makespan([[1.0], [2.0], [3.0]], chain, 1000).item() == \
        pytest.approx(6.0, abs=0.01)
    two = ProjectGraph(['a', 'b'])
    assert soft_makespan([[4.0], [4.0]], two, 1.0).item() == pytest.approx(4 + math.log(2))
    assert soft_cp_loss([[3.0]], ProjectGraph(['a']), 10.0, 5.0).item() == pytest.approx(4.0)
    assert soft_makespan(np.zeros((0, 1)), ProjectGraph([]), 50.0).item() == 0
    cyclic = ProjectGraph(['a', 'b'], edges=[
        Edge('a', 'b', 'precedence'), Edge('b', 'a', 'precedence')])
    with pytest.raises(CycleDetected):
        soft_makespan([[1.0], [1.0]], cyclic, 1.0)


@pytest.mark.parametrize('tau', [1, 10, 100, 1000])
def test_soft_makespan_bounds(project, tau):
    for seed in range(10):
        inst = project(n=15, seed=seed)
        mu = rng(seed, 'mu').uniform(0.5, 10, size=inst.graph.n_activities)
        exact = compute_schedule(inst.graph, mu).makespan
        soft = soft_makespan(mu.reshape(-1, 1), inst.graph, tau).item()
        assert exact - 1e-9 <= soft <= exact + math.log(inst.graph.n_activities) / tau + 1e-9


def test_soft_makespan_limit(project):
    for seed in range(5):
        inst = project(n=10, seed=seed)
        mu = rng(seed, 'mu').uniform(0.5, 10, size=inst.graph.n_activities)
        d = dict(zip(inst.graph.activity_ids, mu))
        longest = max(sum(d[a] for a in p) for p in enumerate_paths(inst.graph))
        assert soft_makespan(mu.reshape(-1, 1), inst.graph, 1000).item() == \
            pytest.approx(longest, abs=math.log(10) / 1000)


def test_soft_makespan_monotone(diamond):
    mu = np.array([[1.0], [3.0], [1.0], [1.0]])
    base = soft_makespan(mu, diamond, 2.0).item()
    for i in range(4):
        bumped = mu.copy()
        bumped[i] += 0.5
        assert soft_makespan(bumped, diamond, 2.0).item() >= base


def test_soft_makespan_gradient(diamond):
    mu = T.Tensor(np.array([[1.0], [3.0], [1.0], [1.0]]), requires_grad=True)
    with T.Tape() as tape:
        y = soft_makespan(mu, diamond, 10.0)
    tape.backward(y)
    g = mu.grad.ravel()
    # The source lies on every path, so it receives all of the softmax weight.
    assert g[0] == pytest.approx(1.0)
    assert g[1] > 0.9 and g[2] < 1e-3
    assert T.gradient_check(
        lambda args: soft_makespan(args[0], diamond, 10.0), [mu.value]) < 1e-6


def test_total_loss():
    gen = rng(1, 'loss')
    graph = ProjectGraph.from_edges('ABCD', [('A', 'B'), ('A', 'C'), ('B', 'D'), ('C', 'D')])
    preds = prediction_set(
        gen.uniform(1, 3, size=4), gen.normal(size=4), gen.uniform(1, 3, size=4),
        gen.normal(size=4))
    targets = Targets(gen.uniform(1, 3, size=4), gen.uniform(1, 3, size=4),
                      makespan=7.0, cost=10.0, overhead=1.0)
    weights = [T.Tensor(gen.normal(size=(3, 2)))]

    loss, parts = total_loss(preds, targets, graph, LossConfig(lambda_proj=0.0), weights)
    assert loss.item() == pytest.approx(nll_activity(preds, targets).item(), abs=1e-12)

    cfg = LossConfig(lambda_proj=0.3, lambda_reg=0.01, alpha_cost=0.4, alpha_cp=0.6)
    loss, parts = total_loss(preds, targets, graph, cfg, weights)
    assert sum(parts.values()) == pytest.approx(loss.item(), abs=1e-12)
    c_hat = preds.mean('cost').sum() + 1.0
    assert parts['cost'] == pytest.approx(0.3 * 0.4 * (c_hat - 10.0) ** 2)
    assert parts['regularization'] == pytest.approx(0.01 * (weights[0].value ** 2).sum())

    zero = [T.Tensor(np.zeros((3, 2)))]
    cfg = LossConfig(lambda_act=0.0, lambda_proj=0.0, lambda_reg=1.0)
    assert total_loss(preds, targets, graph, cfg, zero)[0].item() == 0


def test_total_loss_without_project_targets():
    preds = prediction_set([1.0, 2.0])
    _, parts = total_loss(
        preds, Targets(np.array([1.0, 2.0]), np.array([1.0, 2.0])), ProjectGraph(['a', 'b']),
        LossConfig())
    assert parts == dict(activity=0.0, cost=0.0, critical_path=0.0, regularization=0.0)


def test_targets_from_instance(project):
    inst = project()
    targets = targets_from_instance(inst)
    assert targets.makespan == inst.makespan_true()
    assert targets.cost == pytest.approx(inst.c_true.sum() + inst.overhead)
    assert len(targets.labeled()) == inst.graph.n_activities


@pytest.mark.parametrize('kw', [dict(lambda_act=-1), dict(alpha_cp=-0.1), dict(tau=0)])
def test_invalid_loss_config(kw):
    with pytest.raises(InvalidConfig):
        LossConfig(**kw).validate()
