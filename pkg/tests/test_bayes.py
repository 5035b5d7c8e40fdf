import logging

import numpy as np
import pytest

from rbpredict.bayes import *
from rbpredict.errors import (
    InvalidConfig, ValidationError, VarianceUnderflow, SingularInnovation,
)
from rbpredict.rbm import ActivityWorkSpec, resource_time_cost, aggregate_duration
from rbpredict.util import rng


def test_exp_update_constant():
    post = ResourcePosterior(mean=1.0, variance=0.2, rule='constant', alpha=0.0)
    res = exp_update(post, 3.0, 0.5)
    assert (res.mean, res.variance, res.n) == (1.0, 0.2, 1)
    res = exp_update(ResourcePosterior(mean=1.0, variance=0.2, rule='constant', alpha=1.0),
                     3.0, 0.5)
    assert (res.mean, res.variance) == (3.0, 0.5)
    # Geometric convergence at rate 1 - alpha.
    post = ResourcePosterior(mean=0.0, variance=0.2, rule='constant', alpha=0.3)
    for k in range(1, 6):
        post = exp_update(post, 2.0, 0.1)
        assert abs(post.mean - 2.0) == pytest.approx(2.0 * 0.7 ** k)


def test_exp_update_sample_average():
    ys = [1.2, 0.8, 1.5, 0.9, 1.1]
    post = ResourcePosterior(rule='sample_average')
    for k, y in enumerate(ys, start=1):
        post = exp_update(post, y, 0.01)
        assert post.mean == pytest.approx(np.mean(ys[:k]))
    assert post.n == 5


def test_exp_update_adaptive():
    post = ResourcePosterior(mean=1.0, variance=0.25, obs_noise=0.01)
    assert update_weight(post, 0) == pytest.approx(0.25 / 0.26)
    assert update_weight(post, 0, n_obs=10) == pytest.approx(0.25 / 0.251)
    res = exp_update(post, 2.0, 0.0)
    assert res.mean == pytest.approx(1.0 + 0.25 / 0.26)
    assert 0 < res.variance < post.variance


def test_variance_floor(caplog):
    post = ResourcePosterior(rule='constant', alpha=1.0)
    with caplog.at_level(logging.WARNING):
        res = exp_update(post, 1.0, 0.0, log=logging.getLogger(__name__))
    assert res.variance == VARIANCE_FLOOR
    assert 'floored' in caplog.text
    with pytest.raises(VarianceUnderflow):
        exp_update(post, 1.0, 0.0, strict=True)


def test_posterior_errors():
    with pytest.raises(InvalidConfig):
        ResourcePosterior(rule='bayes')
    with pytest.raises(InvalidConfig):
        ResourcePosterior(rule='constant', alpha=1.5)
    with pytest.raises(ValidationError):
        ResourcePosterior(variance=0.0)
    with pytest.raises(ValidationError):
        exp_update(ResourcePosterior(), 1.0, -0.1)


def test_exp_update_stress():
    gen = rng(1, 'stress')
    posts = [ResourcePosterior(rule=rule) for rule in RULES]
    for _ in range(10000):
        y, v = gen.lognormal(0, 0.5), gen.exponential(0.1)
        posts = [exp_update(p, y, v, n_obs=int(gen.integers(1, 5))) for p in posts]
    for p in posts:
        assert np.isfinite(p.mean) and p.mean > 0 and p.variance > 0


def test_kalman_scalar():
    state = kalman_update(KalmanState([1.0], [[1.0]], noise=[[1.0]]), [2.0])
    assert state.mean.tolist() == [1.5] and state.cov.tolist() == [[0.5]]
    state = kalman_update(KalmanState([1.0], [[1.0]], noise=[[1e12]]), [2.0])
    assert state.mean[0] == pytest.approx(1.0, abs=1e-9)
    assert state.cov[0, 0] == pytest.approx(1.0, abs=1e-9)


def test_kalman_convergence():
    gen, hits = rng(5, 'kalman'), 0
    for _ in range(200):
        state = KalmanState([1.0], [[1.0]], noise=[[0.1]])
        for y in gen.normal(1.3, np.sqrt(0.1), size=50):
            state = kalman_update(state, [y])
        hits += abs(state.mean[0] - 1.3) < 3 * np.sqrt(state.cov[0, 0])
    assert hits >= 190


def test_kalman_covariance():
    gen = rng(2, 'cov')
    for _ in range(50):
        a = gen.normal(size=(3, 3))
        state = KalmanState(gen.normal(size=3), a @ a.T + 0.1 * np.eye(3),
                            noise=np.diag(gen.uniform(0.1, 1, size=3)))
        assert state.validate()
        new = kalman_update(state, gen.normal(size=3))
        assert new.validate()
        assert (np.diag(new.cov) <= np.diag(state.cov) + 1e-12).all()
    assert not KalmanState([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]], noise=np.eye(2)).validate()
    assert not KalmanState([0.0], [[-1.0]], noise=[[1.0]]).validate()


def test_kalman_observation_model():
    # One observation of the sum of two efficiencies.
    state = KalmanState([1.0, 1.0], np.eye(2), noise=[[1.0]], H=[[1.0, 1.0]])
    new = kalman_update(state, [3.0])
    assert new.mean.tolist() == pytest.approx([4 / 3, 4 / 3])
    assert new.cov[0, 1] < 0
    with pytest.raises(SingularInnovation):
        kalman_update(KalmanState([1.0], [[0.0]], noise=[[0.0]]), [1.0])


def test_observed_efficiencies():
    spec = ActivityWorkSpec([10.0, 6.0], [2.0, 3.0], [1.0, 1.0], parallelism=0.5)
    r = observed_efficiencies(spec, 3.0)
    assert r.tolist() == [2.0, 2.0]
    t, _ = resource_time_cost(spec, r)
    assert aggregate_duration(t, spec.parallelism) == pytest.approx(3.0)
    with pytest.raises(ValidationError):
        observed_efficiencies(spec, 0.0)


def test_update_posteriors():
    posts = dict(R1=ResourcePosterior(), R2=ResourcePosterior(mean=0.8))
    res = update_posteriors(posts, dict(R1=[1.2, 1.4], R2=[], R3=[2.0]))
    assert set(res) == {'R1', 'R2'}
    assert res['R2'] is posts['R2']
    assert posts['R1'].mean < res['R1'].mean < 1.3
    assert res['R1'].n == 1
    assert res['R1'].distribution().family == 'lognormal'


@pytest.mark.slow
def test_kalman_convergence_many():
    gen, hits = rng(6, 'kalman'), 0
    for _ in range(1000):
        truth = gen.normal(1.0, 0.3)
        state = KalmanState([1.0], [[0.09]], noise=[[0.1]])
        for y in gen.normal(truth, np.sqrt(0.1), size=50):
            state = kalman_update(state, [y])
        hits += abs(state.mean[0] - truth) < 3 * np.sqrt(state.cov[0, 0])
    assert hits >= 950
