import math

import numpy as np
import pytest

from rbpredict.errors import LengthMismatch, TooFewSamples, ValidationError
from rbpredict.metrics import *
from rbpredict.util import rng


def test_accuracy_metrics():
    assert accuracy_metrics([1, 2, 3], [1, 2, 3]) == pytest.approx((0, 0, 0, 1, 1))
    mae, rmse, mape, r2, rho = accuracy_metrics([1, 2, 3], [2, 2, 2])
    assert mae == pytest.approx(2 / 3)
    assert rmse == pytest.approx(math.sqrt(2 / 3))
    assert mape == pytest.approx(100 / 3 * (1 + 1 / 3))
    assert r2 == 0 and math.isnan(rho)
    assert math.isnan(accuracy_metrics([2], [1])[3])
    assert math.isnan(accuracy_metrics([2, 2], [1, 3])[3])
    with pytest.raises(LengthMismatch):
        accuracy_metrics([1, 2], [1])
    with pytest.raises(TooFewSamples):
        accuracy_metrics([], [])


def test_accuracy_properties():
    gen = rng(1, 'metrics')
    for _ in range(20):
        y, y_hat = gen.normal(size=30), gen.normal(size=30)
        mae, rmse, _, r2, rho = accuracy_metrics(y, y_hat)
        assert mae <= rmse
        # Joint affine transforms leave R² alone, monotone transforms leave rho alone.
        assert accuracy_metrics(3 * y + 2, 3 * y_hat + 2)[3] == pytest.approx(r2)
        assert accuracy_metrics(np.exp(y), y_hat ** 3)[4] == pytest.approx(rho)
    # Ties get average ranks.
    assert accuracy_metrics([1, 2, 2, 3], [1, 2, 3, 4])[4] == pytest.approx(0.9486833)


def test_bin_edges():
    assert bin_edges(10, 10) == [(k, k + 1) for k in range(10)]
    assert bin_edges(23, 10)[-1] == (18, 23)


def test_calibration_constructed():
    # Constant sigma and residuals of +-sigma: every bin is perfectly calibrated.
    y_hat = np.zeros(40)
    y = np.tile([2.0, -2.0], 20)
    ece, cov, width = calibration_metrics(y_hat, np.full(40, 2.0), y)
    assert ece == 0
    assert cov == 100
    assert width == pytest.approx(4 * Z90)
    assert calibration_metrics(y_hat, np.full(40, 1.0), y)[1] == 0
    ece, cov, width = calibration_metrics(y_hat, np.full(40, 1e9), y)
    assert cov == 100 and width > 1e9


def test_calibration_monte_carlo():
    y = rng(1, 'calibration').standard_normal(100000)
    ece, cov, width = calibration_metrics(np.zeros_like(y), np.ones_like(y), y)
    assert cov == pytest.approx(90, abs=0.5)
    assert width == pytest.approx(2 * Z90)
    # ECE in percent of mean |y| = sqrt(2 / pi).
    assert 0 <= ece < 2


def test_calibration_coverage_monotone():
    gen = rng(2, 'coverage')
    y, y_hat, sigma = gen.normal(size=200), gen.normal(size=200), gen.uniform(0.5, 2, size=200)
    covs = [calibration_metrics(y_hat, s * sigma, y)[1] for s in [0.1, 0.5, 1, 2, 10]]
    assert covs == sorted(covs)


def test_calibration_errors():
    with pytest.raises(TooFewSamples):
        calibration_metrics([0.0] * 5, [1.0] * 5, [0.0] * 5)
    with pytest.raises(ValidationError):
        calibration_metrics([0.0] * 10, [0.0] * 10, [0.0] * 10)
    with pytest.raises(LengthMismatch):
        calibration_metrics([0.0] * 10, [1.0] * 9, [0.0] * 10)


def test_metrics_bundle():
    y = np.arange(1.0, 21.0)
    bundle = metrics_bundle(y, y + 0.5, np.full(20, 0.5))
    assert bundle.n == 20 and bundle.mae == pytest.approx(0.5)
    assert bundle.pi90 == 100 and bundle.ece == pytest.approx(0)
    assert metrics_bundle(y[:5], y[:5], np.ones(5)).ece is None
    row = bundle.as_row(model='ridge', head='duration')
    assert list(row)[:3] == ['model', 'head', 'mae']


def test_paired_one_sided():
    gen = rng(3, 'paired')
    b = gen.normal(size=20)
    t, p = paired_one_sided(b - 1.0 + 0.1 * gen.normal(size=20), b)
    assert t < 0 and p < 0.001
    t, p = paired_one_sided(b + 1.0 + 0.1 * gen.normal(size=20), b)
    assert t > 0 and p > 0.999
    assert paired_one_sided([1.0, 2.0], [2.0, 3.0]) == (-math.inf, 0.0)
    assert paired_one_sided([2.0, 3.0], [1.0, 2.0]) == (math.inf, 1.0)
    with pytest.raises(TooFewSamples):
        paired_one_sided([1.0], [2.0])
