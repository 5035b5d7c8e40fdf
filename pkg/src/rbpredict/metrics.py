"""
Accuracy, ranking and calibration metrics.

Accuracy metrics (MAE, RMSE, MAPE in percent, R², Spearman's rho) compare targets with point
predictions. Calibration metrics compare predicted standard deviations with realized errors:

- ECE: sort by predicted sigma, split into equal-frequency bins, average the gap between mean
  predicted sigma and RMSE per bin, weighted by bin size; reported in percent of ``mean(|y|)``.
- PI90 coverage: percent of targets in ``mu +- 1.645 sigma``, and the mean interval width.
"""
import math
import typing
import dataclasses

import numpy as np
from scipy import stats

from rbpredict.errors import LengthMismatch, TooFewSamples, ValidationError

__all__ = [
    'EPS', 'Z90', 'MetricsBundle', 'accuracy_metrics', 'calibration_metrics', 'metrics_bundle',
    'bin_edges', 'paired_one_sided']

#: Guard against division by zero in MAPE.
EPS = 1e-8
Z90 = 1.645


@dataclasses.dataclass
class MetricsBundle:
    mae: float
    rmse: float
    mape: float
    r2: float
    spearman: float
    ece: typing.Optional[float] = None
    pi90: typing.Optional[float] = None
    width: typing.Optional[float] = None
    n: int = 0

    def as_row(self, **keys) -> dict:
        """A flat dict, e.g. a row of a metrics CSV, prefixed with identifying `keys`."""
        res = dict(keys)
        res.update(dataclasses.asdict(self))
        return res


def _arrays(*arrays):
    res = [np.asarray(a, dtype=float).reshape(-1) for a in arrays]
    if len({a.size for a in res}) != 1:
        raise LengthMismatch('Arrays differ in length: {}'.format([a.size for a in res]))
    return res


def accuracy_metrics(y, y_hat) -> typing.Tuple[float, float, float, float, float]:
    """
    .. code-block:: python

        >>> mae, rmse, mape, r2, rho = accuracy_metrics([1, 2, 3], [2, 2, 2])
        >>> round(mae, 4), round(mape, 2), r2
        (0.6667, 44.44, 0.0)

    R² and Spearman's rho are `nan` if undefined (fewer than two values or constant targets).
    """
    y, y_hat = _arrays(y, y_hat)
    if not y.size:
        raise TooFewSamples('No values')
    err = y - y_hat
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err ** 2)))
    mape = float(100 * np.mean(np.abs(err) / (np.abs(y) + EPS)))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1 - float(np.sum(err ** 2)) / ss_tot if y.size >= 2 and ss_tot > 0 else math.nan
    rho = math.nan
    if y.size >= 2:
        ry, rh = stats.rankdata(y), stats.rankdata(y_hat)
        if np.std(ry) > 0 and np.std(rh) > 0:
            rho = float(np.corrcoef(ry, rh)[0, 1])
    return mae, rmse, mape, r2, rho


def bin_edges(n: int, bins: int) -> typing.List[typing.Tuple[int, int]]:
    """
    Equal-frequency bins over `n` sorted samples; the remainder goes to the last bin.

    >>> bin_edges(7, 3)
    [(0, 2), (2, 4), (4, 7)]
    """
    size = n // bins
    return [(k * size, (k + 1) * size if k < bins - 1 else n) for k in range(bins)]


def calibration_metrics(y_hat, sigma, y, bins: int = 10) -> typing.Tuple[float, float, float]:
    """
    :return: triple (ECE in percent, PI90 coverage in percent, mean PI90 width).
    :raises TooFewSamples: if there are fewer samples than bins.
    """
    y_hat, sigma, y = _arrays(y_hat, sigma, y)
    if y.size < bins:
        raise TooFewSamples('{} samples for {} bins'.format(y.size, bins))
    if np.any(sigma <= 0):
        raise ValidationError('Predicted standard deviations must be positive')
    # Stable sort keeps ties in input order, so equal sigmas fill the lower bin first.
    order = np.argsort(sigma, kind='stable')
    s, r = sigma[order], (y - y_hat)[order]
    ece = 0.0
    for lo, hi in bin_edges(y.size, bins):
        ece += (hi - lo) / y.size * abs(np.mean(s[lo:hi]) - np.sqrt(np.mean(r[lo:hi] ** 2)))
    scale = float(np.mean(np.abs(y)))
    ece = 100 * ece / scale if scale > 0 else 100 * ece
    inside = np.abs(y - y_hat) <= Z90 * sigma
    return float(ece), float(100 * inside.mean()), float(np.mean(2 * Z90 * sigma))


def metrics_bundle(y, y_hat, sigma=None, bins: int = 10) -> MetricsBundle:
    """Accuracy metrics plus, given `sigma` and enough samples, calibration metrics."""
    res = MetricsBundle(*accuracy_metrics(y, y_hat), n=int(np.size(y)))
    if sigma is not None and np.size(y) >= bins:
        res.ece, res.pi90, res.width = calibration_metrics(y_hat, sigma, y, bins=bins)
    return res


def paired_one_sided(a, b) -> typing.Tuple[float, float]:
    """
    Paired t-test of ``mean(a - b) < 0``.

    :return: pair (t statistic, one-sided p-value).
    """
    a, b = _arrays(a, b)
    if a.size < 2:
        raise TooFewSamples('A paired test needs at least two pairs')
    d = a - b
    if np.all(d == d[0]):
        # Zero variance: the sign of the constant difference decides.
        return (-math.inf, 0.0) if d[0] < 0 else (math.inf if d[0] > 0 else math.nan, 1.0)
    res = stats.ttest_rel(a, b, alternative='less')
    return float(res.statistic), float(res.pvalue)
