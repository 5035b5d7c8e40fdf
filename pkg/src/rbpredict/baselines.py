"""
Graph-agnostic reference models.

- Ridge regression on the activity feature matrix, fit in closed form, one model per head. Its
  predictive standard deviation is the residual standard deviation on the training data, so
  calibration metrics apply to it as to the graph models.
- The MLP baseline is the graph model with zero message passing layers, see :func:`mlp_config`.
"""
import math
import typing
import pathlib
import dataclasses

import numpy as np
from scipy import linalg

from rbpredict import tensor as T
from rbpredict.errors import SingularSystem, ValidationError, EmptyTrainingSet
from rbpredict.gnn import (
    ModelConfig, ModelParams, PredictionSet, HEADS, CHECKPOINT_FORMAT, load_checkpoint,
)
from rbpredict.ingest.preprocess import PreprocessStats, feature_matrix
from rbpredict.instance import ProjectInstance
from rbpredict.metrics import accuracy_metrics
from rbpredict.util import dump_json, read_json

__all__ = [
    'RIDGE_GRID', 'ridge_fit', 'ridge_predict', 'RidgeModel', 'fit_ridge_model', 'select_ridge',
    'mlp_config', 'save_ridge_checkpoint', 'load_model']

RIDGE_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)


def _with_intercept(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    X = X.reshape(len(X), -1)
    return np.hstack([X, np.ones((len(X), 1))])


def ridge_fit(X, y, lam: float) -> np.ndarray:
    """
    Solve ``(X'X + lam D) w = X'y`` for ``X`` with an appended intercept column, where ``D`` is
    the identity with a zero for the intercept.

    :return: Weights, the intercept last.
    :raises SingularSystem: if the system is singular (only possible for ``lam = 0``).

    .. code-block:: python

        >>> [round(float(w), 9) for w in ridge_fit([[0.0], [1.0], [2.0]], [1.0, 3.0, 5.0], 0.0)]
        [2.0, 1.0]
    """
    if lam < 0:
        raise ValidationError('lam must be non-negative')
    X, y = _with_intercept(X), np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise ValidationError('X has {} rows, y {} values'.format(X.shape[0], y.size))
    penalty = lam * np.eye(X.shape[1])
    penalty[-1, -1] = 0.0
    A = X.T @ X + penalty
    if np.linalg.matrix_rank(A) < A.shape[0]:
        raise SingularSystem('Normal equations are singular; use lam > 0')
    try:
        return linalg.solve(A, X.T @ y, assume_a='pos')
    except linalg.LinAlgError as e:
        raise SingularSystem(str(e))


def ridge_predict(weights, X) -> np.ndarray:
    return _with_intercept(X) @ np.asarray(weights, dtype=float)


@dataclasses.dataclass
class RidgeModel:
    lam: float
    #: Weights per head, intercept last.
    weights: typing.Dict[str, np.ndarray]
    #: Residual standard deviation per head on the training data.
    sigma: typing.Dict[str, float]

    def predict(self,
                instance: ProjectInstance,
                stats: typing.Optional[PreprocessStats] = None) -> PredictionSet:
        """Predictions in the layout of the graph models, with constant variance per head."""
        X = feature_matrix(instance, stats)
        out = []
        for head in HEADS:
            mu = ridge_predict(self.weights[head], X).reshape(-1, 1)
            out.extend([
                T.Tensor(mu),
                T.Tensor(np.full_like(mu, 2 * math.log(max(self.sigma[head], 1e-6))))])
        return PredictionSet(instance.graph.activity_ids, *out)

    def to_dict(self) -> dict:
        return dict(
            lam=self.lam,
            weights={k: v.tolist() for k, v in self.weights.items()},
            sigma=dict(self.sigma))

    @classmethod
    def from_dict(cls, d: dict) -> 'RidgeModel':
        return cls(
            d['lam'],
            {k: np.array(v, dtype=float) for k, v in d['weights'].items()},
            {k: float(v) for k, v in d['sigma'].items()})


def _stack(instances, stats):
    if not instances:
        raise EmptyTrainingSet('No instances')
    X = np.vstack([feature_matrix(i, stats) for i in instances])
    y = dict(
        duration=np.concatenate([i.t_true for i in instances]),
        cost=np.concatenate([i.c_true for i in instances]))
    return X, y


def fit_ridge_model(instances: typing.Sequence[ProjectInstance],
                    lam: float,
                    stats: typing.Optional[PreprocessStats] = None) -> RidgeModel:
    X, y = _stack(instances, stats)
    weights, sigma = {}, {}
    for head in HEADS:
        weights[head] = ridge_fit(X, y[head], lam)
        sigma[head] = float(np.std(y[head] - ridge_predict(weights[head], X)))
    return RidgeModel(lam, weights, sigma)


def select_ridge(train: typing.Sequence[ProjectInstance],
                 val: typing.Sequence[ProjectInstance],
                 stats: typing.Optional[PreprocessStats] = None,
                 grid: typing.Sequence[float] = RIDGE_GRID,
                 log=None) -> RidgeModel:
    """
    Fit a ridge model per `lam` in `grid` and return the one with the lowest validation RMSE of
    the duration head (the smaller `lam` on ties).
    """
    X_val, y_val = _stack(val, stats)
    best, best_rmse = None, math.inf
    for lam in sorted(grid):
        model = fit_ridge_model(train, lam, stats)
        y_hat = ridge_predict(model.weights['duration'], X_val)
        rmse = accuracy_metrics(y_val['duration'], y_hat)[1]
        if log:
            log.debug('ridge lam={}: val RMSE {:.4f}'.format(lam, rmse))
        if rmse < best_rmse:
            best, best_rmse = model, rmse
    return best


def mlp_config(**kw) -> ModelConfig:
    """The MLP baseline: no message passing, heads with hidden sizes 256 and 128."""
    kw.setdefault('head_hidden', (256, 128))
    return ModelConfig(layers=0, **kw)


def save_ridge_checkpoint(model: RidgeModel,
                          p: typing.Union[str, pathlib.Path],
                          preprocess: typing.Optional[PreprocessStats] = None,
                          seed: int = 0,
                          **meta) -> pathlib.Path:
    """Write a ridge model in the checkpoint format of the graph models."""
    p = pathlib.Path(p)
    dump_json(dict(
        format=CHECKPOINT_FORMAT,
        model='ridge',
        ridge=model.to_dict(),
        seed=seed,
        preprocess=preprocess.to_dict() if preprocess is not None else None,
        meta=meta,
    ), p)
    return p


def load_model(p: typing.Union[str, pathlib.Path]
               ) -> typing.Tuple[typing.Union[ModelParams, RidgeModel], dict]:
    """
    Load a graph model or ridge checkpoint.

    :return: The model and the full checkpoint document.
    :raises VersionMismatch: if the file is not a checkpoint of a known format.
    """
    doc = read_json(p)
    if doc.get('format') == CHECKPOINT_FORMAT and doc.get('model') == 'ridge':
        return RidgeModel.from_dict(doc['ridge']), doc
    return load_checkpoint(p)
