"""
Training objective.

``total = l_act * NLL + l_proj * (a1 * (C_hat - C)^2 + a2 * (M_soft - M)^2) + l_reg * |W|^2``

where `NLL` is the Gaussian negative log-likelihood of the activity targets (mean over labeled
activities), ``C_hat`` the predicted project cost, `M` the true makespan and ``M_soft`` the soft
makespan: the log-sum-exp with temperature `tau` of the earliest finish times computed from the
predicted durations. ``M_soft`` lies between the predicted makespan and the predicted makespan plus
``log(n) / tau``; it replaces the log-sum-exp over all source-sink paths, which is intractable
for larger networks and has the same limit for ``tau -> inf``.
"""
import typing
import dataclasses

import numpy as np

from rbpredict import tensor as T
from rbpredict.errors import InvalidConfig, MaskAllEmpty
from rbpredict.graph import ProjectGraph

__all__ = [
    'LossConfig', 'Targets', 'nll_activity', 'earliest_finish', 'soft_makespan', 'soft_cp_loss',
    'total_loss', 'targets_from_instance']


@dataclasses.dataclass
class LossConfig:
    #: Weight of the activity NLL.
    lambda_act: float = 1.0
    #: Weight of the project-level terms.
    lambda_proj: float = 0.1
    #: Weight of the L2 penalty; 0 by default since the optimizer applies weight decay.
    lambda_reg: float = 0.0
    #: Weight of the project cost error within the project-level terms.
    alpha_cost: float = 0.5
    #: Weight of the soft critical path error within the project-level terms.
    alpha_cp: float = 0.5
    #: Soft makespan temperature.
    tau: float = 10.0
    #: Weights of the duration and cost heads within the NLL.
    lambda_t: float = 1.0
    lambda_c: float = 1.0

    def validate(self):
        weights = [self.lambda_act, self.lambda_proj, self.lambda_reg, self.alpha_cost,
                   self.alpha_cp, self.lambda_t, self.lambda_c]
        if any(w < 0 for w in weights):
            raise InvalidConfig('Loss weights must be non-negative')
        if not self.tau > 0:
            raise InvalidConfig('tau must be positive')


@dataclasses.dataclass
class Targets:
    t: np.ndarray
    c: np.ndarray
    #: Which activities are labeled; all if `None`.
    mask: typing.Optional[np.ndarray] = None
    #: Project targets; the corresponding loss terms are skipped if `None`.
    makespan: typing.Optional[float] = None
    cost: typing.Optional[float] = None
    overhead: float = 0.0

    def labeled(self) -> np.ndarray:
        if self.mask is None:
            return np.arange(len(self.t))
        return np.flatnonzero(self.mask)


def targets_from_instance(instance, mask=None) -> Targets:
    """Activity and project targets of a labeled instance."""
    return Targets(
        t=instance.t_true,
        c=instance.c_true,
        mask=mask,
        makespan=instance.makespan_true(),
        cost=instance.cost_true(),
        overhead=instance.overhead)


def _gaussian_nll(mu: T.Tensor, logvar: T.Tensor, y: np.ndarray) -> T.Tensor:
    r2 = T.square(T.sub(mu, T.Tensor(y.reshape(-1, 1))))
    return T.add(T.scale(T.mul(r2, T.exp(T.scale(logvar, -1.0))), 0.5), T.scale(logvar, 0.5))


def nll_activity(preds, targets: Targets, lambda_t: float = 1.0, lambda_c: float = 1.0):
    """
    ``mean_i [l_t * ((y_T - mu_T)^2 / (2 s2_T) + log(s2_T) / 2) + l_c * (...)_C]`` over the labeled
    activities `i`.

    :raises MaskAllEmpty: if no activity is labeled.
    """
    idx = targets.labeled()
    if not len(idx):
        raise MaskAllEmpty('No labeled activities')
    per_activity = T.add(
        T.scale(_gaussian_nll(
            T.gather_rows(preds.mu_t, idx), T.gather_rows(preds.logvar_t, idx),
            np.asarray(targets.t, dtype=float)[idx]), lambda_t),
        T.scale(_gaussian_nll(
            T.gather_rows(preds.mu_c, idx), T.gather_rows(preds.logvar_c, idx),
            np.asarray(targets.c, dtype=float)[idx]), lambda_c))
    return T.mean(per_activity)


def earliest_finish(mu, graph: ProjectGraph) -> T.Tensor:
    """
    Earliest finish times ``F_v = mu_v + max_{u in pred(v)} F_u`` as differentiable function of
    the durations `mu` (shape `(n, 1)`). The gradient follows the maximising predecessor, the one
    with the smallest id among ties.
    """
    mu = T.as_tensor(mu)
    d = mu.value[:, 0]
    order = graph.order()
    finish, argpred = np.zeros(len(d)), np.full(len(d), -1)
    for v in order:
        preds = graph.pred_index(v)
        start = 0.0
        if preds:
            k = int(np.argmax([finish[u] for u in preds]))
            argpred[v], start = preds[k], finish[preds[k]]
        finish[v] = start + d[v]

    def vjp(g):
        gf = g[:, 0].copy()
        for v in reversed(order):
            if argpred[v] >= 0:
                gf[argpred[v]] += gf[v]
        return (gf.reshape(-1, 1),)

    return T.op(finish.reshape(-1, 1), (mu,), vjp)


def soft_makespan(mu, graph: ProjectGraph, tau: float) -> T.Tensor:
    """
    The log-sum-exp of the earliest finish times; 0 for a project without activities.

    .. code-block:: python

        >>> from rbpredict.graph import ProjectGraph
        >>> g = ProjectGraph(['a', 'b'])
        >>> round(soft_makespan([[4.0], [4.0]], g, 1.0).item(), 6)
        4.693147

    :raises CycleDetected: if the precedence relation is cyclic.
    """
    if graph.n_activities == 0:
        return T.Tensor([[0.0]])
    return T.logsumexp(earliest_finish(mu, graph), tau)


def soft_cp_loss(mu, graph: ProjectGraph, tau: float, makespan: float) -> T.Tensor:
    return T.square(T.add_scalar(soft_makespan(mu, graph, tau), -float(makespan)))


def total_loss(preds,
               targets: Targets,
               graph: ProjectGraph,
               config: LossConfig,
               weights: typing.Sequence[T.Tensor] = ()
               ) -> typing.Tuple[T.Tensor, typing.Dict[str, float]]:
    """
    :param weights: Parameter tensors entering the L2 penalty.
    :return: The loss and its weighted components `activity`, `cost`, `critical_path` and \
    `regularization`, which sum to the loss.
    """
    parts = [('activity', T.scale(
        nll_activity(preds, targets, config.lambda_t, config.lambda_c), config.lambda_act))]
    if targets.cost is not None:
        c_hat = T.add_scalar(T.tsum(preds.mu_c), targets.overhead)
        parts.append(('cost', T.scale(
            T.square(T.add_scalar(c_hat, -float(targets.cost))),
            config.lambda_proj * config.alpha_cost)))
    if targets.makespan is not None:
        parts.append(('critical_path', T.scale(
            soft_cp_loss(preds.mu_t, graph, config.tau, targets.makespan),
            config.lambda_proj * config.alpha_cp)))
    if config.lambda_reg > 0 and weights:
        reg = T.tsum(T.concat_cols([T.tsum(T.square(w)) for w in weights]))
        parts.append(('regularization', T.scale(reg, config.lambda_reg)))
    total = parts[0][1]
    for _, p in parts[1:]:
        total = T.add(total, p)
    breakdown = {k: 0.0 for k in ['activity', 'cost', 'critical_path', 'regularization']}
    breakdown.update((k, p.item()) for k, p in parts)
    return total, breakdown
