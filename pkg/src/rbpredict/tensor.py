"""
Dense-matrix reverse-mode automatic differentiation.

All values are 2-dimensional `float64` arrays; scalars have shape ``(1, 1)``. Operations are
plain functions. When called inside an active :class:`Tape` with at least one argument that
requires a gradient, the operation is recorded together with its vector-Jacobian product:

.. code-block:: python

    >>> import numpy as np
    >>> x = Tensor(np.array([[1.0, 2.0, 3.0]]), requires_grad=True)
    >>> with Tape() as tape:
    ...     y = tsum(square(x))
    >>> tape.backward(y)
    >>> x.grad.tolist()
    [[2.0, 4.0, 6.0]]

Tapes are confined to the thread which created them. Outside of a tape, operations only compute
values, so evaluation on shared tensors is thread-safe.
"""
import typing
import threading

import numpy as np

from rbpredict.errors import ShapeMismatch, NonScalarOutput, ValidationError

__all__ = [
    'Tensor', 'Tape', 'as_tensor', 'op', 'gradient_check',
    'matmul', 'add', 'sub', 'mul', 'add_row', 'mul_row', 'scale', 'add_scalar',
    'relu', 'elu', 'gelu', 'tanh', 'sigmoid', 'exp', 'log', 'square',
    'tsum', 'mean', 'concat_cols', 'concat_rows', 'slice_cols', 'gather_rows', 'scatter_rows',
    'logsumexp', 'layer_norm', 'ACTIVATIONS']

_local = threading.local()
ArrayLike = typing.Union['Tensor', np.ndarray, float, typing.Sequence]


class Tensor:
    __slots__ = ['value', 'grad', 'requires_grad', 'node']

    def __init__(self, value, requires_grad: bool = False):
        value = np.array(value, dtype=np.float64)
        if value.ndim == 0:
            value = value.reshape(1, 1)
        elif value.ndim == 1:
            value = value.reshape(1, -1)
        elif value.ndim != 2:
            raise ShapeMismatch('tensor', value.shape, '2 dimensions')
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        #: Position of the recording operation on the tape, `None` for leaves.
        self.node = None

    @property
    def shape(self) -> typing.Tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.shape != (1, 1):
            raise NonScalarOutput('Tensor of shape {} is not a scalar'.format(self.shape))
        return float(self.value[0, 0])

    def __repr__(self):
        return '<Tensor shape={}{}>'.format(self.shape, ' grad' if self.requires_grad else '')


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """
    Append-only record of operations; :meth:`backward` visits them once, in reverse order.
    """
    def __init__(self):
        self.nodes = []

    def __enter__(self):
        stack = getattr(_local, 'stack', None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        _local.stack.pop()

    @staticmethod
    def current() -> typing.Optional['Tape']:
        stack = getattr(_local, 'stack', None)
        return stack[-1] if stack else None

    def record(self, out: Tensor, parents: typing.Sequence[Tensor], vjp: typing.Callable):
        out.requires_grad = True
        out.node = len(self.nodes)
        self.nodes.append((out, parents, vjp))

    def backward(self, output: Tensor):
        """
        Accumulate d output / d leaf into the `grad` of every leaf requiring a gradient.
        """
        if output.shape != (1, 1):
            raise NonScalarOutput('backward needs a scalar, got shape {}'.format(output.shape))
        output.grad = np.ones((1, 1))
        for out, parents, vjp in reversed(self.nodes):
            if out.grad is None:
                continue
            for parent, g in zip(parents, vjp(out.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def op(value: np.ndarray, parents: typing.Sequence[Tensor], vjp: typing.Callable) -> Tensor:
    """
    Wrap `value` as the result of an operation on `parents`. `vjp` maps the gradient of the
    result to a sequence of gradients, one per parent (`None` for no contribution).
    """
    out = Tensor(value)
    tape = Tape.current()
    if tape is not None and any(p.requires_grad for p in parents):
        tape.record(out, parents, vjp)
    return out


def _same_shape(name, a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(name, b.shape, a.shape)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch('matmul', b.shape, (a.shape[1], '*'))
    av, bv = a.value, b.value
    return op(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape('add', a, b)
    return op(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape('sub', a, b)
    return op(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape('mul', a, b)
    av, bv = a.value, b.value
    return op(av * bv, (a, b), lambda g: (g * bv, g * av))


def add_row(a: ArrayLike, row: ArrayLike) -> Tensor:
    """Add a `(1, cols)` row to every row of `a`."""
    a, row = as_tensor(a), as_tensor(row)
    if row.shape != (1, a.shape[1]):
        raise ShapeMismatch('add_row', row.shape, (1, a.shape[1]))
    return op(a.value + row.value, (a, row), lambda g: (g, g.sum(axis=0, keepdims=True)))


def mul_row(a: ArrayLike, row: ArrayLike) -> Tensor:
    """Multiply every row of `a` elementwise with a `(1, cols)` row."""
    a, row = as_tensor(a), as_tensor(row)
    if row.shape != (1, a.shape[1]):
        raise ShapeMismatch('mul_row', row.shape, (1, a.shape[1]))
    av, rv = a.value, row.value
    return op(av * rv, (a, row), lambda g: (g * rv, (g * av).sum(axis=0, keepdims=True)))


def scale(a: ArrayLike, c: float) -> Tensor:
    a = as_tensor(a)
    return op(a.value * c, (a,), lambda g: (g * c,))


def add_scalar(a: ArrayLike, c: float) -> Tensor:
    a = as_tensor(a)
    return op(a.value + c, (a,), lambda g: (g,))


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0  # derivative 0 at 0
    return op(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def elu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    pos = a.value > 0
    e = np.exp(np.minimum(a.value, 0.0))
    return op(np.where(pos, a.value, e - 1.0), (a,), lambda g: (g * np.where(pos, 1.0, e),))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: ArrayLike) -> Tensor:
    """GELU, tanh approximation."""
    a = as_tensor(a)
    x = a.value
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * dinner),)

    return op(0.5 * x * (1.0 + t), (a,), vjp)


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.value)
    return op(t, (a,), lambda g: (g * (1.0 - t ** 2),))


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return op(s, (a,), lambda g: (g * s * (1.0 - s),))


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    e = np.exp(a.value)
    return op(e, (a,), lambda g: (g * e,))


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if np.any(a.value <= 0):
        raise ValidationError('log of non-positive value')
    av = a.value
    return op(np.log(av), (a,), lambda g: (g / av,))


def square(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    av = a.value
    return op(av ** 2, (a,), lambda g: (2.0 * g * av,))


def tsum(a: ArrayLike) -> Tensor:
    """Sum of all entries, as `(1, 1)` tensor."""
    a = as_tensor(a)
    shape = a.shape
    return op(a.value.sum().reshape(1, 1), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    shape, size = a.shape, a.value.size
    if size == 0:
        raise ShapeMismatch('mean', shape, 'non-empty')
    return op(
        a.value.mean().reshape(1, 1), (a,), lambda g: (np.full(shape, g[0, 0] / size),))


def concat_cols(tensors: typing.Sequence[ArrayLike]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    rows = tensors[0].shape[0]
    for t in tensors[1:]:
        if t.shape[0] != rows:
            raise ShapeMismatch('concat_cols', t.shape, (rows, '*'))
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])
    return op(
        np.hstack([t.value for t in tensors]),
        tensors,
        lambda g: [g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors))])


def concat_rows(tensors: typing.Sequence[ArrayLike]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    cols = tensors[0].shape[1]
    for t in tensors[1:]:
        if t.shape[1] != cols:
            raise ShapeMismatch('concat_rows', t.shape, ('*', cols))
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])
    return op(
        np.vstack([t.value for t in tensors]),
        tensors,
        lambda g: [g[bounds[i]:bounds[i + 1]] for i in range(len(tensors))])


def slice_cols(a: ArrayLike, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        res = np.zeros(shape)
        res[:, start:stop] = g
        return (res,)

    return op(a.value[:, start:stop], (a,), vjp)


def gather_rows(a: ArrayLike, index: typing.Sequence[int]) -> Tensor:
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    shape = a.shape
    if index.size and (index.min() < 0 or index.max() >= shape[0]):
        raise ShapeMismatch('gather_rows', (int(index.max()),), (shape[0], 'rows'))

    def vjp(g):
        res = np.zeros(shape)
        np.add.at(res, index, g)
        return (res,)

    return op(a.value[index], (a,), vjp)


def scatter_rows(a: ArrayLike, index: typing.Sequence[int], n_rows: int,
                 reduce: str = 'sum') -> Tensor:
    """
    Aggregate row `k` of `a` into output row `index[k]`.

    Output rows without contributions are 0. For `max`, each output entry routes its gradient
    to the contributing row with the lowest index among those attaining the maximum.
    """
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    if index.shape != (a.shape[0],):
        raise ShapeMismatch('scatter_rows', index.shape, (a.shape[0],))
    cols, shape = a.shape[1], a.shape
    av = a.value

    if reduce in ('sum', 'mean'):
        out = np.zeros((n_rows, cols))
        np.add.at(out, index, av)
        if reduce == 'sum':
            return op(out, (a,), lambda g: (g[index],))
        counts = np.bincount(index, minlength=n_rows).astype(float)
        denom = np.maximum(counts, 1.0)[:, None]
        return op(out / denom, (a,), lambda g: ((g / denom)[index],))

    if reduce != 'max':
        raise ValidationError('Unknown reduction {}'.format(reduce))
    out = np.full((n_rows, cols), -np.inf)
    np.maximum.at(out, index, av)
    rows = np.arange(shape[0])[:, None] * np.ones((1, cols), dtype=np.int64)
    candidates = np.where(av == out[index], rows, shape[0])
    winner = np.full((n_rows, cols), shape[0], dtype=np.int64)
    np.minimum.at(winner, index, candidates)
    empty = winner == shape[0]
    out[empty] = 0.0

    def vjp(g):
        res = np.zeros(shape)
        r, c = np.nonzero(~empty)
        np.add.at(res, (winner[r, c], c), g[r, c])
        return (res,)

    return op(out, (a,), vjp)


def logsumexp(a: ArrayLike, tau: float = 1.0) -> Tensor:
    """
    ``(1 / tau) * log(sum(exp(tau * a)))`` over all entries, a smooth upper bound of the max.
    An empty `a` gives ``-inf``, the log of an empty sum.

    .. code-block:: python

        >>> round(logsumexp([[0.0, 0.0]]).item(), 6)
        0.693147
    """
    a = as_tensor(a)
    if tau <= 0:
        raise ValidationError('tau must be positive')
    if a.value.size == 0:
        return op(np.array([[-np.inf]]), (a,), lambda g: (np.zeros(a.shape),))
    z = tau * a.value
    zmax = z.max()
    w = np.exp(z - zmax)
    total = w.sum()
    value = (zmax + np.log(total)) / tau
    return op(np.array([[value]]), (a,), lambda g: (g[0, 0] * w / total,))


def layer_norm(a: ArrayLike, eps: float = 1e-5) -> Tensor:
    """Row-wise normalisation to zero mean and unit variance (no gain or bias)."""
    a = as_tensor(a)
    x = a.value
    mu = x.mean(axis=1, keepdims=True)
    s = np.sqrt(x.var(axis=1, keepdims=True) + eps)
    xhat = (x - mu) / s

    def vjp(g):
        gm = g.mean(axis=1, keepdims=True)
        gx = (g * xhat).mean(axis=1, keepdims=True)
        return ((g - gm - xhat * gx) / s,)

    return op(xhat, (a,), vjp)


ACTIVATIONS = {
    'relu': relu,
    'elu': elu,
    'gelu': gelu,
    'tanh': tanh,
}


def gradient_check(f: typing.Callable[[typing.List[Tensor]], Tensor],
                   params: typing.Sequence[np.ndarray],
                   eps: float = 1e-5,
                   atol: float = 1e-8) -> float:
    """
    Compare the recorded gradient of the scalar function `f` with central differences.

    Entries of `params` closer than ``10 * eps`` to zero are moved to ``±10 * eps`` first, so
    that no ReLU kink of an input lies within the difference step.

    :param f: Function mapping a list of tensors (one per array in `params`) to a scalar tensor.
    :param params: The point at which to check.
    :param atol: Entries whose analytic and numeric gradients differ by at most `atol` count as \
    matching; below it, differences are round-off.
    :return: The maximum over all entries of ``|a - d| / (|a| + |d| + 1e-12)``, where `a` is the \
    analytic and `d` the central-difference gradient.
    :raises NonScalarOutput: if `f` does not return a `(1, 1)` tensor.
    """
    params = [np.array(p, dtype=np.float64).reshape(Tensor(p).shape) for p in params]
    params = [
        np.where(np.abs(p) < 10 * eps, np.where(p < 0, -10 * eps, 10 * eps), p) for p in params]
    leaves = [Tensor(p.copy(), requires_grad=True) for p in params]
    with Tape() as tape:
        out = f(leaves)
    if out.shape != (1, 1):
        raise NonScalarOutput('gradient_check needs a scalar function')
    tape.backward(out)

    def value_at(i, idx, delta):
        args = [Tensor(p) for p in params]
        args[i].value[idx] += delta
        return f(args).item()

    worst = 0.0
    for i, (p, leaf) in enumerate(zip(params, leaves)):
        analytic = leaf.grad if leaf.grad is not None else np.zeros(p.shape)
        numeric = np.zeros(p.shape)
        for idx in np.ndindex(*p.shape):
            numeric[idx] = (value_at(i, idx, eps) - value_at(i, idx, -eps)) / (2 * eps)
        diff = np.abs(analytic - numeric)
        err = np.where(diff <= atol, 0.0, diff / (np.abs(analytic) + np.abs(numeric) + 1e-12))
        worst = max(worst, float(err.max(initial=0.0)))
    return worst
