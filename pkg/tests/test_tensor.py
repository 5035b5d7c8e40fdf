import threading

import numpy as np
import pytest

from rbpredict import tensor as T
from rbpredict.errors import ShapeMismatch, NonScalarOutput, ValidationError
from rbpredict.util import rng


def arrays(*shapes, seed=1, low=-1.0, high=1.0):
    gen = rng(seed, 'tensor-test')
    return [gen.uniform(low, high, size=s) for s in shapes]


def test_backward():
    x = T.Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with T.Tape() as tape:
        y = T.tsum(T.square(x))
    tape.backward(y)
    assert x.grad.tolist() == [[2.0, 4.0, 6.0]]
    assert T.logsumexp([[0.0, 0.0]]).item() == pytest.approx(0.693147, abs=1e-6)


def test_no_tape():
    x = T.Tensor([[1.0]], requires_grad=True)
    y = T.square(x)
    assert y.node is None and y.value[0, 0] == 1


@pytest.mark.parametrize(
    'f,shapes',
    [
        (lambda a, b: T.tsum(T.matmul(a, b)), [(3, 4), (4, 2)]),
        (lambda a, b: T.tsum(T.mul(T.add(a, b), T.sub(a, b))), [(2, 3), (2, 3)]),
        (lambda a, r: T.tsum(T.square(T.add_row(a, r))), [(3, 2), (1, 2)]),
        (lambda a, r: T.tsum(T.square(T.mul_row(a, r))), [(3, 2), (1, 2)]),
        (lambda a: T.mean(T.elu(a)), [(3, 3)]),
        (lambda a: T.mean(T.gelu(a)), [(3, 3)]),
        (lambda a: T.tsum(T.tanh(a)), [(2, 2)]),
        (lambda a: T.tsum(T.sigmoid(a)), [(2, 2)]),
        (lambda a: T.tsum(T.exp(a)), [(2, 2)]),
        (lambda a: T.tsum(T.scale(T.add_scalar(a, 1.0), 3.0)), [(2, 2)]),
        (lambda a, b: T.tsum(T.square(T.concat_cols([a, b]))), [(2, 2), (2, 3)]),
        (lambda a, b: T.tsum(T.square(T.concat_rows([a, b]))), [(2, 2), (3, 2)]),
        (lambda a: T.tsum(T.square(T.slice_cols(a, 1, 3))), [(2, 4)]),
        (lambda a: T.tsum(T.square(T.gather_rows(a, [0, 2, 2]))), [(3, 2)]),
        (lambda a: T.tsum(T.mul(T.layer_norm(a), T.Tensor(np.arange(12.0).reshape(3, 4)))),
         [(3, 4)]),
        (lambda a: T.logsumexp(a, tau=5.0), [(2, 3)]),
    ]
)
def test_gradient_check(f, shapes):
    assert T.gradient_check(lambda args: f(*args), arrays(*shapes)) < 1e-5


def test_log_gradient():
    (a,) = arrays((2, 3), low=0.5, high=2.0)
    assert T.gradient_check(lambda args: T.tsum(T.log(args[0])), [a]) < 1e-6
    with pytest.raises(ValidationError):
        T.log([[0.0]])


@pytest.mark.parametrize('reduce', ['sum', 'mean', 'max'])
def test_scatter_rows(reduce):
    index = [0, 0, 2, 2, 2]
    (a,) = arrays((5, 3))
    assert T.gradient_check(
        lambda args: T.tsum(T.square(T.scatter_rows(args[0], index, 4, reduce=reduce))),
        [a]) < 1e-6
    out = T.scatter_rows(a, index, 4, reduce=reduce)
    assert (out.value[[1, 3]] == 0).all()


def test_scatter_mean_splits_gradient():
    x = T.Tensor(np.ones((3, 1)), requires_grad=True)
    with T.Tape() as tape:
        y = T.tsum(T.scatter_rows(x, [0, 0, 0], 1, reduce='mean'))
    tape.backward(y)
    assert x.grad.ravel().tolist() == pytest.approx([1 / 3] * 3)


def test_scatter_max_ties():
    x = T.Tensor(np.array([[1.0], [1.0], [0.5]]), requires_grad=True)
    with T.Tape() as tape:
        y = T.tsum(T.scatter_rows(x, [0, 0, 0], 1, reduce='max'))
    tape.backward(y)
    assert x.grad.ravel().tolist() == [1.0, 0.0, 0.0]
    with pytest.raises(ValidationError):
        T.scatter_rows(x, [0, 0, 0], 1, reduce='min')


def test_relu_kink():
    x = T.Tensor(np.array([[-1.0, 0.0, 2.0]]), requires_grad=True)
    with T.Tape() as tape:
        y = T.tsum(T.relu(x))
    tape.backward(y)
    assert x.grad.tolist() == [[0.0, 0.0, 1.0]]


def test_mlp_gradient_check():
    gen = rng(3, 'mlp')
    x = gen.standard_normal((5, 4))
    w1, w2 = 0.1 * gen.standard_normal((4, 8)), 0.1 * gen.standard_normal((8, 1))

    def f(args):
        h = T.tanh(T.matmul(x, args[0]))
        return T.mean(T.square(T.matmul(h, args[1])))

    assert T.gradient_check(f, [w1, w2]) < 1e-4


def test_gradient_check_special():
    (a,) = arrays((3, 3))
    A = a @ a.T + np.eye(3)
    (v,) = arrays((1, 3), seed=2)
    assert T.gradient_check(
        lambda args: T.tsum(T.mul(T.matmul(args[0], A), args[0])), [v]) < 1e-7
    assert T.gradient_check(lambda args: T.Tensor([[3.0]]), [v]) == 0
    with pytest.raises(NonScalarOutput):
        T.gradient_check(lambda args: args[0], [v])


def test_gradient_check_relu_kink():
    # At zero, the recorded relu gradient is 0 while central differences give 0.5.
    assert T.gradient_check(lambda args: T.tsum(T.relu(args[0])), [[[0.0, -1e-6, 1.0]]]) == 0


def test_gradient_check_single_entry():
    w = np.array([[1000.0, 1000.0], [1000.0, 0.01]])
    wrong = w.copy()
    wrong[1, 1] = 0.02

    def f(args):
        x = args[0]
        return T.op(np.array([[(w * x.value).sum()]]), (x,), lambda g: (g[0, 0] * wrong,))

    assert T.gradient_check(f, arrays((2, 2), seed=3)) > 0.3
    assert T.gradient_check(
        lambda args: T.tsum(T.mul(args[0], T.Tensor(w))), arrays((2, 2), seed=3)) < 1e-4


def test_logsumexp_empty():
    x = T.Tensor(np.zeros((0, 1)), requires_grad=True)
    with T.Tape() as tape:
        y = T.logsumexp(x, tau=10.0)
    assert y.item() == -np.inf
    tape.backward(y)
    assert x.grad.shape == (0, 1)


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        T.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeMismatch):
        T.add(np.ones((2, 3)), np.ones((3, 2)))
    with pytest.raises(ShapeMismatch):
        T.add_row(np.ones((2, 3)), np.ones((1, 2)))
    with pytest.raises(ShapeMismatch):
        T.concat_cols([np.ones((2, 3)), np.ones((3, 3))])
    with pytest.raises(ShapeMismatch):
        T.gather_rows(np.ones((2, 3)), [2])
    with pytest.raises(ShapeMismatch):
        T.Tensor(np.ones((2, 2, 2)))
    with pytest.raises(NonScalarOutput):
        T.Tensor(np.ones((2, 2))).item()


def test_deterministic_and_pure():
    a, b = arrays((4, 3), (3, 2))
    a0 = a.copy()

    def grads():
        x = T.Tensor(a, requires_grad=True)
        with T.Tape() as tape:
            y = T.logsumexp(T.matmul(x, b))
        tape.backward(y)
        return x.grad

    assert np.array_equal(grads(), grads())
    assert np.array_equal(a, a0)


def test_tape_per_thread():
    results = {}

    def work(k):
        x = T.Tensor([[float(k)]], requires_grad=True)
        with T.Tape() as tape:
            y = T.square(x)
        tape.backward(y)
        results[k] = x.grad[0, 0]

    threads = [threading.Thread(target=work, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == {k: 2.0 * k for k in range(8)}
