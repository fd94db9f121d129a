"""Finite-difference gradient cases, one per differentiable op.

Each case builds random inputs from a seed and a function mapping input
tensors to an output tensor; the loss is a fixed random projection of that
output so every output element contributes a distinct weight.
"""

import numpy as np

from gcrnn import tensor as T
from oracles import max_rel_error, numeric_grad

EPS = 1e-5


def _bn_train(x, g, b):
    return T.batch_norm(x, g, b, np.zeros(g.shape[0]), np.ones(g.shape[0]), training=True)


def _bn_infer(x, g, b):
    return T.batch_norm(x, g, b, np.full(g.shape[0], 0.3), np.full(g.shape[0], 1.7), training=False)


def _spread(rng, shape):
    # distinct, well-separated values so max-pool argmax cannot flip within eps
    n = int(np.prod(shape))
    return (rng.permutation(n) * 0.1 + rng.uniform(0, 0.01, n)).reshape(shape) - 0.05 * n


def _away_from_zero(rng, shape):
    # relu has a kink at 0; keep inputs at least 0.1 away from it
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.1, 2.0, size=shape)


def _bigru(x, *p):
    return T.bigru_forward(x, list(p[:4]), list(p[4:]))


def _gru_params(n):
    return [n(scale=0.5, size=(3, 6)), n(scale=0.5, size=(2, 6)), n(size=(6,)), n(size=(6,))]


def cases(rng):
    n = rng.normal
    return {
        "add": (lambda a, b: a + b, [n(size=(3, 4)), n(size=(4,))]),
        "sub": (lambda a, b: a - b, [n(size=(3, 4)), n(size=(3, 1))]),
        "mul": (lambda a, b: a * b, [n(size=(3, 4)), n(size=(3, 4))]),
        "div": (lambda a, b: a / b, [n(size=(3, 4)), rng.uniform(0.5, 2.0, size=(1, 4))]),
        "neg": (lambda a: -a, [n(size=(3, 4))]),
        "relu": (T.relu, [_away_from_zero(rng, (3, 5))]),
        "sigmoid": (T.sigmoid, [n(size=(3, 5))]),
        "tanh": (T.tanh, [n(size=(3, 5))]),
        "exp": (T.exp, [n(size=(4,))]),
        "log": (T.log, [rng.uniform(0.5, 2.0, size=(4,))]),
        "clip": (lambda a: T.clip(a, -0.5, 0.5), [n(size=(6,))]),
        "matmul": (T.matmul, [n(size=(3, 4)), n(size=(4, 2))]),
        "linear": (T.linear, [n(size=(2, 3, 4)), n(size=(4, 5)), n(size=(5,))]),
        "softmax": (lambda a: T.softmax(a, axis=0), [n(size=(5, 3))]),
        "sum": (lambda a: T.tsum(a, axis=1), [n(size=(3, 4))]),
        "mean": (lambda a: T.mean(a, axis=(0, 2)), [n(size=(2, 3, 4))]),
        "reshape_transpose": (lambda a: T.transpose(T.reshape(a, (4, 3)), (1, 0)), [n(size=(3, 4))]),
        "getitem": (lambda a: a[1:, ::2], [n(size=(3, 4))]),
        "concat_stack": (lambda a, b: T.stack([T.concat([a, b], axis=1), T.concat([b, a], axis=1)]), [n(size=(2, 2)), n(size=(2, 2))]),
        "flip": (lambda a: T.flip(a, axis=0) * T.Tensor(np.arange(6.0).reshape(3, 2)), [n(size=(3, 2))]),
        "conv2d_same": (lambda x, w, b: T.conv2d(x, w, b, padding="same"), [n(size=(2, 2, 4, 5)), n(size=(3, 2, 3, 3)), n(size=(3,))]),
        "conv2d_valid": (lambda x, w, b: T.conv2d(x, w, b, padding="valid"), [n(size=(1, 2, 5, 4)), n(size=(2, 2, 2, 3)), n(size=(2,))]),
        "max_pool2d": (lambda x: T.max_pool2d(x, (2, 2)), [_spread(rng, (1, 2, 5, 4))]),
        "batch_norm_train": (_bn_train, [n(size=(4, 2, 3, 2)), n(size=(2,)), n(size=(2,))]),
        "batch_norm_infer": (_bn_infer, [n(size=(4, 2, 3)), n(size=(2,)), n(size=(2,))]),
        "gru_fwd": (lambda x, a, b, c, d: T.gru_forward(x, a, b, c, d, "fwd"),
                    [n(size=(4, 2, 3)), n(scale=0.5, size=(3, 6)), n(scale=0.5, size=(2, 6)), n(size=(6,)), n(size=(6,))]),
        "gru_bwd": (lambda x, a, b, c, d: T.gru_forward(x, a, b, c, d, "bwd"),
                    [n(size=(4, 2, 3)), n(scale=0.5, size=(3, 6)), n(scale=0.5, size=(2, 6)), n(size=(6,)), n(size=(6,))]),
        "bigru": (_bigru, [n(size=(3, 2, 3)), *_gru_params(n), *_gru_params(n)]),
        "attention_pool": (_attention, [rng.uniform(0.1, 0.9, size=(2, 5, 3)), n(size=(2, 5, 3))]),
        "bce_loss": (_bce, [rng.uniform(0.05, 0.95, size=(3, 4))]),
    }


def _attention(p, logits):
    from gcrnn.model import attention_pool

    return attention_pool(p, T.softmax(logits, axis=1), axis=1)


_BCE_TARGET = np.array([[1, 0, 0, 1], [0, 1, 1, 0], [1, 1, 0, 0]], dtype=float)


def _bce(p):
    from gcrnn.training import bce_loss

    return bce_loss(p, _BCE_TARGET)


def check_case(fn, arrays, rng):
    """Return the max relative error over all inputs of one case."""
    arrays = [np.array(a, dtype=float) for a in arrays]
    out_shape = fn(*[T.Tensor(a) for a in arrays]).shape
    proj = rng.normal(size=out_shape)

    def loss_value():
        with T.no_grad():
            return float((fn(*[T.Tensor(a) for a in arrays]).data * proj).sum())

    params = [T.parameter(a) for a in arrays]
    loss = T.tsum(fn(*params) * T.Tensor(proj))
    T.backward(loss)
    worst = 0.0
    for p, a in zip(params, arrays):
        numeric = numeric_grad(loss_value, a, eps=EPS)
        worst = max(worst, max_rel_error(p.grad, numeric))
    return worst


def run_suite(seeds):
    """Max relative error per op over the given seeds."""
    result = {}
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for name, (fn, arrays) in cases(rng).items():
            result[name] = max(result.get(name, 0.0), check_case(fn, arrays, rng))
    return result
