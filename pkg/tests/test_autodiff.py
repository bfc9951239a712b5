from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dfcopt import autodiff as ad
from dfcopt.autodiff import ShapeError, Tensor
from dfcopt.nn import Adam, AdamState, Params, add_dense, adam_step, clip_grad_norm, dense, load_checkpoint, \
    save_checkpoint

from _oracles import finite_difference, max_rel_error


def leaf(x):
    return Tensor(np.array(x, dtype=float), requires_grad=True)


def grad_of(fn, *xs):
    out = fn(*xs)
    ad.backward(out)
    return [x.grad for x in xs]


def test_mul_sum_example():
    x = leaf([1.0, 2.0, 3.0])
    g, = grad_of(lambda x: ad.sum_(ad.mul(x, x)), x)
    np.testing.assert_array_equal(g, [2.0, 4.0, 6.0])


def test_matmul_gradients_exact():
    A, B = leaf([[1.0, 2.0], [3.0, 4.0]]), leaf([[5.0], [6.0]])
    ga, gb = grad_of(lambda a, b: ad.sum_(ad.matmul(a, b)), A, B)
    np.testing.assert_array_equal(ga, [[5.0, 6.0], [5.0, 6.0]])
    np.testing.assert_array_equal(gb, [[4.0], [6.0]])


def test_broadcast_add_reduces_gradient():
    x, b = leaf(np.ones((4, 3))), leaf(np.zeros(3))
    _, gb = grad_of(lambda x, b: ad.sum_(ad.add(x, b)), x, b)
    np.testing.assert_array_equal(gb, [4.0, 4.0, 4.0])


def test_relu_and_leaky_relu_at_zero_and_sign():
    x = leaf([-1.0, 0.0, 2.0])
    g, = grad_of(lambda x: ad.sum_(ad.relu(x)), x)
    np.testing.assert_array_equal(g, [0.0, 0.0, 1.0])
    x = leaf([-1.0, 0.0, 2.0])
    g, = grad_of(lambda x: ad.sum_(ad.leaky_relu(x, 0.2)), x)
    np.testing.assert_array_equal(g, [0.2, 0.2, 1.0])


def test_clamp_blocks_gradient_at_and_beyond_bounds():
    x = leaf([0.5, 1.0, 1.5, 2.0, 2.5])
    g, = grad_of(lambda x: ad.sum_(ad.clamp(x, 1.0, 2.0)), x)
    np.testing.assert_array_equal(g, [0, 0, 1, 0, 0])


def test_gradient_accumulates_over_reuse():
    x = leaf([3.0])
    g, = grad_of(lambda x: ad.sum_(ad.add(ad.mul(x, x), x)), x)
    assert g[0] == 7.0


def test_backward_clears_tape_and_requires_scalar():
    x = leaf(np.ones(3))
    y = ad.mul(x, x)
    assert len(ad.get_tape()) > 0
    with pytest.raises(ValueError):
        ad.backward(y)
    ad.get_tape().clear()
    ad.backward(ad.sum_(ad.mul(x, x)))
    assert len(ad.get_tape()) == 0


def test_no_grad_records_nothing():
    x = leaf(np.ones(3))
    with ad.no_grad():
        y = ad.sum_(ad.mul(x, x))
    assert not y.requires_grad and len(ad.get_tape()) == 0


@pytest.mark.parametrize("op", [ad.add, ad.mul, ad.sub, ad.minimum])
def test_incompatible_shapes_raise(op):
    with pytest.raises(ShapeError):
        op(leaf(np.ones((2, 3))), leaf(np.ones((4,))))
    ad.get_tape().clear()


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        ad.matmul(leaf(np.ones((2, 3))), leaf(np.ones((2, 3))))


@settings(max_examples=50)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_simplex_and_shift_invariance(x, c):
    p = ad.softmax(Tensor(x)).value
    assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-12
    np.testing.assert_allclose(ad.softmax(Tensor(x + c)).value, p, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(np.exp(ad.log_softmax(Tensor(x)).value), p, rtol=1e-9, atol=1e-15)


# -- finite-difference checks ----------------------------------------------

def fd_check(build, shapes, seed=0, tol=1e-6):
    rng = np.random.default_rng(seed)
    xs = [leaf(rng.normal(size=s)) for s in shapes]

    def f():
        with ad.no_grad():
            return float(build(*xs).value)

    numeric = [finite_difference(f, x.value) for x in xs]
    ad.backward(build(*xs))
    for x, n in zip(xs, numeric):
        assert max_rel_error(x.grad, n) < tol


LAYERS = {
    "matmul": (lambda a, b: ad.sum_(ad.mul(ad.matmul(a, b), ad.matmul(a, b))), [(3, 4), (4, 2)]),
    "batched_matmul": (lambda a, b: ad.sum_(ad.exp(ad.scale(ad.matmul(a, b), 0.3))), [(2, 3, 4), (4, 5)]),
    "softmax": (lambda a, w: ad.sum_(ad.mul(ad.softmax(a, axis=-1), w)), [(3, 5), (3, 5)]),
    "log_softmax": (lambda a, w: ad.sum_(ad.mul(ad.log_softmax(a, axis=0), w)), [(4, 3), (4, 3)]),
    "exp_log": (lambda a: ad.sum_(ad.log(ad.add(ad.exp(a), 1.0))), [(6,)]),
    "leaky_relu": (lambda a, w: ad.sum_(ad.mul(ad.leaky_relu(ad.add(a, 0.05)), w)), [(7,), (7,)]),
    "mean_axis": (lambda a: ad.sum_(ad.mul(ad.mean(a, axis=1), ad.mean(a, axis=1))), [(3, 4)]),
    "concat_take": (lambda a, b: ad.sum_(ad.exp(ad.take(ad.concat([a, b], axis=-1), [0, 2, 2, 4], -1))),
                    [(2, 3), (2, 2)]),
    "reshape_swap": (lambda a, w: ad.sum_(ad.mul(ad.swap_last(ad.reshape(a, (2, 3))), w)), [(6,), (3, 2)]),
    "minimum": (lambda a, b: ad.sum_(ad.minimum(ad.mul(a, a), b)), [(5,), (5,)]),
}


@pytest.mark.parametrize("name", sorted(LAYERS))
def test_layer_gradients_match_finite_differences(name):
    build, shapes = LAYERS[name]
    fd_check(build, shapes)


def test_dense_layer_gradient():
    params = Params()
    add_dense(params, "fc", 4, 3, np.random.default_rng(1))
    params["fc.b"].value = np.random.default_rng(2).normal(size=3)
    x = Tensor(np.random.default_rng(3).normal(size=(5, 4)))

    def loss():
        return ad.sum_(ad.mul(ad.relu(dense(x, params, "fc")), 1.5))

    def f():
        with ad.no_grad():
            return float(loss().value)

    numeric = {k: finite_difference(f, t.value) for k, t in params.items()}
    ad.backward(loss())
    for k, t in params.items():
        assert max_rel_error(t.grad, numeric[k]) < 1e-6


def test_abs_sum_subgradient():
    x = leaf([-2.0, 0.0, 3.0])
    g, = grad_of(ad.abs_sum, x)
    np.testing.assert_array_equal(g, [-1.0, 0.0, 1.0])


# -- dropout ----------------------------------------------------------------

def test_dropout_statistics_and_eval_identity():
    x = Tensor(np.ones(200_000))
    y = ad.dropout(x, 0.1, train=True, rng=np.random.default_rng(0)).value
    kept = y != 0
    assert abs(kept.mean() - 0.9) < 0.005
    np.testing.assert_allclose(y[kept], 1 / 0.9)
    assert abs(y.mean() - 1.0) < 0.01
    assert ad.dropout(x, 0.1, train=False) is x
    with pytest.raises(ValueError):
        ad.dropout(x, 1.0, train=True)


# -- optimizer --------------------------------------------------------------

def small_params(seed=0):
    p = Params()
    add_dense(p, "a", 3, 2, np.random.default_rng(seed))
    return p


def test_adam_zero_gradient_and_zero_lr_leave_params():
    p = small_params()
    before = p.snapshot()
    adam_step(p, AdamState(), lr=1e-3)         # no gradients at all
    for k in before:
        np.testing.assert_array_equal(p[k].value, before[k])
    for t in p.values():
        t.grad = np.ones(t.shape)
    adam_step(p, AdamState(), lr=0.0)
    for k in before:
        np.testing.assert_array_equal(p[k].value, before[k])


def test_adam_first_step_is_lr_times_sign():
    p = small_params()
    before = p.snapshot()
    rng = np.random.default_rng(5)
    grads = {k: rng.normal(size=t.shape) for k, t in p.items()}
    for k, t in p.items():
        t.grad = grads[k]
    Adam(p, lr=0.01).step()
    for k in before:
        np.testing.assert_allclose(before[k] - p[k].value, 0.01 * np.sign(grads[k]), rtol=1e-5)
        assert p[k].grad is None


def test_adam_minimizes_quadratic():
    p = Params()
    w = p.add("w", np.array([3.0, -2.0]))
    opt = Adam(p, lr=0.1)
    for _ in range(300):
        ad.backward(ad.sum_(ad.mul(w, w)))
        opt.step()
    assert np.abs(w.value).max() < 1e-2


def test_clip_grad_norm():
    p = small_params()
    for t in p.values():
        t.grad = np.full(t.shape, 2.0)
    n = clip_grad_norm(p, 0.5)
    assert n == pytest.approx(2.0 * np.sqrt(p.n_values()))
    total = np.sqrt(sum((t.grad ** 2).sum() for t in p.values()))
    assert total == pytest.approx(0.5, rel=1e-9)


# -- checkpoints ------------------------------------------------------------

def test_checkpoint_round_trip_bit_exact(tmp_path):
    p = small_params(7)
    p["a.b"].value = np.array([np.pi, -1e-300])
    save_checkpoint(tmp_path / "ck.json", p, {"kind": "test"})
    values, meta = load_checkpoint(tmp_path / "ck.json")
    assert meta == {"kind": "test"}
    q = small_params(8)
    q.load(values)
    for k in p:
        assert q[k].value.tobytes() == p[k].value.tobytes()


def test_checkpoint_shape_mismatch():
    p = small_params()
    bad = {k: np.zeros((1,) + t.shape) for k, t in p.items()}
    with pytest.raises(ShapeError):
        p.load(bad)


def test_duplicate_parameter_name():
    p = Params()
    p.add("w", np.zeros(2))
    with pytest.raises(KeyError):
        p.add("w", np.zeros(2))
