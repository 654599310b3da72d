"""Reverse-mode autodiff core: gradients vs central differences, numeric
stability, shape/domain policing."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoigraph import autodiff as ad
from hoigraph.autodiff import (NonFiniteError, ParamStore, ShapeError, Tensor,
                               finite_difference_check)

RNG = np.random.default_rng(7)


def numeric_grad(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar fn at x."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = fn(x)
        flat[i] = old - eps
        lo = fn(x)
        flat[i] = old
        gf[i] = (hi - lo) / (2 * eps)
    return g


def check_op(build, *shapes, tol=1e-6, low=-2.0, high=2.0):
    """Compare backward() grads of scalar build(*tensors) with numeric ones."""
    arrays = [RNG.uniform(low, high, s) for s in shapes]
    tensors = [Tensor(a.copy()) for a in arrays]
    for t in tensors:  # mark as learnable: conv skips dX for constant leaves
        t.grad = np.zeros_like(t.data)
    out = build(*tensors)
    out.backward()
    for k, (a, t) in enumerate(zip(arrays, tensors)):
        def fn(x, k=k):
            probes = [Tensor(arr.copy()) for arr in arrays]
            probes[k] = Tensor(x.copy())
            return build(*probes).data.item()
        num = numeric_grad(fn, a.copy())
        scale = max(1.0, np.abs(num).max())
        assert np.abs(t.grad - num).max() / scale < tol, build


def test_add_sub_mul_div_grads():
    check_op(lambda a, b: ad.reduce_sum(ad.mul(ad.add(a, b), ad.sub(a, b))),
             (3, 4), (3, 4))
    check_op(lambda a, b: ad.reduce_sum(ad.div(a, b)), (2, 3), (2, 3),
             low=0.5, high=2.0)


def test_broadcasting_grads():
    check_op(lambda a, b: ad.reduce_sum(ad.mul(a, b)), (3, 1, 4), (2, 4))
    check_op(lambda a, b: ad.reduce_sum(ad.add(a, b)), (5,), (3, 5))


def test_matmul_grad():
    check_op(lambda a, b: ad.reduce_sum(a @ b), (3, 4), (4, 2))


def test_matmul_rejects_non_2d():
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.ones((2, 3, 4))), Tensor(np.ones((4, 2))))
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_elementwise_nonlinearity_grads():
    check_op(lambda a: ad.reduce_sum(ad.relu(a)), (4, 5))
    check_op(lambda a: ad.reduce_sum(ad.sigmoid(a)), (4, 5))
    check_op(lambda a: ad.reduce_sum(ad.exp(a)), (3, 3))
    check_op(lambda a: ad.reduce_sum(ad.log(a)), (3, 3), low=0.2, high=3.0)
    check_op(lambda a: ad.reduce_sum(ad.sqrt(a)), (3, 3), low=0.2, high=3.0)


def test_sigmoid_stable_in_both_tails():
    big = Tensor(np.array([-500.0, 500.0]))
    out = ad.sigmoid(big)
    assert np.all(np.isfinite(out.data))
    assert out.data[0] == pytest.approx(0.0, abs=1e-100)
    assert out.data[1] == pytest.approx(1.0)
    ad.reduce_sum(out).backward()
    assert np.all(np.isfinite(big.grad))


def test_clip_grad_passthrough_inside_range():
    x = Tensor(np.array([-2.0, 0.5, 3.0]))
    ad.reduce_sum(ad.clip(x, -1.0, 1.0)).backward()
    assert np.array_equal(x.grad, np.array([0.0, 1.0, 0.0]))


def test_reshape_concat_stack_getitem_grads():
    check_op(lambda a: ad.reduce_sum(ad.mul(ad.reshape(a, (6,)),
                                            ad.reshape(a, (6,)))), (2, 3))
    check_op(lambda a, b: ad.reduce_sum(ad.exp(ad.concat([a, b], axis=1))),
             (2, 3), (2, 2), low=-1, high=1)
    check_op(lambda a, b: ad.reduce_sum(ad.mul(ad.stack([a, b]),
                                               ad.stack([b, a]))),
             (2, 3), (2, 3))
    check_op(lambda a: ad.reduce_sum(ad.exp(a[1:, :2])), (3, 4), low=-1, high=1)


def test_reduce_grads():
    check_op(lambda a: ad.reduce_sum(ad.mul(ad.reduce_mean(a, axis=0), 3.0)),
             (4, 3))
    check_op(lambda a: ad.reduce_sum(ad.reduce_max(a, axis=1)), (4, 3))


def test_reduce_max_grad_goes_to_first_argmax():
    x = Tensor(np.array([[1.0, 3.0, 3.0]]))
    ad.reduce_sum(ad.reduce_max(x, axis=1)).backward()
    assert np.array_equal(x.grad, np.array([[0.0, 1.0, 0.0]]))


def test_diamond_graph_accumulates_once_per_path():
    x = Tensor(np.array([2.0]))
    y = ad.mul(x, x)            # x reused: dy/dx = 2x
    z = ad.add(y, ad.mul(3.0, x))
    z.backward()
    assert x.grad == pytest.approx(2 * 2.0 + 3.0)


def test_non_finite_construction_rejected():
    with pytest.raises(NonFiniteError):
        Tensor(np.array([1.0, np.nan]))
    with pytest.raises(NonFiniteError):
        Tensor(np.array([np.inf]))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 10 ** 9))
def test_softmax_rows_sum_to_one(n, m, seed):
    x = Tensor(np.random.default_rng(seed).normal(size=(n, m)))
    out = ad.softmax(x, axis=1)
    assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(out.data >= 0)


def test_softmax_masked_and_all_masked_rows():
    x = Tensor(np.arange(6, dtype=float).reshape(2, 3))
    mask = np.array([[True, False, True], [False, False, False]])
    out = ad.softmax(x, axis=1, mask=mask)
    assert out.data[0, 1] == 0.0
    assert out.data[0].sum() == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(out.data[1], np.zeros(3))


def test_softmax_grad():
    mask = np.ones((3, 4), dtype=bool)
    mask[0, 2] = False
    check_op(lambda a: ad.reduce_sum(
        ad.mul(ad.softmax(a, axis=1, mask=mask),
               np.arange(12.0).reshape(3, 4))), (3, 4))


def test_softmax_shift_invariance():
    x = np.random.default_rng(0).normal(size=(4, 5))
    a = ad.softmax(Tensor(x), axis=1).data
    b = ad.softmax(Tensor(x + 100.0), axis=1).data
    assert np.allclose(a, b, atol=1e-12)


def test_cosine_zero_vector_is_zero():
    a = Tensor(np.zeros(4))
    b = Tensor(np.ones(4))
    assert ad.cosine_similarity(a, b).data.item() == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10 ** 9))
def test_cosine_rows_bounded_and_symmetric(n, seed):
    x = Tensor(np.random.default_rng(seed).normal(size=(n, 6)))
    c = ad.cosine_rows(x).data
    assert np.all(np.abs(c) <= 1.0 + 1e-12)
    assert np.allclose(c, c.T, atol=1e-12)
    assert np.allclose(np.diag(c), 1.0, atol=1e-12)


def test_cosine_rows_grad():
    check_op(lambda a: ad.reduce_sum(
        ad.mul(ad.cosine_rows(a), np.arange(9.0).reshape(3, 3))), (3, 4),
        low=0.5, high=2.0, tol=1e-5)


def test_linear_map_grad_and_activations():
    check_op(lambda x, w, b: ad.reduce_sum(ad.linear_map(x, w, b, "relu")),
             (5, 3), (4, 3), (4,))
    check_op(lambda x, w, b: ad.reduce_sum(ad.linear_map(x, w, b, "sigmoid")),
             (5, 3), (4, 3), (4,))


def test_linear_map_shape_error_names_operands():
    x = Tensor(np.ones((2, 3)), name="features")
    w = Tensor(np.ones((4, 5)), name="proj.W")
    b = Tensor(np.ones(4), name="proj.b")
    with pytest.raises(ShapeError, match="proj.W"):
        ad.linear_map(x, w, b)


@pytest.mark.parametrize("stride,padding,k", [(1, 0, 3), (2, 1, 3), (4, 2, 5),
                                              (1, 3, 2)])
def test_conv2d_grads(stride, padding, k):
    probe = ad.conv2d(Tensor(np.zeros((2, 3, 8, 8))),
                      Tensor(np.zeros((4, 3, k, k))), Tensor(np.zeros(4)),
                      stride=stride, padding=padding)
    weight = 0.1 * np.arange(probe.data.size, dtype=float).reshape(probe.shape)
    check_op(lambda x, kern, b: ad.reduce_sum(
        ad.mul(ad.conv2d(x, kern, b, stride=stride, padding=padding), weight)),
        (2, 3, 8, 8), (4, 3, k, k), (4,), tol=1e-5)


def test_conv2d_matches_direct_convolution():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1, 2, 6, 6))
    kern = rng.normal(size=(3, 2, 3, 3))
    out = ad.conv2d(Tensor(x), Tensor(kern), stride=1, padding=1).data
    ref = np.zeros_like(out)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    for co in range(3):
        for i in range(6):
            for j in range(6):
                ref[0, co, i, j] = np.sum(xp[0, :, i:i + 3, j:j + 3] * kern[co])
    assert np.allclose(out, ref, atol=1e-12)


def test_maxpool2d_grad_and_shape():
    check_op(lambda x: ad.reduce_sum(
        ad.mul(ad.maxpool2d(x, 2), np.arange(2 * 3 * 2 * 2, dtype=float)
               .reshape(2, 3, 2, 2))), (2, 3, 4, 4))
    out = ad.maxpool2d(Tensor(np.zeros((1, 2, 8, 8))), 2)
    assert out.shape == (1, 2, 4, 4)


def test_uniform_init_bounds_and_determinism():
    a = ad.uniform_init(np.random.default_rng(5), (100,), fan_in=25)
    b = ad.uniform_init(np.random.default_rng(5), (100,), fan_in=25)
    assert np.array_equal(a, b)
    assert np.abs(a).max() <= 0.2  # sqrt(1/25)


def test_backward_frees_intermediate_grads():
    x = Tensor(np.ones((2, 2)))
    y = ad.relu(x)
    z = ad.reduce_sum(y)
    z.backward()
    assert y.grad is None and y._backward is None
    assert x.grad is not None


def test_finite_difference_check_passes_on_small_net():
    rng = np.random.default_rng(11)
    store = ParamStore()
    store.add("w", rng.normal(size=(3, 4)))
    store.add("b", rng.normal(size=(3,)))
    x = rng.normal(size=(5, 4))

    def loss(ps):
        out = ad.linear_map(Tensor(x), ps["w"], ps["b"], "sigmoid")
        return ad.reduce_mean(ad.mul(out, out))

    err, report = finite_difference_check(loss, store)
    assert err < 1e-6
    assert {r["param"] for r in report} == {"w", "b"}
