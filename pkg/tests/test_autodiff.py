import numpy as np
import pytest

from dynloss import autodiff as ad
from dynloss.autodiff import Tensor


def test_tanh_of_zeros_is_zeros():
    out = ad.tanh(Tensor([0.0, 0.0, 0.0, 0.0]))
    assert np.array_equal(out.data, np.zeros(4))


def test_softmax_of_equal_scores_is_uniform():
    out = ad.softmax(Tensor([0.0, 0.0, 0.0]))
    assert np.allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_matmul_ones_hand_arithmetic():
    # (2x3 of ones) @ (3x1 of ones): each entry is a sum of three ones
    out = Tensor(np.ones((2, 3))) @ Tensor(np.ones((3, 1)))
    assert out.shape == (2, 1)
    assert np.array_equal(out.data, [[3.0], [3.0]])


def test_elementwise_shape_mismatch_names_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(3,\)"):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones(3)))


def test_matmul_inner_dim_mismatch_rejected():
    with pytest.raises(ValueError, match="matmul"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_sqrt_of_negative_rejected():
    with pytest.raises(ValueError, match="sqrt"):
        ad.sqrt(Tensor([-1.0, 4.0]))


def test_softmax_rejects_matrix():
    with pytest.raises(ValueError, match="vector"):
        ad.softmax(Tensor(np.ones((2, 2))))


def test_scalar_broadcast_allowed_general_broadcast_rejected():
    out = ad.mul(Tensor([1.0, 2.0]), Tensor(3.0))
    assert np.array_equal(out.data, [3.0, 6.0])
    with pytest.raises(ValueError):
        ad.mul(Tensor(np.ones((2, 2))), Tensor(np.ones(2)))


def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    (x * x).backward()
    assert x.grad == 6.0


def test_backward_mean_splits_evenly():
    x = Tensor([1.0, 5.0], requires_grad=True)
    x.mean().backward()
    assert np.array_equal(x.grad, [0.5, 0.5])


def test_backward_abs_sign_and_zero_subgradient():
    x = Tensor(-2.0, requires_grad=True)
    x.abs().backward()
    assert x.grad == -1.0
    z = Tensor(0.0, requires_grad=True)
    z.abs().backward()
    assert z.grad == 0.0


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        (x * x).backward()


def test_fanout_accumulation_matches_duplicated_variables():
    point = 1.7

    x = Tensor(point, requires_grad=True)
    ((x * x) + ad.scale(x, 3.0)).backward()

    x1 = Tensor(point, requires_grad=True)
    x2 = Tensor(point, requires_grad=True)
    x3 = Tensor(point, requires_grad=True)
    ((x1 * x2) + ad.scale(x3, 3.0)).backward()

    assert x.grad == pytest.approx(x1.grad + x2.grad + x3.grad, abs=0)
    assert x.grad == pytest.approx(2 * point + 3.0)


def test_grad_accumulates_across_backward_calls():
    x = Tensor(2.0, requires_grad=True)
    y = x * x
    y.backward()
    y.backward()
    assert x.grad == 8.0


def test_gather_scatters_and_accumulates_repeats():
    emb = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    out = ad.gather(emb, [0, 2, 0])
    assert np.array_equal(out.data, emb.data[[0, 2, 0]])
    out.sum().backward()
    expected = np.zeros((4, 3))
    expected[0] = 2.0
    expected[2] = 1.0
    assert np.array_equal(emb.grad, expected)


def test_gather_out_of_range_rejected():
    with pytest.raises(ValueError, match="out of range"):
        ad.gather(Tensor(np.ones((3, 2))), 3)


def test_concat_roundtrip_gradients():
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor(5.0, requires_grad=True)
    out = ad.concat([a, b])
    assert np.array_equal(out.data, [1.0, 2.0, 5.0])
    ad.mul(out, Tensor([1.0, 10.0, 100.0])).sum().backward()
    assert np.array_equal(a.grad, [1.0, 10.0])
    assert b.grad == 100.0


def test_replaying_same_graph_is_bit_identical():
    rng = np.random.default_rng(11)
    w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    x = Tensor(rng.normal(size=3))

    def run():
        return ad.softmax(ad.tanh(w @ x)).sum().item()

    assert run() == run()


def test_recorded_order_is_topological():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = ad.mul(x, x).sum().sqrt()
    ops = ad._reachable_ops(loss)
    seqs = [op._seq for op in ops]
    assert seqs == sorted(seqs, reverse=True)
    for op in ops:
        assert all(inp._seq < op._seq for inp in op._inputs)


def _weighted(op, weights):
    # random weights make the scalarized gradient non-uniform, which
    # catches transposed or misrouted Jacobians that a plain sum hides
    w = Tensor(weights)

    def f(x):
        return ad.mul(op(x), w).sum()

    return f


def _f_add(rng):
    c, w = Tensor(rng.normal(size=4)), rng.normal(size=4)
    return _weighted(lambda x: ad.add(x, c), w)


def _f_sub(rng):
    c, w = Tensor(rng.normal(size=4)), rng.normal(size=4)
    return _weighted(lambda x: ad.sub(c, x), w)


def _f_mul(rng):
    c, w = Tensor(rng.normal(size=4)), rng.normal(size=4)
    return _weighted(lambda x: ad.mul(x, c), w)


def _f_scale(rng):
    return _weighted(lambda x: ad.scale(x, 2.5), rng.normal(size=4))


def _f_matmul_left(rng):
    c, w = Tensor(rng.normal(size=(3, 2))), rng.normal(size=(2, 2))
    return _weighted(lambda x: x @ c, w)


def _f_matmul_right(rng):
    c, w = Tensor(rng.normal(size=(2, 3))), rng.normal(size=(2, 2))
    return _weighted(lambda x: c @ x, w)


def _f_matmul_vec(rng):
    c, w = Tensor(rng.normal(size=(2, 3))), rng.normal(size=2)
    return _weighted(lambda x: c @ x, w)


def _f_concat(rng):
    c, w = Tensor(rng.normal(size=2)), rng.normal(size=5)
    return _weighted(lambda x: ad.concat([x, c]), w)


def _f_gather(rng):
    w = rng.normal(size=(4, 2))
    return _weighted(lambda x: ad.gather(x, [0, 3, 0, 2]), w)


def _f_sigmoid(rng):
    return _weighted(ad.sigmoid, rng.normal(size=4))


def _f_tanh(rng):
    return _weighted(ad.tanh, rng.normal(size=4))


def _f_exp(rng):
    return _weighted(ad.exp, rng.normal(size=4))


def _f_sqrt(rng):
    return _weighted(ad.sqrt, rng.normal(size=4))


def _f_abs(rng):
    return _weighted(ad.absolute, rng.normal(size=4))


def _f_mean(rng):
    c = Tensor(rng.normal(size=5))
    return lambda x: ad.mul(x, c).mean()


def _f_sum(rng):
    c = Tensor(rng.normal(size=5))
    return lambda x: ad.mul(x, c).sum()


def _f_softmax(rng):
    return _weighted(ad.softmax, rng.normal(size=4))


def _away_from_zero(rng):
    # |x| is non-smooth at 0, the documented exclusion
    x = rng.normal(size=4)
    return np.where(np.abs(x) < 0.05, x + 0.2, x)


CHECK_CASES = [
    ("add", lambda rng: rng.normal(size=4), _f_add),
    ("sub", lambda rng: rng.normal(size=4), _f_sub),
    ("mul", lambda rng: rng.normal(size=4), _f_mul),
    ("scale", lambda rng: rng.normal(size=4), _f_scale),
    ("matmul_left", lambda rng: rng.normal(size=(2, 3)), _f_matmul_left),
    ("matmul_right", lambda rng: rng.normal(size=(3, 2)), _f_matmul_right),
    ("matmul_vec", lambda rng: rng.normal(size=3), _f_matmul_vec),
    ("concat", lambda rng: rng.normal(size=3), _f_concat),
    ("gather", lambda rng: rng.normal(size=(4, 2)), _f_gather),
    ("sigmoid", lambda rng: rng.normal(size=4), _f_sigmoid),
    ("tanh", lambda rng: rng.normal(size=4), _f_tanh),
    ("exp", lambda rng: rng.normal(size=4), _f_exp),
    ("sqrt", lambda rng: np.abs(rng.normal(size=4)) + 0.5, _f_sqrt),
    ("abs", lambda rng: _away_from_zero(rng), _f_abs),
    ("mean", lambda rng: rng.normal(size=5), _f_mean),
    ("sum", lambda rng: rng.normal(size=5), _f_sum),
    ("softmax", lambda rng: rng.normal(size=4), _f_softmax),
]


@pytest.mark.parametrize("name,make_point,make_f", CHECK_CASES, ids=[c[0] for c in CHECK_CASES])
def test_gradient_check_every_op_100_points(name, make_point, make_f):
    rng = np.random.default_rng(hash(name) % 2**32)
    for _ in range(100):
        report = ad.gradient_check(make_f(rng), Tensor(make_point(rng)), tol=1e-4)
        assert report.passed, f"{name}: rel err {report.max_rel_err}"


def test_gradient_check_constant_function_passes():
    report = ad.gradient_check(lambda x: ad.scale(x.sum(), 0.0), Tensor([1.0, 2.0]))
    assert report.passed and report.max_rel_err == 0.0


def test_gradient_check_non_finite_is_inconclusive():
    with np.errstate(over="ignore"):
        report = ad.gradient_check(lambda x: x.exp().sum(), Tensor([800.0]))
    assert report.inconclusive and not report.passed
